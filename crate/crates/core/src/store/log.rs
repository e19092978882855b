use std::fmt::Write as _;

use serde_json::Value as Json;

use crate::rebac::{RelationshipTuple, TupleSet};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Entry {
    Add(u64, RelationshipTuple),
    Del(u64, RelationshipTuple),
    Commit(u64),
}

impl Entry {
    pub(crate) fn render(&self) -> String {
        match self {
            Entry::Add(rev, t) => format!("{rev} ADD {}\n", t.render()),
            Entry::Del(rev, t) => format!("{rev} DEL {}\n", t.render()),
            Entry::Commit(rev) => format!("{rev} COMMIT\n"),
        }
    }

    fn parse(line: &str) -> Result<Entry, String> {
        let (rev, rest) = line.split_once(' ').ok_or("missing revision")?;
        let rev: u64 = rev.parse().map_err(|_| format!("bad revision `{rev}`"))?;
        if rest == "COMMIT" {
            return Ok(Entry::Commit(rev));
        }
        let (op, body) = rest.split_once(' ').ok_or("missing operation")?;
        let json: Json = serde_json::from_str(body).map_err(|e| e.to_string())?;
        let tuple = RelationshipTuple::from_json(&json)?;
        match op {
            "ADD" => Ok(Entry::Add(rev, tuple)),
            "DEL" => Ok(Entry::Del(rev, tuple)),
            other => Err(format!("unknown operation `{other}`")),
        }
    }
}

/// Result of replaying a log.
pub(crate) struct Replay {
    pub tuples: TupleSet,
    pub revision: u64,
}

/// Applies every committed group of entries. Entries after the last
/// commit marker, including a torn final line, are dropped.
pub(crate) fn replay(text: &str) -> Result<Replay, String> {
    let mut tuples = TupleSet::new();
    let mut revision = 0;
    let mut pending: Vec<Entry> = Vec::new();
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    for (n, raw) in lines.iter().enumerate() {
        let complete = raw.ends_with('\n');
        let line = raw.trim_end_matches('\n');
        if line.is_empty() {
            continue;
        }
        let entry = match Entry::parse(line) {
            Ok(e) if complete => e,
            _ if n + 1 == lines.len() => break,
            Ok(_) => unreachable!("only the last line can lack a newline"),
            Err(reason) => return Err(format!("line {}: {reason}", n + 1)),
        };
        match entry {
            Entry::Commit(rev) => {
                if rev <= revision {
                    return Err(format!("line {}: revision {rev} does not advance past {revision}", n + 1));
                }
                for op in pending.drain(..) {
                    match op {
                        Entry::Add(r, t) if r == rev => {
                            tuples.insert(t);
                        }
                        Entry::Del(r, t) if r == rev => {
                            tuples.remove(&t);
                        }
                        _ => return Err(format!("line {}: operation outside revision {rev}", n + 1)),
                    }
                }
                revision = rev;
            }
            op => pending.push(op),
        }
    }
    Ok(Replay { tuples, revision })
}

/// The shortest log reproducing `tuples` at `revision`.
pub(crate) fn compacted(tuples: &TupleSet, revision: u64) -> String {
    let mut out = String::new();
    if revision == 0 {
        return out;
    }
    for t in tuples.iter() {
        let _ = write!(out, "{}", Entry::Add(revision, t).render());
    }
    out.push_str(&Entry::Commit(revision).render());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(user: &str) -> RelationshipTuple {
        RelationshipTuple::parse(user, "train_grant", "asset:ds1").unwrap()
    }

    #[test]
    fn uncommitted_tail_is_dropped() {
        let mut log = String::new();
        log += &Entry::Add(1, t("user:a")).render();
        log += &Entry::Commit(1).render();
        log += &Entry::Add(2, t("user:b")).render();
        let r = replay(&log).unwrap();
        assert_eq!(r.revision, 1);
        assert_eq!(r.tuples.len(), 1);
    }

    #[test]
    fn torn_last_line_is_dropped() {
        let mut log = String::new();
        log += &Entry::Add(1, t("user:a")).render();
        log += &Entry::Commit(1).render();
        let torn = Entry::Add(2, t("user:b")).render();
        assert_eq!(replay(&format!("{log}{}", &torn[..torn.len() / 2])).unwrap().revision, 1);
        let commit = Entry::Commit(2).render();
        let unterminated = format!("{log}{torn}{}", commit.trim_end());
        assert_eq!(replay(&unterminated).unwrap().revision, 1);
        assert_eq!(replay(&format!("{log}{torn}{commit}")).unwrap().revision, 2);
    }

    #[test]
    fn compaction_round_trips() {
        let set: TupleSet = [t("user:a"), t("user:b")].into_iter().collect();
        let r = replay(&compacted(&set, 7)).unwrap();
        assert_eq!(r.revision, 7);
        assert_eq!(r.tuples, set);
        assert_eq!(compacted(&TupleSet::new(), 0), "");
    }

    #[test]
    fn corruption_before_commit_is_an_error() {
        let log = format!("1 ADD nonsense\n{}", Entry::Commit(1).render());
        assert!(replay(&log).is_err());
    }
}
