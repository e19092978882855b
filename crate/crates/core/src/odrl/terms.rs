//! The term registry: ODS profile vocabulary plus the ODRL core actions the
//! profile builds on.

use std::sync::OnceLock;

use thiserror::Error;

use crate::iri::Iri;

/// Namespace of the ODS profile terms. Also used as the profile IRI.
pub const ODS_NAMESPACE: &str = "https://w3id.org/ods/";
pub const ODRL_NAMESPACE: &str = "http://www.w3.org/ns/odrl/2/";

/// Prefix table used by the compact document form.
pub const PREFIXES: &[(&str, &str)] = &[("odrl", ODRL_NAMESPACE), ("ods", ODS_NAMESPACE)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParentClass {
    Party,
    Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionTerm {
    Use,
    Read,
    Modify,
    Distribute,
    Delete,
    Train,
    Subscribe,
    RequestData,
    Retention,
    KillJob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Consumer,
    Provider,
    Broker,
    Monitor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Action(ActionTerm),
    Party(Role),
}

#[derive(Debug, Clone)]
pub struct TermRegistryEntry {
    /// Label as written in the vocabulary table, e.g. `ODS:Kill_job`.
    pub label: &'static str,
    pub parent_class: ParentClass,
    pub definition: &'static str,
    pub iri: Iri,
    /// Canonical compact form, e.g. `ods:Kill_job`.
    pub compact: String,
    pub term: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown term `{0}`")]
pub struct UnknownTerm(pub String);

struct Seed {
    prefix: &'static str,
    local: &'static str,
    label: &'static str,
    definition: &'static str,
    term: Term,
}

const SEEDS: &[Seed] = &[
    Seed {
        prefix: "ods",
        local: "Consumer",
        label: "ODS:Consumer",
        definition: "Party that is the intended user of the data under the rule; a Data Space consumption specialization of the assignee.",
        term: Term::Party(Role::Consumer),
    },
    Seed {
        prefix: "ods",
        local: "Provider",
        label: "ODS:Provider",
        definition: "Party that offers or shares the data asset under the rule; a Data Space specialization of the assigner.",
        term: Term::Party(Role::Provider),
    },
    Seed {
        prefix: "ods",
        local: "Broker",
        label: "ODS:Broker",
        definition: "Party that intermediates data exchanges between providers and consumers.",
        term: Term::Party(Role::Broker),
    },
    Seed {
        prefix: "ods",
        local: "Monitor",
        label: "ODS:Monitor",
        definition: "Party that oversees compliance with the rule without being directly involved in data usage.",
        term: Term::Party(Role::Monitor),
    },
    Seed {
        prefix: "ods",
        local: "Train",
        label: "ODS:Train",
        definition: "Action to train a machine learning model.",
        term: Term::Action(ActionTerm::Train),
    },
    Seed {
        prefix: "ods",
        local: "Subscribe",
        label: "ODS:Subscribe",
        definition: "Action to subscribe to a dataset, service or data stream.",
        term: Term::Action(ActionTerm::Subscribe),
    },
    Seed {
        prefix: "ods",
        local: "Request_data",
        label: "ODS:Request_data",
        definition: "Action to request specific data from other participants.",
        term: Term::Action(ActionTerm::RequestData),
    },
    Seed {
        prefix: "ods",
        local: "Retention",
        label: "ODS:Retention",
        definition: "Action setting the maximum data retention period before deletion or archiving.",
        term: Term::Action(ActionTerm::Retention),
    },
    Seed {
        prefix: "ods",
        local: "Kill_job",
        label: "ODS:Kill_job",
        definition: "Action to kill the currently executing job.",
        term: Term::Action(ActionTerm::KillJob),
    },
    Seed {
        prefix: "odrl",
        local: "use",
        label: "odrl:use",
        definition: "To use the asset.",
        term: Term::Action(ActionTerm::Use),
    },
    Seed {
        prefix: "odrl",
        local: "read",
        label: "odrl:read",
        definition: "To obtain data from the asset.",
        term: Term::Action(ActionTerm::Read),
    },
    Seed {
        prefix: "odrl",
        local: "modify",
        label: "odrl:modify",
        definition: "To change existing content of the asset.",
        term: Term::Action(ActionTerm::Modify),
    },
    Seed {
        prefix: "odrl",
        local: "distribute",
        label: "odrl:distribute",
        definition: "To supply the asset to third parties.",
        term: Term::Action(ActionTerm::Distribute),
    },
    Seed {
        prefix: "odrl",
        local: "delete",
        label: "odrl:delete",
        definition: "To permanently remove all copies of the asset.",
        term: Term::Action(ActionTerm::Delete),
    },
];

/// All registry entries in vocabulary order: the nine ODS terms first.
pub fn registry() -> &'static [TermRegistryEntry] {
    static REGISTRY: OnceLock<Vec<TermRegistryEntry>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        SEEDS
            .iter()
            .map(|s| TermRegistryEntry {
                label: s.label,
                parent_class: match s.term {
                    Term::Action(_) => ParentClass::Action,
                    Term::Party(_) => ParentClass::Party,
                },
                definition: s.definition,
                iri: Iri::parse(format!("{}{}", namespace(s.prefix), s.local))
                    .expect("registry IRIs are absolute"),
                compact: format!("{}:{}", s.prefix, s.local),
                term: s.term,
            })
            .collect()
    })
}

fn namespace(prefix: &str) -> &'static str {
    PREFIXES
        .iter()
        .find(|(p, _)| *p == prefix)
        .map(|(_, ns)| *ns)
        .expect("known prefix")
}

/// Splits compact or absolute text into (namespace, local name) when it falls
/// under one of the known namespaces.
pub(crate) fn split_known(text: &str) -> Option<(&'static str, &str)> {
    for (prefix, ns) in PREFIXES {
        if let Some(local) = text.strip_prefix(ns) {
            return Some((ns, local));
        }
        if text.len() > prefix.len()
            && text.as_bytes()[prefix.len()] == b':'
            && text[..prefix.len()].eq_ignore_ascii_case(prefix)
        {
            return Some((ns, &text[prefix.len() + 1..]));
        }
    }
    None
}

/// Expands `odrl:`/`ods:` compact text to an absolute IRI string; other text
/// is returned unchanged.
pub fn expand(text: &str) -> String {
    match split_known(text) {
        Some((ns, local)) => format!("{ns}{local}"),
        None => text.to_string(),
    }
}

/// Whether the text uses the ODS namespace, in compact or absolute form.
pub fn is_ods_namespace(text: &str) -> bool {
    matches!(split_known(text), Some((ns, _)) if ns == ODS_NAMESPACE)
}

/// Finds the registry entry for compact (`ods:Train`) or absolute text.
/// Local names match case-insensitively.
pub fn resolve_term(text: &str) -> Result<&'static TermRegistryEntry, UnknownTerm> {
    let (ns, local) = split_known(text).ok_or_else(|| UnknownTerm(text.to_string()))?;
    registry()
        .iter()
        .find(|e| {
            let (ens, elocal) = split_known(e.iri.as_str()).expect("registry IRIs are namespaced");
            ens == ns && elocal.eq_ignore_ascii_case(local)
        })
        .ok_or_else(|| UnknownTerm(text.to_string()))
}

pub fn entry_for(term: Term) -> &'static TermRegistryEntry {
    registry()
        .iter()
        .find(|e| e.term == term)
        .expect("every term has a registry entry")
}

impl ActionTerm {
    pub const ALL: [ActionTerm; 10] = [
        ActionTerm::Use,
        ActionTerm::Read,
        ActionTerm::Modify,
        ActionTerm::Distribute,
        ActionTerm::Delete,
        ActionTerm::Train,
        ActionTerm::Subscribe,
        ActionTerm::RequestData,
        ActionTerm::Retention,
        ActionTerm::KillJob,
    ];

    pub fn entry(self) -> &'static TermRegistryEntry {
        entry_for(Term::Action(self))
    }

    pub fn iri(self) -> &'static Iri {
        &self.entry().iri
    }

    pub fn compact(self) -> &'static str {
        &self.entry().compact
    }

    pub fn is_ods(self) -> bool {
        matches!(
            self,
            ActionTerm::Train
                | ActionTerm::Subscribe
                | ActionTerm::RequestData
                | ActionTerm::Retention
                | ActionTerm::KillJob
        )
    }

    /// Identifier stem used for relation names (`train`, `kill_job`, ...).
    pub fn relation_stem(self) -> &'static str {
        match self {
            ActionTerm::Use => "use",
            ActionTerm::Read => "read",
            ActionTerm::Modify => "modify",
            ActionTerm::Distribute => "distribute",
            ActionTerm::Delete => "delete",
            ActionTerm::Train => "train",
            ActionTerm::Subscribe => "subscribe",
            ActionTerm::RequestData => "request_data",
            ActionTerm::Retention => "retention",
            ActionTerm::KillJob => "kill_job",
        }
    }
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Consumer, Role::Provider, Role::Broker, Role::Monitor];

    pub fn entry(self) -> &'static TermRegistryEntry {
        entry_for(Term::Party(self))
    }

    pub fn compact(self) -> &'static str {
        &self.entry().compact
    }

    /// Relation name carrying role membership on an asset.
    pub fn relation(self) -> &'static str {
        match self {
            Role::Consumer => "consumer",
            Role::Provider => "provider",
            Role::Broker => "broker",
            Role::Monitor => "monitor",
        }
    }
}
