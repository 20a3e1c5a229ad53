//! CWE names, definitions and the top-level grouping, shipped as data.

use std::collections::BTreeMap;

use once_cell::sync::Lazy;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct GroupDef {
    id: String,
    name: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CweEntry {
    pub group: String,
    pub name: String,
    pub definition: String,
}

#[derive(Debug, Deserialize)]
struct Catalog {
    groups: Vec<GroupDef>,
    misc: String,
    entries: BTreeMap<String, CweEntry>,
}

static CATALOG: Lazy<Catalog> = Lazy::new(|| {
    let c: Catalog = serde_json::from_str(include_str!("../../data/cwe_catalog.json")).expect("cwe catalog parses");
    for e in c.entries.values() {
        assert!(c.groups.iter().any(|g| g.id == e.group), "unknown group {}", e.group);
    }
    c
});

pub fn misc_group() -> &'static str {
    &CATALOG.misc
}

/// Group ids in display order, `Misc.` last.
pub fn group_ids() -> Vec<&'static str> {
    CATALOG.groups.iter().map(|g| g.id.as_str()).chain([CATALOG.misc.as_str()]).collect()
}

pub fn group_label(id: &str) -> String {
    match CATALOG.groups.iter().find(|g| g.id == id) {
        Some(g) => format!("{} ({})", g.id, g.name),
        None => id.to_string(),
    }
}

pub fn lookup(cwe: &str) -> Option<&'static CweEntry> {
    CATALOG.entries.get(cwe.trim())
}

/// The group of the first CWE that belongs to one; `Misc.` otherwise.
pub fn cwe_group(cwe_ids: &[String]) -> String {
    for id in cwe_ids {
        let id = id.trim();
        if CATALOG.groups.iter().any(|g| g.id == id) {
            return id.to_string();
        }
        if let Some(e) = lookup(id) {
            return e.group.clone();
        }
    }
    CATALOG.misc.clone()
}

pub fn is_known_group(group: &str) -> bool {
    group == CATALOG.misc || CATALOG.groups.iter().any(|g| g.id == group)
}

/// Detection task text built from the CWE definitions.
pub fn task_description(cwe_ids: &[String]) -> String {
    let mut lines = Vec::new();
    for id in cwe_ids {
        let id = id.trim();
        match lookup(id) {
            Some(e) => lines.push(format!("- {id} ({}): {}", e.name, e.definition)),
            None => match CATALOG.groups.iter().find(|g| g.id == id) {
                Some(g) => lines.push(format!("- {id} ({}): a weakness in the {} class.", g.name, g.name.to_lowercase())),
                None => lines.push(format!("- {id}: a weakness of this type.")),
            },
        }
    }
    if lines.is_empty() {
        return "Task: decide whether the code below contains a security vulnerability.".to_string();
    }
    format!(
        "Task: decide whether the code below contains the following weakness.\n{}",
        lines.join("\n")
    )
}
