//! The fourteen knowledgebase tactics and their grouping into super-tactics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tactic {
    Reconnaissance,
    ResourceDevelopment,
    InitialAccess,
    Execution,
    Persistence,
    PrivilegeEscalation,
    DefenseEvasion,
    CredentialAccess,
    Discovery,
    LateralMovement,
    Collection,
    CommandAndControl,
    Exfiltration,
    Impact,
}

impl Tactic {
    pub const ALL: [Tactic; 14] = [
        Tactic::Reconnaissance,
        Tactic::ResourceDevelopment,
        Tactic::InitialAccess,
        Tactic::Execution,
        Tactic::Persistence,
        Tactic::PrivilegeEscalation,
        Tactic::DefenseEvasion,
        Tactic::CredentialAccess,
        Tactic::Discovery,
        Tactic::LateralMovement,
        Tactic::Collection,
        Tactic::CommandAndControl,
        Tactic::Exfiltration,
        Tactic::Impact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tactic::Reconnaissance => "Reconnaissance",
            Tactic::ResourceDevelopment => "Resource Development",
            Tactic::InitialAccess => "Initial Access",
            Tactic::Execution => "Execution",
            Tactic::Persistence => "Persistence",
            Tactic::PrivilegeEscalation => "Privilege Escalation",
            Tactic::DefenseEvasion => "Defense Evasion",
            Tactic::CredentialAccess => "Credential Access",
            Tactic::Discovery => "Discovery",
            Tactic::LateralMovement => "Lateral Movement",
            Tactic::Collection => "Collection",
            Tactic::CommandAndControl => "Command and Control",
            Tactic::Exfiltration => "Exfiltration",
            Tactic::Impact => "Impact",
        }
    }

    /// Lowercase, underscore-separated form used in file columns.
    pub fn slug(self) -> String {
        self.name().to_lowercase().replace(' ', "_")
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Tactic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn normalize(name: &str) -> String {
    name.to_lowercase()
        .replace('&', " and ")
        .replace(['-', '_'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

impl FromStr for Tactic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = normalize(s);
        Tactic::ALL
            .into_iter()
            .find(|t| t.name().to_lowercase() == key)
            .ok_or_else(|| Error::UnknownTactic {
                entry: String::new(),
                name: s.to_string(),
            })
    }
}

/// A mapping of every tactic onto a super-tactic id, with a display name per id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperTacticMap {
    names: Vec<String>,
    groups: BTreeMap<Tactic, usize>,
}

impl SuperTacticMap {
    pub fn new(names: Vec<String>, groups: BTreeMap<Tactic, usize>) -> Result<Self> {
        for t in Tactic::ALL {
            match groups.get(&t) {
                None => return Err(Error::invalid(format!("tactic {t} has no super-tactic"))),
                Some(&g) if g >= names.len() => {
                    return Err(Error::invalid(format!(
                        "tactic {t} mapped to super-tactic {g}, only {} named",
                        names.len()
                    )))
                }
                _ => {}
            }
        }
        if let Some(empty) = (0..names.len()).find(|g| !groups.values().any(|v| v == g)) {
            return Err(Error::invalid(format!(
                "super-tactic {:?} has no member tactic",
                names[empty]
            )));
        }
        Ok(Self { names, groups })
    }

    /// The four-way grouping obtained from Louvain on the full knowledgebase.
    pub fn reference_grouping() -> Self {
        use Tactic::*;
        let names = vec![
            "Preparation and Reconnaissance".to_string(),
            "Persistence and Evasion".to_string(),
            "Credential Movement".to_string(),
            "Command and Data Manipulation".to_string(),
        ];
        let groups = [
            (Impact, 0),
            (InitialAccess, 0),
            (ResourceDevelopment, 0),
            (Reconnaissance, 0),
            (Discovery, 0),
            (Persistence, 1),
            (PrivilegeEscalation, 1),
            (Execution, 1),
            (DefenseEvasion, 1),
            (CredentialAccess, 2),
            (LateralMovement, 2),
            (CommandAndControl, 3),
            (Collection, 3),
            (Exfiltration, 3),
        ]
        .into_iter()
        .collect();
        Self { names, groups }
    }

    /// Builds a map from cluster ids, naming each group after the reference
    /// super-tactic with the same member set, or `cluster_<id>` otherwise.
    pub fn from_cluster_ids(groups: &BTreeMap<Tactic, usize>) -> Result<Self> {
        let mut ids: Vec<usize> = groups.values().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        let dense: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let remapped: BTreeMap<Tactic, usize> =
            groups.iter().map(|(&t, c)| (t, dense[c])).collect();
        let reference = Self::reference_grouping();
        let names = ids
            .iter()
            .map(|c| {
                let members: Vec<Tactic> = groups
                    .iter()
                    .filter(|(_, g)| *g == c)
                    .map(|(&t, _)| t)
                    .collect();
                (0..reference.len())
                    .find(|&r| reference.members(r) == members)
                    .map(|r| reference.names[r].clone())
                    .unwrap_or_else(|| format!("cluster_{c}"))
            })
            .collect();
        Self::new(names, remapped)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, group: usize) -> &str {
        &self.names[group]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn group_of(&self, tactic: Tactic) -> usize {
        self.groups[&tactic]
    }

    pub fn members(&self, group: usize) -> Vec<Tactic> {
        self.groups
            .iter()
            .filter(|(_, &g)| g == group)
            .map(|(&t, _)| t)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_loose_spellings() {
        assert_eq!(
            "command-and-control".parse::<Tactic>().unwrap(),
            Tactic::CommandAndControl
        );
        assert_eq!(
            "Command & Control".parse::<Tactic>().unwrap(),
            Tactic::CommandAndControl
        );
        assert_eq!(
            "credential_access".parse::<Tactic>().unwrap(),
            Tactic::CredentialAccess
        );
        assert!("Persuasion".parse::<Tactic>().is_err());
    }

    #[test]
    fn reference_grouping_covers_all_tactics() {
        let g = SuperTacticMap::reference_grouping();
        assert_eq!(g.len(), 4);
        let total: usize = (0..4).map(|i| g.members(i).len()).sum();
        assert_eq!(total, 14);
        assert_eq!(
            g.name(g.group_of(Tactic::Discovery)),
            "Preparation and Reconnaissance"
        );
        assert_eq!(
            g.name(g.group_of(Tactic::LateralMovement)),
            "Credential Movement"
        );
    }

    #[test]
    fn cluster_ids_are_named_when_they_match() {
        let reference = SuperTacticMap::reference_grouping();
        let ids = Tactic::ALL
            .iter()
            .map(|&t| (t, 10 + 3 * reference.group_of(t)))
            .collect();
        let map = SuperTacticMap::from_cluster_ids(&ids).unwrap();
        assert_eq!(map.names(), reference.names());
    }
}
