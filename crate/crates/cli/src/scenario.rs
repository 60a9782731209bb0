use std::fmt;
use std::path::Path;

use masim_cases::cbf::FormationConfig;
use masim_cases::mpc::EncounterConfig;
use masim_cases::tasking::WarehouseConfig;
use masim_cases::Issue;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Sync,
    Async,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sync => "sync",
            Mode::Async => "async",
        })
    }
}

/// A scenario file: run defaults plus exactly one case block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encounter: Option<EncounterConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formation: Option<FormationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warehouse: Option<WarehouseConfig>,
}

#[derive(Debug, Clone, Copy)]
pub enum Case<'a> {
    Encounter(&'a EncounterConfig),
    Formation(&'a FormationConfig),
    Warehouse(&'a WarehouseConfig),
}

impl Case<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Case::Encounter(_) => "encounter",
            Case::Formation(_) => "formation",
            Case::Warehouse(_) => "warehouse",
        }
    }
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text)
    }

    /// Parses JSON, reporting schema errors with their path into the file.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(vec![Issue::new(path, e.into_inner().to_string())])
        })
    }

    pub fn case(&self) -> Result<Case<'_>, Issue> {
        match (&self.encounter, &self.formation, &self.warehouse) {
            (Some(c), None, None) => Ok(Case::Encounter(c)),
            (None, Some(c), None) => Ok(Case::Formation(c)),
            (None, None, Some(c)) => Ok(Case::Warehouse(c)),
            _ => Err(Issue::new("$", "exactly one of 'encounter', 'formation' or 'warehouse' must be present")),
        }
    }

    /// Cross-reference checks of the case block.
    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        if self.name.trim().is_empty() {
            issues.push(Issue::new("name", "must not be empty"));
        }
        match self.case() {
            Ok(Case::Encounter(c)) => issues.extend(c.validate("encounter")),
            Ok(Case::Formation(c)) => issues.extend(c.validate("formation")),
            Ok(Case::Warehouse(c)) => issues.extend(c.validate("warehouse")),
            Err(i) => issues.push(i),
        }
        issues
    }

    /// SHA-256 over the canonical JSON of the parsed file, so formatting
    /// does not change the hash. The seed and mode are excluded: they are
    /// recorded separately and may be overridden on the command line.
    pub fn config_hash(&self) -> String {
        let canonical = ScenarioFile { seed: 0, mode: Mode::Sync, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
