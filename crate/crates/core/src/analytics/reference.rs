//! OECD DAC purpose-code reference table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;

const BUNDLED: &str = include_str!("../../data/purpose_codes.csv");

pub const UNKNOWN_SECTOR: &str = "Unknown";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurposeCode {
    pub purpose_code: u32,
    pub description: String,
    pub sector_code: u32,
    pub sector_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PurposeCodeTable {
    codes: BTreeMap<u32, PurposeCode>,
}

impl PurposeCodeTable {
    /// The table shipped with the crate (`data/purpose_codes.csv`).
    pub fn bundled() -> Self {
        Self::parse(BUNDLED.as_bytes()).expect("bundled purpose-code table is valid")
    }

    pub fn load(path: &Path) -> Result<Self, AnalyticsError> {
        let bytes = std::fs::read(path).map_err(|e| {
            AnalyticsError::MissingReferenceTable(format!("{}: {e}", path.display()))
        })?;
        Self::parse(&bytes[..])
            .map_err(|e| AnalyticsError::MissingReferenceTable(format!("{}: {e}", path.display())))
    }

    /// CSV with header `purpose_code,description,sector_code,sector_name`.
    pub fn parse<R: std::io::Read>(input: R) -> Result<Self, csv::Error> {
        let mut codes = BTreeMap::new();
        for row in csv::Reader::from_reader(input).deserialize() {
            let code: PurposeCode = row?;
            codes.insert(code.purpose_code, code);
        }
        Ok(Self { codes })
    }

    pub fn get(&self, code: u32) -> Option<&PurposeCode> {
        self.codes.get(&code)
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Sector name for `code`, or [`UNKNOWN_SECTOR`].
    pub fn sector_of(&self, code: u32) -> &str {
        self.codes
            .get(&code)
            .map_or(UNKNOWN_SECTOR, |c| c.sector_name.as_str())
    }
}
