//! CRS record parsing, raw-text construction and exact-match deduplication.
//!
//! Records are read from a CSV export row by row. Each usable record (one
//! with at least one non-empty narrative field) contributes a raw text built
//! from its title, short and long descriptions. Records whose normalized
//! texts coincide collapse into a single [`UniqueDocument`] that remembers
//! every source record id.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("required column `{column}` (field {field}) missing from header")]
    MissingColumn { field: &'static str, column: String },
    #[error("undecodable bytes at row {row}, column `{column}`")]
    EncodingError { row: u64, column: String },
    #[error("record {record_id} has no narrative text")]
    EmptyDocument { record_id: u64 },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed corpus file at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A single row of a CRS export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectRecord {
    pub record_id: u64,
    pub year: Option<i32>,
    pub donor_name: String,
    pub agency_name: Option<String>,
    pub recipient_name: String,
    pub purpose_code: Option<u32>,
    pub sector_name: String,
    pub commitment_defl: Option<f64>,
    pub disbursement_defl: Option<f64>,
    pub marker_mitigation: Option<u8>,
    pub marker_adaptation: Option<u8>,
    pub marker_biodiversity: Option<u8>,
    pub marker_desertification: Option<u8>,
    pub project_title: Option<String>,
    pub short_description: Option<String>,
    pub long_description: Option<String>,
}

impl ProjectRecord {
    /// Empty record with only an id; handy for fixtures.
    pub fn new(record_id: u64) -> Self {
        Self {
            record_id,
            year: None,
            donor_name: String::new(),
            agency_name: None,
            recipient_name: String::new(),
            purpose_code: None,
            sector_name: String::new(),
            commitment_defl: None,
            disbursement_defl: None,
            marker_mitigation: None,
            marker_adaptation: None,
            marker_biodiversity: None,
            marker_desertification: None,
            project_title: None,
            short_description: None,
            long_description: None,
        }
    }

    pub fn is_usable(&self) -> bool {
        [
            &self.project_title,
            &self.short_description,
            &self.long_description,
        ]
        .iter()
        .any(|f| f.as_deref().is_some_and(|s| !s.trim().is_empty()))
    }

    pub fn marker(&self, marker: RioMarker) -> Option<u8> {
        match marker {
            RioMarker::Mitigation => self.marker_mitigation,
            RioMarker::Adaptation => self.marker_adaptation,
            RioMarker::Biodiversity => self.marker_biodiversity,
            RioMarker::Desertification => self.marker_desertification,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RioMarker {
    Mitigation,
    Adaptation,
    Biodiversity,
    Desertification,
}

impl std::str::FromStr for RioMarker {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mitigation" | "climatemitigation" => Ok(Self::Mitigation),
            "adaptation" | "climateadaptation" => Ok(Self::Adaptation),
            "biodiversity" => Ok(Self::Biodiversity),
            "desertification" => Ok(Self::Desertification),
            other => Err(format!("unknown Rio marker `{other}`")),
        }
    }
}

/// Logical field → CSV column name. `None` means the field is not read.
///
/// Every column set to `Some` must be present in the header. Defaults follow
/// the CRS bulk export naming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub year: Option<String>,
    pub donor_name: Option<String>,
    pub agency_name: Option<String>,
    pub recipient_name: Option<String>,
    pub purpose_code: Option<String>,
    pub sector_name: Option<String>,
    pub commitment_defl: Option<String>,
    pub disbursement_defl: Option<String>,
    pub marker_mitigation: Option<String>,
    pub marker_adaptation: Option<String>,
    pub marker_biodiversity: Option<String>,
    pub marker_desertification: Option<String>,
    pub project_title: Option<String>,
    pub short_description: Option<String>,
    pub long_description: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        let s = |v: &str| Some(v.to_string());
        Self {
            year: s("Year"),
            donor_name: s("DonorName"),
            agency_name: s("AgencyName"),
            recipient_name: s("RecipientName"),
            purpose_code: s("PurposeCode"),
            sector_name: s("SectorName"),
            commitment_defl: s("USD_Commitment_Defl"),
            disbursement_defl: s("USD_Disbursement_Defl"),
            marker_mitigation: s("ClimateMitigation"),
            marker_adaptation: s("ClimateAdaptation"),
            marker_biodiversity: s("Biodiversity"),
            marker_desertification: s("Desertification"),
            project_title: s("ProjectTitle"),
            short_description: s("ShortDescription"),
            long_description: s("LongDescription"),
        }
    }
}

impl Schema {
    fn fields(&self) -> [(&'static str, &Option<String>); FIELD_COUNT] {
        [
            ("year", &self.year),
            ("donor_name", &self.donor_name),
            ("agency_name", &self.agency_name),
            ("recipient_name", &self.recipient_name),
            ("purpose_code", &self.purpose_code),
            ("sector_name", &self.sector_name),
            ("commitment_defl", &self.commitment_defl),
            ("disbursement_defl", &self.disbursement_defl),
            ("marker_mitigation", &self.marker_mitigation),
            ("marker_adaptation", &self.marker_adaptation),
            ("marker_biodiversity", &self.marker_biodiversity),
            ("marker_desertification", &self.marker_desertification),
            ("project_title", &self.project_title),
            ("short_description", &self.short_description),
            ("long_description", &self.long_description),
        ]
    }
}

const FIELD_COUNT: usize = 15;

/// Counters for recoverable problems found while parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarnings {
    pub malformed_numeric: u64,
    pub invalid_marker: u64,
}

/// Streaming CSV reader yielding one [`ProjectRecord`] per data row.
pub struct RecordReader<R: Read> {
    reader: csv::Reader<R>,
    positions: [Option<usize>; FIELD_COUNT],
    names: [String; FIELD_COUNT],
    row: u64,
    buf: csv::ByteRecord,
    pub warnings: ParseWarnings,
}

impl<R: Read> RecordReader<R> {
    pub fn new(input: R, schema: &Schema) -> Result<Self, CorpusError> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let header = reader.byte_headers()?.clone();
        let header: Vec<String> = header
            .iter()
            .enumerate()
            .map(|(i, h)| {
                std::str::from_utf8(h)
                    .map(|s| s.trim_start_matches('\u{feff}').trim().to_string())
                    .map_err(|_| CorpusError::EncodingError {
                        row: 0,
                        column: format!("#{i}"),
                    })
            })
            .collect::<Result<_, _>>()?;
        let mut positions = [None; FIELD_COUNT];
        let mut names: [String; FIELD_COUNT] = Default::default();
        for (slot, (field, column)) in schema.fields().into_iter().enumerate() {
            if let Some(column) = column {
                let pos = header.iter().position(|h| h == column).ok_or_else(|| {
                    CorpusError::MissingColumn {
                        field,
                        column: column.clone(),
                    }
                })?;
                positions[slot] = Some(pos);
                names[slot] = column.clone();
            }
        }
        Ok(Self {
            reader,
            positions,
            names,
            row: 0,
            buf: csv::ByteRecord::new(),
            warnings: ParseWarnings::default(),
        })
    }

    fn cell(&self, slot: usize) -> Result<Option<&str>, CorpusError> {
        let Some(pos) = self.positions[slot] else {
            return Ok(None);
        };
        let Some(bytes) = self.buf.get(pos) else {
            return Ok(None);
        };
        let text = std::str::from_utf8(bytes).map_err(|_| CorpusError::EncodingError {
            row: self.row,
            column: self.names[slot].clone(),
        })?;
        let text = text.trim();
        Ok((!text.is_empty()).then_some(text))
    }

    fn text(&self, slot: usize) -> Result<Option<String>, CorpusError> {
        Ok(self.cell(slot)?.map(str::to_string))
    }

    fn number<T: std::str::FromStr>(&mut self, slot: usize) -> Result<Option<T>, CorpusError> {
        let parsed = match self.cell(slot)? {
            None => return Ok(None),
            Some(v) => v.parse::<T>().ok().or_else(|| {
                // Integer columns are sometimes exported as "2010.0".
                v.parse::<f64>()
                    .ok()
                    .filter(|f| f.fract() == 0.0)
                    .and_then(|f| format!("{}", f as i64).parse().ok())
            }),
        };
        if parsed.is_none() {
            self.warnings.malformed_numeric += 1;
        }
        Ok(parsed)
    }

    fn amount(&mut self, slot: usize) -> Result<Option<f64>, CorpusError> {
        let value = self.number::<f64>(slot)?;
        match value {
            Some(v) if !v.is_finite() => {
                self.warnings.malformed_numeric += 1;
                Ok(None)
            }
            other => Ok(other),
        }
    }

    fn marker(&mut self, slot: usize) -> Result<Option<u8>, CorpusError> {
        match self.number::<u8>(slot)? {
            Some(m) if m > 2 => {
                self.warnings.invalid_marker += 1;
                Ok(None)
            }
            other => Ok(other),
        }
    }

    fn next_record(&mut self) -> Result<Option<ProjectRecord>, CorpusError> {
        if !self.reader.read_byte_record(&mut self.buf)? {
            return Ok(None);
        }
        let record = ProjectRecord {
            record_id: self.row,
            year: self.number(0)?,
            donor_name: self.text(1)?.unwrap_or_default(),
            agency_name: self.text(2)?,
            recipient_name: self.text(3)?.unwrap_or_default(),
            purpose_code: self.number(4)?,
            sector_name: self.text(5)?.unwrap_or_default(),
            commitment_defl: self.amount(6)?,
            disbursement_defl: self.amount(7)?,
            marker_mitigation: self.marker(8)?,
            marker_adaptation: self.marker(9)?,
            marker_biodiversity: self.marker(10)?,
            marker_desertification: self.marker(11)?,
            project_title: self.text(12)?,
            short_description: self.text(13)?,
            long_description: self.text(14)?,
        };
        self.row += 1;
        Ok(Some(record))
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<ProjectRecord, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

/// Reads every row of `input`. Record ids are the zero-based data row index.
pub fn parse_records<R: Read>(
    input: R,
    schema: &Schema,
) -> Result<(Vec<ProjectRecord>, ParseWarnings), CorpusError> {
    let mut reader = RecordReader::new(input, schema)?;
    let records = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((records, reader.warnings))
}

/// Writes records with the default CRS column names, in the given order.
pub fn write_records<W: Write>(out: W, records: &[ProjectRecord]) -> Result<(), CorpusError> {
    let schema = Schema::default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(
        schema
            .fields()
            .iter()
            .map(|(_, c)| c.as_deref().unwrap_or("")),
    )?;
    let opt = |v: &Option<String>| v.clone().unwrap_or_default();
    let num = |v: Option<String>| v.unwrap_or_default();
    for r in records {
        w.write_record([
            num(r.year.map(|v| v.to_string())),
            r.donor_name.clone(),
            opt(&r.agency_name),
            r.recipient_name.clone(),
            num(r.purpose_code.map(|v| v.to_string())),
            r.sector_name.clone(),
            num(r.commitment_defl.map(|v| v.to_string())),
            num(r.disbursement_defl.map(|v| v.to_string())),
            num(r.marker_mitigation.map(|v| v.to_string())),
            num(r.marker_adaptation.map(|v| v.to_string())),
            num(r.marker_biodiversity.map(|v| v.to_string())),
            num(r.marker_desertification.map(|v| v.to_string())),
            opt(&r.project_title),
            opt(&r.short_description),
            opt(&r.long_description),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Title, short and long description joined by single spaces.
pub fn build_raw_text(record: &ProjectRecord) -> Result<String, CorpusError> {
    let parts: Vec<&str> = [
        &record.project_title,
        &record.short_description,
        &record.long_description,
    ]
    .into_iter()
    .filter_map(|f| f.as_deref().map(str::trim).filter(|s| !s.is_empty()))
    .collect();
    if parts.is_empty() {
        return Err(CorpusError::EmptyDocument {
            record_id: record.record_id,
        });
    }
    Ok(parts.join(" "))
}

/// Lowercases and collapses whitespace runs to a single space.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniqueDocument {
    pub doc_id: usize,
    /// Raw text of the first record seen with this normalized text.
    pub raw_text: String,
    pub normalized_text: String,
    pub member_record_ids: Vec<u64>,
}

impl UniqueDocument {
    pub fn multiplicity(&self) -> usize {
        self.member_record_ids.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<UniqueDocument>,
    /// Usable records, i.e. the sum of multiplicities.
    pub total_records: usize,
    /// Records dropped because they carry no narrative text.
    pub excluded_record_ids: Vec<u64>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.normalized_text.as_str())
    }

    /// Builds a corpus from already-normalized texts, one record each.
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let records: Vec<ProjectRecord> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| ProjectRecord {
                project_title: Some(t.as_ref().to_string()),
                ..ProjectRecord::new(i as u64)
            })
            .collect();
        deduplicate(&records)
    }

    /// Newline-delimited JSON, one [`UniqueDocument`] per line in doc_id order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), CorpusError> {
        for doc in &self.documents {
            serde_json::to_writer(&mut out, doc).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, CorpusError> {
        let mut documents = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: UniqueDocument =
                serde_json::from_str(&line).map_err(|e| CorpusError::Format {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if doc.doc_id != documents.len() {
                return Err(CorpusError::Format {
                    line: i + 1,
                    message: format!("expected doc_id {}, found {}", documents.len(), doc.doc_id),
                });
            }
            documents.push(doc);
        }
        let total_records = documents.iter().map(UniqueDocument::multiplicity).sum();
        Ok(Self {
            documents,
            total_records,
            excluded_record_ids: Vec::new(),
        })
    }
}

/// Groups usable records by normalized raw text.
///
/// Document ids follow first appearance in `records`; the output depends only
/// on input order.
pub fn deduplicate(records: &[ProjectRecord]) -> Corpus {
    let prepared: Vec<Option<(String, String)>> = records
        .par_iter()
        .map(|r| {
            build_raw_text(r).ok().map(|raw| {
                let norm = normalize_text(&raw);
                (raw, norm)
            })
        })
        .collect();

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut corpus = Corpus::default();
    for (record, prepared) in records.iter().zip(prepared) {
        let Some((raw, norm)) = prepared else {
            corpus.excluded_record_ids.push(record.record_id);
            continue;
        };
        corpus.total_records += 1;
        match index.get(&norm) {
            Some(&doc_id) => corpus.documents[doc_id]
                .member_record_ids
                .push(record.record_id),
            None => {
                let doc_id = corpus.documents.len();
                index.insert(norm.clone(), doc_id);
                corpus.documents.push(UniqueDocument {
                    doc_id,
                    raw_text: raw,
                    normalized_text: norm,
                    member_record_ids: vec![record.record_id],
                });
            }
        }
    }
    corpus
}

#[cfg(test)]
mod tests {
    use super::*;

    fn titled(id: u64, t: &str) -> ProjectRecord {
        ProjectRecord {
            project_title: Some(t.into()),
            ..ProjectRecord::new(id)
        }
    }

    const HEADER: &str = "Year,DonorName,AgencyName,RecipientName,PurposeCode,SectorName,USD_Commitment_Defl,USD_Disbursement_Defl,ClimateMitigation,ClimateAdaptation,Biodiversity,Desertification,ProjectTitle,ShortDescription,LongDescription\n";

    #[test]
    fn parses_full_row() {
        let csv = format!(
            "{HEADER}2010,France,AFD,Ghana,14030,Water,1.5,0.5,0,1,2,,Water supply,Wells,Build wells\n"
        );
        let (records, warnings) = parse_records(csv.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(warnings, ParseWarnings::default());
        let r = &records[0];
        assert_eq!(r.year, Some(2010));
        assert_eq!(r.purpose_code, Some(14030));
        assert_eq!(r.marker_adaptation, Some(1));
        assert_eq!(r.marker_desertification, None);
        assert_eq!(r.project_title.as_deref(), Some("Water supply"));
        assert_eq!(r.short_description.as_deref(), Some("Wells"));
        assert_eq!(r.long_description.as_deref(), Some("Build wells"));
    }

    #[test]
    fn empty_cell_is_absent_and_bad_numbers_are_counted() {
        let csv = format!("{HEADER}20x0,France,,Ghana,abc,Water,n/a,,7,,,,Title,,\n");
        let (records, warnings) = parse_records(csv.as_bytes(), &Schema::default()).unwrap();
        let r = &records[0];
        assert_eq!(r.long_description, None);
        assert_eq!(r.agency_name, None);
        assert_eq!(r.year, None);
        assert_eq!(r.purpose_code, None);
        assert_eq!(warnings.malformed_numeric, 3);
        assert_eq!(warnings.invalid_marker, 1);
    }

    #[test]
    fn missing_required_column() {
        let csv = "Year,DonorName\n2010,France\n";
        let err = parse_records(csv.as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingColumn { .. }));

        let schema = Schema {
            year: None,
            donor_name: None,
            agency_name: None,
            recipient_name: None,
            purpose_code: None,
            sector_name: None,
            commitment_defl: None,
            disbursement_defl: None,
            marker_mitigation: None,
            marker_adaptation: None,
            marker_biodiversity: None,
            marker_desertification: None,
            short_description: None,
            long_description: None,
            ..Schema::default()
        };
        match parse_records("Year\n2010\n".as_bytes(), &schema).unwrap_err() {
            CorpusError::MissingColumn { column, .. } => assert_eq!(column, "ProjectTitle"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn invalid_utf8_reports_location() {
        let mut bytes = HEADER.as_bytes().to_vec();
        bytes.extend_from_slice(b"2010,France,,Ghana,1,S,,,,,,,T\xff\xfe,,\n");
        match parse_records(&bytes[..], &Schema::default()).unwrap_err() {
            CorpusError::EncodingError { row, column } => {
                assert_eq!(row, 0);
                assert_eq!(column, "ProjectTitle");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn raw_text_rules() {
        let mut r = ProjectRecord::new(0);
        r.project_title = Some("Water supply".into());
        r.long_description = Some("Build wells".into());
        assert_eq!(build_raw_text(&r).unwrap(), "Water supply Build wells");

        r.project_title = Some("A".into());
        r.short_description = Some("A".into());
        r.long_description = Some("A".into());
        assert_eq!(build_raw_text(&r).unwrap(), "A A A");

        let empty = ProjectRecord::new(3);
        assert!(matches!(
            build_raw_text(&empty),
            Err(CorpusError::EmptyDocument { record_id: 3 })
        ));
    }

    #[test]
    fn dedup_groups_exact_normalized_text() {
        let records = vec![
            titled(0, "Well project"),
            titled(1, "School meals"),
            titled(2, "Well project"),
            titled(3, "Well project"),
        ];
        let corpus = deduplicate(&records);
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus.documents[0].multiplicity(), 3);
        assert_eq!(corpus.documents[1].multiplicity(), 1);
        assert_eq!(corpus.documents[0].member_record_ids, vec![0, 2, 3]);
        assert_eq!(corpus.total_records, 4);
    }

    #[test]
    fn dedup_normalizes_case_and_whitespace() {
        let corpus = deduplicate(&[titled(0, "WELL  project"), titled(1, "well project")]);
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.documents[0].normalized_text, "well project");
        assert_eq!(corpus.documents[0].raw_text, "WELL  project");
    }

    #[test]
    fn records_without_text_are_excluded_and_counted() {
        let corpus = deduplicate(&[titled(0, "x y"), ProjectRecord::new(1)]);
        assert_eq!(corpus.total_records, 1);
        assert_eq!(corpus.excluded_record_ids, vec![1]);
        assert!(deduplicate(&[]).is_empty());
    }

    #[test]
    fn corpus_jsonl_roundtrip() {
        let corpus = deduplicate(&[titled(0, "a b"), titled(1, "A  B"), titled(2, "c")]);
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let back = Corpus::read_jsonl(&buf[..]).unwrap();
        assert_eq!(back.documents, corpus.documents);
        assert_eq!(back.total_records, 3);
    }
}
