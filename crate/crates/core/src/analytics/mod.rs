//! Record-level reports built from document topics: tracked shares over
//! time, finance totals, comparison with Rio markers, sector mapping and
//! coverage, donor/recipient flows, geography and topic trends.
//!
//! Every report is a plain table; `to_csv` renders it with a fixed header.

mod reference;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::OUTLIER;
use crate::corpus::{Corpus, ProjectRecord, RioMarker};

pub use reference::{PurposeCode, PurposeCodeTable, UNKNOWN_SECTOR};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("unknown topic {0}")]
    UnknownTopic(i32),
    #[error("purpose-code reference table unavailable: {0}")]
    MissingReferenceTable(String),
    #[error("{labels} labels for {docs} documents")]
    LengthMismatch { docs: usize, labels: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Count,
    Commitment,
    Disbursement,
}

impl Measure {
    fn value(self, r: &ProjectRecord) -> Option<f64> {
        match self {
            Measure::Count => Some(1.0),
            Measure::Commitment => r.commitment_defl,
            Measure::Disbursement => r.disbursement_defl,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Measure::Count => "count",
            Measure::Commitment => "commitment",
            Measure::Disbursement => "disbursement",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "count" => Ok(Self::Count),
            "commitment" => Ok(Self::Commitment),
            "disbursement" => Ok(Self::Disbursement),
            other => Err(format!("unknown measure `{other}`")),
        }
    }
}

fn csv_string(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    build(&mut w).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 csv")
}

/// Topic of every usable record, inherited from its unique document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicAssignment {
    /// `(record_id, topic_id, via_doc_id)` sorted by record id.
    pub entries: Vec<(u64, i32, usize)>,
    pub n_topics: usize,
}

impl TopicAssignment {
    pub fn topic_of(&self, record_id: u64) -> Option<i32> {
        self.entries
            .binary_search_by_key(&record_id, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn check_topic(&self, topic: i32, allow_outlier: bool) -> Result<(), AnalyticsError> {
        let ok =
            (topic >= 0 && (topic as usize) < self.n_topics) || (allow_outlier && topic == OUTLIER);
        if ok {
            Ok(())
        } else {
            Err(AnalyticsError::UnknownTopic(topic))
        }
    }

    /// Records paired with their topic; records without an assignment are skipped.
    fn labeled<'a>(
        &'a self,
        records: &'a [ProjectRecord],
    ) -> impl Iterator<Item = (&'a ProjectRecord, i32)> + 'a {
        records
            .iter()
            .filter_map(move |r| self.topic_of(r.record_id).map(|t| (r, t)))
    }
}

pub fn assign_records(corpus: &Corpus, labels: &[i32]) -> Result<TopicAssignment, AnalyticsError> {
    if labels.len() != corpus.len() {
        return Err(AnalyticsError::LengthMismatch {
            docs: corpus.len(),
            labels: labels.len(),
        });
    }
    let mut entries: Vec<(u64, i32, usize)> = corpus
        .documents
        .iter()
        .zip(labels)
        .flat_map(|(d, &l)| d.member_record_ids.iter().map(move |&r| (r, l, d.doc_id)))
        .collect();
    entries.sort_unstable();
    Ok(TopicAssignment {
        entries,
        n_topics: crate::clustering::cluster_count(labels),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSeries {
    pub measure: Measure,
    pub values: BTreeMap<i32, f64>,
}

impl YearSeries {
    fn new(measure: Measure) -> Self {
        Self {
            measure,
            values: BTreeMap::new(),
        }
    }

    fn add(&mut self, year: i32, v: f64) {
        *self.values.entry(year).or_insert(0.0) += v;
    }

    pub fn get(&self, year: i32) -> f64 {
        self.values.get(&year).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.values.values().sum()
    }

    pub fn to_csv(&self) -> String {
        csv_string(|w| {
            w.write_record(["year", self.measure.name()])?;
            for (y, v) in &self.values {
                w.write_record([y.to_string(), v.to_string()])?;
            }
            Ok(())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrackedTotals {
    pub untracked: u64,
    pub tracked: u64,
}

impl TrackedTotals {
    pub fn total(&self) -> u64 {
        self.untracked + self.tracked
    }

    /// Counts over unique documents.
    pub fn from_labels(labels: &[i32]) -> Self {
        let untracked = labels.iter().filter(|&&l| l == OUTLIER).count() as u64;
        Self {
            untracked,
            tracked: labels.len() as u64 - untracked,
        }
    }

    fn pct(&self, v: u64) -> String {
        if self.total() == 0 {
            return "0.0".into();
        }
        format!("{:.1}", 100.0 * v as f64 / self.total() as f64)
    }
}

/// Totals table over unique descriptions and over the complete record set.
pub fn tracked_totals_table(unique: &TrackedTotals, complete: &TrackedTotals) -> String {
    csv_string(|w| {
        w.write_record([
            "Topic",
            "Unique descriptions",
            "Attrition (%)",
            "Complete dataset",
            "Attrition (%)",
        ])?;
        let rows = [
            (
                "Total of outliers obs.",
                unique.untracked,
                complete.untracked,
            ),
            ("Total obs. clustered", unique.tracked, complete.tracked),
            ("Total", unique.total(), complete.total()),
        ];
        for (name, u, c) in rows {
            w.write_record([
                name.to_string(),
                u.to_string(),
                unique.pct(u),
                c.to_string(),
                complete.pct(c),
            ])?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedReport {
    pub tracked: YearSeries,
    pub untracked: YearSeries,
    /// Over all assigned records, including those without a year.
    pub totals: TrackedTotals,
    pub missing_year: u64,
}

impl TrackedReport {
    pub fn to_csv(&self) -> String {
        let years: BTreeSet<i32> = self
            .tracked
            .values
            .keys()
            .chain(self.untracked.values.keys())
            .copied()
            .collect();
        csv_string(|w| {
            w.write_record(["year", "tracked", "untracked"])?;
            for y in years {
                w.write_record([
                    y.to_string(),
                    self.tracked.get(y).to_string(),
                    self.untracked.get(y).to_string(),
                ])?;
            }
            Ok(())
        })
    }
}

pub fn tracked_vs_outliers_by_year(
    assignment: &TopicAssignment,
    records: &[ProjectRecord],
) -> TrackedReport {
    let mut report = TrackedReport {
        tracked: YearSeries::new(Measure::Count),
        untracked: YearSeries::new(Measure::Count),
        totals: TrackedTotals::default(),
        missing_year: 0,
    };
    for (r, t) in assignment.labeled(records) {
        let outlier = t == OUTLIER;
        if outlier {
            report.totals.untracked += 1;
        } else {
            report.totals.tracked += 1;
        }
        match r.year {
            Some(y) => {
                report.tracked.add(y, if outlier { 0.0 } else { 1.0 });
                report.untracked.add(y, if outlier { 1.0 } else { 0.0 });
            }
            None => report.missing_year += 1,
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmountReport {
    pub series: YearSeries,
    /// Selected records without the chosen amount (counted as 0).
    pub missing_amounts: u64,
}

pub fn aggregate_amounts(
    assignment: &TopicAssignment,
    records: &[ProjectRecord],
    topic_set: &[i32],
    measure: Measure,
) -> Result<AmountReport, AnalyticsError> {
    for &t in topic_set {
        assignment.check_topic(t, true)?;
    }
    let selected: BTreeSet<i32> = topic_set.iter().copied().collect();
    let mut report = AmountReport {
        series: YearSeries::new(measure),
        missing_amounts: 0,
    };
    for (r, t) in assignment.labeled(records) {
        let (Some(year), true) = (r.year, selected.contains(&t)) else {
            continue;
        };
        match measure.value(r) {
            Some(v) => report.series.add(year, v),
            None => {
                report.series.add(year, 0.0);
                report.missing_amounts += 1;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MarkerRule {
    /// Any selected marker scored 1 (significant) or 2 (principal).
    #[default]
    Significant,
    /// Any selected marker scored 2.
    Principal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerComparison {
    pub clusters: YearSeries,
    pub markers: YearSeries,
    /// `clusters − markers` per year.
    pub difference: YearSeries,
}

impl MarkerComparison {
    pub fn to_csv(&self) -> String {
        csv_string(|w| {
            w.write_record(["year", "clusters", "markers", "difference"])?;
            for (y, d) in &self.difference.values {
                w.write_record([
                    y.to_string(),
                    self.clusters.get(*y).to_string(),
                    self.markers.get(*y).to_string(),
                    d.to_string(),
                ])?;
            }
            Ok(())
        })
    }
}

pub fn compare_with_markers(
    assignment: &TopicAssignment,
    records: &[ProjectRecord],
    markers: &[RioMarker],
    rule: MarkerRule,
    topic_set: &[i32],
    measure: Measure,
) -> Result<MarkerComparison, AnalyticsError> {
    let clusters = aggregate_amounts(assignment, records, topic_set, measure)?.series;
    let min_score = match rule {
        MarkerRule::Significant => 1,
        MarkerRule::Principal => 2,
    };
    let mut marker_series = YearSeries::new(measure);
    for (r, _) in assignment.labeled(records) {
        let Some(year) = r.year else { continue };
        if markers
            .iter()
            .any(|&m| r.marker(m).is_some_and(|s| s >= min_score))
        {
            marker_series.add(year, measure.value(r).unwrap_or(0.0));
        }
    }
    let years: BTreeSet<i32> = clusters
        .values
        .keys()
        .chain(marker_series.values.keys())
        .copied()
        .collect();
    let mut difference = YearSeries::new(measure);
    for y in years {
        difference
            .values
            .insert(y, clusters.get(y) - marker_series.get(y));
    }
    Ok(MarkerComparison {
        clusters,
        markers: marker_series,
        difference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorEntry {
    pub sector_name: String,
    pub majority_purpose_code: u32,
    pub majority_share: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SectorMapping {
    pub topics: BTreeMap<i32, SectorEntry>,
}

impl SectorMapping {
    pub fn to_csv(&self) -> String {
        csv_string(|w| {
            w.write_record([
                "topic_id",
                "sector_name",
                "majority_purpose_code",
                "majority_share",
            ])?;
            for (t, e) in &self.topics {
                w.write_record([
                    t.to_string(),
                    e.sector_name.clone(),
                    e.majority_purpose_code.to_string(),
                    format!("{:.4}", e.majority_share),
                ])?;
            }
            Ok(())
        })
    }
}

/// Modal purpose code per topic (ties to the lower code) and its sector.
/// Topics whose records carry no purpose code are left out.
pub fn map_topics_to_sectors(
    assignment: &TopicAssignment,
    records: &[ProjectRecord],
    table: &PurposeCodeTable,
) -> SectorMapping {
    let mut tallies: BTreeMap<i32, BTreeMap<u32, u64>> = BTreeMap::new();
    for (r, t) in assignment.labeled(records) {
        if let (true, Some(code)) = (t != OUTLIER, r.purpose_code) {
            *tallies.entry(t).or_default().entry(code).or_insert(0) += 1;
        }
    }
    let mut mapping = SectorMapping::default();
    for (topic, codes) in tallies {
        let total: u64 = codes.values().sum();
        // BTreeMap iterates codes ascending, so the first maximum wins ties.
        let (code, count) = codes.iter().fold(
            (0u32, 0u64),
            |best, (&c, &n)| if n > best.1 { (c, n) } else { best },
        );
        let sector = table.sector_of(code);
        if sector == UNKNOWN_SECTOR {
            log::warn!("purpose code {code} (topic {topic}) is not in the reference table");
        }
        mapping.topics.insert(
            topic,
            SectorEntry {
                sector_name: sector.to_string(),
                majority_purpose_code: code,
                majority_share: count as f64 / total as f64,
            },
        );
    }
    mapping
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub sector: String,
    pub topics: usize,
    pub purpose_codes: usize,
    pub common: usize,
    pub additional: usize,
}

impl CoverageRow {
    /// `●` per common item, `○` per additional topic.
    pub fn glyphs(&self) -> String {
        "●".repeat(self.common) + &"○".repeat(self.additional)
    }
}

pub fn coverage_csv(rows: &[CoverageRow]) -> String {
    csv_string(|w| {
        w.write_record([
            "sector",
            "topics",
            "purpose_codes",
            "common",
            "additional",
            "glyphs",
        ])?;
        for r in rows {
            w.write_record([
                r.sector.clone(),
                r.topics.to_string(),
                r.purpose_codes.to_string(),
                r.common.to_string(),
                r.additional.to_string(),
                r.glyphs(),
            ])?;
        }
        Ok(())
    })
}

/// Per sector: topics mapped to it against distinct purpose codes observed
/// in it, as `common = min(topics, codes)` and `additional = topics − codes`
/// when positive. Rows are ordered by sector name.
pub fn coverage_table(
    mapping: &SectorMapping,
    records: &[ProjectRecord],
    table: &PurposeCodeTable,
) -> Vec<CoverageRow> {
    let mut topics: BTreeMap<String, usize> = BTreeMap::new();
    for e in mapping.topics.values() {
        *topics.entry(e.sector_name.clone()).or_insert(0) += 1;
    }
    let mut codes: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    for r in records {
        if let Some(c) = r.purpose_code {
            codes
                .entry(table.sector_of(c).to_string())
                .or_default()
                .insert(c);
        }
    }
    let sectors: BTreeSet<&String> = topics.keys().chain(codes.keys()).collect();
    sectors
        .into_iter()
        .map(|s| {
            let t = topics.get(s).copied().unwrap_or(0);
            let c = codes.get(s).map_or(0, BTreeSet::len);
            CoverageRow {
                sector: s.clone(),
                topics: t,
                purpose_codes: c,
                common: t.min(c),
                additional: t.saturating_sub(c),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadRow {
    pub donor: String,
    pub recipient: String,
    pub project_count: u64,
    /// Summed deflated disbursements; missing amounts count as 0.
    pub amount: f64,
}

pub fn dyads_csv(rows: &[DyadRow]) -> String {
    csv_string(|w| {
        w.write_record(["donor", "recipient", "project_count", "amount"])?;
        for r in rows {
            w.write_record([
                r.donor.clone(),
                r.recipient.clone(),
                r.project_count.to_string(),
                r.amount.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Donor × recipient pairs within `topic`, by count descending, then donor
/// and recipient name.
pub fn dyad_flows(
    assignment: &TopicAssignment,
    records: &[ProjectRecord],
    topic: i32,
) -> Result<Vec<DyadRow>, AnalyticsError> {
    assignment.check_topic(topic, false)?;
    let mut groups: HashMap<(&str, &str), (u64, f64)> = HashMap::new();
    for (r, t) in assignment.labeled(records) {
        if t == topic {
            let e = groups
                .entry((r.donor_name.as_str(), r.recipient_name.as_str()))
                .or_insert((0, 0.0));
            e.0 += 1;
            e.1 += r.disbursement_defl.unwrap_or(0.0);
        }
    }
    let mut rows: Vec<DyadRow> = groups
        .into_iter()
        .map(|((d, r), (n, a))| DyadRow {
            donor: d.to_string(),
            recipient: r.to_string(),
            project_count: n,
            amount: a,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.project_count
            .cmp(&a.project_count)
            .then_with(|| a.donor.cmp(&b.donor))
            .then_with(|| a.recipient.cmp(&b.recipient))
    });
    Ok(rows)
}

pub fn geo_csv(rows: &[(String, u64)]) -> String {
    csv_string(|w| {
        w.write_record(["recipient", "project_count"])?;
        for (r, n) in rows {
            w.write_record([r.clone(), n.to_string()])?;
        }
        Ok(())
    })
}

/// Projects per recipient within `topic`, by count descending then name.
pub fn geo_counts(
    assignment: &TopicAssignment,
    records: &[ProjectRecord],
    topic: i32,
) -> Result<Vec<(String, u64)>, AnalyticsError> {
    assignment.check_topic(topic, false)?;
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for (r, t) in assignment.labeled(records) {
        if t == topic {
            *counts.entry(r.recipient_name.as_str()).or_insert(0) += 1;
        }
    }
    let mut rows: Vec<(String, u64)> = counts
        .into_iter()
        .map(|(r, n)| (r.to_string(), n))
        .collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub normalized: bool,
    pub series: BTreeMap<i32, YearSeries>,
}

impl TrendReport {
    /// Wide table: one row per year, one column per topic.
    pub fn to_csv(&self) -> String {
        let years: BTreeSet<i32> = self
            .series
            .values()
            .flat_map(|s| s.values.keys().copied())
            .collect();
        csv_string(|w| {
            let mut header = vec!["year".to_string()];
            header.extend(self.series.keys().map(|t| format!("topic_{t}")));
            w.write_record(&header)?;
            for y in years {
                let mut row = vec![y.to_string()];
                row.extend(self.series.values().map(|s| s.get(y).to_string()));
                w.write_record(&row)?;
            }
            Ok(())
        })
    }
}

/// Yearly project counts per topic; with `normalize`, each count is divided
/// by that year's total of clustered records. Every year with clustered
/// records appears in every series.
pub fn topic_trends(
    assignment: &TopicAssignment,
    records: &[ProjectRecord],
    topic_ids: &[i32],
    normalize: bool,
) -> Result<TrendReport, AnalyticsError> {
    for &t in topic_ids {
        assignment.check_topic(t, false)?;
    }
    let mut tracked_per_year: BTreeMap<i32, u64> = BTreeMap::new();
    let mut counts: BTreeMap<(i32, i32), u64> = BTreeMap::new();
    for (r, t) in assignment.labeled(records) {
        let (Some(y), true) = (r.year, t != OUTLIER) else {
            continue;
        };
        *tracked_per_year.entry(y).or_insert(0) += 1;
        *counts.entry((t, y)).or_insert(0) += 1;
    }
    let mut series = BTreeMap::new();
    for &t in topic_ids {
        let mut s = YearSeries::new(Measure::Count);
        for (&y, &total) in &tracked_per_year {
            let c = counts.get(&(t, y)).copied().unwrap_or(0) as f64;
            s.values
                .insert(y, if normalize { c / total as f64 } else { c });
        }
        series.insert(t, s);
    }
    Ok(TrendReport {
        normalized: normalize,
        series,
    })
}
