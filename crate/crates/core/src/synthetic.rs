//! Seeded synthetic CRS-style corpus with planted topics.
//!
//! Every document mixes words drawn from one of eight topic vocabularies
//! with generic project filler. Metadata (years, donors, recipients,
//! purpose codes, amounts, Rio markers) is drawn per topic so the analytics
//! reports have something to aggregate.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::ProjectRecord;

pub struct PlantedTopic {
    pub name: &'static str,
    pub words: [&'static str; 15],
    pub purpose_codes: &'static [u32],
    /// Topic counts toward climate mitigation / adaptation markers.
    pub climate: bool,
}

pub const TOPICS: [PlantedTopic; 8] = [
    PlantedTopic {
        name: "water and sanitation",
        words: [
            "water",
            "sanitation",
            "borehole",
            "latrine",
            "hygiene",
            "pipeline",
            "wells",
            "drinking",
            "sewage",
            "pump",
            "reservoir",
            "wastewater",
            "tap",
            "handwashing",
            "aquifer",
        ],
        purpose_codes: &[14020, 14030, 14031],
        climate: false,
    },
    PlantedTopic {
        name: "primary education",
        words: [
            "school",
            "pupils",
            "teachers",
            "classroom",
            "literacy",
            "curriculum",
            "textbooks",
            "enrolment",
            "primary",
            "learning",
            "headmaster",
            "numeracy",
            "syllabus",
            "tuition",
            "scholarship",
        ],
        purpose_codes: &[11220, 11130],
        climate: false,
    },
    PlantedTopic {
        name: "maternal health",
        words: [
            "maternal",
            "midwives",
            "clinic",
            "vaccination",
            "malaria",
            "nurses",
            "antenatal",
            "immunization",
            "hospital",
            "newborn",
            "obstetric",
            "bednets",
            "dispensary",
            "pediatric",
            "contraceptive",
        ],
        purpose_codes: &[12220, 12250, 13020],
        climate: false,
    },
    PlantedTopic {
        name: "agriculture",
        words: [
            "farmers",
            "crops",
            "irrigation",
            "seeds",
            "harvest",
            "livestock",
            "fertilizer",
            "maize",
            "cooperatives",
            "agronomy",
            "smallholder",
            "cattle",
            "yields",
            "granary",
            "tillage",
        ],
        purpose_codes: &[31120, 31140, 31163],
        climate: false,
    },
    PlantedTopic {
        name: "renewable energy",
        words: [
            "solar",
            "photovoltaic",
            "turbines",
            "hydropower",
            "grid",
            "electrification",
            "kilowatt",
            "batteries",
            "geothermal",
            "inverter",
            "megawatt",
            "transmission",
            "substation",
            "biogas",
            "windfarm",
        ],
        purpose_codes: &[23210, 23220, 23230],
        climate: true,
    },
    PlantedTopic {
        name: "public finance",
        words: [
            "budget",
            "taxation",
            "audit",
            "procurement",
            "treasury",
            "revenue",
            "accountability",
            "ministry",
            "fiscal",
            "customs",
            "expenditure",
            "ombudsman",
            "parliament",
            "transparency",
            "decentralization",
        ],
        purpose_codes: &[15111, 15114, 15113],
        climate: false,
    },
    PlantedTopic {
        name: "roads and transport",
        words: [
            "road",
            "highway",
            "bridge",
            "asphalt",
            "railway",
            "culverts",
            "pavement",
            "traffic",
            "corridor",
            "rehabilitation",
            "gravel",
            "motorway",
            "axle",
            "junction",
            "bypass",
        ],
        purpose_codes: &[21020, 21030],
        climate: false,
    },
    PlantedTopic {
        name: "forest conservation",
        words: [
            "forest",
            "biodiversity",
            "reforestation",
            "wildlife",
            "mangrove",
            "conservation",
            "deforestation",
            "protected",
            "species",
            "ecosystem",
            "rangers",
            "habitat",
            "watershed",
            "seedlings",
            "poaching",
        ],
        purpose_codes: &[31220, 31210, 31291],
        climate: true,
    },
];

const FILLER: &[&str] = &[
    "project",
    "support",
    "programme",
    "development",
    "capacity",
    "local",
    "national",
    "community",
    "improve",
    "access",
    "provision",
    "services",
    "phase",
    "activities",
    "training",
    "assistance",
    "technical",
    "implementation",
    "rural",
    "district",
    "region",
    "management",
    "strengthening",
    "sustainable",
    "initiative",
    "funding",
    "partners",
    "government",
    "beneficiaries",
    "construction",
    "equipment",
    "provide",
    "increase",
    "quality",
    "women",
    "youth",
    "households",
    "villages",
    "coordination",
    "monitoring",
    "evaluation",
    "planning",
    "policy",
    "institutional",
    "grant",
    "contribution",
    "component",
    "expansion",
    "network",
    "facilities",
];

const DONORS: &[&str] = &[
    "Germany",
    "France",
    "Japan",
    "United States",
    "Sweden",
    "EU Institutions",
    "United Kingdom",
];

const RECIPIENTS: &[&str] = &[
    "Ghana",
    "Kenya",
    "Bangladesh",
    "Peru",
    "Viet Nam",
    "Senegal",
    "Mozambique",
    "Bolivia",
    "Nepal",
    "Morocco",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Distinct documents generated.
    pub n_docs: usize,
    /// Extra records that repeat an earlier description verbatim.
    pub n_duplicates: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that a word comes from the document's topic.
    pub topic_share: f64,
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_docs: 5_000,
            n_duplicates: 250,
            min_words: 14,
            max_words: 26,
            topic_share: 0.6,
            first_year: 2000,
            last_year: 2022,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<ProjectRecord>,
    /// Planted topic of each record.
    pub topics: Vec<usize>,
}

fn describe(rng: &mut ChaCha8Rng, topic: &PlantedTopic, cfg: &SyntheticConfig) -> (String, String) {
    let n = rng.random_range(cfg.min_words..=cfg.max_words);
    let words: Vec<&str> = (0..n)
        .map(|_| {
            if rng.random_bool(cfg.topic_share) {
                // Earlier topic words are more frequent.
                let r: f64 = rng.random();
                topic.words[((r * r) * topic.words.len() as f64) as usize]
            } else {
                FILLER.choose(rng).copied().unwrap_or("project")
            }
        })
        .collect();
    let split = 4.min(words.len());
    let mut title = words[..split].join(" ");
    if let Some(first) = title.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    (title, words[split..].join(" "))
}

/// Generates records whose ids are their row index.
pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let amounts = LogNormal::new(-0.5, 1.2).expect("valid log-normal");
    let mut records = Vec::with_capacity(cfg.n_docs + cfg.n_duplicates);
    let mut topics = Vec::with_capacity(cfg.n_docs + cfg.n_duplicates);
    let mut seen = std::collections::HashSet::new();
    while records.len() < cfg.n_docs {
        let t = records.len() % TOPICS.len();
        let topic = &TOPICS[t];
        let (title, body) = describe(&mut rng, topic, cfg);
        if !seen.insert(format!("{title} {body}").to_lowercase()) {
            continue;
        }
        let id = records.len() as u64;
        let codes = if rng.random_bool(0.85) {
            topic.purpose_codes
        } else {
            TOPICS[rng.random_range(0..TOPICS.len())].purpose_codes
        };
        let code = codes[rng.random_range(0..codes.len())];
        let commitment: f64 = amounts.sample(&mut rng);
        let marker = |rng: &mut ChaCha8Rng, on: bool| {
            if on {
                Some(rng.random_range(1..=2u8))
            } else {
                Some(u8::from(rng.random_bool(0.05)))
            }
        };
        let record = ProjectRecord {
            year: Some(rng.random_range(cfg.first_year..=cfg.last_year)),
            donor_name: DONORS.choose(&mut rng).unwrap_or(&"Donor").to_string(),
            recipient_name: RECIPIENTS
                .choose(&mut rng)
                .unwrap_or(&"Recipient")
                .to_string(),
            purpose_code: Some(code),
            sector_name: topic.name.to_string(),
            commitment_defl: Some((commitment * 1000.0).round() / 1000.0),
            disbursement_defl: rng
                .random_bool(0.9)
                .then(|| (commitment * rng.random_range(0.3..1.0) * 1000.0).round() / 1000.0),
            marker_mitigation: marker(&mut rng, topic.climate && t == 4),
            marker_adaptation: marker(&mut rng, topic.climate && t == 7),
            marker_biodiversity: marker(&mut rng, t == 7),
            marker_desertification: Some(0),
            project_title: Some(title),
            long_description: Some(body),
            ..ProjectRecord::new(id)
        };
        records.push(record);
        topics.push(t);
    }
    for _ in 0..cfg.n_duplicates {
        let src = rng.random_range(0..cfg.n_docs.max(1));
        let mut dup = records[src].clone();
        dup.record_id = records.len() as u64;
        dup.year = Some(rng.random_range(cfg.first_year..=cfg.last_year));
        topics.push(topics[src]);
        records.push(dup);
    }
    SyntheticCorpus { records, topics }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::deduplicate;

    #[test]
    fn vocabularies_are_disjoint() {
        let mut all: Vec<&str> = TOPICS.iter().flat_map(|t| t.words).collect();
        all.extend(FILLER);
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
    }

    #[test]
    fn counts_and_determinism() {
        let cfg = SyntheticConfig {
            n_docs: 400,
            n_duplicates: 20,
            ..SyntheticConfig::default()
        };
        let a = generate(&cfg);
        assert_eq!(a.records.len(), 420);
        assert_eq!(deduplicate(&a.records).len(), 400);
        let b = generate(&cfg);
        assert_eq!(a.records, b.records);
        assert!(a
            .records
            .iter()
            .enumerate()
            .all(|(i, r)| r.record_id == i as u64));
    }
}
