//! Deterministic synthetic data lakes with a planted signal.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::enrich::{ColumnSource, EnrichedColumn, EnrichedTable};
use crate::tablecore::{Corpus, QueryTable, TargetTable, TaskKind};
use crate::textenc::mix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LakeSpec {
    /// Total lake tables, signal and adversarial ones included.
    pub table_count: usize,
    pub query_rows: usize,
    /// Rows in each background (noise) table.
    pub rows_per_table: usize,
    /// Probability that a background-table key token is drawn from the words of the query keys.
    pub key_overlap: f64,
    /// Probability that a signal-table key is a perturbed copy (dropout or reorder).
    pub key_noise: f64,
    pub signal_tables: usize,
    /// Correlation between each planted column and the target.
    pub rho: f64,
    /// Background-table metadata avoids the query topic.
    pub noise_topic_disjoint: bool,
    /// Tables holding the exact query keys with random columns and off-topic metadata.
    pub adversarial_tables: usize,
    pub seed: u64,
}

impl Default for LakeSpec {
    fn default() -> Self {
        Self {
            table_count: 200,
            query_rows: 500,
            rows_per_table: 100,
            key_overlap: 0.3,
            key_noise: 0.2,
            signal_tables: 1,
            rho: 0.9,
            noise_topic_disjoint: true,
            adversarial_tables: 0,
            seed: 7,
        }
    }
}

impl LakeSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::InvalidSpec(m.to_string()));
        if self.query_rows < 4 {
            return bad("query_rows must be at least 4");
        }
        if self.signal_tables + self.adversarial_tables > self.table_count {
            return bad("signal + adversarial tables exceed table_count");
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [-1, 1]");
        }
        if !(0.0..=1.0).contains(&self.key_overlap) || !(0.0..=1.0).contains(&self.key_noise) {
            return bad("rates must lie in [0, 1]");
        }
        if self.table_count > self.signal_tables + self.adversarial_tables
            && self.rows_per_table == 0
        {
            return bad("rows_per_table must be positive");
        }
        Ok(())
    }
}

/// Generated query, lake and the ground truth needed by oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLake {
    pub query: QueryTable,
    pub corpus: Corpus,
    pub signal_table_ids: Vec<String>,
    /// `planted_rows[s][r]` is the query row behind row `r` of signal table `s`.
    pub planted_rows: Vec<Vec<usize>>,
    pub adversarial_table_ids: Vec<String>,
    /// Planted column name in every signal table.
    pub signal_column: String,
    pub entity_name: String,
}

const QUERY_KEY: &str = "game";
const QUERY_TARGET: &str = "sales";
const SIGNAL_COLUMN: &str = "critic rating";
const PLATFORMS: [&str; 5] = ["console", "handheld", "desktop", "mobile", "arcade"];

struct Topic {
    title: &'static str,
    context: &'static str,
    key: &'static str,
    numeric: [&'static str; 2],
    text: &'static str,
    labels: [&'static str; 4],
}

const OFF_TOPICS: [Topic; 8] = [
    Topic {
        title: "River gauge readings",
        context: "Hydrology station measurements by basin",
        key: "station",
        numeric: ["flow rate", "water depth"],
        text: "basin",
        labels: ["north", "delta", "upper", "lower"],
    },
    Topic {
        title: "Hospital ward staffing",
        context: "Nurses on duty and bed occupancy per ward",
        key: "ward",
        numeric: ["nurses on duty", "bed count"],
        text: "wing",
        labels: ["east", "west", "annex", "central"],
    },
    Topic {
        title: "Bird migration survey",
        context: "Flock counts along coastal wetlands",
        key: "species",
        numeric: ["flock size", "wingspan"],
        text: "habitat",
        labels: ["marsh", "estuary", "dune", "lagoon"],
    },
    Topic {
        title: "Soil chemistry samples",
        context: "Field plots analysed for acidity and nutrients",
        key: "plot",
        numeric: ["ph level", "nitrogen"],
        text: "texture",
        labels: ["clay", "loam", "silt", "peat"],
    },
    Topic {
        title: "Volcano activity log",
        context: "Eruption indices and ash column heights",
        key: "volcano",
        numeric: ["eruption index", "ash height"],
        text: "region",
        labels: ["andes", "cascade", "kamchatka", "java"],
    },
    Topic {
        title: "Ocean buoy telemetry",
        context: "Wave height and salinity from moored buoys",
        key: "buoy",
        numeric: ["wave height", "salinity"],
        text: "sea state",
        labels: ["calm", "moderate", "rough", "swell"],
    },
    Topic {
        title: "Orchard harvest records",
        context: "Fruit yield by orchard block and tree age",
        key: "orchard",
        numeric: ["fruit yield", "tree age"],
        text: "variety",
        labels: ["pippin", "russet", "bramley", "gala"],
    },
    Topic {
        title: "Glacier mass balance",
        context: "Ice thickness change at survey stakes",
        key: "stake",
        numeric: ["ice thickness", "melt rate"],
        text: "aspect",
        labels: ["north", "south", "col", "icefall"],
    },
];

const ON_TOPIC: Topic = Topic {
    title: "Game catalogue listing",
    context: "Games with ratings, sales ranks and prices",
    key: "game",
    numeric: ["user score", "price"],
    text: "genre",
    labels: ["puzzle", "racing", "strategy", "shooter"],
};

const QUERY_CONSONANTS: [char; 9] = ['b', 'd', 'k', 'l', 'm', 'n', 'r', 's', 't'];
const NOISE_CONSONANTS: [char; 9] = ['c', 'f', 'g', 'h', 'j', 'p', 'v', 'w', 'z'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

fn pseudo_word(rng: &mut ChaCha8Rng, consonants: &[char]) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*consonants.choose(rng).expect("nonempty"));
        w.push(*VOWELS.choose(rng).expect("nonempty"));
    }
    w
}

fn word_pool(rng: &mut ChaCha8Rng, consonants: &[char], size: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut pool = Vec::with_capacity(size);
    while pool.len() < size {
        let w = pseudo_word(rng, consonants);
        if seen.insert(w.clone()) {
            pool.push(w);
        }
    }
    pool
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Centers and scales to unit sample variance.
fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    v.iter_mut()
        .for_each(|x| *x = if sd > 0.0 { (*x - mean) / sd } else { 0.0 });
}

/// A column with sample correlation exactly `rho` to the standardized `z`.
fn correlated(rng: &mut ChaCha8Rng, z: &[f64], rho: f64) -> Vec<f64> {
    let mut e: Vec<f64> = z.iter().map(|_| normal(rng)).collect();
    standardize(&mut e);
    let n = z.len() as f64;
    let proj = e.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() / n;
    e.iter_mut().zip(z).for_each(|(a, b)| *a -= proj * b);
    standardize(&mut e);
    let rest = (1.0 - rho * rho).max(0.0).sqrt();
    z.iter().zip(&e).map(|(a, b)| rho * a + rest * b).collect()
}

fn perturb_key(rng: &mut ChaCha8Rng, words: &[String]) -> String {
    let mut w = words.to_vec();
    if rng.random_bool(0.5) && w.len() > 2 {
        let drop = rng.random_range(0..w.len());
        w.remove(drop);
    } else {
        while w == words {
            w.shuffle(rng);
        }
    }
    w.join(" ")
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(stream.wrapping_add(0x5eed))))
}

/// Builds the query table and lake described by `spec`.
pub fn generate_lake(spec: &LakeSpec) -> Result<SyntheticLake> {
    spec.validate()?;
    let mut rng = sub_rng(spec.seed, 0);
    let n = spec.query_rows;
    // a wide pool keeps most key tokens unique to one entity
    let query_pool = word_pool(&mut rng, &QUERY_CONSONANTS, (20 * n).clamp(60, 80_000));
    let noise_pool = word_pool(&mut rng, &NOISE_CONSONANTS, (n * 2).clamp(60, 80_000));

    let mut seen = HashSet::new();
    let mut entities: Vec<Vec<String>> = Vec::with_capacity(n);
    while entities.len() < n {
        let mut words: Vec<String> = query_pool.choose_multiple(&mut rng, 3).cloned().collect();
        let mut sorted = words.clone();
        sorted.sort();
        if seen.insert(sorted) {
            words.shuffle(&mut rng);
            entities.push(words);
        }
    }
    let keys: Vec<String> = entities.iter().map(|w| w.join(" ")).collect();
    let used: Vec<String> = {
        let set: std::collections::BTreeSet<&String> = entities.iter().flatten().collect();
        set.into_iter().cloned().collect()
    };
    let mut z: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    standardize(&mut z);
    let query_rows: Vec<Vec<String>> = keys
        .iter()
        .zip(&z)
        .map(|(k, zi)| vec![k.clone(), format!("{:.4}", 50.0 + 10.0 * zi)])
        .collect();
    let query = QueryTable::new(
        vec![QUERY_KEY.to_string(), QUERY_TARGET.to_string()],
        query_rows,
        0,
        1,
        TaskKind::Regression,
    )?;

    let mut ids: Vec<usize> = (0..spec.table_count).collect();
    ids.shuffle(&mut rng);
    let id_of = |slot: usize| format!("t{:04}", ids[slot]);
    let mut tables = Vec::with_capacity(spec.table_count);
    let mut signal_table_ids = Vec::new();
    let mut planted_rows = Vec::new();
    let mut adversarial_table_ids = Vec::new();

    for s in 0..spec.signal_tables {
        let mut r = sub_rng(spec.seed, 1 + s as u64);
        let x = correlated(&mut r, &z, spec.rho);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let rows = order
            .iter()
            .map(|&i| {
                let key = if r.random_bool(spec.key_noise) {
                    perturb_key(&mut r, &entities[i])
                } else {
                    keys[i].clone()
                };
                vec![
                    key,
                    format!("{:.4}", 7.0 + 1.5 * x[i]),
                    PLATFORMS.choose(&mut r).expect("nonempty").to_string(),
                    r.random_range(1990..2021).to_string(),
                ]
            })
            .collect();
        let id = id_of(s);
        signal_table_ids.push(id.clone());
        planted_rows.push(order);
        tables.push(TargetTable {
            id,
            title: "Video game reviews".into(),
            context: "Critic ratings and platforms for each game".into(),
            column_names: vec![
                QUERY_KEY.into(),
                SIGNAL_COLUMN.into(),
                "platform".into(),
                "release year".into(),
            ],
            rows,
            source_url: Some(format!("https://lake.example/signal/{s}")),
        });
    }

    for a in 0..spec.adversarial_tables {
        let slot = spec.signal_tables + a;
        let mut r = sub_rng(spec.seed, 1000 + a as u64);
        let topic = &OFF_TOPICS[a % OFF_TOPICS.len()];
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let rows = order
            .iter()
            .map(|&i| {
                vec![
                    keys[i].clone(),
                    format!("{:.3}", 100.0 + 15.0 * normal(&mut r)),
                    format!("{:.3}", 10.0 * normal(&mut r)),
                    topic.labels.choose(&mut r).expect("nonempty").to_string(),
                ]
            })
            .collect();
        let id = id_of(slot);
        adversarial_table_ids.push(id.clone());
        tables.push(TargetTable {
            id,
            title: topic.title.into(),
            context: topic.context.into(),
            column_names: vec![
                "label".into(),
                topic.numeric[0].into(),
                topic.numeric[1].into(),
                topic.text.into(),
            ],
            rows,
            source_url: None,
        });
    }

    let query_sets: HashSet<Vec<String>> = entities
        .iter()
        .map(|w| {
            let mut s = w.clone();
            s.sort();
            s
        })
        .collect();
    for b in 0..spec.table_count - spec.signal_tables - spec.adversarial_tables {
        let slot = spec.signal_tables + spec.adversarial_tables + b;
        let mut r = sub_rng(spec.seed, 100_000 + b as u64);
        let topic = if spec.noise_topic_disjoint {
            &OFF_TOPICS[r.random_range(0..OFF_TOPICS.len())]
        } else {
            &ON_TOPIC
        };
        let mut rows = Vec::with_capacity(spec.rows_per_table);
        while rows.len() < spec.rows_per_table {
            let words: Vec<String> = (0..3)
                .map(|_| {
                    let pool = if r.random_bool(spec.key_overlap) {
                        &used
                    } else {
                        &noise_pool
                    };
                    pool.choose(&mut r).expect("nonempty").clone()
                })
                .collect();
            let mut sorted = words.clone();
            sorted.sort();
            if query_sets.contains(&sorted) {
                continue;
            }
            rows.push(vec![
                words.join(" "),
                format!("{:.3}", r.random_range(0.0..100.0)),
                format!("{:.3}", 5.0 * normal(&mut r)),
                topic.labels.choose(&mut r).expect("nonempty").to_string(),
            ]);
        }
        tables.push(TargetTable {
            id: id_of(slot),
            title: topic.title.into(),
            context: topic.context.into(),
            column_names: vec![
                topic.key.into(),
                topic.numeric[0].into(),
                topic.numeric[1].into(),
                topic.text.into(),
            ],
            rows,
            source_url: None,
        });
    }
    tables.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(SyntheticLake {
        query,
        corpus: Corpus::from_tables(tables)?,
        signal_table_ids,
        planted_rows,
        adversarial_table_ids,
        signal_column: SIGNAL_COLUMN.into(),
        entity_name: QUERY_KEY.into(),
    })
}

impl SyntheticLake {
    /// The query table joined with every signal table by exact entity: the
    /// best any enrichment of this lake can do.
    pub fn oracle_join(&self) -> EnrichedTable {
        let n = self.query.num_rows();
        let mut draft = EnrichedTable::unenriched(self.query.clone());
        for (id, planted) in self.signal_table_ids.iter().zip(&self.planted_rows) {
            let table = self.corpus.get(id).expect("signal table present");
            let mut cells = vec![String::new(); n];
            for (row, &q) in table.rows.iter().zip(planted) {
                cells[q] = row[1].clone();
            }
            draft.enriched_columns.push(EnrichedColumn {
                name: self.signal_column.clone(),
                provenance: vec![ColumnSource {
                    table_id: id.clone(),
                    column: self.signal_column.clone(),
                }],
                cells,
            });
        }
        draft
    }
}
