//! Corpus directory layout:
//!
//! * `interactions.tsv`: user_id, product_id, query_id, timestamp (per-user chronological)
//! * `queries.tsv`: query_id, query_text
//! * `vocab.tsv`: word, frequency
//! * `split.json`: per-user row boundaries into `interactions.tsv`
//! * `reviews.tsv`: training-side review tokens (user_id, product_id, timestamp, text)
//! * `manifest.json`: run manifest, including the corpus config and counts

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusConfig, CorpusCounts, Interaction, SplitCorpus, TrainReview, UserHistory};
use crate::error::{Error, Result};

pub const CORPUS_FORMAT_VERSION: u32 = 1;

pub const DATA_FILES: [&str; 5] = [
    "interactions.tsv",
    "queries.tsv",
    "vocab.tsv",
    "split.json",
    "reviews.tsv",
];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct UserSpan {
    user_id: String,
    /// first row of this user in interactions.tsv
    start: usize,
    /// row of the validation interaction; training rows are `start..validation`
    validation: usize,
    test: usize,
    /// one past the last row
    end: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitFile {
    version: u32,
    users: Vec<UserSpan>,
}

/// Corpus summary stored under the `corpus` key of `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub version: u32,
    pub config: CorpusConfig,
    pub counts: CorpusCounts,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn rows(path: &Path, text: &str, cols: usize) -> Result<Vec<Vec<String>>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let fields: Vec<String> = l.splitn(cols, '\t').map(str::to_string).collect();
            if fields.len() == cols {
                Ok(fields)
            } else {
                Err(Error::format(path, format!("expected {cols} columns in `{l}`")))
            }
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(path, format!("bad number `{s}`")))
}

impl SplitCorpus {
    pub fn summary(&self) -> CorpusSummary {
        CorpusSummary {
            version: CORPUS_FORMAT_VERSION,
            config: self.config.clone(),
            counts: self.counts.clone(),
        }
    }

    /// Writes the data files (not the manifest).
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut inter = String::from("user_id\tproduct_id\tquery_id\ttimestamp\n");
        let mut spans = Vec::with_capacity(self.users.len());
        let mut row = 0;
        for u in &self.users {
            let start = row;
            for it in &u.interactions {
                let _ = writeln!(
                    inter,
                    "{}\t{}\t{}\t{}",
                    u.user_id, self.products[it.product], it.query_id, it.timestamp
                );
                row += 1;
            }
            spans.push(UserSpan {
                user_id: u.user_id.clone(),
                start,
                validation: row - 2,
                test: row - 1,
                end: row,
            });
        }
        write(&dir.join("interactions.tsv"), &inter)?;

        let mut queries = String::from("query_id\tquery_text\n");
        for (i, q) in self.queries.iter().enumerate() {
            let _ = writeln!(queries, "{i}\t{q}");
        }
        write(&dir.join("queries.tsv"), &queries)?;

        let mut vocab = String::from("word\tfrequency\n");
        for (w, c) in &self.vocab {
            let _ = writeln!(vocab, "{w}\t{c}");
        }
        write(&dir.join("vocab.tsv"), &vocab)?;

        let split = SplitFile {
            version: CORPUS_FORMAT_VERSION,
            users: spans,
        };
        let json = serde_json::to_string_pretty(&split).expect("serializable");
        write(&dir.join("split.json"), &(json + "\n"))?;

        let mut reviews = String::from("user_id\tproduct_id\ttimestamp\ttext\n");
        for r in &self.reviews {
            let _ = writeln!(
                reviews,
                "{}\t{}\t{}\t{}",
                self.users[r.user].user_id,
                self.products[r.product],
                r.timestamp,
                r.tokens.join(" ")
            );
        }
        write(&dir.join("reviews.tsv"), &reviews)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<SplitCorpus> {
        let p = dir.join("queries.tsv");
        let queries = rows(&p, &read(&p)?, 2)?
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                if parse_num::<usize>(&p, &r[0])? != i {
                    return Err(Error::format(&p, "query ids must be dense and ordered"));
                }
                Ok(r[1].clone())
            })
            .collect::<Result<Vec<_>>>()?;

        let p = dir.join("vocab.tsv");
        let vocab = rows(&p, &read(&p)?, 2)?
            .into_iter()
            .map(|r| Ok((r[0].clone(), parse_num(&p, &r[1])?)))
            .collect::<Result<Vec<_>>>()?;

        let p = dir.join("interactions.tsv");
        let raw = rows(&p, &read(&p)?, 4)?;
        let mut products: Vec<String> = raw.iter().map(|r| r[1].clone()).collect();
        products.sort();
        products.dedup();
        let pidx: HashMap<&str, usize> = products.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();

        let sp = dir.join("split.json");
        let split: SplitFile = serde_json::from_str(&read(&sp)?)
            .map_err(|e| Error::format(&sp, e.to_string()))?;
        let mut users = Vec::with_capacity(split.users.len());
        for s in &split.users {
            if s.end > raw.len() || s.start + 3 > s.end || s.validation != s.end - 2 || s.test != s.end - 1 {
                return Err(Error::format(&sp, format!("inconsistent span for {}", s.user_id)));
            }
            let interactions = raw[s.start..s.end]
                .iter()
                .map(|r| {
                    if r[0] != s.user_id {
                        return Err(Error::format(&p, format!("row for {} inside span of {}", r[0], s.user_id)));
                    }
                    let query_id: usize = parse_num(&p, &r[2])?;
                    if query_id >= queries.len() {
                        return Err(Error::format(&p, format!("unknown query id {query_id}")));
                    }
                    Ok(Interaction {
                        product: pidx[r[1].as_str()],
                        query_id,
                        timestamp: parse_num(&p, &r[3])?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            users.push(UserHistory {
                user_id: s.user_id.clone(),
                interactions,
            });
        }
        let uidx: HashMap<&str, usize> = users.iter().enumerate().map(|(i, u)| (u.user_id.as_str(), i)).collect();

        let p = dir.join("reviews.tsv");
        let reviews = rows(&p, &read(&p)?, 4)?
            .into_iter()
            .map(|r| {
                let user = *uidx
                    .get(r[0].as_str())
                    .ok_or_else(|| Error::format(&p, format!("unknown user {}", r[0])))?;
                let product = *pidx
                    .get(r[1].as_str())
                    .ok_or_else(|| Error::format(&p, format!("unknown product {}", r[1])))?;
                Ok(TrainReview {
                    user,
                    product,
                    timestamp: parse_num(&p, &r[2])?,
                    tokens: r[3].split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mp = dir.join("manifest.json");
        let (config, counts) = match fs::read_to_string(&mp) {
            Ok(text) => {
                let v: serde_json::Value =
                    serde_json::from_str(&text).map_err(|e| Error::format(&mp, e.to_string()))?;
                match v.get("corpus").cloned().map(serde_json::from_value::<CorpusSummary>) {
                    Some(Ok(s)) => (s.config, s.counts),
                    _ => (CorpusConfig::default(), CorpusCounts::default()),
                }
            }
            Err(_) => (CorpusConfig::default(), CorpusCounts::default()),
        };
        let counts = CorpusCounts {
            users: users.len(),
            products: products.len(),
            queries: queries.len(),
            interactions: raw.len(),
            words: vocab.len(),
            ..counts
        };

        Ok(SplitCorpus {
            users,
            products,
            queries,
            vocab,
            reviews,
            config,
            counts,
        })
    }
}
