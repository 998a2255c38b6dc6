use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::corpus::{ProductMeta, RawReview};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParseStats {
    pub lines: usize,
    pub parsed: usize,
    pub malformed: usize,
}

fn valid_id(s: &str) -> bool {
    !s.is_empty() && !s.contains(['\t', '\n', '\r'])
}

fn review_from_json(v: &Value) -> Option<RawReview> {
    let user_id = v.get("reviewerID")?.as_str()?;
    let product_id = v.get("asin")?.as_str()?;
    if !valid_id(user_id) || !valid_id(product_id) {
        return None;
    }
    let review_text = v
        .get("reviewText")
        .and_then(Value::as_str)
        .unwrap_or_default();
    let timestamp = v.get("unixReviewTime")?.as_i64()?;
    if timestamp < 0 {
        return None;
    }
    Some(RawReview {
        user_id: user_id.to_string(),
        product_id: product_id.to_string(),
        review_text: review_text.to_string(),
        timestamp,
    })
}

fn meta_from_json(v: &Value) -> Option<ProductMeta> {
    let product_id = v.get("asin")?.as_str()?;
    if !valid_id(product_id) {
        return None;
    }
    let strings = |arr: &Vec<Value>| -> Option<Vec<String>> {
        arr.iter().map(|t| t.as_str().map(str::to_string)).collect()
    };
    let category_paths: Vec<Vec<String>> = if let Some(cats) = v.get("categories") {
        cats.as_array()?
            .iter()
            .map(|p| p.as_array().and_then(strings))
            .collect::<Option<Vec<_>>>()?
    } else {
        // newer dumps carry a single flat path under `category`
        vec![strings(v.get("category")?.as_array()?)?]
    };
    let category_paths: Vec<Vec<String>> = category_paths.into_iter().filter(|p| !p.is_empty()).collect();
    if category_paths.is_empty() {
        return None;
    }
    Some(ProductMeta {
        product_id: product_id.to_string(),
        category_paths,
    })
}

fn parse_lines<T>(path: &Path, f: impl Fn(&Value) -> Option<T>) -> Result<(Vec<T>, ParseStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stats = ParseStats::default();
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        match serde_json::from_str::<Value>(&line).ok().as_ref().and_then(&f) {
            Some(rec) => {
                stats.parsed += 1;
                out.push(rec);
            }
            None => stats.malformed += 1,
        }
    }
    if out.is_empty() {
        return Err(Error::NoRecords(path.to_path_buf()));
    }
    if stats.malformed > 0 {
        log::warn!("{}: skipped {} malformed lines", path.display(), stats.malformed);
    }
    Ok((out, stats))
}

/// Reads Amazon-style review JSONL.
pub fn parse_reviews(path: &Path) -> Result<(Vec<RawReview>, ParseStats)> {
    parse_lines(path, review_from_json)
}

/// Reads Amazon-style product metadata JSONL.
pub fn parse_meta(path: &Path) -> Result<(Vec<ProductMeta>, ParseStats)> {
    parse_lines(path, meta_from_json)
}
