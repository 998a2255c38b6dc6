//! Synthetic purchase logs with planted short-term and long-term structure.
//!
//! Every (category, brand, style) triple is exactly one product. A product's
//! category path yields its query, so the query alone narrows a purchase to
//! one category. A session pursues two interests at once, one brand for
//! home categories and another for tech categories, so only the earlier
//! purchases of the current query's group reveal its brand (short-term
//! structure). Each user favours a style that drifts once over their
//! history (long-term structure).

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{ProductMeta, RawReview};
use crate::error::{Error, Result};

pub const REVIEWS_FILE: &str = "reviews.jsonl";
pub const META_FILE: &str = "meta.jsonl";
pub const TRUTH_FILE: &str = "truth.json";

const CATEGORIES: [(&str, &str); 2] = [("kitchen", "cookware"), ("electronics", "headphones")];
/// Categories below this index form the home group, the rest the tech group.
const HOME_GROUP: usize = 1;
const BRANDS: [&str; 25] = [
    "acme", "zenith", "orbit", "nimbus", "quartz", "falcon", "ember", "lumen", "vertex", "harbor", "cobalt", "juniper",
    "meridian", "pinnacle", "sable", "tundra", "willow", "yonder", "kestrel", "marlow", "onyx", "prairie", "redwood",
    "sierra", "tango",
];
const STYLES: [&str; 10] = [
    "crimson", "teal", "matte", "glossy", "vintage", "rustic", "neon", "pastel", "walnut", "chrome",
];
const FILLER: [&str; 16] = [
    "arrived", "quickly", "works", "nicely", "quality", "decent", "price", "solid", "recommend", "daily",
    "sturdy", "packaging", "gift", "happy", "value", "exactly",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    PlantedShortterm,
    PlantedLongterm,
    Mixed,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::PlantedShortterm => "planted-shortterm",
            Profile::PlantedLongterm => "planted-longterm",
            Profile::Mixed => "mixed",
        }
    }

    fn sessions(self) -> bool {
        matches!(self, Profile::PlantedShortterm | Profile::Mixed)
    }

    fn styles(self) -> bool {
        matches!(self, Profile::PlantedLongterm | Profile::Mixed)
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planted-shortterm" => Ok(Profile::PlantedShortterm),
            "planted-longterm" | "planted-longterm-drift" => Ok(Profile::PlantedLongterm),
            "mixed" => Ok(Profile::Mixed),
            other => Err(Error::Config(format!("unknown synthetic profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub profile: Profile,
    pub users: usize,
    pub purchases_per_user: usize,
    /// Probability that a purchase follows the user's current style.
    pub style_prob: f64,
    pub min_session: usize,
    pub max_session: usize,
    pub filler_words: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(profile: Profile, seed: u64) -> Self {
        SynthConfig {
            profile,
            users: 200,
            purchases_per_user: 30,
            style_prob: 0.7,
            min_session: 6,
            max_session: 10,
            filler_words: 4,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductSpec {
    pub category: usize,
    pub brand: usize,
    pub style: usize,
}

/// One planted purchase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPurchase {
    pub product: String,
    pub timestamp: i64,
    pub session: Option<usize>,
    /// Session topic (`home-brand/tech-brand`), when sessions are planted.
    pub topic: Option<String>,
    /// The user's favoured style at this time, when styles are planted.
    pub preferred_style: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedUser {
    pub user_id: String,
    pub purchases: Vec<PlantedPurchase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    /// `short_term` and/or `long_term`.
    pub tags: Vec<String>,
    pub users: Vec<PlantedUser>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub reviews: Vec<RawReview>,
    pub meta: Vec<ProductMeta>,
    pub truth: GroundTruth,
}

pub fn product_id(spec: ProductSpec) -> String {
    format!("P{}{:02}{}", spec.category, spec.brand, spec.style)
}

fn category_words(category: usize) -> (&'static str, &'static str) {
    CATEGORIES[category]
}

pub fn catalog() -> Vec<ProductSpec> {
    let mut out = Vec::new();
    for category in 0..CATEGORIES.len() {
        for brand in 0..BRANDS.len() {
            for style in 0..STYLES.len() {
                out.push(ProductSpec { category, brand, style });
            }
        }
    }
    out
}

fn review_text<R: Rng>(spec: ProductSpec, filler: usize, rng: &mut R) -> String {
    let (dept, cat) = category_words(spec.category);
    let (style, brand) = (STYLES[spec.style], BRANDS[spec.brand]);
    let mut words = vec![style, style, brand, brand, cat, dept];
    words.extend((0..filler).map(|_| *FILLER.choose(rng).expect("nonempty")));
    words.shuffle(rng);
    let id = product_id(spec).to_lowercase();
    format!("{} {id}", words.join(" "))
}

pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    if config.users == 0 || config.purchases_per_user == 0 {
        return Err(Error::Config("users and purchases per user must be positive".into()));
    }
    if !(0.0..=1.0).contains(&config.style_prob) {
        return Err(Error::Config("style probability must lie in [0, 1]".into()));
    }
    if config.min_session == 0 || config.min_session > config.max_session {
        return Err(Error::Config("session lengths must satisfy 1 <= min <= max".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let profile = config.profile;
    let mut reviews = Vec::new();
    let mut users = Vec::new();
    for u in 0..config.users {
        let user_id = format!("U{u:04}");
        let n = config.purchases_per_user;
        let mut style = rng.gen_range(0..STYLES.len());
        // the favoured style drifts once, somewhere in the middle third
        let drift_at = n / 3 + rng.gen_range(0..(n / 3).max(1));
        let mut purchases = Vec::with_capacity(n);
        let mut session = 0;
        let mut left_in_session = 0;
        let mut brands = (0, 1);
        let mut t: i64 = 1_400_000_000 + rng.gen_range(0..86_400 * 30);
        for i in 0..n {
            if i == drift_at && profile.styles() {
                let shift = rng.gen_range(1..STYLES.len());
                style = (style + shift) % STYLES.len();
            }
            if left_in_session == 0 {
                session += 1;
                left_in_session = rng.gen_range(config.min_session..=config.max_session);
                let home = rng.gen_range(0..BRANDS.len());
                let tech = (home + rng.gen_range(1..BRANDS.len())) % BRANDS.len();
                brands = (home, tech);
                t += 86_400 * rng.gen_range(2..10);
            }
            left_in_session -= 1;
            t += rng.gen_range(60..3_600);
            let category = rng.gen_range(0..CATEGORIES.len());
            let b = match (profile.sessions(), category < HOME_GROUP) {
                (true, true) => brands.0,
                (true, false) => brands.1,
                (false, _) => rng.gen_range(0..BRANDS.len()),
            };
            let s = if profile.styles() && rng.gen_bool(config.style_prob) {
                style
            } else {
                rng.gen_range(0..STYLES.len())
            };
            let spec = ProductSpec { category, brand: b, style: s };
            let pid = product_id(spec);
            reviews.push(RawReview {
                user_id: user_id.clone(),
                product_id: pid.clone(),
                review_text: review_text(spec, config.filler_words, &mut rng),
                timestamp: t,
            });
            purchases.push(PlantedPurchase {
                product: pid,
                timestamp: t,
                session: profile.sessions().then_some(session),
                topic: profile
                    .sessions()
                    .then(|| format!("{}/{}", BRANDS[brands.0], BRANDS[brands.1])),
                preferred_style: profile.styles().then(|| STYLES[style].to_string()),
            });
        }
        users.push(PlantedUser { user_id, purchases });
    }
    let meta = catalog()
        .into_iter()
        .map(|spec| {
            let (dept, cat) = category_words(spec.category);
            ProductMeta {
                product_id: product_id(spec),
                category_paths: vec![vec![capitalize(dept), capitalize(cat)]],
            }
        })
        .collect();
    let mut tags = Vec::new();
    if profile.sessions() {
        tags.push("short_term".to_string());
    }
    if profile.styles() {
        tags.push("long_term".to_string());
    }
    Ok(SynthCorpus {
        reviews,
        meta,
        truth: GroundTruth {
            config: config.clone(),
            tags,
            users,
        },
    })
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

impl SynthCorpus {
    /// Writes review and metadata JSON lines in the raw input format plus
    /// the ground truth.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = String::new();
        for r in &self.reviews {
            let line = json!({
                "reviewerID": r.user_id,
                "asin": r.product_id,
                "reviewText": r.review_text,
                "unixReviewTime": r.timestamp,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        let path = dir.join(REVIEWS_FILE);
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        let mut out = String::new();
        for m in &self.meta {
            let line = json!({"asin": m.product_id, "categories": m.category_paths});
            out.push_str(&line.to_string());
            out.push('\n');
        }
        let path = dir.join(META_FILE);
        fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
        let path = dir.join(TRUTH_FILE);
        let text = serde_json::to_string_pretty(&self.truth).expect("serializable");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sessions_share_topic() {
        let c = generate(&SynthConfig { users: 50, ..SynthConfig::new(Profile::PlantedShortterm, 1) }).unwrap();
        let specs: std::collections::HashMap<String, ProductSpec> =
            catalog().into_iter().map(|s| (product_id(s), s)).collect();
        for u in &c.truth.users {
            for w in u.purchases.windows(2) {
                if w[0].session == w[1].session {
                    assert_eq!(w[0].topic, w[1].topic);
                    let (a, b) = (specs[&w[0].product], specs[&w[1].product]);
                    if (a.category < HOME_GROUP) == (b.category < HOME_GROUP) {
                        assert_eq!(a.brand, b.brand);
                    } else {
                        assert_ne!(a.brand, b.brand);
                    }
                }
            }
        }
        assert_eq!(c.truth.tags, vec!["short_term"]);
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig { users: 20, ..SynthConfig::new(Profile::Mixed, 4) };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig { seed: 5, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap().reviews, generate(&other).unwrap().reviews);
    }

    #[test]
    fn mixed_carries_both_tags() {
        let c = generate(&SynthConfig { users: 3, ..SynthConfig::new(Profile::Mixed, 0) }).unwrap();
        assert_eq!(c.truth.tags, vec!["short_term", "long_term"]);
        let p = &c.truth.users[0].purchases[0];
        assert!(p.topic.is_some() && p.preferred_style.is_some());
    }

    #[test]
    fn catalog_is_five_hundred_unique_products() {
        let ids: std::collections::HashSet<String> = catalog().into_iter().map(product_id).collect();
        assert_eq!(ids.len(), 500);
        assert!("planted-longterm-drift".parse::<Profile>().is_ok());
        assert!("nope".parse::<Profile>().is_err());
    }
}
