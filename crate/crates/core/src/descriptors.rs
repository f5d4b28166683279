//! Baseline descriptor-set generators.
//!
//! All randomness comes from SplitMix64 seeded with the configured seed, and
//! bounded integers are drawn with Lemire's multiply-and-reject method on
//! `next_u64`. Both are fixed algorithms, so a seed reproduces the same set
//! on every platform and in any other implementation that follows them.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::store::DescriptorSet;

/// Characters drawn for randomized tokens.
pub const WAFFLE_CHARSET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789!#^@%&*";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Number of pool descriptors sampled for every class (DCLIP).
    pub pool_size: usize,
    /// Random tokens in each randomized descriptor.
    pub tokens_per_class: usize,
    pub token_length: usize,
    /// Randomized descriptors generated per class.
    pub descriptors_per_class: usize,
    /// High-level concepts inserted into randomized descriptors; may be empty.
    pub concepts: Vec<String>,
}

impl GeneratorConfig {
    pub fn new(seed: u64) -> Self {
        GeneratorConfig {
            seed,
            pool_size: 1,
            tokens_per_class: 3,
            token_length: 4,
            descriptors_per_class: 1,
            concepts: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pool_size", self.pool_size),
            ("tokens_per_class", self.tokens_per_class),
            ("token_length", self.token_length),
            ("descriptors_per_class", self.descriptors_per_class),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.concepts.iter().any(|c| c.trim().is_empty()) {
            return Err(Error::Config("concepts must not be blank".into()));
        }
        Ok(())
    }
}

/// SplitMix64 with an unbiased bounded draw.
pub struct SeededRng(SplitMix64);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(SplitMix64::from_seed(seed.to_le_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = self.next_u64() as u128 * n as u128;
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }
}

/// One `"An image of a {class}"` prompt per class.
pub fn class_name_prompts(classes: &[String]) -> Result<DescriptorSet> {
    DescriptorSet::new(
        classes
            .iter()
            .map(|c| (c.clone(), vec![format!("An image of a {c}")]))
            .collect(),
        "classname",
    )
}

/// Samples `cfg.pool_size` pool descriptors without replacement and gives
/// every class the same sample, formatted `"{class}, {descriptor}"`.
pub fn dclip_randomized(classes: &[String], pool: &[String], cfg: &GeneratorConfig) -> Result<DescriptorSet> {
    cfg.validate()?;
    if cfg.pool_size > pool.len() {
        return Err(Error::Config(format!(
            "cannot sample {} descriptors from a pool of {}",
            cfg.pool_size,
            pool.len()
        )));
    }
    if pool.iter().any(|d| d.trim().is_empty()) {
        return Err(Error::Config("descriptor pool contains a blank entry".into()));
    }
    let sample = sample_without_replacement(pool.len(), cfg.pool_size, &mut SeededRng::new(cfg.seed));
    DescriptorSet::new(
        classes
            .iter()
            .map(|c| {
                let list = sample.iter().map(|&i| format!("{c}, {}", pool[i])).collect();
                (c.clone(), list)
            })
            .collect(),
        format!("dclip-seed{}", cfg.seed),
    )
}

/// First `n` entries of a seeded Fisher-Yates shuffle of `0..len`.
pub fn sample_without_replacement(len: usize, n: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..n {
        let j = i + rng.below(len - i);
        idx.swap(i, j);
    }
    idx.truncate(n);
    idx
}

/// Descriptors of random tokens appended to the class name (and a random
/// concept when `cfg.concepts` is non-empty), e.g.
/// `"An image of a bird: cat, which has !32d, #tjli, ^fs0."`.
pub fn waffle_randomized(classes: &[String], cfg: &GeneratorConfig) -> Result<DescriptorSet> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut entries = Vec::with_capacity(classes.len());
    for class in classes {
        let mut list = Vec::with_capacity(cfg.descriptors_per_class);
        for _ in 0..cfg.descriptors_per_class {
            let head = if cfg.concepts.is_empty() {
                format!("An image of a {class}")
            } else {
                let concept = &cfg.concepts[rng.below(cfg.concepts.len())];
                format!("An image of a {concept}: {class}")
            };
            let tokens: Vec<String> = (0..cfg.tokens_per_class)
                .map(|_| random_token(&mut rng, cfg.token_length))
                .collect();
            list.push(format!("{head}, which has {}.", tokens.join(", ")));
        }
        entries.push((class.clone(), list));
    }
    DescriptorSet::new(entries, format!("waffle-seed{}", cfg.seed))
}

fn random_token(rng: &mut SeededRng, len: usize) -> String {
    (0..len)
        .map(|_| WAFFLE_CHARSET[rng.below(WAFFLE_CHARSET.len())] as char)
        .collect()
}

/// Metadata object written under `_meta` alongside generated sets. Only the
/// settings the named generator reads are recorded.
pub fn generator_meta(generator: &str, cfg: Option<&GeneratorConfig>) -> Value {
    let Some(cfg) = cfg else {
        return json!({ "generator": generator });
    };
    let config = match generator {
        "dclip" => json!({ "pool_size": cfg.pool_size }),
        "waffle" => json!({
            "tokens_per_class": cfg.tokens_per_class,
            "token_length": cfg.token_length,
            "descriptors_per_class": cfg.descriptors_per_class,
            "concepts": cfg.concepts,
            "charset": std::str::from_utf8(WAFFLE_CHARSET).expect("ascii"),
        }),
        _ => serde_json::to_value(cfg).expect("plain config"),
    };
    json!({
        "generator": generator,
        "seed": cfg.seed,
        "rng": "splitmix64",
        "config": config,
    })
}
