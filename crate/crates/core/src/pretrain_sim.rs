//! Descriptor statistics against a sample of pre-training caption/image
//! pairs.
//!
//! For each descriptor the nearest captions (by text-text cosine) are
//! retrieved; captions scoring strictly above `tau` form the match set. Its
//! size is the descriptor's frequency, and the mean cosine between each
//! matched caption and its paired image is the descriptor's similarity.
//! The aggregate is the mean similarity over descriptors that matched at
//! least one caption.

use rayon::prelude::*;
use serde::Serialize;

use crate::alignment::DescriptorPool;
use crate::error::{Error, Result};
use crate::knn::{self, ScanOptions};
use crate::store::{CaptionCorpus, EmbeddingMatrix};

pub const DEFAULT_TAU: f64 = 0.7;
pub const DEFAULT_TOP_FRACTION: f64 = 0.05;
pub const DEFAULT_CORPUS_SAMPLE_SIZE: usize = 5_000_000;

/// How the retrieval depth is derived from `top_fraction`; echoed in reports.
pub const RETRIEVAL_RULE: &str =
    "per-descriptor top ceil(top_fraction * corpus_rows) captions by text-text cosine, then strict > tau filter";

/// How descriptors without matches enter the aggregate; echoed in reports.
pub const AGGREGATE_RULE: &str = "mean over descriptors with at least one match; unmatched descriptors skipped";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClipSimConfig {
    pub tau: f64,
    pub top_fraction: f64,
    /// Intended corpus size; recorded for provenance only.
    pub corpus_sample_size: usize,
}

impl Default for ClipSimConfig {
    fn default() -> Self {
        ClipSimConfig {
            tau: DEFAULT_TAU,
            top_fraction: DEFAULT_TOP_FRACTION,
            corpus_sample_size: DEFAULT_CORPUS_SAMPLE_SIZE,
        }
    }
}

impl ClipSimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "top_fraction must lie in (0, 1], got {}",
                self.top_fraction
            )));
        }
        Ok(())
    }

    /// Number of captions retrieved per descriptor for a corpus of `rows`.
    pub fn retrieval_depth(&self, rows: usize) -> usize {
        retrieval_depth(self.top_fraction, rows)
    }
}

/// `ceil(top_fraction * rows)`, at least 1 and at most `rows`. Products
/// within 1e-9 of an integer are treated as that integer so that e.g.
/// `0.07 * 100` gives 7.
pub fn retrieval_depth(top_fraction: f64, rows: usize) -> usize {
    let x = top_fraction * rows as f64;
    let k = (x - 1e-9).ceil();
    (k.max(1.0) as usize).min(rows.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptorStats {
    pub descriptor: String,
    /// Corpus rows among the retrieved captions with similarity above tau,
    /// ascending.
    pub matched_indices: Vec<usize>,
    pub freq: usize,
    /// Mean caption-image cosine over matches; `None` when nothing matched.
    pub sim: Option<f64>,
}

/// Retrieval for a single descriptor embedding.
pub fn retrieve_matches(
    descriptor: &str,
    embedding: &[f32],
    corpus: &CaptionCorpus,
    cfg: &ClipSimConfig,
) -> Result<DescriptorStats> {
    let q = EmbeddingMatrix::new(1, embedding.len(), embedding.to_vec())?;
    let mut out = retrieve_all(&[descriptor.to_owned()], &q, corpus, cfg, &ScanOptions::default())?;
    Ok(out.pop().expect("one query yields one result"))
}

/// Batched retrieval; `sim` is left unset.
pub fn retrieve_all(
    descriptors: &[String],
    embeddings: &EmbeddingMatrix,
    corpus: &CaptionCorpus,
    cfg: &ClipSimConfig,
    opts: &ScanOptions,
) -> Result<Vec<DescriptorStats>> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("empty corpus".into()));
    }
    if descriptors.len() != embeddings.rows() {
        return Err(Error::RowMismatch {
            left: descriptors.len(),
            right: embeddings.rows(),
        });
    }
    let queries = crate::alignment::normalized(embeddings)?;
    let depth = cfg.retrieval_depth(corpus.len());
    let lists = knn::top_k_above(&queries, corpus.captions(), depth, cfg.tau, opts)?;
    Ok(lists
        .into_iter()
        .zip(descriptors)
        .map(|(list, d)| {
            let mut idx = list.indices();
            idx.sort_unstable();
            DescriptorStats {
                descriptor: d.clone(),
                freq: idx.len(),
                matched_indices: idx,
                sim: None,
            }
        })
        .collect())
}

/// Mean cosine between each matched caption and its paired image.
pub fn descriptor_similarity(stats: &DescriptorStats, corpus: &CaptionCorpus) -> Result<f64> {
    let cosines = stats
        .matched_indices
        .iter()
        .map(|&i| corpus.pair_cosine(i))
        .collect::<Result<Vec<f64>>>()?;
    similarity_from_cosines(&cosines).ok_or_else(|| Error::UndefinedSim(stats.descriptor.clone()))
}

/// Mean of matched caption-image cosines, summed in the given order;
/// `None` for an empty match set.
pub fn similarity_from_cosines(cosines: &[f64]) -> Option<f64> {
    (!cosines.is_empty()).then(|| cosines.iter().sum::<f64>() / cosines.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipSimResult {
    /// Mean similarity over descriptors with at least one match.
    pub aggregate: f64,
    pub defined: usize,
    /// Descriptors with no match, excluded from the aggregate.
    pub skipped: usize,
    pub retrieval_depth: usize,
    pub stats: Vec<DescriptorStats>,
}

/// Per-descriptor statistics and the aggregate for a pooled descriptor list.
/// `embeddings` holds one row per pooled descriptor.
pub fn clip_sim(
    pool: &DescriptorPool,
    embeddings: &EmbeddingMatrix,
    corpus: &CaptionCorpus,
    cfg: &ClipSimConfig,
) -> Result<ClipSimResult> {
    clip_sim_with(pool, embeddings, corpus, cfg, &ScanOptions::default())
}

pub fn clip_sim_with(
    pool: &DescriptorPool,
    embeddings: &EmbeddingMatrix,
    corpus: &CaptionCorpus,
    cfg: &ClipSimConfig,
    opts: &ScanOptions,
) -> Result<ClipSimResult> {
    let mut stats = retrieve_all(&pool.texts, embeddings, corpus, cfg, opts)?;
    stats
        .par_iter_mut()
        .filter(|s| s.freq > 0)
        .try_for_each(|s| -> Result<()> {
            s.sim = Some(descriptor_similarity(s, corpus)?);
            Ok(())
        })?;
    let defined: Vec<f64> = stats.iter().filter_map(|s| s.sim).collect();
    if defined.is_empty() {
        return Err(Error::UndefinedAggregate(stats.len()));
    }
    Ok(ClipSimResult {
        aggregate: mean_sorted(&defined),
        defined: defined.len(),
        skipped: stats.len() - defined.len(),
        retrieval_depth: cfg.retrieval_depth(corpus.len()),
        stats,
    })
}

/// Mean summed in ascending order, so the result does not depend on the
/// order of the inputs.
pub(crate) fn mean_sorted(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileBin {
    /// Inclusive lower frequency edge.
    pub lower: f64,
    /// Exclusive upper frequency edge.
    pub upper: f64,
    pub count: usize,
    pub mean_sim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyProfile {
    /// Descriptors that matched nothing.
    pub zero_freq_count: usize,
    pub bins: Vec<ProfileBin>,
    /// Pearson correlation between frequency and similarity over defined
    /// descriptors; `None` with fewer than two points or zero variance.
    pub pearson: Option<f64>,
}

/// Bins descriptors by frequency on a log scale spanning `[1, max_freq + 1)`
/// and reports mean similarity per bin.
pub fn frequency_similarity_profile(stats: &[DescriptorStats], num_bins: usize) -> Result<FrequencyProfile> {
    if num_bins == 0 {
        return Err(Error::Config("profile needs at least one bin".into()));
    }
    let points: Vec<(f64, f64)> = stats
        .iter()
        .filter_map(|s| s.sim.map(|sim| (s.freq as f64, sim)))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyProfile);
    }
    let max_freq = points.iter().map(|p| p.0).fold(1.0, f64::max);
    let top = (max_freq + 1.0).ln();
    let edge = |i: usize| ((i as f64 / num_bins as f64) * top).exp();
    let mut sums = vec![(0usize, Vec::new()); num_bins];
    for &(f, sim) in &points {
        let b = ((f.ln() / top) * num_bins as f64).floor() as usize;
        let b = b.min(num_bins - 1);
        sums[b].0 += 1;
        sums[b].1.push(sim);
    }
    let bins = sums
        .into_iter()
        .enumerate()
        .map(|(i, (count, sims))| ProfileBin {
            lower: if i == 0 { 1.0 } else { edge(i) },
            upper: if i + 1 == num_bins { max_freq + 1.0 } else { edge(i + 1) },
            count,
            mean_sim: (count > 0).then(|| mean_sorted(&sims)),
        })
        .collect();
    Ok(FrequencyProfile {
        zero_freq_count: stats.iter().filter(|s| s.sim.is_none()).count(),
        bins,
        pearson: pearson(&points),
    })
}

fn pearson(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(freq: usize, sim: Option<f64>) -> DescriptorStats {
        DescriptorStats {
            descriptor: format!("d{freq}"),
            matched_indices: (0..freq).collect(),
            freq,
            sim,
        }
    }

    #[test]
    fn depth_examples() {
        assert_eq!(retrieval_depth(0.05, 20), 1);
        assert_eq!(retrieval_depth(0.05, 5_000_000), 250_000);
        assert_eq!(retrieval_depth(0.07, 100), 7);
        assert_eq!(retrieval_depth(0.05, 3), 1);
        assert_eq!(retrieval_depth(1.0, 3), 3);
        assert_eq!(retrieval_depth(0.05, 21), 2);
    }

    #[test]
    fn config_validation() {
        assert!(ClipSimConfig::default().validate().is_ok());
        let bad = ClipSimConfig { tau: 1.5, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = ClipSimConfig { top_fraction: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ClipSimConfig { tau: f64::NAN, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn defaults_are_the_published_constants() {
        let c = ClipSimConfig::default();
        assert_eq!(c.tau, 0.7);
        assert_eq!(c.top_fraction, 0.05);
        assert_eq!(c.corpus_sample_size, 5_000_000);
    }

    #[test]
    fn single_bin_when_frequencies_equal() {
        let s = vec![stats(4, Some(0.2)), stats(4, Some(0.4)), stats(0, None)];
        let p = frequency_similarity_profile(&s, 5).unwrap();
        let occupied: Vec<_> = p.bins.iter().filter(|b| b.count > 0).collect();
        assert_eq!(occupied.len(), 1);
        assert!((occupied[0].mean_sim.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(p.zero_freq_count, 1);
        assert_eq!(p.pearson, None);
    }

    #[test]
    fn two_point_slope_sign() {
        let s = vec![stats(1, Some(0.9)), stats(100, Some(0.3))];
        let p = frequency_similarity_profile(&s, 4).unwrap();
        assert!(p.pearson.unwrap() < 0.0);
        assert_eq!(p.bins[0].count, 1);
        assert_eq!(p.bins[3].count, 1);
        assert_eq!(p.bins[0].lower, 1.0);
        assert_eq!(p.bins[3].upper, 101.0);
    }

    #[test]
    fn profile_errors() {
        assert!(matches!(
            frequency_similarity_profile(&[stats(0, None)], 3),
            Err(Error::EmptyProfile)
        ));
        assert!(frequency_similarity_profile(&[stats(1, Some(0.1))], 0).is_err());
    }

    #[test]
    fn similarity_is_the_plain_mean() {
        assert_eq!(similarity_from_cosines(&[0.5, 0.7]), Some(0.6));
        assert_eq!(similarity_from_cosines(&[]), None);
    }

    #[test]
    fn undefined_sim_is_an_error() {
        let c = EmbeddingMatrix::from_rows(&[[1.0f32, 0.0]]).unwrap();
        let corpus = CaptionCorpus::from_matrices(c.clone(), c).unwrap();
        assert!(matches!(
            descriptor_similarity(&stats(0, None), &corpus),
            Err(Error::UndefinedSim(_))
        ));
    }
}
