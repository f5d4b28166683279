//! Zero-shot classification by description and tracking of metrics over a
//! series of descriptor checkpoints.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::alignment::{self, global_pool, prepare_pool};
use crate::error::{Error, Result};
use crate::pretrain_sim::{clip_sim_with, ClipSimConfig};
use crate::knn::ScanOptions;
use crate::store::{CaptionCorpus, DescriptorSet, EmbeddingMatrix, LabelVector};

/// Per-image, per-class scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    images: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(images: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if images * classes != data.len() {
            return Err(Error::DataLength {
                len: data.len(),
                rows: images,
                dims: classes,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteRow { row: i / classes.max(1) });
        }
        Ok(ScoreMatrix { images, classes, data })
    }

    pub fn images(&self) -> usize {
        self.images
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    /// Applies `f` to every score of image `i`.
    pub fn map_row(&mut self, i: usize, f: impl Fn(f64) -> f64) {
        for v in &mut self.data[i * self.classes..(i + 1) * self.classes] {
            *v = f(*v);
        }
    }

    /// Highest-scoring class per image, ties to the lowest class index.
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.images)
            .map(|i| {
                let row = self.row(i);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Mean projection score over each class's columns.
///
/// `column_classes[j]` is the class owning column `j` of `projection`.
pub fn class_scores(
    projection: &EmbeddingMatrix,
    column_classes: &[usize],
    num_classes: usize,
) -> Result<ScoreMatrix> {
    if column_classes.len() != projection.dims() {
        return Err(Error::DimMismatch {
            left: column_classes.len(),
            right: projection.dims(),
        });
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (j, &c) in column_classes.iter().enumerate() {
        if c >= num_classes {
            return Err(Error::LabelOutOfRange {
                row: j,
                label: c,
                num_classes,
            });
        }
        members[c].push(j);
    }
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(format!("class index {c}")));
    }
    let mut data = vec![0f64; projection.rows() * num_classes];
    data.par_chunks_mut(num_classes)
        .zip(projection.data().par_chunks(projection.dims()))
        .for_each(|(out, row)| {
            let mut vals = Vec::new();
            for (o, cols) in out.iter_mut().zip(&members) {
                vals.clear();
                vals.extend(cols.iter().map(|&j| row[j] as f64));
                // sorted so the mean ignores descriptor order
                vals.sort_by(f64::total_cmp);
                *o = vals.iter().sum::<f64>() / vals.len() as f64;
            }
        });
    ScoreMatrix::new(projection.rows(), num_classes, data)
}

/// Fraction of images whose predicted class equals the label.
pub fn zero_shot_accuracy(scores: &ScoreMatrix, labels: &LabelVector) -> Result<f64> {
    check_shapes(scores, labels)?;
    let correct = scores
        .predictions()
        .iter()
        .zip(labels.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / scores.images() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub total: usize,
    pub correct: usize,
    /// `None` for classes without test images.
    pub accuracy: Option<f64>,
}

pub fn per_class_accuracy(scores: &ScoreMatrix, labels: &LabelVector) -> Result<Vec<ClassAccuracy>> {
    check_shapes(scores, labels)?;
    let mut out: Vec<ClassAccuracy> = (0..scores.classes())
        .map(|class| ClassAccuracy {
            class,
            total: 0,
            correct: 0,
            accuracy: None,
        })
        .collect();
    for (p, &l) in scores.predictions().into_iter().zip(labels.labels()) {
        out[l].total += 1;
        out[l].correct += (p == l) as usize;
    }
    for c in &mut out {
        c.accuracy = (c.total > 0).then(|| c.correct as f64 / c.total as f64);
    }
    Ok(out)
}

fn check_shapes(scores: &ScoreMatrix, labels: &LabelVector) -> Result<()> {
    if scores.images() != labels.len() {
        return Err(Error::RowMismatch {
            left: scores.images(),
            right: labels.len(),
        });
    }
    if scores.classes() != labels.num_classes() {
        return Err(Error::DimMismatch {
            left: scores.classes(),
            right: labels.num_classes(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyOutcome {
    pub accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
}

/// Classification by description with the set used as given (class names
/// kept). `descriptor_embeddings` has one row per descriptor in class order,
/// duplicates included.
pub fn classify_by_description(
    images: &EmbeddingMatrix,
    set: &DescriptorSet,
    descriptor_embeddings: &EmbeddingMatrix,
    labels: &LabelVector,
) -> Result<AccuracyOutcome> {
    let pool = global_pool(set, false);
    if descriptor_embeddings.rows() != pool.len() {
        return Err(Error::RowMismatch {
            left: pool.len(),
            right: descriptor_embeddings.rows(),
        });
    }
    if images.rows() != labels.len() {
        return Err(Error::RowMismatch {
            left: images.rows(),
            right: labels.len(),
        });
    }
    let s = alignment::semantic_projection(
        &*alignment::normalized(images)?,
        &*alignment::normalized(descriptor_embeddings)?,
    )?;
    let scores = class_scores(&s, &pool.column_classes(), set.num_classes())?;
    Ok(AccuracyOutcome {
        accuracy: zero_shot_accuracy(&scores, labels)?,
        per_class: per_class_accuracy(&scores, labels)?,
    })
}

/// One descriptor checkpoint with the embeddings it needs.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub iteration: usize,
    pub descriptor_file: PathBuf,
    pub set: DescriptorSet,
    /// One row per descriptor of `set` as given (used for accuracy).
    pub full_embeddings: EmbeddingMatrix,
    /// One row per entry of the pool prepared for the similarity metric.
    pub pool_embeddings: EmbeddingMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackConfig {
    pub clip: ClipSimConfig,
    /// Strip class names before the similarity metric.
    pub strip_for_clip_sim: bool,
    pub dedup: bool,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            clip: ClipSimConfig::default(),
            strip_for_clip_sim: true,
            dedup: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub accuracy: f64,
    pub clip_sim: f64,
    pub skipped_descriptors: usize,
    pub descriptor_file: PathBuf,
}

/// Accuracy and pre-training similarity for every checkpoint, in input
/// order. Checkpoints must share the first checkpoint's classes and have
/// strictly increasing iteration numbers.
pub fn track_iterations(
    checkpoints: &[Checkpoint],
    images: &EmbeddingMatrix,
    labels: &LabelVector,
    corpus: &CaptionCorpus,
    cfg: &TrackConfig,
    opts: &ScanOptions,
) -> Result<Vec<IterationRecord>> {
    let Some(first) = checkpoints.first() else {
        return Ok(Vec::new());
    };
    for pair in checkpoints.windows(2) {
        if pair[1].iteration <= pair[0].iteration {
            return Err(Error::Config(format!(
                "checkpoint iterations must increase strictly ({} then {})",
                pair[0].iteration, pair[1].iteration
            )));
        }
    }
    for cp in checkpoints {
        if cp.set.classes() != first.set.classes() {
            return Err(Error::ClassMismatch {
                path: cp.descriptor_file.clone(),
            });
        }
    }
    let images = alignment::normalized(images)?;
    checkpoints
        .par_iter()
        .map(|cp| {
            let acc = classify_by_description(&images, &cp.set, &cp.full_embeddings, labels)?;
            let pool = prepare_pool(&cp.set, cfg.strip_for_clip_sim, cfg.dedup)?;
            let sim = clip_sim_with(&pool, &cp.pool_embeddings, corpus, &cfg.clip, opts)?;
            Ok(IterationRecord {
                iteration: cp.iteration,
                accuracy: acc.accuracy,
                clip_sim: sim.aggregate,
                skipped_descriptors: sim.skipped,
                descriptor_file: cp.descriptor_file.clone(),
            })
        })
        .collect()
}
