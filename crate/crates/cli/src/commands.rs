use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use serde::Serialize;

use desceval::alignment::{choose_k, dino_align, prepare_pool, AlignmentConfig, DescriptorPool};
use desceval::classify::{classify_by_description, track_iterations, Checkpoint, TrackConfig};
use desceval::descriptors::{class_name_prompts, dclip_randomized, generator_meta, waffle_randomized, GeneratorConfig};
use desceval::knn::ScanOptions;
use desceval::pretrain_sim::{clip_sim, frequency_similarity_profile, ClipSimConfig};
use desceval::report::{sort_keys, EvalReport};
use desceval::store::{
    load_descriptor_set, read_embedding_matrix, read_labels, CaptionCorpus, DescriptorSet, EmbeddingMatrix,
    LabelVector, Mapping,
};
use desceval::Error;

use crate::output::{finish_report, read_list, write_csv, write_text};
use crate::svg::{line_chart, Series};

#[derive(Debug, Args)]
pub struct PoolFlags {
    /// Keep class names in descriptors instead of stripping them.
    #[arg(long)]
    keep_class_names: bool,
    /// Keep exact duplicate descriptors in the global pool.
    #[arg(long)]
    no_dedup: bool,
}

#[derive(Debug, Args)]
pub struct CorpusFlags {
    /// Caption embeddings of the pre-training sample (EMB1).
    #[arg(long)]
    corpus_captions: PathBuf,
    /// Image embeddings paired row by row with the captions (EMB1).
    #[arg(long)]
    corpus_images: PathBuf,
    /// Map at most this many MiB of each corpus file at a time instead of
    /// mapping whole files.
    #[arg(long)]
    window_mb: Option<usize>,
}

impl CorpusFlags {
    fn open(&self) -> Result<CaptionCorpus> {
        let mapping = match self.window_mb {
            Some(mb) => Mapping::Windowed {
                max_bytes: mb.saturating_mul(1 << 20),
            },
            None => Mapping::Full,
        };
        CaptionCorpus::open(&self.corpus_captions, &self.corpus_images, None, mapping).context("opening corpus")
    }

    fn digest(&self, report: &mut EvalReport) -> Result<()> {
        report.input("corpus_captions", &self.corpus_captions)?;
        report.input("corpus_images", &self.corpus_images)?;
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct ClipFlags {
    /// Caption similarity threshold; matches must score strictly above it.
    #[arg(long, default_value_t = desceval::pretrain_sim::DEFAULT_TAU)]
    tau: f64,
    /// Fraction of the corpus retrieved per descriptor.
    #[arg(long, default_value_t = desceval::pretrain_sim::DEFAULT_TOP_FRACTION)]
    top_fraction: f64,
    /// Intended size of the corpus sample; recorded in the report only.
    #[arg(long, default_value_t = desceval::pretrain_sim::DEFAULT_CORPUS_SAMPLE_SIZE)]
    corpus_sample_size: usize,
}

impl ClipFlags {
    fn config(&self) -> Result<ClipSimConfig> {
        let cfg = ClipSimConfig {
            tau: self.tau,
            top_fraction: self.top_fraction,
            corpus_sample_size: self.corpus_sample_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_matrix(path: &Path, what: &str) -> Result<EmbeddingMatrix> {
    read_embedding_matrix(path).with_context(|| format!("reading {what} {}", path.display()))
}

fn load_set(path: &Path) -> Result<DescriptorSet> {
    load_descriptor_set(path).with_context(|| format!("reading descriptors {}", path.display()))
}

fn load_labels(path: &Path, num_classes: usize) -> Result<LabelVector> {
    read_labels(path, Some(num_classes)).with_context(|| format!("reading labels {}", path.display()))
}

fn check_pool_rows(pool: &DescriptorPool, m: &EmbeddingMatrix, path: &Path, pool_flags: &str) -> Result<()> {
    if pool.len() != m.rows() {
        return Err(anyhow::Error::new(Error::RowMismatch {
            left: pool.len(),
            right: m.rows(),
        })
        .context(format!(
            "{} must hold one row per line of `desceval pool{pool_flags}`",
            path.display()
        )));
    }
    Ok(())
}

fn pool_flag_string(keep_class_names: bool, no_dedup: bool) -> String {
    let mut s = String::new();
    if keep_class_names {
        s.push_str(" --keep-class-names");
    }
    if no_dedup {
        s.push_str(" --no-dedup");
    }
    s
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Image embeddings in the vision-language space (EMB1).
    #[arg(long)]
    images_clip: PathBuf,
    /// Text embeddings of the pooled descriptors (EMB1), one row per line of
    /// `desceval pool` with the same pool flags.
    #[arg(long)]
    concepts: PathBuf,
    /// Reference image embeddings, same images in the same order (EMB1).
    #[arg(long)]
    images_ref: PathBuf,
    /// Descriptor set (JSON).
    #[arg(long)]
    descriptors: PathBuf,
    /// Neighborhood size; derived from --labels when omitted.
    #[arg(long, required_unless_present = "labels")]
    k: Option<usize>,
    /// Class label per image, one integer per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    pool: PoolFlags,
    /// Compare projection rows by raw inner product instead of cosine.
    #[arg(long)]
    raw_projection: bool,
    /// Write a JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn align(a: AlignArgs) -> Result<()> {
    let started = Instant::now();
    let set = load_set(&a.descriptors)?;
    let pool = prepare_pool(&set, !a.pool.keep_class_names, !a.pool.no_dedup)?;
    let concepts = load_matrix(&a.concepts, "concept embeddings")?;
    check_pool_rows(
        &pool,
        &concepts,
        &a.concepts,
        &pool_flag_string(a.pool.keep_class_names, a.pool.no_dedup),
    )?;
    let images = load_matrix(&a.images_clip, "images")?;
    let reference = load_matrix(&a.images_ref, "reference images")?;

    let mut report = EvalReport::new("align");
    let (k, k_source) = match (a.k, &a.labels) {
        (Some(k), _) => (k, "flag"),
        (None, Some(path)) => {
            let labels = load_labels(path, set.num_classes())?;
            if labels.len() != images.rows() {
                return Err(Error::RowMismatch {
                    left: labels.len(),
                    right: images.rows(),
                })
                .context("labels and images differ in length");
            }
            (choose_k(&labels), "labels: round-half-up(images / classes)")
        }
        (None, None) => return Err(Error::Config("either --k or --labels is required".into()).into()),
    };
    let cfg = AlignmentConfig {
        k,
        strip_class_names: !a.pool.keep_class_names,
        dedup_global: !a.pool.no_dedup,
        normalize_projection_rows: !a.raw_projection,
    };
    let out = dino_align(&images, &concepts, &reference, &cfg)?;

    report
        .config("k", k)
        .config("k_source", k_source)
        .config("strip_class_names", cfg.strip_class_names)
        .config("keep_class_names", a.pool.keep_class_names)
        .config("dedup_global", cfg.dedup_global)
        .config("normalize_projection_rows", cfg.normalize_projection_rows)
        .metric("dino_align", out.score)
        .metric("items", out.items)
        .metric("pool_size", out.pool_size);
    report.input("images_clip", &a.images_clip)?;
    report.input("concepts", &a.concepts)?;
    report.input("images_ref", &a.images_ref)?;
    report.input("descriptors", &a.descriptors)?;
    if let Some(l) = &a.labels {
        report.input("labels", l)?;
    }
    println!("dino_align\t{}", out.score);
    finish_report(report, started, a.report.as_deref())
}

#[derive(Debug, Args)]
pub struct ClipSimArgs {
    /// Descriptor set (JSON).
    #[arg(long)]
    descriptors: PathBuf,
    /// Text embeddings of the pooled descriptors (EMB1), one row per line of
    /// `desceval pool` with the same pool flags.
    #[arg(long)]
    descriptor_embeddings: PathBuf,
    #[command(flatten)]
    corpus: CorpusFlags,
    #[command(flatten)]
    clip: ClipFlags,
    /// Number of log-spaced frequency bins in the profile.
    #[arg(long, default_value_t = 10)]
    profile_bins: usize,
    #[command(flatten)]
    pool: PoolFlags,
    /// Per-descriptor statistics CSV (index, class, descriptor, freq, sim).
    #[arg(long)]
    stats_csv: Option<PathBuf>,
    /// Frequency-vs-similarity profile CSV (bin, lower, upper, count, mean_sim).
    #[arg(long)]
    profile_csv: Option<PathBuf>,
    /// Write a JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct StatRow<'a> {
    index: usize,
    class: &'a str,
    descriptor: &'a str,
    freq: usize,
    sim: Option<f64>,
}

#[derive(Serialize)]
struct ProfileRow {
    bin: usize,
    lower: f64,
    upper: f64,
    count: usize,
    mean_sim: Option<f64>,
}

pub fn clipsim(a: ClipSimArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = a.clip.config()?;
    if a.profile_bins == 0 {
        return Err(Error::Config("--profile-bins must be at least 1".into()).into());
    }
    let set = load_set(&a.descriptors)?;
    let pool = prepare_pool(&set, !a.pool.keep_class_names, !a.pool.no_dedup)?;
    let emb = load_matrix(&a.descriptor_embeddings, "descriptor embeddings")?;
    check_pool_rows(
        &pool,
        &emb,
        &a.descriptor_embeddings,
        &pool_flag_string(a.pool.keep_class_names, a.pool.no_dedup),
    )?;
    let corpus = a.corpus.open()?;
    let result = clip_sim(&pool, &emb, &corpus, &cfg)?;
    let profile = frequency_similarity_profile(&result.stats, a.profile_bins)?;

    if let Some(path) = &a.stats_csv {
        let rows = result.stats.iter().enumerate().map(|(i, s)| StatRow {
            index: i,
            class: &set.classes()[pool.origins[i].0],
            descriptor: &s.descriptor,
            freq: s.freq,
            sim: s.sim,
        });
        write_csv(path, rows)?;
    }
    if let Some(path) = &a.profile_csv {
        let rows = profile.bins.iter().enumerate().map(|(i, b)| ProfileRow {
            bin: i,
            lower: b.lower,
            upper: b.upper,
            count: b.count,
            mean_sim: b.mean_sim,
        });
        write_csv(path, rows)?;
    }

    let mut report = EvalReport::new("clipsim");
    report.clip_sim_config(&cfg, corpus.len());
    report
        .config("strip_class_names", !a.pool.keep_class_names)
        .config("dedup_global", !a.pool.no_dedup)
        .config("profile_bins", a.profile_bins)
        .metric("clip_sim", result.aggregate)
        .metric("defined_descriptors", result.defined)
        .metric("skipped_descriptors", result.skipped)
        .metric("zero_freq_count", profile.zero_freq_count)
        .metric("freq_sim_pearson", profile.pearson);
    report.input("descriptors", &a.descriptors)?;
    report.input("descriptor_embeddings", &a.descriptor_embeddings)?;
    a.corpus.digest(&mut report)?;
    println!("clip_sim\t{}", result.aggregate);
    finish_report(report, started, a.report.as_deref())
}

#[derive(Debug, Args)]
pub struct AccuracyArgs {
    /// Image embeddings in the vision-language space (EMB1).
    #[arg(long)]
    images_clip: PathBuf,
    /// Descriptor set (JSON).
    #[arg(long)]
    descriptors: PathBuf,
    /// Text embeddings of every descriptor as written, one row per line of
    /// `desceval pool --full`.
    #[arg(long)]
    descriptor_embeddings: PathBuf,
    /// Class label per image, one integer per line.
    #[arg(long)]
    labels: PathBuf,
    /// Per-class accuracy CSV (class_index, class, total, correct, accuracy).
    #[arg(long)]
    per_class_csv: Option<PathBuf>,
    /// Write a JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct ClassRow<'a> {
    class_index: usize,
    class: &'a str,
    total: usize,
    correct: usize,
    accuracy: Option<f64>,
}

pub fn accuracy(a: AccuracyArgs) -> Result<()> {
    let started = Instant::now();
    let set = load_set(&a.descriptors)?;
    let emb = load_matrix(&a.descriptor_embeddings, "descriptor embeddings")?;
    check_pool_rows(&prepare_pool(&set, false, false)?, &emb, &a.descriptor_embeddings, " --full")?;
    let images = load_matrix(&a.images_clip, "images")?;
    let labels = load_labels(&a.labels, set.num_classes())?;
    let out = classify_by_description(&images, &set, &emb, &labels)?;

    if let Some(path) = &a.per_class_csv {
        let rows = out.per_class.iter().map(|c| ClassRow {
            class_index: c.class,
            class: &set.classes()[c.class],
            total: c.total,
            correct: c.correct,
            accuracy: c.accuracy,
        });
        write_csv(path, rows)?;
    }
    let mut report = EvalReport::new("accuracy");
    report
        .config("keep_class_names", true)
        .config("class_score", "unweighted mean over the class's descriptors")
        .config("tie_rule", "lowest class index")
        .metric("accuracy", out.accuracy)
        .metric("images", labels.len())
        .metric("classes", set.num_classes());
    report.input("images_clip", &a.images_clip)?;
    report.input("descriptors", &a.descriptors)?;
    report.input("descriptor_embeddings", &a.descriptor_embeddings)?;
    report.input("labels", &a.labels)?;
    println!("accuracy\t{}", out.accuracy);
    finish_report(report, started, a.report.as_deref())
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Glob matching the checkpoint descriptor files. The iteration number is
    /// the trailing integer of each file stem. Each `NAME.json` needs
    /// `NAME.full.emb1` (rows of `desceval pool --full`) and `NAME.pool.emb1`
    /// (rows of `desceval pool` with the same pool flags) beside it.
    #[arg(long)]
    checkpoints: String,
    /// Image embeddings in the vision-language space (EMB1).
    #[arg(long)]
    images_clip: PathBuf,
    /// Class label per image, one integer per line.
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    corpus: CorpusFlags,
    #[command(flatten)]
    clip: ClipFlags,
    #[command(flatten)]
    pool: PoolFlags,
    /// Series CSV (iteration, accuracy, clip_sim, skipped_descriptors).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Series JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Line chart of accuracy and caption similarity per iteration.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Write a JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct SeriesRow {
    iteration: usize,
    accuracy: f64,
    clip_sim: f64,
    skipped_descriptors: usize,
}

fn trailing_number(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let digits = stem.len() - stem.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    stem[stem.len() - digits..].parse().ok()
}

fn find_checkpoints(pattern: &str) -> Result<Vec<(usize, PathBuf)>> {
    let paths = glob::glob(pattern).map_err(|e| Error::Config(format!("invalid --checkpoints pattern: {e}")))?;
    let mut found = Vec::new();
    for p in paths {
        let p = p?;
        let it = trailing_number(&p).ok_or_else(|| {
            Error::Config(format!("{}: file stem does not end in an iteration number", p.display()))
        })?;
        found.push((it, p));
    }
    if found.is_empty() {
        return Err(Error::Config(format!("no checkpoint files match {pattern}")).into());
    }
    found.sort();
    Ok(found)
}

pub fn track(a: TrackArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = TrackConfig {
        clip: a.clip.config()?,
        strip_for_clip_sim: !a.pool.keep_class_names,
        dedup: !a.pool.no_dedup,
    };
    let files = find_checkpoints(&a.checkpoints)?;
    let flags = pool_flag_string(a.pool.keep_class_names, a.pool.no_dedup);
    let mut report = EvalReport::new("track");
    let mut checkpoints = Vec::with_capacity(files.len());
    for (iteration, path) in files {
        let set = load_set(&path)?;
        let full_path = path.with_extension("full.emb1");
        let pool_path = path.with_extension("pool.emb1");
        let full = load_matrix(&full_path, "checkpoint embeddings")?;
        let pool_emb = load_matrix(&pool_path, "checkpoint pool embeddings")?;
        check_pool_rows(&prepare_pool(&set, false, false)?, &full, &full_path, " --full")?;
        check_pool_rows(&prepare_pool(&set, cfg.strip_for_clip_sim, cfg.dedup)?, &pool_emb, &pool_path, &flags)?;
        report.input(&format!("checkpoint_{iteration}.descriptors"), &path)?;
        report.input(&format!("checkpoint_{iteration}.full"), &full_path)?;
        report.input(&format!("checkpoint_{iteration}.pool"), &pool_path)?;
        checkpoints.push(Checkpoint {
            iteration,
            descriptor_file: path,
            set,
            full_embeddings: full,
            pool_embeddings: pool_emb,
        });
    }
    let images = load_matrix(&a.images_clip, "images")?;
    let labels = load_labels(&a.labels, checkpoints[0].set.num_classes())?;
    let corpus = a.corpus.open()?;
    let records = track_iterations(&checkpoints, &images, &labels, &corpus, &cfg, &ScanOptions::default())?;

    if let Some(path) = &a.csv {
        write_csv(
            path,
            records.iter().map(|r| SeriesRow {
                iteration: r.iteration,
                accuracy: r.accuracy,
                clip_sim: r.clip_sim,
                skipped_descriptors: r.skipped_descriptors,
            }),
        )?;
    }
    let series = sort_keys(serde_json::to_value(&records)?);
    if let Some(path) = &a.json {
        write_text(Some(path), &(serde_json::to_string_pretty(&series)? + "\n"))?;
    }
    if let Some(path) = &a.svg {
        let chart = line_chart(
            "Descriptor checkpoints",
            "iteration",
            &[
                Series {
                    name: "accuracy",
                    color: "#1f77b4",
                    points: records.iter().map(|r| (r.iteration as f64, r.accuracy)).collect(),
                },
                Series {
                    name: "clip_sim",
                    color: "#d62728",
                    points: records.iter().map(|r| (r.iteration as f64, r.clip_sim)).collect(),
                },
            ],
        );
        write_text(Some(path), &chart)?;
    }

    report.clip_sim_config(&cfg.clip, corpus.len());
    report
        .config("checkpoints", a.checkpoints.as_str())
        .config("strip_class_names_for_clip_sim", cfg.strip_for_clip_sim)
        .config("dedup_global", cfg.dedup)
        .config("accuracy_keeps_class_names", true)
        .metric("series", series);
    report.input("images_clip", &a.images_clip)?;
    report.input("labels", &a.labels)?;
    a.corpus.digest(&mut report)?;
    for r in &records {
        println!("{}\t{}\t{}", r.iteration, r.accuracy, r.clip_sim);
    }
    finish_report(report, started, a.report.as_deref())
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// One "An image of a {class}" prompt per class.
    Classname(ClassnameArgs),
    /// The same random sample of global descriptors for every class.
    Dclip(DclipArgs),
    /// Random character tokens appended to class names.
    Waffle(WaffleArgs),
}

#[derive(Debug, Args)]
pub struct ClassListArgs {
    /// Class names, one per line.
    #[arg(long)]
    classes: PathBuf,
    /// Output file (default: stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassnameArgs {
    #[command(flatten)]
    common: ClassListArgs,
}

#[derive(Debug, Args)]
pub struct DclipArgs {
    #[command(flatten)]
    common: ClassListArgs,
    /// Global descriptor pool, one per line.
    #[arg(long)]
    pool: PathBuf,
    /// Number of pool descriptors to sample.
    #[arg(long)]
    pool_size: usize,
    /// Seed of the SplitMix64 sampler.
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct WaffleArgs {
    #[command(flatten)]
    common: ClassListArgs,
    /// Seed of the SplitMix64 token generator.
    #[arg(long)]
    seed: u64,
    /// Random tokens in each descriptor.
    #[arg(long, default_value_t = 3)]
    tokens_per_class: usize,
    /// Characters per token.
    #[arg(long, default_value_t = 4)]
    token_length: usize,
    /// Randomized descriptors generated for each class.
    #[arg(long, default_value_t = 1)]
    descriptors_per_class: usize,
    /// High-level concepts, one per line.
    #[arg(long)]
    concepts: Option<PathBuf>,
}

pub fn gen(cmd: GenCommand) -> Result<()> {
    let (set, meta, out) = match cmd {
        GenCommand::Classname(a) => {
            let classes = read_list(&a.common.classes)?;
            (class_name_prompts(&classes)?, generator_meta("classname", None), a.common.out)
        }
        GenCommand::Dclip(a) => {
            let classes = read_list(&a.common.classes)?;
            let pool = read_list(&a.pool)?;
            let cfg = GeneratorConfig {
                pool_size: a.pool_size,
                ..GeneratorConfig::new(a.seed)
            };
            let set = dclip_randomized(&classes, &pool, &cfg)?;
            (set, generator_meta("dclip", Some(&cfg)), a.common.out)
        }
        GenCommand::Waffle(a) => {
            let classes = read_list(&a.common.classes)?;
            let concepts = match &a.concepts {
                Some(p) => read_list(p)?,
                None => Vec::new(),
            };
            let cfg = GeneratorConfig {
                tokens_per_class: a.tokens_per_class,
                token_length: a.token_length,
                descriptors_per_class: a.descriptors_per_class,
                concepts,
                ..GeneratorConfig::new(a.seed)
            };
            let set = waffle_randomized(&classes, &cfg)?;
            (set, generator_meta("waffle", Some(&cfg)), a.common.out)
        }
    };
    write_text(out.as_deref(), &set.to_json_string(Some(&meta)))
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    /// Descriptor set (JSON).
    #[arg(long)]
    descriptors: PathBuf,
    #[command(flatten)]
    pool: PoolFlags,
    /// Every descriptor as written, class names kept and duplicates
    /// included; the row order used by `accuracy`.
    #[arg(long, conflicts_with_all = ["keep_class_names", "no_dedup"])]
    full: bool,
    /// Output file (default: stdout).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

pub fn pool(a: PoolArgs) -> Result<()> {
    let set = load_set(&a.descriptors)?;
    let pool = if a.full {
        prepare_pool(&set, false, false)?
    } else {
        prepare_pool(&set, !a.pool.keep_class_names, !a.pool.no_dedup)?
    };
    let mut text = String::new();
    for (i, t) in pool.texts.iter().enumerate() {
        if t.contains(['\n', '\r']) {
            let (class, position) = pool.origins[i];
            return Err(Error::DescriptorJson(format!(
                "descriptor {position} of {} contains a line break",
                set.classes()[class]
            ))
            .into());
        }
        text.push_str(t);
        text.push('\n');
    }
    write_text(a.out.as_deref(), &text)
}
