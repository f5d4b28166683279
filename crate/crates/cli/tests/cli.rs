use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use desceval::alignment::prepare_pool;
use desceval::pretrain_sim::{clip_sim, ClipSimConfig};
use desceval::store::{write_embedding_matrix, CaptionCorpus, DescriptorSet, EmbeddingMatrix};
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_desceval"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn desceval")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_emb(path: &Path, rows: &[Vec<f32>]) {
    write_embedding_matrix(&EmbeddingMatrix::from_rows(rows).unwrap(), path).unwrap();
}

fn unit(dims: usize, i: usize) -> Vec<f32> {
    let mut v = vec![0.0; dims];
    v[i] = 1.0;
    v
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Report JSON without the wall-time entry.
fn report_without_time(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_time_seconds");
    v
}

const DIMS: usize = 12;

/// Corpus of 10 pairs: caption i is basis vector i, its image leans away
/// along the last axis by an angle growing with i, so pair cosine falls
/// with i.
fn write_corpus(dir: &TempDir) -> (PathBuf, PathBuf) {
    let captions: Vec<Vec<f32>> = (0..10).map(|i| unit(DIMS, i)).collect();
    let images: Vec<Vec<f32>> = (0..10)
        .map(|i| {
            let a = 0.1 * i as f32;
            let mut v = vec![0.0; DIMS];
            v[i] = a.cos();
            v[DIMS - 1] = a.sin();
            v
        })
        .collect();
    let (c, m) = (p(dir, "captions.emb1"), p(dir, "images.emb1"));
    write_emb(&c, &captions);
    write_emb(&m, &images);
    (c, m)
}

fn write_json(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn missing_concepts_is_a_usage_error() {
    let out = run(&["align", "--images-clip", "a.emb1", "--images-ref", "b.emb1", "--descriptors", "d.json", "--k", "3"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--concepts"));
}

#[test]
fn tau_out_of_range_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let (c, m) = write_corpus(&dir);
    let d = p(&dir, "d.json");
    write_json(&d, r#"{"cat": ["furry"]}"#);
    let e = p(&dir, "e.emb1");
    write_emb(&e, &[unit(DIMS, 0)]);
    let out = run(&[
        "clipsim", "--descriptors", s(&d), "--descriptor-embeddings", s(&e),
        "--corpus-captions", s(&c), "--corpus-images", s(&m), "--tau", "1.5",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let classes = p(&dir, "classes.txt");
    fs::write(&classes, "cat\ndog\nlaysan albatross\n").unwrap();
    let pool = p(&dir, "pool.txt");
    fs::write(&pool, "has fur\nhas four legs\nis furry\nhas wings\n").unwrap();
    let gen = |kind: &str, seed: &str, out: &Path| {
        let mut args = vec!["gen", kind, "--classes", s(&classes), "--seed", seed, "--out", s(out)];
        if kind == "dclip" {
            args.extend(["--pool", s(&pool), "--pool-size", "2"]);
        }
        assert_eq!(code(&run(&args)), 0);
        fs::read(out).unwrap()
    };
    for kind in ["dclip", "waffle"] {
        let a = gen(kind, "11", &p(&dir, "a.json"));
        let b = gen(kind, "11", &p(&dir, "b.json"));
        assert_eq!(a, b, "{kind}");
        let c = gen(kind, "12", &p(&dir, "c.json"));
        assert_ne!(a, c, "{kind}");
    }
}

#[test]
fn dclip_sample_for_seed_seven() {
    let dir = TempDir::new().unwrap();
    let classes = p(&dir, "classes.txt");
    fs::write(&classes, "cat\ndog\n").unwrap();
    let pool = p(&dir, "pool.txt");
    fs::write(&pool, "has fur\nhas four legs\nis furry\n").unwrap();
    let out = run(&["gen", "dclip", "--classes", s(&classes), "--pool", s(&pool), "--pool-size", "2", "--seed", "7"]);
    assert_eq!(code(&out), 0);
    let set = DescriptorSet::from_json_str(&stdout(&out), "x").unwrap();
    assert_eq!(set.descriptors(0), &["cat, has four legs", "cat, has fur"]);
    assert_eq!(set.descriptors(1), &["dog, has four legs", "dog, has fur"]);

    let too_many = run(&["gen", "dclip", "--classes", s(&classes), "--pool", s(&pool), "--pool-size", "4", "--seed", "7"]);
    assert_eq!(code(&too_many), 2);
}

#[test]
fn gen_classname_template() {
    let dir = TempDir::new().unwrap();
    let classes = p(&dir, "classes.txt");
    fs::write(&classes, "cat\n\ndog\n").unwrap();
    let out = run(&["gen", "classname", "--classes", s(&classes)]);
    let set = DescriptorSet::from_json_str(&stdout(&out), "x").unwrap();
    assert_eq!(set.descriptors(0), &["An image of a cat"]);
    assert_eq!(set.descriptors(1), &["An image of a dog"]);
}

#[test]
fn pool_lines_follow_the_flags() {
    let dir = TempDir::new().unwrap();
    let d = p(&dir, "d.json");
    write_json(&d, r#"{"cat": ["cat, furry", "small"], "dog": ["small", "dog, loyal"]}"#);
    let lines = |extra: &[&str]| {
        let mut args = vec!["pool", "--descriptors", s(&d)];
        args.extend_from_slice(extra);
        stdout(&run(&args))
    };
    assert_eq!(lines(&[]), "furry\nsmall\nloyal\n");
    assert_eq!(lines(&["--no-dedup"]), "furry\nsmall\nsmall\nloyal\n");
    assert_eq!(lines(&["--keep-class-names"]), "cat, furry\nsmall\ndog, loyal\n");
    assert_eq!(lines(&["--full"]), "cat, furry\nsmall\nsmall\ndog, loyal\n");
}

/// Descriptors "d0".."d4" per checkpoint; descriptor j of the checkpoint
/// embeds as caption `first + j`.
fn clip_fixture(dir: &TempDir, first: usize) -> (PathBuf, PathBuf) {
    let d = p(dir, &format!("set{first}.json"));
    write_json(&d, r#"{"a": ["d0", "d1", "d2"], "b": ["d3", "d4"]}"#);
    let e = p(dir, &format!("set{first}.emb1"));
    write_emb(&e, &(0..5).map(|j| unit(DIMS, first + j)).collect::<Vec<_>>());
    (d, e)
}

#[test]
fn clipsim_matches_library_and_reports_are_stable() {
    let dir = TempDir::new().unwrap();
    let (c, m) = write_corpus(&dir);
    let (d, e) = clip_fixture(&dir, 2);
    let (stats_csv, profile_csv) = (p(&dir, "stats.csv"), p(&dir, "profile.csv"));
    let run_once = |report: &Path| {
        run(&[
            "clipsim", "--descriptors", s(&d), "--descriptor-embeddings", s(&e),
            "--corpus-captions", s(&c), "--corpus-images", s(&m), "--top-fraction", "0.2",
            "--stats-csv", s(&stats_csv), "--profile-csv", s(&profile_csv), "--report", s(report),
        ])
    };
    let (r1, r2) = (p(&dir, "r1.json"), p(&dir, "r2.json"));
    let out = run_once(&r1);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&run_once(&r2)), 0);

    let set = desceval::store::load_descriptor_set(&d).unwrap();
    let pool = prepare_pool(&set, true, true).unwrap();
    let emb = desceval::store::read_embedding_matrix(&e).unwrap();
    let corpus = CaptionCorpus::open(&c, &m, None, Default::default()).unwrap();
    let cfg = ClipSimConfig { top_fraction: 0.2, ..Default::default() };
    let lib = clip_sim(&pool, &emb, &corpus, &cfg).unwrap();
    assert_eq!(stdout(&out), format!("clip_sim\t{}\n", lib.aggregate));

    let rep = report_without_time(&r1);
    assert_eq!(rep, report_without_time(&r2));
    assert_eq!(rep["config"]["tau"], serde_json::json!(0.7));
    assert_eq!(rep["config"]["top_fraction"], serde_json::json!(0.2));
    assert_eq!(rep["config"]["retrieval_depth"], serde_json::json!(2));
    assert_eq!(rep["metrics"]["clip_sim"].as_f64().unwrap(), lib.aggregate);
    let raw = fs::read_to_string(&r1).unwrap();
    assert!(raw.trim_end().ends_with('}'));
    assert!(raw.contains("wall_time_seconds"));

    let stats = fs::read_to_string(&stats_csv).unwrap();
    assert_eq!(stats.lines().next().unwrap(), "index,class,descriptor,freq,sim");
    assert_eq!(stats.lines().count(), 6);
    let profile = fs::read_to_string(&profile_csv).unwrap();
    assert_eq!(profile.lines().next().unwrap(), "bin,lower,upper,count,mean_sim");
    assert_eq!(profile.lines().count(), 11);
}

#[test]
fn clipsim_defaults_are_echoed() {
    let dir = TempDir::new().unwrap();
    let (c, m) = write_corpus(&dir);
    let (d, e) = clip_fixture(&dir, 0);
    let r = p(&dir, "r.json");
    let out = run(&[
        "clipsim", "--descriptors", s(&d), "--descriptor-embeddings", s(&e),
        "--corpus-captions", s(&c), "--corpus-images", s(&m), "--report", s(&r),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let raw = fs::read_to_string(&r).unwrap();
    assert!(raw.contains("\"tau\": 0.7,"));
    assert!(raw.contains("\"top_fraction\": 0.05"));
    assert!(raw.contains("\"corpus_sample_size\": 5000000"));
}

#[test]
fn clipsim_with_no_matches_is_metric_undefined() {
    let dir = TempDir::new().unwrap();
    let (c, m) = write_corpus(&dir);
    let d = p(&dir, "d.json");
    write_json(&d, r#"{"a": ["nothing"]}"#);
    let e = p(&dir, "e.emb1");
    write_emb(&e, &[unit(DIMS, DIMS - 1)]);
    let out = run(&[
        "clipsim", "--descriptors", s(&d), "--descriptor-embeddings", s(&e),
        "--corpus-captions", s(&c), "--corpus-images", s(&m),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn clipsim_rejects_misaligned_embeddings() {
    let dir = TempDir::new().unwrap();
    let (c, m) = write_corpus(&dir);
    let (d, _) = clip_fixture(&dir, 0);
    let e = p(&dir, "short.emb1");
    write_emb(&e, &[unit(DIMS, 0)]);
    let out = run(&[
        "clipsim", "--descriptors", s(&d), "--descriptor-embeddings", s(&e),
        "--corpus-captions", s(&c), "--corpus-images", s(&m),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("desceval pool"));
}

/// Six images on three axes, two per class, and one descriptor per class
/// embedded on the matching axis.
fn accuracy_fixture(dir: &TempDir, labels: &str) -> [PathBuf; 4] {
    let x = p(dir, "x.emb1");
    write_emb(&x, &(0..6).map(|i| unit(3, i % 3)).collect::<Vec<_>>());
    let d = p(dir, "acc.json");
    write_json(&d, r#"{"a": ["a thing"], "b": ["b thing"], "c": ["c thing"]}"#);
    let e = p(dir, "acc.emb1");
    write_emb(&e, &(0..3).map(|i| unit(3, i)).collect::<Vec<_>>());
    let l = p(dir, "labels.txt");
    fs::write(&l, labels).unwrap();
    [x, d, e, l]
}

fn accuracy_run(files: &[PathBuf; 4], extra: &[&str]) -> Output {
    let [x, d, e, l] = files;
    let mut args = vec![
        "accuracy", "--images-clip", s(x), "--descriptors", s(d), "--descriptor-embeddings", s(e), "--labels", s(l),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn accuracy_fixtures() {
    let dir = TempDir::new().unwrap();
    let files = accuracy_fixture(&dir, "0\n1\n2\n0\n1\n2\n");
    let csv = p(&dir, "pc.csv");
    let out = accuracy_run(&files, &["--per-class-csv", s(&csv)]);
    assert_eq!(stdout(&out), "accuracy\t1\n");
    let table = fs::read_to_string(&csv).unwrap();
    assert_eq!(table.lines().next().unwrap(), "class_index,class,total,correct,accuracy");
    assert_eq!(table.lines().nth(1).unwrap(), "0,a,2,2,1.0");

    let dir = TempDir::new().unwrap();
    let files = accuracy_fixture(&dir, "0\n1\n2\n1\n2\n0\n");
    assert_eq!(stdout(&accuracy_run(&files, &[])), "accuracy\t0.5\n");

    let dir = TempDir::new().unwrap();
    let files = accuracy_fixture(&dir, "0\n1\n2\n0\n1\n");
    assert_eq!(code(&accuracy_run(&files, &[])), 3);
}

fn align_files(dir: &TempDir) -> [PathBuf; 4] {
    // five images; the concept space is the identity so the projection
    // reproduces the clip images, and the reference equals them
    let rows = vec![
        vec![1.0, 0.1, 0.0],
        vec![0.2, 1.0, 0.3],
        vec![-1.0, 0.3, 0.5],
        vec![0.4, -1.0, 0.1],
        vec![0.0, 0.2, 1.0],
    ];
    let x = p(dir, "x.emb1");
    write_emb(&x, &rows);
    let z = p(dir, "z.emb1");
    write_emb(&z, &rows);
    let d = p(dir, "d.json");
    write_json(&d, r#"{"cat": ["cat, x axis", "y axis"], "dog": ["z axis"]}"#);
    let y = p(dir, "y.emb1");
    write_emb(&y, &(0..3).map(|i| unit(3, i)).collect::<Vec<_>>());
    [x, y, z, d]
}

#[test]
fn align_minimal_and_keep_class_names() {
    let dir = TempDir::new().unwrap();
    let [x, y, z, d] = align_files(&dir);
    let r = p(&dir, "r.json");
    let out = run(&[
        "align", "--images-clip", s(&x), "--concepts", s(&y), "--images-ref", s(&z), "--descriptors", s(&d),
        "--k", "2", "--report", s(&r),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out), "dino_align\t1\n");
    let rep = report_without_time(&r);
    assert_eq!(rep["metrics"]["dino_align"], serde_json::json!(1.0));
    assert_eq!(rep["config"]["keep_class_names"], serde_json::json!(false));

    let out = run(&[
        "align", "--images-clip", s(&x), "--concepts", s(&y), "--images-ref", s(&z), "--descriptors", s(&d),
        "--k", "2", "--keep-class-names", "--report", s(&r),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report_without_time(&r);
    assert_eq!(rep["config"]["keep_class_names"], serde_json::json!(true));
    assert_eq!(rep["config"]["strip_class_names"], serde_json::json!(false));
}

#[test]
fn align_k_from_labels_and_errors() {
    let dir = TempDir::new().unwrap();
    let [x, y, z, d] = align_files(&dir);
    let l = p(&dir, "labels.txt");
    fs::write(&l, "0\n0\n1\n1\n1\n").unwrap();
    let r = p(&dir, "r.json");
    let out = run(&[
        "align", "--images-clip", s(&x), "--concepts", s(&y), "--images-ref", s(&z), "--descriptors", s(&d),
        "--labels", s(&l), "--report", s(&r),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report_without_time(&r)["config"]["k"], serde_json::json!(3));

    let bad = p(&dir, "two.emb1");
    write_emb(&bad, &[unit(3, 0), unit(3, 1)]);
    let out = run(&[
        "align", "--images-clip", s(&x), "--concepts", s(&bad), "--images-ref", s(&z), "--descriptors", s(&d),
        "--k", "2",
    ]);
    assert_eq!(code(&out), 3);

    let out = run(&[
        "align", "--images-clip", s(&x), "--concepts", s(&y), "--images-ref", s(&z), "--descriptors", s(&d),
        "--k", "5",
    ]);
    assert_eq!(code(&out), 2);
}

fn write_checkpoint(dir: &Path, iteration: usize, first_caption: usize) -> PathBuf {
    let json = dir.join(format!("iter_{iteration:03}.json"));
    write_json(&json, r#"{"a": ["a, d0", "d1"], "b": ["d2", "b, d3"]}"#);
    // accuracy rows: class a descriptors on axis 0, class b on axis 1
    let full: Vec<Vec<f32>> = [0, 0, 1, 1].iter().map(|&i| unit(DIMS, i)).collect();
    write_emb(&json.with_extension("full.emb1"), &full);
    let pool: Vec<Vec<f32>> = (0..4).map(|j| unit(DIMS, first_caption + j)).collect();
    write_emb(&json.with_extension("pool.emb1"), &pool);
    json
}

fn track_inputs(dir: &TempDir) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let (c, m) = write_corpus(dir);
    let x = p(dir, "x.emb1");
    write_emb(&x, &[unit(DIMS, 0), unit(DIMS, 1), unit(DIMS, 0), unit(DIMS, 1)]);
    let l = p(dir, "labels.txt");
    fs::write(&l, "0\n1\n0\n0\n").unwrap();
    (c, m, x, l)
}

#[test]
fn track_series_improves_with_better_matched_descriptors() {
    let dir = TempDir::new().unwrap();
    let (c, m, x, l) = track_inputs(&dir);
    let ck = dir.path().join("ck");
    fs::create_dir(&ck).unwrap();
    write_checkpoint(&ck, 20, 0);
    write_checkpoint(&ck, 10, 6);
    let (csv, json, svg, r) = (p(&dir, "s.csv"), p(&dir, "s.json"), p(&dir, "s.svg"), p(&dir, "r.json"));
    let pattern = format!("{}/*.json", ck.display());
    let out = run(&[
        "track", "--checkpoints", &pattern, "--images-clip", s(&x), "--labels", s(&l),
        "--corpus-captions", s(&c), "--corpus-images", s(&m), "--top-fraction", "0.1",
        "--csv", s(&csv), "--json", s(&json), "--svg", s(&svg), "--report", s(&r),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["iteration", "accuracy", "clip_sim", "skipped_descriptors"]);
    assert_eq!(rows[1][0], "10");
    assert_eq!(rows[2][0], "20");
    let sim1: f64 = rows[1][2].parse().unwrap();
    let sim2: f64 = rows[2][2].parse().unwrap();
    assert!(sim2 > sim1, "{sim1} {sim2}");
    assert_eq!(rows[1][1], "0.75");
    let series: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(series.as_array().unwrap().len(), 2);
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn track_single_checkpoint_equals_standalone_commands() {
    let dir = TempDir::new().unwrap();
    let (c, m, x, l) = track_inputs(&dir);
    let ck = dir.path().join("ck");
    fs::create_dir(&ck).unwrap();
    let json = write_checkpoint(&ck, 5, 3);
    let pattern = format!("{}/iter_*.json", ck.display());
    let out = run(&[
        "track", "--checkpoints", &pattern, "--images-clip", s(&x), "--labels", s(&l),
        "--corpus-captions", s(&c), "--corpus-images", s(&m), "--top-fraction", "0.1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let acc = run(&[
        "accuracy", "--images-clip", s(&x), "--descriptors", s(&json),
        "--descriptor-embeddings", s(&json.with_extension("full.emb1")), "--labels", s(&l),
    ]);
    let sim = run(&[
        "clipsim", "--descriptors", s(&json), "--descriptor-embeddings", s(&json.with_extension("pool.emb1")),
        "--corpus-captions", s(&c), "--corpus-images", s(&m), "--top-fraction", "0.1",
    ]);
    let acc = stdout(&acc).trim().split('\t').nth(1).unwrap().to_owned();
    let sim = stdout(&sim).trim().split('\t').nth(1).unwrap().to_owned();
    assert_eq!(stdout(&out), format!("5\t{acc}\t{sim}\n"));
}

#[test]
fn track_with_empty_glob_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let (c, m, x, l) = track_inputs(&dir);
    let pattern = format!("{}/none_*.json", dir.path().display());
    let out = run(&[
        "track", "--checkpoints", &pattern, "--images-clip", s(&x), "--labels", s(&l),
        "--corpus-captions", s(&c), "--corpus-images", s(&m),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let (c, m) = write_corpus(&dir);
    let (d, e) = clip_fixture(&dir, 1);
    let go = |threads: &str| {
        stdout(&run(&[
            "--threads", threads, "clipsim", "--descriptors", s(&d), "--descriptor-embeddings", s(&e),
            "--corpus-captions", s(&c), "--corpus-images", s(&m), "--top-fraction", "0.3", "--window-mb", "1",
        ]))
    };
    assert_eq!(go("1"), go("3"));
}

#[test]
fn corrupt_embedding_file_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let (c, m) = write_corpus(&dir);
    let d = p(&dir, "d.json");
    write_json(&d, r#"{"a": ["x"]}"#);
    let e = p(&dir, "e.emb1");
    fs::write(&e, b"XXXX0000").unwrap();
    let out = run(&[
        "clipsim", "--descriptors", s(&d), "--descriptor-embeddings", s(&e),
        "--corpus-captions", s(&c), "--corpus-images", s(&m),
    ]);
    assert_eq!(code(&out), 3);
}
