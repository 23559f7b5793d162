//! End-to-end runs of the pipeline on the bundled synthetic mini-corpus.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tdiff_cli::run::{run_stages, Manifest, RunOptions, Stage, StageStatus};
use tdiff_cli::stages::report::render;
use tdiff_cli::tsv::Table;
use tdiff_cli::{synth, CliError, LoadedConfig};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini")
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let dst = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &dst);
        } else {
            fs::copy(entry.path(), dst).unwrap();
        }
    }
}

/// Relative path to file contents for every file under `dir`.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// A private copy of the corpus, so runs land in a temporary directory.
fn corpus() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&fixture(), tmp.path());
    let cfg = tmp.path().join("config.toml");
    (tmp, cfg)
}

fn run_all(cfg: &Path, threads: usize) -> PathBuf {
    let loaded = LoadedConfig::load(cfg).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_stages(&loaded, &Stage::ALL, &RunOptions { force: false }))
        .unwrap();
    loaded.output_dir()
}

fn delta_row<'a>(t: &'a Table, key: [&str; 5]) -> Option<&'a Vec<String>> {
    t.rows.iter().find(|r| r[..5].iter().zip(key).all(|(a, b)| a == b))
}

#[test]
fn bundled_corpus_regenerates_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    synth::generate(tmp.path(), synth::DEFAULT_SEED).unwrap();
    let fresh = snapshot(tmp.path());
    let bundled = snapshot(&fixture());
    assert_eq!(fresh.keys().collect::<Vec<_>>(), bundled.keys().collect::<Vec<_>>());
    for (k, v) in &fresh {
        assert!(bundled[k] == *v, "{k} differs from the bundled corpus");
    }
}

#[test]
fn runs_are_byte_identical_across_repeats_and_thread_counts() {
    let (_a, cfg_a) = corpus();
    let (_b, cfg_b) = corpus();
    let one = snapshot(&run_all(&cfg_a, 1));
    let many = snapshot(&run_all(&cfg_b, 3));
    assert_eq!(one.keys().collect::<Vec<_>>(), many.keys().collect::<Vec<_>>());
    for (k, v) in &one {
        assert!(many[k] == *v, "{k} differs between runs");
    }
    assert!(one.contains_key("report/report.md"));
    assert!(one.contains_key("evaluate/delta_llh.tsv"));
}

#[test]
fn planted_features_are_detected_and_golden_report_matches() {
    let (_tmp, cfg) = corpus();
    let run = run_all(&cfg, 2);
    let delta = Table::read(&run.join("evaluate/delta_llh.tsv")).unwrap();
    let mean = delta.column("mean").unwrap();
    let p = delta.column("p_value").unwrap();
    for key in [
        ["all", "Dur", "word", "s_mt", "baseline"],
        ["all", "TrtS", "word", "s_lm", "baseline"],
        ["all", "Dur", "segment", "s_mt", "baseline"],
        ["en-da", "Dur", "word", "s_mt", "baseline"],
        ["en-de", "TrtS", "word", "s_lm", "baseline"],
    ] {
        let row = delta_row(&delta, key).unwrap_or_else(|| panic!("no row {key:?}"));
        let m: f64 = row[mean].parse().unwrap();
        let pv: f64 = row[p].parse().unwrap();
        assert!(m > 0.0 && pv < 0.05, "{key:?}: mean {m}, p {pv}");
    }
    // reading time on the target side carries no planted signal
    let row = delta_row(&delta, ["all", "TrtT", "word", "s_mt", "baseline"]).unwrap();
    assert!(row[mean].parse::<f64>().unwrap() < 0.1);

    let manifest = Manifest::load(&run).unwrap();
    assert!(Stage::ALL.iter().all(|&s| manifest.status(s) == StageStatus::Done));
    assert_eq!(manifest.seeds.master, 20_241_018);

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_report.md");
    let produced = fs::read_to_string(run.join("report/report.md")).unwrap();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden, &produced).unwrap();
    }
    assert_eq!(produced, fs::read_to_string(&golden).unwrap(), "report differs from golden file");
    for csv in ["delta_llh.csv", "coefficients.csv", "pos.csv"] {
        assert!(run.join("report").join(csv).is_file(), "{csv}");
    }
}

#[test]
fn partial_run_marks_missing_cells() {
    let (_tmp, cfg) = corpus();
    let loaded = LoadedConfig::load(&cfg).unwrap();
    run_stages(&loaded, &[Stage::Ingest, Stage::Extract, Stage::Fit], &RunOptions { force: false }).unwrap();
    let run = loaded.output_dir();
    render(&run).unwrap();
    let md = fs::read_to_string(run.join("report/report.md")).unwrap();
    assert!(md.contains("evaluate not run"), "{md}");
    assert!(md.contains("| s_mt | - | missing | missing |"), "{md}");
    // coefficients come from the fit stage and are present
    let coefs = md.split("## Feature coefficients").nth(1).unwrap();
    let s_lm = coefs.lines().find(|l| l.starts_with("| s_lm |")).unwrap();
    assert!(!s_lm.contains("missing"), "{s_lm}");
    assert!(!run.join("report/delta_llh.csv").exists());

    // the remaining stages resume from the fit output
    run_stages(&loaded, &[Stage::Evaluate], &RunOptions { force: false }).unwrap();
    assert!(run.join("evaluate/delta_llh.tsv").is_file());
}

#[test]
fn empty_feature_lists_give_a_baseline_only_report() {
    let (_tmp, cfg) = corpus();
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str("\n[features]\nTrtS = []\nTrtT = []\nDur = []\n");
    fs::write(&cfg, text).unwrap();
    let run = run_all(&cfg, 1);
    let delta = Table::read(&run.join("evaluate/delta_llh.tsv")).unwrap();
    assert!(delta.rows.is_empty());
    let md = fs::read_to_string(run.join("report/report.md")).unwrap();
    assert!(md.contains("Only the baseline model was configured"));
    assert!(!md.contains("## Feature coefficients"));
    let coefs = Table::read(&run.join("fit/coefficients.tsv")).unwrap();
    assert!(coefs.rows.iter().all(|r| r[3] == "baseline"));
}

#[test]
fn missing_frequency_file_is_a_validation_error_before_any_work() {
    let (tmp, cfg) = corpus();
    fs::remove_file(tmp.path().join("frequency.tsv")).unwrap();
    let loaded = LoadedConfig::load(&cfg).unwrap();
    let err = run_stages(&loaded, &Stage::ALL, &RunOptions { force: false }).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(!loaded.output_dir().exists());
}

#[test]
fn existing_output_needs_force() {
    let (_tmp, cfg) = corpus();
    let loaded = LoadedConfig::load(&cfg).unwrap();
    run_stages(&loaded, &[Stage::Ingest], &RunOptions { force: false }).unwrap();
    let err = run_stages(&loaded, &[Stage::Ingest], &RunOptions { force: false }).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    run_stages(&loaded, &[Stage::Ingest], &RunOptions { force: true }).unwrap();

    // a different configuration in the same directory is refused as well
    let mut other = loaded.clone();
    other.config.seed += 1;
    let err = run_stages(&other, &[Stage::Extract], &RunOptions { force: false }).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn stage_without_predecessor_is_refused() {
    let (_tmp, cfg) = corpus();
    let loaded = LoadedConfig::load(&cfg).unwrap();
    let err = run_stages(&loaded, &[Stage::Fit], &RunOptions { force: false }).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)));
}

#[test]
fn failing_stage_is_recorded_in_the_manifest() {
    let (tmp, cfg) = corpus();
    let loaded = LoadedConfig::load(&cfg).unwrap();
    run_stages(&loaded, &[Stage::Ingest], &RunOptions { force: false }).unwrap();
    fs::remove_file(tmp.path().join("dumps/manifest.json")).unwrap();
    let err = run_stages(&loaded, &[Stage::Extract], &RunOptions { force: false }).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let m = Manifest::load(&loaded.output_dir()).unwrap();
    assert_eq!(m.failed_stage, Some(Stage::Extract));
    assert_eq!(m.status(Stage::Ingest), StageStatus::Done);
    assert!(m.failure.unwrap().contains("manifest.json"));
    // the partial run still renders
    render(&loaded.output_dir()).unwrap();
    let md = fs::read_to_string(loaded.output_dir().join("report/report.md")).unwrap();
    assert!(md.contains("failed stage: extract"));
}

#[test]
fn corrupt_manifest_is_a_render_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("manifest.json"), "{ not json").unwrap();
    let err = render(tmp.path()).unwrap_err();
    assert!(matches!(err, CliError::Render(_)));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_tdiff");
    let (tmp, cfg) = corpus();
    let status = Command::new(bin)
        .args(["ingest", "--config"])
        .arg(&cfg)
        .args(["--seed-override", "5", "--jobs", "1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest = Manifest::load(&tmp.path().join("run")).unwrap();
    assert_eq!(manifest.seeds.master, 5);

    let status = Command::new(bin).args(["ingest", "--config"]).arg(&cfg).args(["--seed-override", "5"]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[paths]\ntables = \"tables\"\ndumps = \"dumps\"\nfrequency = \"nope.tsv\"\noutput = \"x\"\n").unwrap();
    let out = Command::new(bin).args(["all", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("frequency file"));

    let status = Command::new(bin)
        .args(["report", "--run-dir"])
        .arg(tmp.path().join("nowhere"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}
