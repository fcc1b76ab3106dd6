use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dictmon::detect::{min_diff_series, slope_indicator, write_labels_csv, Label, LabeledWindow};
use dictmon::dictionary::init_pseudorandom;
use dictmon::learning::write_history_csv;
use dictmon::metrics::{lowpass, mad_score_series};
use dictmon::{Dictionary, HistoryRecord, IndicatorKind, IndicatorSeries};
use tempfile::TempDir;

fn dictmon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dictmon")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dictmon(args);
    assert!(
        out.status.success(),
        "dictmon {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    dictmon(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small four-machine fleet with a fault on `m0`.
fn small_fleet(dir: &Path) -> PathBuf {
    let fleet = dir.join("fleet");
    ok(&[
        "synth", "--output", p(&fleet), "--machines", "4", "--segments", "12", "--segment-len", "1024", "--faulty",
        "0", "--onset", "6", "--seed", "21",
    ]);
    fleet
}

fn train_args<'a>(input: &'a str, output: &'a str, eta: &'a str) -> Vec<&'a str> {
    vec![
        "train", "--input", input, "--output", output, "--set", "train_blocks=20", "--set", "block_len=1024",
        "--eta", eta, "--seed", "5",
    ]
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(snapshot(&path));
        } else {
            out.push((path.clone(), fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn distance_of_a_dictionary_to_itself_prints_zero() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("d.vdct");
    init_pseudorandom(8, 50, 10, 1).unwrap().save(&path).unwrap();
    assert_eq!(ok(&["distance", p(&path), p(&path)]), "0.000000\n");
}

#[test]
fn roc_on_separated_indicators_reports_unit_auc() {
    let tmp = TempDir::new().unwrap();
    let mut files = Vec::new();
    let mut windows = Vec::new();
    for (m, level) in [("a", 0.0), ("b", 0.5), ("c", 10.0)] {
        let pts: Vec<(i64, f64)> = (0..10).map(|i| (i, level + i as f64 * 0.01)).collect();
        let s = IndicatorSeries::new(m, IndicatorKind::SlopeDegPerDay, pts).unwrap();
        let f = tmp.path().join(format!("{m}.csv"));
        s.write_csv(&f, "").unwrap();
        files.push(f);
        let label = if m == "c" { Label::Faulty } else { Label::Healthy };
        windows.push(LabeledWindow {
            machine_id: m.into(),
            start: 0,
            end: 10,
            label,
        });
    }
    let labels = tmp.path().join("labels.csv");
    write_labels_csv(&labels, &windows).unwrap();
    let roc = tmp.path().join("out/roc.csv");
    let mut args = vec!["roc", "--labels", p(&labels), "--output", p(&roc)];
    args.extend(files.iter().map(|f| p(f)));
    assert_eq!(ok(&args), "auc=1.0\n");
    let text = fs::read_to_string(&roc).unwrap();
    assert!(text.starts_with("threshold,fpr,tpr\n"));
    assert!(text.ends_with("# auc=1.0\n"));
    assert!(tmp.path().join("out/effective_config.txt").exists());
}

#[test]
fn indicators_match_library_calls() {
    let tmp = TempDir::new().unwrap();
    let hist = tmp.path().join("hist");
    fs::create_dir(&hist).unwrap();
    let mut raw = Vec::new();
    for (k, m) in ["m0", "m1", "m2", "m3"].iter().enumerate() {
        let records: Vec<HistoryRecord> = (0..40)
            .map(|i| HistoryRecord {
                timestamp: 1_000 + i * 43_200,
                fidelity_db: 5.0,
                distance_deg: (i as f64 * 0.1 * (k + 1) as f64).sin().abs() + i as f64 * 0.01,
                n_instances: 10,
            })
            .collect();
        write_history_csv(&hist.join(format!("{m}_history.csv")), &records).unwrap();
        let pts = records.iter().map(|r| (r.timestamp, r.distance_deg)).collect();
        raw.push(IndicatorSeries::new(*m, IndicatorKind::DistanceDeg, pts).unwrap());
    }
    let out = tmp.path().join("ind");
    ok(&["indicators", "--input", p(&hist), "--output", p(&out), "--set", "time_constant=7", "--set", "slope_window=12"]);

    let smooth: Vec<_> = raw.iter().map(|s| lowpass(s, 7.0).unwrap()).collect();
    let mad = mad_score_series(&smooth).unwrap();
    for (i, s) in smooth.iter().enumerate() {
        let id = &s.machine_id;
        let read = |name: &str| IndicatorSeries::read_csv(&out.join(format!("{id}_{name}.csv"))).unwrap();
        assert_eq!(read("smoothed"), *s);
        assert_eq!(read("mad"), mad[i]);
        assert_eq!(read("slope"), slope_indicator(s, 12).unwrap());
        assert_eq!(read("mindiff"), min_diff_series(&smooth, id).unwrap());
    }
}

#[test]
fn train_is_deterministic_and_leaves_inputs_alone() {
    let tmp = TempDir::new().unwrap();
    let fleet = small_fleet(tmp.path());
    let before = snapshot(&fleet);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = ok(&train_args(p(&fleet), p(&a), "1e-4"));
    assert!(out.contains("m0: 12 segments available, 12 considered, 20 blocks used"), "{out}");
    ok(&[&train_args(p(&fleet), p(&b), "1e-4")[..], &["--jobs", "1"]].concat());
    for m in ["m0", "m1", "m2", "m3"] {
        let fa = fs::read(a.join(format!("{m}.vdct"))).unwrap();
        assert_eq!(fa, fs::read(b.join(format!("{m}.vdct"))).unwrap());
        let d = Dictionary::load(&a.join(format!("{m}.vdct"))).unwrap();
        assert_eq!(d.len(), 8);
        assert!(d.atoms().iter().all(|x| (x.norm() - 1.0).abs() < 1e-9));
        assert_eq!(d.generation, 20);
    }
    assert_eq!(snapshot(&fleet), before);
    assert!(fs::read_to_string(a.join("effective_config.txt")).unwrap().contains("eta=0.0001\n"));
}

#[test]
fn training_with_zero_step_returns_the_seed_dictionary() {
    let tmp = TempDir::new().unwrap();
    let fleet = small_fleet(tmp.path());
    let out = tmp.path().join("base");
    ok(&train_args(p(&fleet), p(&out), "0"));
    let seed = init_pseudorandom(8, 50, 10, 5).unwrap();
    assert_eq!(Dictionary::load(&out.join("m2.vdct")).unwrap(), seed);
}

#[test]
fn monitor_frozen_and_propagating() {
    let tmp = TempDir::new().unwrap();
    let fleet = small_fleet(tmp.path());
    let base = tmp.path().join("base");
    ok(&train_args(p(&fleet), p(&base), "1e-4"));

    let frozen = tmp.path().join("frozen");
    ok(&["monitor", "--input", p(&fleet), "--baseline", p(&base), "--output", p(&frozen), "--mode", "frozen"]);
    let h = dictmon::learning::read_history_csv(&frozen.join("m1_history.csv")).unwrap();
    assert_eq!(h.len(), 12);
    assert!(h.iter().all(|r| r.distance_deg == 0.0 && r.n_instances == 103));
    assert!(fs::read_to_string(frozen.join("effective_config.txt")).unwrap().contains("eta=0.0\n"));

    let prop = tmp.path().join("prop");
    ok(&[
        "monitor", "--input", p(&fleet), "--baseline", p(&base), "--output", p(&prop), "--eta", "1e-4",
        "--export-codes",
    ]);
    let h = dictmon::learning::read_history_csv(&prop.join("m1_history.csv")).unwrap();
    assert!(h.last().unwrap().distance_deg > 0.0);
    let dist = ok(&["distance", p(&base.join("m1.vdct")), p(&prop.join("m1_final.vdct"))]);
    assert_eq!(dist.trim().parse::<f64>().unwrap(), (h.last().unwrap().distance_deg * 1e6).round() / 1e6);
    let code_csv = fs::read_to_string(prop.join("m1_codes/seg_000000.csv")).unwrap();
    assert!(code_csv.starts_with("atom_id,offset,amplitude\n"));
    assert!(code_csv.contains("# residual_norm="));

    // one baseline file for every machine: the foreign-baseline case
    let foreign = tmp.path().join("foreign");
    ok(&[
        "monitor", "--input", p(&fleet), "--baseline", p(&base.join("m3.vdct")), "--output", p(&foreign), "--mode",
        "frozen",
    ]);
    assert!(foreign.join("m0_history.csv").exists());
}

#[test]
fn monitor_with_no_segments_writes_an_empty_history() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("quiet");
    fs::create_dir(&empty).unwrap();
    let base = tmp.path().join("b.vdct");
    init_pseudorandom(8, 50, 10, 0).unwrap().save(&base).unwrap();
    let out = tmp.path().join("out");
    ok(&["monitor", "--input", p(&empty), "--baseline", p(&base), "--output", p(&out)]);
    assert_eq!(
        fs::read_to_string(out.join("quiet_history.csv")).unwrap(),
        "timestamp,fidelity_db,distance_deg,n_instances\n"
    );
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let base = tmp.path().join("b.vdct");
    init_pseudorandom(4, 10, 2, 0).unwrap().save(&base).unwrap();
    let junk = tmp.path().join("junk.vdct");
    fs::write(&junk, b"VDCT").unwrap();
    let out = p(tmp.path());

    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["distance", p(&base), p(&base), "--sparsity", "1.2"]), 2);
    assert_eq!(code(&["distance", p(&base), p(&base), "--algo", "lasso"]), 2);
    assert_eq!(code(&["distance", p(&base), p(&base), "--set", "learning_rate=1"]), 2);
    let cfg = tmp.path().join("bad.conf");
    fs::write(&cfg, "eta 0.1\n").unwrap();
    assert_eq!(code(&["distance", p(&base), p(&base), "--config", p(&cfg)]), 2);

    assert_eq!(code(&["distance", p(&base), p(&junk)]), 3);
    assert_eq!(code(&["distance", p(&base), p(&tmp.path().join("missing.vdct"))]), 3);
    // baseline has 4 atoms, the configuration expects 8
    let seg_dir = tmp.path().join("segs");
    fs::create_dir(&seg_dir).unwrap();
    assert_eq!(code(&["monitor", "--input", p(&seg_dir), "--baseline", p(&base), "--output", out]), 3);

    // training on segments that all fail the RMS gate
    fs::write(seg_dir.join("a.csv"), "timestamp,sample_rate,source_id\n0,100,segs\n0.1\n-0.1\n0.1\n").unwrap();
    let out = dictmon(&["train", "--input", p(&seg_dir), "--output", p(&tmp.path().join("t"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 segments available, 0 above the 0.5 G RMS gate"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = TempDir::new().unwrap();
    let fleet = small_fleet(tmp.path());
    let cfg = tmp.path().join("run.conf");
    fs::write(&cfg, "# scaled run\natoms=4\ncore_len=20\npad=4\ntrain_blocks=5\nblock_len=512\nseed=9\neta=0.5\n").unwrap();
    let out = tmp.path().join("base");
    ok(&["train", "--input", p(&fleet), "--output", p(&out), "--config", p(&cfg), "--eta", "0", "--algo", "omp"]);
    let echoed = fs::read_to_string(out.join("effective_config.txt")).unwrap();
    for line in ["algorithm=omp", "atoms=4", "eta=0.0", "seed=9", "block_len=512"] {
        assert!(echoed.lines().any(|l| l == line), "missing {line} in\n{echoed}");
    }
    assert_eq!(Dictionary::load(&out.join("m0.vdct")).unwrap(), init_pseudorandom(4, 20, 4, 9).unwrap());
}

#[test]
fn atom_info_lists_every_atom() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("d.vdct");
    let atoms = dictmon::synth::default_planted_atoms()
        .into_iter()
        .enumerate()
        .map(|(i, w)| dictmon::Atom::new(i as u32, w).unwrap())
        .collect();
    Dictionary::new(atoms).unwrap().save(&path).unwrap();
    let out = ok(&["atom-info", p(&path), "--sample-rate", "1000"]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "atom_id,length,peak_hz,beta_deg");
    assert_eq!(rows.len(), 4);
    // Gabor centre frequencies 0.05, 0.15 and 0.3 cycles per sample
    for (row, f) in rows[1..].iter().zip([50.0, 150.0, 300.0]) {
        let peak: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert!((peak - f).abs() < 5.0, "{row}");
    }
}

#[test]
fn train_first_limits_segments() {
    let tmp = TempDir::new().unwrap();
    let fleet = small_fleet(tmp.path());
    let out = tmp.path().join("base");
    let mut args = train_args(p(&fleet), p(&out), "1e-4");
    args.extend(["--first", "6"]);
    let stdout = ok(&args);
    assert!(stdout.contains("m0: 12 segments available, 6 considered"), "{stdout}");

    // blocks drawn from the pre-onset segments only, so a fleet cut to those
    // segments trains the same baseline
    let cut = tmp.path().join("cut");
    for m in 0..4 {
        let src = fleet.join(format!("m{m}"));
        let dst = cut.join(format!("m{m}"));
        fs::create_dir_all(&dst).unwrap();
        let mut files: Vec<PathBuf> = fs::read_dir(&src).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        for f in files.iter().take(6) {
            fs::copy(f, dst.join(f.file_name().unwrap())).unwrap();
        }
    }
    let out_cut = tmp.path().join("base_cut");
    ok(&train_args(p(&cut), p(&out_cut), "1e-4"));
    for m in 0..4 {
        let name = format!("m{m}.vdct");
        assert_eq!(fs::read(out.join(&name)).unwrap(), fs::read(out_cut.join(&name)).unwrap());
    }
}
