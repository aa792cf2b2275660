use std::fs;
use std::path::Path;

use gossipmf::emit::{emit_metrics, CSV_HEADER};
use gossipmf::experiment::{cross_validate_folds, run_fold};
use gossipmf::gossipmf_core::factor::{objective, rms_full};
use gossipmf::gossipmf_core::sim::sequential::initial_profiles;
use gossipmf::gossipmf_core::synthetic::gen_synthetic;
use gossipmf::gossipmf_core::{Rating, SparseRatings};
use gossipmf::movielens::{check_partition, load_folds, load_movielens, write_udata, FoldSpec};
use gossipmf::{cross_validate, run_experiment, Engine, Error, Metric, RunConfig};

fn config(text: &str) -> RunConfig {
    RunConfig::parse(text).unwrap()
}

fn write(path: &Path, r: &SparseRatings) {
    write_udata(r, fs::File::create(path).unwrap()).unwrap();
}

/// Splits ratings into five folds by entry index modulo 5.
fn mod_folds(x: &SparseRatings) -> Vec<FoldSpec> {
    (1..=5)
        .map(|fold_id| {
            let (test, train): (Vec<(usize, &Rating)>, Vec<(usize, &Rating)>) =
                x.entries().iter().enumerate().partition(|(i, _)| i % 5 == fold_id - 1);
            let keep = |v: Vec<(usize, &Rating)>| {
                SparseRatings::new(x.num_users(), x.num_items(), v.into_iter().map(|(_, r)| *r).collect()).unwrap()
            };
            FoldSpec { fold_id, train: keep(train), test: keep(test) }
        })
        .collect()
}

#[test]
fn movielens_file_loads_with_fixed_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.data");
    fs::write(&path, "196\t242\t3\t881250949\n186\t302\t3\t891717742\n943\t1682\t5\t1\n").unwrap();
    let x = load_movielens(&path).unwrap();
    assert_eq!((x.num_users(), x.num_items(), x.len()), (943, 1682, 3));
    assert_eq!(x.entries()[0], Rating::new(195, 241, 3.0));
    assert_eq!(x.entries()[2], Rating::new(942, 1681, 5.0));
}

#[test]
fn missing_fold_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let (_, x) = gen_synthetic(10, 8, 3, 0.2, 1).unwrap();
    for f in mod_folds(&x).iter().take(2) {
        write(&dir.path().join(format!("u{}.base", f.fold_id)), &f.train);
        write(&dir.path().join(format!("u{}.test", f.fold_id)), &f.test);
    }
    let err = load_folds(dir.path(), 10, 8).unwrap_err();
    assert_eq!(err.category(), "io");
    assert!(err.to_string().contains("u3.base"), "{err}");
}

#[test]
fn folds_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (_, x) = gen_synthetic(12, 9, 3, 0.25, 4).unwrap();
    let folds = mod_folds(&x);
    for f in &folds {
        write(&dir.path().join(format!("u{}.base", f.fold_id)), &f.train);
        write(&dir.path().join(format!("u{}.test", f.fold_id)), &f.test);
    }
    let loaded = load_folds(dir.path(), 12, 9).unwrap();
    assert_eq!(loaded.iter().map(|f| f.fold_id).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
    for (a, b) in loaded.iter().zip(&folds) {
        assert_eq!(a.train.len() + a.test.len(), x.len());
        assert_eq!(a.test, b.test);
    }
    assert_eq!(check_partition(&loaded).unwrap(), x.len());
}

#[test]
fn overlapping_train_and_test_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_, x) = gen_synthetic(6, 6, 2, 0.0, 2).unwrap();
    for f in mod_folds(&x) {
        write(&dir.path().join(format!("u{}.base", f.fold_id)), &x);
        write(&dir.path().join(format!("u{}.test", f.fold_id)), &f.test);
    }
    let err = load_folds(dir.path(), 6, 6).unwrap_err();
    assert_eq!(err.category(), "validation", "{err}");
}

#[test]
fn overlapping_test_sets_fail_the_partition_check() {
    let (_, x) = gen_synthetic(6, 6, 2, 0.0, 2).unwrap();
    let mut folds = mod_folds(&x);
    folds[1] = FoldSpec { fold_id: 2, ..folds[0].clone() };
    assert!(check_partition(&folds).is_err());
}

#[test]
fn cross_validation_reports_five_folds_independent_of_jobs() {
    let (_, x) = gen_synthetic(30, 25, 4, 0.2, 8).unwrap();
    let folds = mod_folds(&x);
    let cfg = config("seed = 11\nrank = 4\niterations = 30x");
    let serial = cross_validate_folds(&cfg, &folds, 1).unwrap();
    let parallel = cross_validate_folds(&cfg, &folds, 5).unwrap();
    assert_eq!(serial.folds.len(), 5);
    for ((ia, a), (ib, b)) in serial.folds.iter().zip(&parallel.folds) {
        assert_eq!(ia, ib);
        assert_eq!(a.config.seed, 11 + *ia as u64);
        assert_eq!(a.final_rms.to_bits(), b.final_rms.to_bits());
        assert_eq!(a.trace, b.trace);
    }
    let mean = serial.folds.iter().map(|(_, r)| r.final_rms).sum::<f64>() / 5.0;
    assert_eq!(serial.mean_rmse, mean);
}

#[test]
fn cross_validate_reads_fold_files() {
    let dir = tempfile::tempdir().unwrap();
    let (_, x) = gen_synthetic(15, 10, 3, 0.2, 5).unwrap();
    for f in mod_folds(&x) {
        write(&dir.path().join(format!("u{}.base", f.fold_id)), &f.train);
        write(&dir.path().join(format!("u{}.test", f.fold_id)), &f.test);
    }
    let cfg = config(&format!(
        "seed = 2\nrank = 3\ndataset = movielens_cv\ndata = {}\ndata.users = 15\ndata.items = 10\niterations = 10x",
        dir.path().display()
    ));
    let report = cross_validate(&cfg, 2).unwrap();
    assert_eq!(report.folds.len(), 5);
    assert!(report.mean_rmse.is_finite());
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
}

/// RMSE straight from the definition, with predictions `uᵀv + offset`.
fn recompute_rmse(u: &[Vec<f64>], v: &[Vec<f64>], test: &SparseRatings, offset: f64, clip: Option<(f64, f64)>) -> f64 {
    let mut sum = 0.0;
    for r in test.entries() {
        let mut p: f64 = u[r.user as usize].iter().zip(&v[r.item as usize]).map(|(a, b)| a * b).sum::<f64>() + offset;
        if let Some((lo, hi)) = clip {
            p = p.clamp(lo, hi);
        }
        sum += (p - r.value) * (p - r.value);
    }
    (sum / test.len() as f64).sqrt()
}

#[test]
fn reported_rmse_matches_recomputation() {
    let (_, x) = gen_synthetic(40, 30, 5, 0.3, 3).unwrap();
    let folds = mod_folds(&x);
    for (extra, clip) in [("", None), ("clip = 1 5\nmean_center = true\n", Some((1.0, 5.0)))] {
        for engine in ["sequential", "centralized", "event"] {
            let cfg = config(&format!("seed = 4\nrank = 5\nengine = {engine}\niterations = 20x\nduration = time 50\n{extra}"));
            let r = run_fold(&cfg, &folds[0].train, &folds[0].test).unwrap();
            assert_eq!(r.metric, Metric::RmseTest);
            let cols = |m: &gossipmf::gossipmf_core::FactorMatrix| {
                m.columns().iter().map(|c| c.as_slice().to_vec()).collect::<Vec<_>>()
            };
            let expected = recompute_rmse(&cols(&r.users), &cols(&r.items), &folds[0].test, r.mean_offset, clip);
            assert!(
                (r.final_rms - expected).abs() <= 1e-10,
                "{engine} {extra:?}: {} vs {expected}",
                r.final_rms
            );
        }
    }
}

#[test]
fn zero_budget_reports_the_initialization() {
    let cfg = config("seed = 6\niterations = 0");
    let r = run_experiment(&cfg).unwrap();
    let (theta, x) = gen_synthetic(100, 100, 10, 0.2, 6).unwrap();
    let (u, v) = initial_profiles(&cfg.sim_config(100, 100, x.len(), 0.0));
    assert_eq!(r.final_rms, rms_full(&u, &v, &theta).unwrap());
    assert_eq!(r.final_objective, objective(&u, &v, &x, cfg.lambda).unwrap());
    assert_eq!(r.trace.samples.len(), 1);
}

#[test]
fn baseline_tracks_the_single_sided_engine() {
    // 100x per pair for the paired baseline equals 200x single-sided updates
    // in per-profile update count.
    let seq = run_experiment(&config("seed = 9\nengine = sequential\niterations = 200x")).unwrap();
    let base = run_experiment(&config("seed = 9\nengine = centralized\niterations = 100x")).unwrap();
    assert_eq!(base.config.engine, Engine::Centralized);
    assert!(
        (seq.final_rms - base.final_rms).abs() <= 0.05,
        "sequential {} vs baseline {}",
        seq.final_rms,
        base.final_rms
    );
    let first = base.trace.first().unwrap().objective;
    assert!(base.final_objective < first);
}

#[test]
fn emitted_files_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("seed = 3\nsynthetic.users = 30\nsynthetic.items = 20\nengine = event\nfanout = 5\npeer_refresh = 2\ndelay = uniform 0.05 1.5\nduration = time 60\nsample_every = 2x");
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b/b.csv"));
    let ja = emit_metrics(&a, &pa).unwrap();
    let jb = emit_metrics(&b, &pb).unwrap();
    let csv = fs::read_to_string(&pa).unwrap();
    assert_eq!(csv, fs::read_to_string(&pb).unwrap());
    assert_eq!(fs::read(&ja).unwrap(), fs::read(&jb).unwrap());
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), a.trace.samples.len() + 1);

    let json: serde_json::Value = serde_json::from_slice(&fs::read(&ja).unwrap()).unwrap();
    assert_eq!(json["config"]["engine"], "event");
    assert_eq!(json["config"]["seed"], "3");
    assert_eq!(json["summary"]["final_rms"].as_f64(), Some(a.final_rms));

    // re-emitting the same report is byte-identical too
    emit_metrics(&a, &pb).unwrap();
    assert_eq!(csv, fs::read_to_string(&pb).unwrap());
}

#[test]
fn unwritable_output_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let r = run_experiment(&config("seed = 1\nsynthetic.users = 5\nsynthetic.items = 5\nsynthetic.rank = 2\nrank = 2\niterations = 1")).unwrap();
    let err = emit_metrics(&r, &blocker.join("m.csv")).unwrap_err();
    assert_eq!(err.category(), "io");
    assert!(err.to_string().contains("file"), "{err}");
}
