use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gmki_cli::artifacts::{read_density, read_records, MixtureFile};
use gmki_cli::run::RunManifest;
use gmki_core::benchmarks::by_name;
use gmki_core::driver::run_from;
use gmki_core::GmkiConfig;
use tempfile::TempDir;

fn gmki(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmki"))
        .args(args)
        .env("GMKI_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = gmki(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_then_metrics_gives_one_row_per_iteration() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "k_components = 2\nn_iterations = 30\n");
    let run = tmp.path().join("run");
    let reference = tmp.path().join("ref.csv");
    ok(&["run", "--method", "gmki", "--problem", "bimodal1d-a", "--config", &cfg, "--out", s(&run)]);
    ok(&["reference", "--problem", "bimodal1d-a", "--out", s(&reference)]);
    ok(&["metrics", "--run", s(&run), "--reference", s(&reference)]);

    let table = fs::read_to_string(run.join("tv.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "iteration,tv");
    assert_eq!(lines.len(), 32);
    for (i, line) in lines[1..].iter().enumerate() {
        let (it, tv) = line.split_once(',').unwrap();
        assert_eq!(it.parse::<usize>().unwrap(), i);
        let tv: f64 = tv.parse().unwrap();
        assert!((0.0..=1.0).contains(&tv));
    }

    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.status, "ok");
    assert_eq!(manifest.iterations_completed, 30);
    assert_eq!(manifest.forward_evals, 30 * 3 * 2);
    let density = read_density(&run.join("density.csv")).unwrap();
    assert!((density.total_mass() - 1.0).abs() < 1e-8);
}

#[test]
fn reference_grid_is_normalized() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("ref.csv");
    ok(&["reference", "--problem", "bimodal2d-a", "--resolution", "512", "--bounds", "-4,4", "--bounds", "-4,4", "--out", s(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some("axis0,axis1,density"));
    assert_eq!(text.lines().count(), 1 + 512 * 512);
    let grid = read_density(&out).unwrap();
    assert_eq!(grid.len(), 262144);
    let h = 8.0 / 512.0;
    let mass: f64 = grid.values.iter().sum::<f64>() * h * h;
    assert!((mass - 1.0).abs() < 1e-8, "{mass}");
}

#[test]
fn identical_invocations_write_identical_records() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "k_components = 3\nn_iterations = 10\nseed = 5\n");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["run", "--method", "gmki", "--problem", "fourmodal2d", "--config", &cfg, "--out", s(dir)]);
    }
    for file in ["records.jsonl", "final_mixture.json", "config.toml", "density.csv"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    // the resolved config reproduces the run on its own
    let c = tmp.path().join("c");
    ok(&["run", "--method", "gmki", "--problem", "fourmodal2d", "--config", s(&a.join("config.toml")), "--out", s(&c)]);
    assert_eq!(fs::read(a.join("records.jsonl")).unwrap(), fs::read(c.join("records.jsonl")).unwrap());
}

#[test]
fn final_mixture_reloads_exactly() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    ok(&["run", "--method", "gmki", "--problem", "bimodal2d-b", "--seed", "3", "--out", s(&out)]);

    let spec = by_name("bimodal2d-b").unwrap();
    let cfg = GmkiConfig {
        seed: 3,
        ..spec.recommended_cfg
    };
    let direct = run_from(&spec.augmented(), spec.initial_mixture(&cfg).unwrap(), &cfg, &mut |_| {}).unwrap();

    let file: MixtureFile = serde_json::from_str(&fs::read_to_string(out.join("final_mixture.json")).unwrap()).unwrap();
    let loaded = file.to_mixture().unwrap();
    let mem = &direct.final_mixture;
    assert_eq!(loaded.len(), mem.len());
    for k in 0..mem.len() {
        assert!((loaded.log_weights()[k] - mem.log_weights()[k]).abs() <= 1e-15);
        let (a, b) = (loaded.component(k), mem.component(k));
        assert!(a.mean().iter().zip(b.mean().iter()).all(|(x, y)| (x - y).abs() <= 1e-15));
        assert!(a.cov().iter().zip(b.cov().iter()).all(|(x, y)| (x - y).abs() <= 1e-15));
    }

    let records = read_records(&out.join("records.jsonl")).unwrap();
    assert_eq!(records.len(), direct.records.len());
    for (r, d) in records.iter().zip(&direct.records) {
        assert_eq!(r.means, d.means);
        assert_eq!(r.misfits, d.misfits);
        assert_eq!(r.cov_frobenius, d.cov_frobenius);
        assert_eq!(r.forward_evals, 15 * (r.iteration > 0) as usize);
    }
}

#[test]
fn gmvi_runs_through_the_same_pipeline() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.toml", "k_components = 3\nn_steps = 20\ndt_vi = 0.01\n");
    let out = tmp.path().join("run");
    ok(&["run", "--method", "gmvi", "--problem", "circle", "--config", &cfg, "--out", s(&out)]);
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.gmvi.unwrap().n_steps, 20);
    assert!(manifest.gmki.is_none());
    assert_eq!(read_records(&out.join("records.jsonl")).unwrap().len(), 21);
    assert!(out.join("density.csv").exists());
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("x");
    let code = |args: &[&str]| {
        let o = gmki(args);
        let stderr = String::from_utf8_lossy(&o.stderr).to_string();
        assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");
        o.status.code().unwrap()
    };
    assert_eq!(code(&["run", "--method", "gmki", "--problem", "nope", "--out", s(&out)]), 2);
    let missing = tmp.path().join("missing.toml");
    assert_eq!(code(&["run", "--method", "gmki", "--problem", "circle", "--config", s(&missing), "--out", s(&out)]), 2);
    let bad = write(tmp.path(), "bad.toml", "k_components = 2\nbogus = 1\n");
    assert_eq!(code(&["run", "--method", "gmki", "--problem", "circle", "--config", &bad, "--out", s(&out)]), 2);
    let garbled = write(tmp.path(), "garbled.toml", "k_components = = 2\n");
    assert_eq!(code(&["run", "--method", "gmki", "--problem", "circle", "--config", &garbled, "--out", s(&out)]), 2);
    assert_eq!(code(&["run", "--method", "gmvi", "--problem", "bimodal1d-a", "--out", s(&out)]), 2);
    assert_eq!(code(&["metrics", "--run", s(&out), "--reference", s(&missing)]), 2);
    assert_eq!(code(&["reference", "--problem", "bimodal1d-a", "--resolution", "8", "--out", s(&out)]), 2);

    // a step too large for the circle target's curvature
    let big = write(tmp.path(), "big.toml", "k_components = 4\nn_steps = 20\ndt_vi = 0.5\n");
    let run = tmp.path().join("failed");
    assert_eq!(code(&["run", "--method", "gmvi", "--problem", "circle", "--config", &big, "--out", s(&run)]), 3);
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.status, "failed");
    assert!(manifest.error.is_some());
    let records = read_records(&run.join("records.jsonl")).unwrap();
    assert_eq!(records.len(), manifest.iterations_completed + 1);
    let last: MixtureFile = serde_json::from_str(&fs::read_to_string(run.join("final_mixture.json")).unwrap()).unwrap();
    assert_eq!(last.means, records.last().unwrap().means);
}

#[test]
fn navier_stokes_truth_and_run_artifacts() {
    let tmp = TempDir::new().unwrap();
    let truth = tmp.path().join("truth");
    ok(&["ns-truth", "--out", s(&truth), "--seed", "4"]);
    let obs = fs::read_to_string(truth.join("observations.csv")).unwrap();
    assert_eq!(obs.lines().next(), Some("time,x1,x2,clean,y"));
    assert_eq!(obs.lines().count(), 1 + 112);
    assert_eq!(fs::read_to_string(truth.join("theta_ref.csv")).unwrap().lines().count(), 1 + 32);
    assert_eq!(fs::read_to_string(truth.join("omega0.csv")).unwrap().lines().count(), 1 + 32 * 32);

    let cfg = write(tmp.path(), "c.toml", "k_components = 3\nn_iterations = 1\ntruth_seed = 4\n");
    let run = tmp.path().join("run");
    ok(&["run", "--method", "gmki", "--problem", "navier-stokes", "--config", &cfg, "--out", s(&run)]);
    let records = read_records(&run.join("records.jsonl")).unwrap();
    assert_eq!(records[1].forward_evals, (2 * 32 + 1) * 3);
    let fields = fs::read_to_string(run.join("fields.csv")).unwrap();
    assert_eq!(fields.lines().next(), Some("x1,x2,truth,mirror,mean0,mean1,mean2"));
    assert_eq!(fields.lines().count(), 1 + 32 * 32);
    assert!(!run.join("density.csv").exists());

    // the run regenerates the same data as the standalone command
    let y_run: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("truth.json")).unwrap()).unwrap();
    let y_cmd: Vec<f64> = obs.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let y_run: Vec<f64> = y_run["y"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(y_run, y_cmd);
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    let ns = manifest.navier_stokes.unwrap();
    assert_eq!((ns.setup.grid_n, ns.setup.kl_modes, ns.truth_seed), (32, 32, 4));
    assert_eq!(ns.observation_locations.len(), 56);
}
