//! `gmki ns-truth`: seeded synthetic data for the Navier-Stokes inversion.

use std::io::Write;
use std::path::Path;

use gmki_navier_stokes::{synthetic_truth, NsForward, Trig};
use serde::Serialize;

use crate::artifacts;
use crate::config::ns_setup;
use crate::error::CliError;
use crate::run::NsManifest;

#[derive(Serialize)]
struct TruthManifest<'a> {
    version: &'a str,
    #[serde(flatten)]
    ns: NsManifest,
    kl_modes: Vec<(i64, i64, Trig)>,
}

/// Writes `manifest.json`, `theta_ref.csv`, `omega0.csv` and
/// `observations.csv` under `out`.
pub fn cmd_ns_truth(out: &Path, seed: u64, modes: usize, grid: usize, pde_dt: Option<f64>) -> Result<(), CliError> {
    let setup = ns_setup(grid, modes, pde_dt);
    let forward = NsForward::new(&setup)?;
    let truth = synthetic_truth(&forward, seed).map_err(|e| CliError::Numerical(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let op = forward.observation();
    let manifest = TruthManifest {
        version: env!("CARGO_PKG_VERSION"),
        ns: NsManifest {
            setup: setup.clone(),
            truth_seed: seed,
            noise_std: op.noise_std,
            observation_locations: op.locations(),
        },
        kl_modes: forward.basis().modes().iter().map(|m| (m.l.0, m.l.1, m.trig)).collect(),
    };
    artifacts::write_json(&out.join(artifacts::MANIFEST), &manifest)?;
    let path = out.join("theta_ref.csv");
    let mut w = artifacts::create(&path)?;
    let io = |e| CliError::io(&path, e);
    writeln!(w, "index,l1,l2,trig,theta").map_err(io)?;
    for (i, (m, t)) in forward.basis().modes().iter().zip(&truth.theta_ref).enumerate() {
        let trig = match m.trig {
            Trig::Cos => "cos",
            Trig::Sin => "sin",
        };
        writeln!(w, "{i},{},{},{trig},{t:.16e}", m.l.0, m.l.1).map_err(io)?;
    }
    w.flush().map_err(io)?;
    let n = truth.omega0.n();
    let h = 2.0 * std::f64::consts::PI / n as f64;
    artifacts::write_csv_rows(
        &out.join("omega0.csv"),
        "x1,x2,omega",
        (0..n * n).map(|idx| {
            let (i1, i2) = (idx / n, idx % n);
            vec![i1 as f64 * h, i2 as f64 * h, truth.omega0.at(i1, i2)]
        }),
    )?;
    let locs = op.locations();
    let rows = setup.solver.times.iter().enumerate().flat_map(|(b, &t)| {
        let (locs, truth) = (&locs, &truth);
        locs.iter().enumerate().map(move |(i, &(x1, x2))| {
            let idx = b * locs.len() + i;
            vec![t, x1, x2, truth.clean[idx], truth.y[idx]]
        })
    });
    artifacts::write_csv_rows(&out.join("observations.csv"), "time,x1,x2,clean,y", rows)
}
