//! The α-sweep pipeline: moments, asymptotic fields, direct solver, comparison.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use fractal_fkpp::asymptotics::{Asymptotics, SolutionField};
use fractal_fkpp::flees::{solve_flees_with, MomentTrajectory};
use fractal_fkpp::reference::{compare, initial_field, solve_direct, PdeConfig, Snapshot};

use crate::config::{alpha_label, ExperimentConfig};
use crate::output::{sha256_hex, Manifest, OutputSet, Table, MANIFEST_NAME};

/// How far the pipeline goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Moment trajectories only.
    Moments,
    /// Moments and assembled fields at the snapshot times.
    Fields,
    /// Direct solver snapshots only.
    Reference,
    /// Fields, direct solver and their error norms.
    Compare,
    /// Everything the configuration asks for.
    Full,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Moments => "flees",
            Stage::Fields => "simulate",
            Stage::Reference => "reference",
            Stage::Compare => "compare",
            Stage::Full => "run",
        }
    }

    fn moments(self) -> bool {
        matches!(self, Stage::Moments | Stage::Fields | Stage::Compare | Stage::Full)
    }

    fn fields(self) -> bool {
        matches!(self, Stage::Fields | Stage::Compare | Stage::Full)
    }

    fn reference(self, cfg: &ExperimentConfig) -> bool {
        match self {
            Stage::Reference | Stage::Compare => true,
            Stage::Full => cfg.reference.is_some(),
            _ => false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("alpha = {alpha}, stage {stage}: {source}")]
    Numerical {
        alpha: f64,
        stage: &'static str,
        #[source]
        source: fractal_fkpp::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn numerical(alpha: f64, stage: &'static str) -> impl Fn(fractal_fkpp::Error) -> RunError {
    move |source| RunError::Numerical { alpha, stage, source }
}

fn io(path: &str) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_string(), source }
}

/// Snapshot times sorted, with duplicates at file-name precision removed.
pub fn snapshot_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut times = cfg.snapshots.clone();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| time_label(*a) == time_label(*b));
    times
}

pub fn time_label(t: f64) -> String {
    format!("t{t:.6}")
}

pub fn moments_table(traj: &MomentTrajectory) -> Table {
    let k = traj.params.particle_count();
    let mut header = vec!["t".to_string(), "S".into(), "chi".into()];
    for s in 1..=k {
        header.extend([format!("mu_{s}"), format!("x_{s}"), format!("alpha2_{s}")]);
    }
    header.push("mu_total".into());
    let mut table = Table::new(header);
    let g = &traj.grid;
    for (i, st) in traj.states.iter().enumerate() {
        let mut row = vec![g.times()[i], g.staircase_values()[i], g.indicator_values()[i]];
        for s in 0..k {
            row.extend([st.mu[s], st.x[s], st.alpha2[s]]);
        }
        row.push(st.mu.iter().sum());
        table.push(row);
    }
    table
}

pub fn field_table(field: &SolutionField) -> Table {
    let k = field.particles.len();
    let mut header = vec!["x".to_string(), "u".into()];
    for s in 1..=k {
        header.extend([format!("v0_{s}"), format!("v1_{s}"), format!("v2_{s}")]);
    }
    let mut table = Table::new(header);
    for j in 0..field.grid.points() {
        let mut row = vec![field.grid.node(j), field.u[j]];
        for p in &field.particles {
            row.extend([p.v0[j], p.v1[j], p.v2[j]]);
        }
        table.push(row);
    }
    table
}

pub fn snapshot_table(snap: &Snapshot) -> Table {
    let mut table = Table::new(vec!["x".into(), "u".into()]);
    for (j, &u) in snap.u.iter().enumerate() {
        table.push(vec![snap.grid.node(j), u]);
    }
    table
}

fn write_table(set: &mut OutputSet, rel: &str, table: &Table) -> Result<(), RunError> {
    set.write(rel, &table.to_csv()).map_err(io(rel))
}

/// Runs the pipeline for one exponent, writing into `root/alpha_<α>/`.
pub fn run_alpha(cfg: &ExperimentConfig, alpha: f64, stage: Stage, root: &Path) -> Result<OutputSet, RunError> {
    let mut set = OutputSet::new(root);
    let result = run_alpha_into(cfg, alpha, stage, &mut set);
    if result.is_err() {
        set.remove_all();
    }
    result.map(|()| set)
}

fn run_alpha_into(cfg: &ExperimentConfig, alpha: f64, stage: Stage, set: &mut OutputSet) -> Result<(), RunError> {
    let dir = alpha_label(alpha);
    let params = cfg.model_params();
    let prefractal = cfg.prefractal(alpha).map_err(numerical(alpha, "prefractal"))?;
    let grid = cfg.spatial_grid().map_err(numerical(alpha, "grid"))?;
    let times = snapshot_times(cfg);

    let mut fields = Vec::new();
    if stage.moments() {
        let traj = solve_flees_with(&params, &prefractal, cfg.closure.into(), &cfg.flees_options())
            .map_err(numerical(alpha, "flees"))?;
        write_table(set, &format!("{dir}/moments.csv"), &moments_table(&traj))?;
        if stage.fields() {
            let asy = Asymptotics::new(&traj, cfg.correction.into()).map_err(numerical(alpha, "asymptotics"))?;
            for &t in &times {
                let field = asy.assemble(&grid, t).map_err(numerical(alpha, "asymptotics"))?;
                write_table(set, &format!("{dir}/fields_{}.csv", time_label(t)), &field_table(&field))?;
                fields.push(Snapshot::from(&field));
            }
        }
    }
    if stage.reference(cfg) {
        let rc = cfg.reference.clone().unwrap_or_default();
        let steps = rc.tau_steps.unwrap_or_else(|| PdeConfig::min_stable_steps(&grid, &params, &prefractal));
        let mut pde = PdeConfig::new(grid, steps, params.clone(), prefractal.clone());
        pde.scheme = rc.scheme();
        pde.laplacian = rc.laplacian();
        let snaps = solve_direct(&pde, &initial_field(&params, &grid), &times).map_err(numerical(alpha, "reference"))?;
        for snap in &snaps {
            write_table(set, &format!("{dir}/reference_{}.csv", time_label(snap.time)), &snapshot_table(snap))?;
        }
        if !fields.is_empty() {
            let norms = compare(&fields, &snaps).map_err(numerical(alpha, "compare"))?;
            let mut table = Table::new(
                ["t", "l2_abs", "l2_rel", "linf_abs", "linf_rel"].into_iter().map(String::from).collect(),
            );
            for e in norms {
                table.push(vec![e.time, e.l2_abs, e.l2_rel, e.linf_abs, e.linf_rel]);
            }
            write_table(set, &format!("{dir}/comparison.csv"), &table)?;
        }
    }
    Ok(())
}

/// SHA-256 of the canonical configuration text, output directory excluded.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output.clear();
    sha256_hex(c.to_json().as_bytes())
}

/// Runs every exponent on up to `workers` threads and writes the manifest.
///
/// On failure every file written by this call is removed and the error of
/// the first failing exponent (in configuration order) is returned.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, stage: Stage, workers: usize) -> Result<Manifest, RunError> {
    let n = cfg.alphas.len();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<OutputSet, RunError>>>> = Mutex::new((0..n).map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let result = run_alpha(cfg, cfg.alphas[i], stage, out);
                slots.lock().expect("no worker panicked")[i] = Some(result);
            });
        }
    });
    let results = slots.into_inner().expect("no worker panicked");
    let mut all = OutputSet::new(out);
    let mut first_error = None;
    for result in results.into_iter().flatten() {
        match result {
            Ok(set) => all.absorb(set),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        all.remove_all();
        return Err(e);
    }
    let manifest = Manifest {
        software: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config_hash(cfg),
        command: stage.name().into(),
        files: all.entries(),
    };
    if let Err(e) = all.write(MANIFEST_NAME, manifest.to_json().as_bytes()) {
        all.remove_all();
        return Err(io(MANIFEST_NAME)(e));
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Closure, ReferenceConfig};

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::two_particle_example();
        cfg.alphas = vec![0.63, 1.0];
        cfg.time.spacing = 1e-3;
        cfg.time.rk_steps = 2000;
        cfg.space.points = 256;
        cfg.snapshots = vec![1.0, 0.0, 0.5, 0.5];
        cfg
    }

    fn temp(name: &str) -> std::path::PathBuf {
        let p = std::env::temp_dir().join(format!("fkpp-exp-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        p
    }

    #[test]
    fn snapshots_are_sorted_and_unique() {
        assert_eq!(snapshot_times(&small()), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn manifest_lists_exactly_the_written_files() {
        let out = temp("manifest");
        let m = run_experiment(&small(), &out, Stage::Fields, 2).unwrap();
        assert_eq!(m.files.len(), 2 * 4);
        m.verify(&out).unwrap();
        let mut on_disk = Vec::new();
        for dir in std::fs::read_dir(&out).unwrap() {
            let dir = dir.unwrap().path();
            if dir.is_dir() {
                on_disk.extend(std::fs::read_dir(&dir).unwrap().map(|f| f.unwrap().path()));
            }
        }
        assert_eq!(on_disk.len(), m.files.len());
        let listed: Vec<_> = m.files.iter().map(|e| out.join(&e.path)).collect();
        assert!(on_disk.iter().all(|p| listed.contains(p)));
        std::fs::remove_dir_all(&out).unwrap();
    }

    #[test]
    fn worker_count_does_not_change_outputs() {
        let (a, b) = (temp("w1"), temp("w3"));
        let m1 = run_experiment(&small(), &a, Stage::Moments, 1).unwrap();
        let m3 = run_experiment(&small(), &b, Stage::Moments, 3).unwrap();
        assert_eq!(m1, m3);
        std::fs::remove_dir_all(&a).unwrap();
        std::fs::remove_dir_all(&b).unwrap();
    }

    #[test]
    fn failures_remove_partial_outputs() {
        let out = temp("fail");
        let mut cfg = small();
        cfg.params.a = 1e300;
        cfg.closure = Closure::Strict;
        let err = run_experiment(&cfg, &out, Stage::Fields, 2).unwrap_err();
        assert!(matches!(err, RunError::Numerical { stage: "flees", .. }), "{err}");
        assert!(!out.exists());
    }

    #[test]
    fn comparison_is_written_when_requested() {
        let out = temp("compare");
        let mut cfg = small();
        cfg.alphas = vec![1.0];
        cfg.space = crate::config::SpaceConfig { x_min: -4.0, x_max: 4.0, points: 161 };
        cfg.reference = Some(ReferenceConfig::default());
        let m = run_experiment(&cfg, &out, Stage::Full, 1).unwrap();
        let names: Vec<&str> = m.files.iter().map(|e| e.path.as_str()).collect();
        assert!(names.contains(&"alpha_1.000000/comparison.csv"));
        assert!(names.contains(&"alpha_1.000000/reference_t0.500000.csv"));
        let bytes = std::fs::read(out.join("alpha_1.000000/comparison.csv")).unwrap();
        let table = Table::from_csv(&bytes).unwrap();
        assert!(table.column("l2_rel").unwrap()[0] < 1e-12);
        assert!(table.column("l2_rel").unwrap()[2] < 0.2);
        std::fs::remove_dir_all(&out).unwrap();
    }
}
