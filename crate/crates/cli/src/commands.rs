use std::fs;
use std::path::{Path, PathBuf};

use eigendamage::{
    energy_eps, energy_f, energy_limit, flat_norm, minimize_energy_eps, recovery_domain, recovery_sequence,
    run_convergence_experiment, sbv2_approximation_pair, tension_limit_energy, BVDisplacement, CellField,
    EnergyBreakdown, FlatNormResult, Measure1D,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::svg::{line_plot, Series};
use crate::{CliError, Common};

fn load(c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(r) = c.refine {
        cfg.flat_refine = r;
    }
    if let Some(s) = c.seed {
        cfg.solve.seed = s;
    }
    cfg.check()?;
    Ok(cfg)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn output_dir(cfg: &ExperimentConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
    Ok(&cfg.output_dir)
}

fn write_csv(path: PathBuf, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn write_text(path: PathBuf, text: &str) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(v: &T) -> Result<(), CliError> {
    let s = serde_json::to_string_pretty(v).map_err(|e| CliError::Output(e.to_string()))?;
    println!("{s}");
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEnergy {
    pub eps: f64,
    pub cells: usize,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "E")]
    pub e: EnergyBreakdown,
    #[serde(rename = "F")]
    pub f: EnergyBreakdown,
    pub recovery: Vec<RecoveryEnergy>,
}

fn recovery_energy(
    u: &BVDisplacement,
    g: &CellField,
    eps: f64,
    cfg: &ExperimentConfig,
) -> eigendamage::Result<RecoveryEnergy> {
    let (us, gs) = if u.has_cantor_part() {
        sbv2_approximation_pair(u, g, eps.sqrt(), &cfg.params)?
    } else {
        (u.clone(), g.clone())
    };
    let fine = if us.jumps().is_empty() { *us.domain() } else { recovery_domain(us.domain(), eps)? };
    let (ue, ge) = recovery_sequence(&us, &gs, eps, &fine)?;
    let energy = energy_eps(&ue, &ge, &cfg.params, eps, cfg.quadrature)?;
    Ok(RecoveryEnergy { eps, cells: fine.n(), energy })
}

pub fn energy(c: &Common) -> Result<(), CliError> {
    let cfg = load(c)?;
    let u = cfg.fixture()?;
    let g = cfg.g_density(&u)?;
    let e = energy_limit(&u, &g, &cfg.params)?;
    let f = energy_f(&u, &cfg.params)?;
    let recovery = cfg
        .eps_ladder
        .par_iter()
        .map(|&eps| {
            recovery_energy(&u, &g, eps, &cfg).map_err(|e| eigendamage::Error::AtEps { eps, source: Box::new(e) })
        })
        .collect::<eigendamage::Result<Vec<_>>>()?;
    print_json(&EnergyReport { e, f, recovery })
}

pub fn converge(c: &Common) -> Result<(), CliError> {
    let cfg = load(c)?;
    let u = cfg.fixture()?;
    let g = cfg.g_density(&u)?;
    let rows = run_convergence_experiment(&u, &g, &cfg.eps_ladder, &cfg.params, cfg.quadrature, cfg.flat_refine)?;
    let dir = output_dir(&cfg)?;
    write_csv(
        dir.join("convergence.csv"),
        &["eps", "energy_eps", "energy_limit", "flat_dist_gamma", "l1_dist_u"],
        rows.iter().map(|r| {
            vec![num(r.eps), num(r.energy_eps), num(r.energy_limit), num(r.flat_dist_gamma), num(r.l1_dist_u)]
        }),
    )?;
    if cfg.emit_svg {
        let pts = rows.iter().map(|r| (r.eps, (r.energy_eps - r.energy_limit).abs())).collect();
        let svg = line_plot("|E_eps - E| against eps", "eps", true, &[Series { label: "|E_eps - E|", points: pts }]);
        write_text(dir.join("convergence.svg"), &svg)?;
    }
    for r in &rows {
        println!(
            "eps {:.4e}: E_eps {:.6} E {:.6} flat {:.3e} L1 {:.3e}",
            r.eps, r.energy_eps, r.energy_limit, r.flat_dist_gamma, r.l1_dist_u
        );
    }
    Ok(())
}

struct TensionRow {
    delta: f64,
    eps: f64,
    solved: f64,
    limit: f64,
}

impl TensionRow {
    /// Relative gap; the absolute gap when the limit energy is zero.
    fn rel_gap(&self) -> f64 {
        let gap = (self.solved - self.limit).abs();
        if self.limit > 0.0 {
            gap / self.limit
        } else {
            gap
        }
    }
}

pub fn tension(c: &Common) -> Result<(), CliError> {
    let cfg = load(c)?;
    let spec = cfg
        .tension
        .clone()
        .ok_or_else(|| CliError::Config("tension requires a `tension` section with `deltas`".into()))?;
    if spec.deltas.is_empty() {
        return Err(CliError::Config("tension.deltas must not be empty".into()));
    }
    if let Some(eps) = cfg.eps_ladder.iter().find(|&&e| e < cfg.domain.h()) {
        eprintln!(
            "eigendamage: warning: eps = {eps} is below the cell width {}; localized minimizers are not resolved",
            cfg.domain.h()
        );
    }
    let jobs: Vec<(f64, f64)> = spec.deltas.iter().flat_map(|&d| cfg.eps_ladder.iter().map(move |&e| (d, e))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(delta, eps)| {
            let r =
                minimize_energy_eps(spec.ua, spec.ua + delta, eps, &cfg.params, cfg.quadrature, &cfg.solve, cfg.domain)
                    .map_err(|e| eigendamage::Error::AtEps { eps, source: Box::new(e) })?;
            let limit = tension_limit_energy(delta, cfg.domain.len(), &cfg.params)?;
            Ok(TensionRow { delta, eps, solved: r.breakdown.total, limit })
        })
        .collect::<eigendamage::Result<Vec<_>>>()?;
    let dir = output_dir(&cfg)?;
    write_csv(
        dir.join("tension.csv"),
        &["delta", "eps", "solved_energy", "limit_min_energy", "rel_gap"],
        rows.iter().map(|r| vec![num(r.delta), num(r.eps), num(r.solved), num(r.limit), num(r.rel_gap())]),
    )?;
    if cfg.emit_svg {
        let eps_last = *cfg.eps_ladder.last().expect("checked nonempty");
        let pick = |f: fn(&TensionRow) -> f64| {
            rows.iter().filter(|r| r.eps == eps_last).map(|r| (r.delta, f(r))).collect::<Vec<_>>()
        };
        let svg = line_plot(
            "minimal energy against delta",
            "delta",
            false,
            &[
                Series { label: "solved", points: pick(|r| r.solved) },
                Series { label: "limit", points: pick(|r| r.limit) },
            ],
        );
        write_text(dir.join("tension.svg"), &svg)?;
    }
    for r in &rows {
        println!(
            "delta {:.4} eps {:.4e}: solved {:.6} limit {:.6} gap {:.3e}",
            r.delta,
            r.eps,
            r.solved,
            r.limit,
            r.rel_gap()
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatNormReport {
    #[serde(flatten)]
    pub result: FlatNormResult,
    pub total_variation: f64,
    pub within_total_variation: bool,
}

pub fn flatnorm(c: &Common) -> Result<(), CliError> {
    let path = &c.config;
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mu: Measure1D = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("malformed measure {}: {e}", path.display())))?;
    let refine = c.refine.unwrap_or(1);
    if refine == 0 {
        return Err(CliError::Config("--refine must be >= 1".into()));
    }
    let result = flat_norm(&mu, refine)?;
    let tv = mu.total_variation();
    let within = result.value <= tv + 1e-12 * tv.max(1.0);
    print_json(&FlatNormReport { result, total_variation: tv, within_total_variation: within })
}
