//! Minimization of the regularized energy.
//!
//! The `u`-subproblem at fixed `g` is a least-squares problem with a closed
//! form. The `g`-subproblem at fixed `u` is nonconvex (concave `f` composed
//! with window means) and is attacked by majorize-minimize: `f` is replaced by
//! its tangent at the current window means, which turns the non-local term
//! into a weighted `L¹` norm. The surrogate is separable per cell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constitutive::{f_unchecked, g_star, psi_unchecked, ConstitutiveParams};
use crate::energy::{energy_eps, energy_f, for_each_quadrature_point, EnergyBreakdown, QuadratureSpec};
use crate::error::{Error, Result};
use crate::fields::{BVDisplacement, CellField, Domain, GridDisplacement};

/// Iteration controls.
///
/// `max_inner_iters` caps the majorize-minimize iterations of one `g`-step.
/// With `prox_step = None` each surrogate is minimized in closed form;
/// with `Some(t)` it is minimized by `max_inner_iters` proximal-gradient
/// steps of size `t` instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSolveOptions")]
pub struct SolveOptions {
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub tol_energy: f64,
    pub tol_step: f64,
    pub prox_step: Option<f64>,
    pub seed: u64,
    pub restarts: usize,
}

#[derive(Deserialize)]
#[serde(default)]
struct RawSolveOptions {
    max_outer_iters: usize,
    max_inner_iters: usize,
    tol_energy: f64,
    tol_step: f64,
    prox_step: Option<f64>,
    seed: u64,
    restarts: usize,
}

impl Default for RawSolveOptions {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            max_outer_iters: d.max_outer_iters,
            max_inner_iters: d.max_inner_iters,
            tol_energy: d.tol_energy,
            tol_step: d.tol_step,
            prox_step: d.prox_step,
            seed: d.seed,
            restarts: d.restarts,
        }
    }
}

impl TryFrom<RawSolveOptions> for SolveOptions {
    type Error = Error;
    fn try_from(r: RawSolveOptions) -> Result<Self> {
        let o = SolveOptions {
            max_outer_iters: r.max_outer_iters,
            max_inner_iters: r.max_inner_iters,
            tol_energy: r.tol_energy,
            tol_step: r.tol_step,
            prox_step: r.prox_step,
            seed: r.seed,
            restarts: r.restarts,
        };
        o.validate()?;
        Ok(o)
    }
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_outer_iters: 200,
            max_inner_iters: 200,
            tol_energy: 1e-8,
            tol_step: 1e-12,
            prox_step: None,
            seed: 0,
            restarts: 4,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::InvalidArgument("iteration caps must be >= 1".into()));
        }
        if !(self.tol_energy > 0.0 && self.tol_energy.is_finite())
            || !(self.tol_step > 0.0 && self.tol_step.is_finite())
        {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if let Some(t) = self.prox_step {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument(format!("prox_step must be positive, got {t}")));
            }
        }
        Ok(())
    }

    /// Step size that is safe for the quadratic part on a grid of width `h`.
    pub fn default_prox_step(h: f64, p: &ConstitutiveParams) -> f64 {
        h / (2.0 + 2.0 * p.c0())
    }
}

/// Result of an alternating minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub u: GridDisplacement,
    pub g: CellField,
    pub breakdown: EnergyBreakdown,
    pub outer_iters: usize,
    pub converged: bool,
    pub energy_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl SolveReport {
    /// `iter,energy` CSV of the energy trace.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iter,energy\n");
        for (i, e) in self.energy_trace.iter().enumerate() {
            s.push_str(&format!("{i},{e:.16e}\n"));
        }
        s
    }
}

/// Minimizer of `∫|u' - g|²` with `u(a) = ua`, `u(b) = ub`, and whether it
/// respects the cap `‖u‖∞ <= K`.
pub fn solve_u_given_g(g: &CellField, ua: f64, ub: f64, p: &ConstitutiveParams) -> Result<(GridDisplacement, bool)> {
    if !(ua.is_finite() && ub.is_finite()) {
        return Err(Error::NonFinite("boundary values"));
    }
    let d = *g.domain();
    let h = d.h();
    let lambda = (ub - ua - g.integral()) / d.len();
    let mut nodes = Vec::with_capacity(d.n() + 1);
    let mut acc = ua;
    nodes.push(acc);
    for gi in g.cells() {
        acc += (gi + lambda) * h;
        nodes.push(acc);
    }
    // pin the right end against round-off
    nodes[d.n()] = ub;
    let u = GridDisplacement::new(d, nodes)?;
    let feasible = u.within_cap(p.k());
    Ok((u, feasible))
}

/// Per-cell weights of the tangent majorant of the non-local term at `g`.
fn surrogate_weights(g: &CellField, eps: f64, p: &ConstitutiveParams, q: QuadratureSpec) -> Vec<f64> {
    let d = *g.domain();
    let n = d.n();
    let h = d.h();
    let wi = g.window_integrator();
    let mut direct = vec![0.0; n];
    let mut diff = vec![0.0; n + 1];
    for_each_quadrature_point(&d, q, d.a(), d.b(), |x, w| {
        let (int, width) = wi.window_unchecked(x, eps);
        let s = p.f_slope(eps * int / width);
        if s == 0.0 {
            return;
        }
        let c = w * s / width;
        let lo = (x - eps).max(d.a());
        let hi = (x + eps).min(d.b());
        let kl = d.cell_of(lo);
        let kh = d.cell_of(hi);
        if kl == kh {
            direct[kl] += c * (hi - lo);
            return;
        }
        direct[kl] += c * (d.node(kl + 1) - lo);
        direct[kh] += c * (hi - d.node(kh)).max(0.0);
        if kh > kl + 1 {
            diff[kl + 1] += c * h;
            diff[kh] -= c * h;
        }
    });
    let mut run = 0.0;
    direct
        .iter()
        .zip(&diff)
        .map(|(dv, df)| {
            run += df;
            dv + run
        })
        .collect()
}

#[inline]
fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Minimizer of `Σ (u'_i - g_i)² h + Σ λ_i |g_i|`.
fn minimize_surrogate(
    du: &[f64],
    lambda: &[f64],
    h: f64,
    start: &[f64],
    prox_step: Option<f64>,
    iters: usize,
) -> Vec<f64> {
    match prox_step {
        None => du.iter().zip(lambda).map(|(&v, &l)| soft(v, 0.5 * l / h)).collect(),
        Some(t) => {
            let mut g = start.to_vec();
            for _ in 0..iters {
                for ((gi, &v), &l) in g.iter_mut().zip(du).zip(lambda) {
                    *gi = soft(*gi - t * 2.0 * h * (*gi - v), t * l);
                }
            }
            g
        }
    }
}

/// Majorize-minimize from `g0`; returns the final field and its energy.
fn mm_descent(
    u: &GridDisplacement,
    du: &CellField,
    g0: CellField,
    eps: f64,
    p: &ConstitutiveParams,
    q: QuadratureSpec,
    o: &SolveOptions,
) -> Result<(CellField, f64)> {
    let h = u.domain().h();
    let mut g = g0;
    let mut e = energy_eps(u, &g, p, eps, q)?.total;
    for _ in 0..o.max_inner_iters {
        let lambda = surrogate_weights(&g, eps, p, q);
        let cells = minimize_surrogate(du.cells(), &lambda, h, g.cells(), o.prox_step, o.max_inner_iters);
        let step = cells.iter().zip(g.cells()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let cand = CellField::new(*u.domain(), cells)?;
        let ec = energy_eps(u, &cand, p, eps, q)?.total;
        if ec > e {
            // only reachable through round-off in the majorant
            break;
        }
        let decrease = e - ec;
        g = cand;
        e = ec;
        if decrease <= o.tol_energy * e.abs().max(1e-300) || step <= o.tol_step {
            break;
        }
    }
    Ok((g, e))
}

fn g_star_field(du: &CellField, p: &ConstitutiveParams) -> CellField {
    du.map(|v| g_star(v, p)).expect("g_star of a finite field is finite")
}

/// Approximate minimizer of `g -> E_eps(u, g L¹)`.
///
/// Runs majorize-minimize from `0`, from `g_star(u')` and from
/// `o.restarts` seeded random fields; returns the best result. The output
/// never has larger energy than either deterministic initialization.
pub fn solve_g_given_u(
    u: &GridDisplacement,
    eps: f64,
    p: &ConstitutiveParams,
    q: QuadratureSpec,
    o: &SolveOptions,
) -> Result<CellField> {
    o.validate()?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let d = *u.domain();
    let du = u.derivative();
    let gs = g_star_field(&du, p);
    let mut best = mm_descent(u, &du, CellField::zeros(d), eps, p, q, o)?;
    let mut consider = |cand: (CellField, f64)| {
        if cand.1 < best.1 {
            best = cand;
        }
    };
    consider(mm_descent(u, &du, gs.clone(), eps, p, q, o)?);
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    for _ in 0..o.restarts {
        let cells = (0..d.n())
            .map(|i| match rng.gen_range(0..3) {
                0 => 0.0,
                1 => gs.cells()[i],
                _ => du.cells()[i],
            })
            .collect();
        consider(mm_descent(u, &du, CellField::new(d, cells)?, eps, p, q, o)?);
    }
    Ok(best.0)
}

/// Largest grid for [`brute_force_min_g`].
pub const BRUTE_FORCE_MAX_CELLS: usize = 6;

/// Exhaustive minimum of `E_eps(u, ·)` over `g` with every cell in the
/// `grid_pts`-point uniform grid of `[-gmax, gmax]`.
///
/// Only values of the same sign as `u'_i` (or zero) are enumerated; flipping
/// the sign of `g_i` towards `u'_i` keeps `|g|` and lowers `(u'_i - g_i)²`, so
/// the pruning does not change the minimum.
pub fn brute_force_min_g(
    u: &GridDisplacement,
    eps: f64,
    p: &ConstitutiveParams,
    q: QuadratureSpec,
    grid_pts: usize,
    gmax: f64,
) -> Result<(CellField, f64)> {
    let d = *u.domain();
    if d.n() > BRUTE_FORCE_MAX_CELLS {
        return Err(Error::TooManyCells { max: BRUTE_FORCE_MAX_CELLS, found: d.n() });
    }
    if grid_pts < 2 || !(gmax.is_finite() && gmax > 0.0) {
        return Err(Error::InvalidArgument("need grid_pts >= 2 and gmax > 0".into()));
    }
    let du = u.derivative();
    let levels: Vec<f64> = (0..grid_pts).map(|j| -gmax + 2.0 * gmax * j as f64 / (grid_pts - 1) as f64).collect();
    let choices: Vec<Vec<f64>> = du
        .cells()
        .iter()
        .map(|&v| {
            let mut c: Vec<f64> =
                levels.iter().copied().filter(|&l| (v > 0.0 && l > 0.0) || (v < 0.0 && l < 0.0)).collect();
            // zero itself or the level closest to it
            let z = levels.iter().copied().min_by(|x, y| x.abs().total_cmp(&y.abs())).unwrap();
            c.push(z);
            c
        })
        .collect();
    let n = d.n();
    let mut idx = vec![0usize; n];
    let mut cells: Vec<f64> = choices.iter().map(|c| c[0]).collect();
    let mut best = (cells.clone(), f64::INFINITY);
    loop {
        let g = CellField::new(d, cells.clone())?;
        let e = energy_eps(u, &g, p, eps, q)?.total;
        if e < best.1 {
            best = (cells.clone(), e);
        }
        let mut k = 0;
        loop {
            if k == n {
                return Ok((CellField::new(d, best.0)?, best.1));
            }
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                cells[k] = choices[k][idx[k]];
                break;
            }
            idx[k] = 0;
            cells[k] = choices[k][0];
            k += 1;
        }
    }
}

struct Run {
    u: GridDisplacement,
    g: CellField,
    energy: f64,
    trace: Vec<f64>,
    iters: usize,
    converged: bool,
    feasible: bool,
}

fn alternate(
    g0: CellField,
    ua: f64,
    ub: f64,
    eps: f64,
    p: &ConstitutiveParams,
    q: QuadratureSpec,
    o: &SolveOptions,
) -> Result<Run> {
    let inner = SolveOptions { restarts: 0, ..*o };
    let (mut u, mut feasible) = solve_u_given_g(&g0, ua, ub, p)?;
    let mut g = g0;
    let mut energy = energy_eps(&u, &g, p, eps, q)?.total;
    let mut trace = vec![energy];
    let mut converged = false;
    let mut iters = 0;
    if !feasible {
        return Ok(Run { u, g, energy, trace, iters, converged, feasible });
    }
    for it in 1..=o.max_outer_iters {
        iters = it;
        let du = u.derivative();
        let (mut g_new, mut e_new) = mm_descent(&u, &du, g.clone(), eps, p, q, &inner)?;
        let alt = mm_descent(&u, &du, g_star_field(&du, p), eps, p, q, &inner)?;
        if alt.1 < e_new {
            (g_new, e_new) = alt;
        }
        if e_new > energy {
            g_new = g.clone();
        }
        let (u_new, ok) = solve_u_given_g(&g_new, ua, ub, p)?;
        if !ok {
            feasible = false;
            break;
        }
        let e_next = energy_eps(&u_new, &g_new, p, eps, q)?.total;
        if e_next > energy {
            // keep the previous iterate; the trace stays monotone
            converged = true;
            break;
        }
        let decrease = energy - e_next;
        u = u_new;
        g = g_new;
        energy = e_next;
        trace.push(energy);
        if decrease <= o.tol_energy * energy.abs().max(1e-300) {
            converged = true;
            break;
        }
    }
    Ok(Run { u, g, energy, trace, iters, converged, feasible })
}

/// Alternating minimization of `E_eps` on `domain` with `u(a) = ua`,
/// `u(b) = ub`.
///
/// Starts from the affine interpolant with `g = g_star(u')`; each seeded
/// restart instead concentrates the whole boundary increment in one random
/// cell. The best run is reported.
pub fn minimize_energy_eps(
    ua: f64,
    ub: f64,
    eps: f64,
    p: &ConstitutiveParams,
    q: QuadratureSpec,
    o: &SolveOptions,
    domain: Domain,
) -> Result<SolveReport> {
    o.validate()?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if !(ua.is_finite() && ub.is_finite()) {
        return Err(Error::NonFinite("boundary values"));
    }
    if ua.abs() > p.k() || ub.abs() > p.k() {
        return Err(Error::InvalidArgument(format!("boundary values ({ua}, {ub}) exceed the cap {}", p.k())));
    }
    let slope = (ub - ua) / domain.len();
    let g0 = CellField::constant(domain, g_star(slope, p));
    let mut best = alternate(g0, ua, ub, eps, p, q, o)?;
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    for _ in 0..o.restarts {
        if ua == ub {
            break;
        }
        let cell = rng.gen_range(0..domain.n());
        let mut cells = vec![0.0; domain.n()];
        cells[cell] = (ub - ua) / domain.h();
        let run = alternate(CellField::new(domain, cells)?, ua, ub, eps, p, q, o)?;
        if run.feasible && (!best.feasible || run.energy < best.energy) {
            best = run;
        }
    }
    let breakdown = energy_eps(&best.u, &best.g, p, eps, q)?;
    let diagnostic = (!best.feasible).then(|| format!("u-step violates the cap K = {}", p.k()));
    Ok(SolveReport {
        u: best.u,
        g: best.g,
        breakdown,
        outer_iters: best.iters,
        converged: best.converged && best.feasible,
        energy_trace: best.trace,
        diagnostic,
    })
}

/// `(g_star(u'), F(u))`: the exact minimizer of `g -> E(u, D^s u + g L¹)`.
pub fn min_energy_limit(u: &BVDisplacement, p: &ConstitutiveParams) -> Result<(CellField, f64)> {
    Ok((g_star_field(u.ac_slope(), p), energy_f(u, p)?.total))
}

/// Minimal limit energy of a bar of length `len` stretched by `delta`:
/// `min_e psi(e) len + 2 f((|delta| - e len)/2)` over `e` in `[0, |delta|/len]`
/// by a dense scan that also visits the kinks of both terms.
pub fn tension_limit_energy(delta: f64, len: f64, p: &ConstitutiveParams) -> Result<f64> {
    if !(delta.is_finite() && len.is_finite() && len > 0.0) {
        return Err(Error::InvalidArgument("need finite delta and positive length".into()));
    }
    let dabs = delta.abs();
    let emax = dabs / len;
    let objective = |e: f64| psi_unchecked(e, p) * len + 2.0 * f_unchecked(0.5 * (dabs - e * len).max(0.0), p);
    const SAMPLES: usize = 200_000;
    let mut best = objective(0.0).min(objective(emax));
    for i in 1..SAMPLES {
        best = best.min(objective(emax * i as f64 / SAMPLES as f64));
    }
    for kink in [0.5 * p.c0(), (dabs - 2.0) / len] {
        if (0.0..=emax).contains(&kink) {
            best = best.min(objective(kink));
        }
    }
    Ok(best)
}
