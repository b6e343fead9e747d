//! Constructive convergence checks for `E_eps -> E`.
//!
//! * [`select_grid`]: a `2 eps`-spaced grid whose "good" windows control `|g|`
//!   and whose "bad" points are counted against the non-local energy.
//! * [`jump_localization`]: the gaps left by the good windows, where a
//!   compactness argument would place the jumps.
//! * [`recovery_sequence`]: explicit `(u_eps, g_eps)` approaching an SBV²
//!   pair with finitely many jumps.
//! * [`sbv2_approximation`]: BV data to SBV² data (jump thresholding,
//!   mollification, Cantor spreading, truncation and rescaling).
//! * [`run_convergence_experiment`]: one [`ConvergenceRow`] per `eps`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::ConstitutiveParams;
use crate::energy::{energy_eps, energy_limit, nonlocal_term, QuadratureSpec};
use crate::error::{Error, Result};
use crate::fields::{BVDisplacement, CellField, Domain, GridDisplacement, Jump, Measure1D};
use crate::flatnorm::flat_distance;

/// Outcome of the shifted-grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSelection {
    /// Offset of the first grid point from `a`.
    pub shift: f64,
    pub good: Vec<f64>,
    pub bad: Vec<f64>,
    /// `∫_{good windows} |g| + 2 #bad`.
    pub lhs: f64,
    /// `(1 / (c0 eps)) ∫_a^b f(eps mean |g|)`.
    pub rhs: f64,
    /// `false` when no sampled shift satisfied `lhs <= rhs` and the shift
    /// with the smallest defect was returned instead.
    pub passed: bool,
}

impl GridSelection {
    /// `max(lhs - rhs, 0)`.
    pub fn defect(&self) -> f64 {
        (self.lhs - self.rhs).max(0.0)
    }
}

/// One rung of an `eps`-ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub energy_eps: f64,
    pub energy_limit: f64,
    pub flat_dist_gamma: f64,
    pub l1_dist_u: f64,
}

/// Default number of sampled shifts.
pub const DEFAULT_SHIFT_SAMPLES: usize = 64;

fn check_eps_small(d: &Domain, eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let bound = 0.25 * d.len();
    if eps >= bound {
        return Err(Error::EpsTooLarge { eps, bound });
    }
    Ok(())
}

/// Shifted grid with spacing `2 eps` in `(a + eps, b - eps)` satisfying the
/// good/bad counting inequality, searched over `shift_samples` shifts in
/// `[0, 2 eps)`.
pub fn select_grid(g: &CellField, eps: f64, p: &ConstitutiveParams, shift_samples: usize) -> Result<GridSelection> {
    let d = *g.domain();
    check_eps_small(&d, eps)?;
    if shift_samples == 0 {
        return Err(Error::InvalidArgument("shift_samples must be >= 1".into()));
    }
    let wi = g.window_integrator();
    let rhs = nonlocal_term(&wi, eps, p, QuadratureSpec::default(), d.a(), d.b()) / p.c0();
    let mut fallback: Option<GridSelection> = None;
    for j in 0..shift_samples {
        let shift = 2.0 * eps * j as f64 / shift_samples as f64;
        let (mut good, mut bad) = (Vec::new(), Vec::new());
        let mut lhs = 0.0;
        let mut alpha = 0usize;
        loop {
            let x = d.a() + shift + 2.0 * eps * alpha as f64;
            alpha += 1;
            if x <= d.a() + eps {
                continue;
            }
            if x >= d.b() - eps {
                break;
            }
            let int = wi.integral(x - eps, x + eps);
            if int / 2.0 < 1.0 {
                // eps * mean = int / 2 on an unclipped window
                good.push(x);
                lhs += int;
            } else {
                bad.push(x);
                lhs += 2.0;
            }
        }
        let sel = GridSelection { shift, good, bad, lhs, rhs, passed: lhs <= rhs };
        if sel.passed {
            return Ok(sel);
        }
        if fallback.as_ref().is_none_or(|f| sel.lhs - sel.rhs < f.lhs - f.rhs) {
            fallback = Some(sel);
        }
    }
    Ok(fallback.expect("at least one shift sampled"))
}

/// Components of `[a, b]` minus the closed good windows of [`select_grid`],
/// as `(start, end)` pairs of positive length.
pub fn jump_localization(
    u: &GridDisplacement,
    g: &CellField,
    eps: f64,
    p: &ConstitutiveParams,
) -> Result<Vec<(f64, f64)>> {
    if u.domain() != g.domain() {
        return Err(Error::DomainMismatch);
    }
    let d = *g.domain();
    let sel = select_grid(g, eps, p, DEFAULT_SHIFT_SAMPLES)?;
    let mut out = Vec::new();
    // adjacent windows share an endpoint up to round-off
    let tol = 1e-9 * eps;
    let mut cursor = d.a();
    for &x in &sel.good {
        let (lo, hi) = (x - eps, x + eps);
        if lo > cursor + tol {
            out.push((cursor, lo));
        }
        cursor = cursor.max(hi);
    }
    if d.b() > cursor + tol {
        out.push((cursor, d.b()));
    }
    Ok(out)
}

/// Finest-needed grid for [`recovery_sequence`]: the coarsest refinement of
/// `coarse` with cell width at most `eps² / 8`.
pub fn recovery_domain(coarse: &Domain, eps: f64) -> Result<Domain> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let target = eps * eps / 8.0;
    let k = (coarse.h() / target).ceil().max(1.0) as usize;
    coarse.refined(k)
}

struct Collar {
    outer_lo: f64,
    ramp_lo: f64,
    ramp_hi: f64,
    outer_hi: f64,
    left_value: f64,
    right_value: f64,
    slope: f64,
}

/// Recovery pair `(u_eps, g_eps)` on `fine` for an SBV² `u` with finitely many
/// jumps and the density `g` of the absolutely continuous part of `gamma`.
///
/// Around each jump `x_i`, `u_eps` is constant on the collar
/// `(x_i - eps² - 2eps, x_i + eps² + 2eps)` except for a linear ramp across
/// `(x_i - eps², x_i + eps²)`; elsewhere `u_eps = u`. `g_eps` is `g` outside
/// the collars, the ramp slope on the ramp and `0` on the rest of the collar,
/// averaged over each cell of `fine`.
pub fn recovery_sequence(
    u: &BVDisplacement,
    g: &CellField,
    eps: f64,
    fine: &Domain,
) -> Result<(GridDisplacement, CellField)> {
    let d = *u.domain();
    if *g.domain() != d {
        return Err(Error::DomainMismatch);
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if u.has_cantor_part() {
        return Err(Error::InvalidArgument("recovery needs zero Cantor mass; apply sbv2_approximation first".into()));
    }
    let k = d.refinement_factor_to(fine).ok_or(Error::DomainMismatch)?;
    if !u.jumps().is_empty() && fine.h() > 0.25 * eps * eps {
        return Err(Error::InsufficientResolution(format!(
            "cell width {} must be at most eps^2/4 = {}",
            fine.h(),
            0.25 * eps * eps
        )));
    }
    let e2 = eps * eps;
    let reach = e2 + 2.0 * eps;
    let mut points = vec![d.a()];
    points.extend(u.jumps().iter().map(|j| j.position));
    points.push(d.b());
    let required = 2.0 * e2 + 4.0 * eps;
    for w in points.windows(2) {
        if w[1] - w[0] <= required {
            return Err(Error::SeparationViolated { required, found: w[1] - w[0] });
        }
    }
    let collars: Vec<Collar> = u
        .jumps()
        .iter()
        .map(|j| {
            let x = j.position;
            let left_value = u.sample(x - reach);
            let right_value = u.sample(x + reach);
            Collar {
                outer_lo: x - reach,
                ramp_lo: x - e2,
                ramp_hi: x + e2,
                outer_hi: x + reach,
                left_value,
                right_value,
                slope: (right_value - left_value) / (2.0 * e2),
            }
        })
        .collect();

    let value = |x: f64, ci: usize| -> f64 {
        let c = &collars[ci];
        if x <= c.ramp_lo {
            c.left_value
        } else if x >= c.ramp_hi {
            c.right_value
        } else {
            c.left_value + c.slope * (x - c.ramp_lo)
        }
    };

    let mut nodes = Vec::with_capacity(fine.n() + 1);
    let mut ci = 0;
    for i in 0..=fine.n() {
        let x = fine.node(i);
        while ci < collars.len() && collars[ci].outer_hi <= x {
            ci += 1;
        }
        if ci < collars.len() && x > collars[ci].outer_lo {
            nodes.push(value(x, ci));
        } else {
            nodes.push(u.sample(x));
        }
    }

    let gf = g.refine(k)?;
    let h = fine.h();
    let mut cells = gf.into_cells();
    for c in &collars {
        let first = fine.cell_of(c.outer_lo);
        let last = fine.cell_of(c.outer_hi);
        for (kk, cell) in cells.iter_mut().enumerate().take(last + 1).skip(first) {
            let (s, e) = (fine.node(kk), fine.node(kk + 1));
            let inside = (e.min(c.outer_hi) - s.max(c.outer_lo)).max(0.0);
            let ramp = (e.min(c.ramp_hi) - s.max(c.ramp_lo)).max(0.0);
            *cell = (*cell * (h - inside) + c.slope * ramp) / h;
        }
    }
    let u_eps = GridDisplacement::new(*fine, nodes)?;
    let g_eps = CellField::new(*fine, cells)?;
    Ok((u_eps, g_eps))
}

/// Mass-normalized hat kernel of half-width `width` applied to a cell field,
/// renormalized near the boundary so constants are preserved.
fn mollify(field: &[f64], h: f64, width: f64) -> Vec<f64> {
    let n = field.len();
    let reach = (width / h).floor() as usize;
    if reach == 0 {
        return field.to_vec();
    }
    let kernel: Vec<f64> = (0..=reach).map(|j| (1.0 - j as f64 * h / width).max(0.0)).collect();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(n - 1);
            let (mut acc, mut mass) = (0.0, 0.0);
            for (j, v) in field.iter().enumerate().take(hi + 1).skip(lo) {
                let w = kernel[i.abs_diff(j)];
                acc += w * v;
                mass += w;
            }
            acc / mass
        })
        .collect()
}

/// [`sbv2_approximation_pair`] for the displacement alone.
pub fn sbv2_approximation(u: &BVDisplacement, h: f64, p: &ConstitutiveParams) -> Result<BVDisplacement> {
    Ok(sbv2_approximation_pair(u, &CellField::zeros(*u.domain()), h, p)?.0)
}

/// SBV² approximation of `(u, D^s u + g L¹)` at scale `h`.
///
/// 1. drop jumps with `|[u]| <= h`;
/// 2. mollify `u'` and `g` with a hat kernel of half-width `h`;
/// 3. spread each cell's Cantor mass uniformly over the cell, adding it to
///    both the slope and `g`;
/// 4. truncate at `K + h`, scaling `g` by the untruncated fraction of each
///    cell;
/// 5. rescale displacement and density by `K / (K + h)`.
pub fn sbv2_approximation_pair(
    u: &BVDisplacement,
    g: &CellField,
    h: f64,
    p: &ConstitutiveParams,
) -> Result<(BVDisplacement, CellField)> {
    let d = *u.domain();
    if *g.domain() != d {
        return Err(Error::DomainMismatch);
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("h must be positive, got {h}")));
    }
    let hc = d.h();
    let jumps: Vec<Jump> = u.jumps().iter().copied().filter(|j| j.amplitude.abs() > h).collect();
    let spread: Vec<f64> = u.cantor_mass().iter().map(|c| c / hc).collect();
    let slope: Vec<f64> = mollify(u.ac_slope().cells(), hc, h).iter().zip(&spread).map(|(s, c)| s + c).collect();
    let gm: Vec<f64> = mollify(g.cells(), hc, h).iter().zip(&spread).map(|(s, c)| s + c).collect();
    let smooth = BVDisplacement::new(d, CellField::new(d, slope)?, jumps, vec![0.0; d.n()], u.base_value())?;

    let cap = p.k() + h;
    let (slope, gm, jumps, base) = truncate(&smooth, &gm, cap);
    let scale = p.k() / cap;
    let slope: Vec<f64> = slope.iter().map(|s| s * scale).collect();
    let gm: Vec<f64> = gm.iter().map(|v| v * scale).collect();
    let jumps: Vec<Jump> = jumps
        .into_iter()
        .map(|j| Jump { position: j.position, amplitude: j.amplitude * scale })
        .filter(|j| j.amplitude != 0.0)
        .collect();
    let out = BVDisplacement::new(d, CellField::new(d, slope)?, jumps, vec![0.0; d.n()], base * scale)?;
    Ok((out, CellField::new(d, gm)?))
}

/// Clamp `u` to `[-cap, cap]`: per-cell average slope of the clamped
/// function, clamped jumps, and `g` scaled by the untruncated fraction.
fn truncate(u: &BVDisplacement, g: &[f64], cap: f64) -> (Vec<f64>, Vec<f64>, Vec<Jump>, f64) {
    let d = *u.domain();
    let h = d.h();
    let clamp = |v: f64| v.clamp(-cap, cap);
    let mut rise = vec![0.0; d.n()];
    let mut kept = vec![0.0; d.n()];
    for (x, y, ux, uy) in u.pieces() {
        let k = d.cell_of(0.5 * (x + y));
        rise[k] += clamp(uy) - clamp(ux);
        kept[k] += (y - x) * inside_fraction(ux, uy, cap);
    }
    let slope = rise.iter().map(|r| r / h).collect();
    let gt = g.iter().zip(&kept).map(|(v, w)| v * (w / h).min(1.0)).collect();
    let jumps = u
        .jumps()
        .iter()
        .filter_map(|j| {
            let l = clamp(u.left_limit(j.position).ok()?);
            let r = clamp(u.right_limit(j.position).ok()?);
            (r != l).then_some(Jump { position: j.position, amplitude: r - l })
        })
        .collect();
    (slope, gt, jumps, clamp(u.base_value()))
}

/// Fraction of an affine piece from `p` to `q` with `|value| <= cap`.
fn inside_fraction(p: f64, q: f64, cap: f64) -> f64 {
    if p == q {
        return if p.abs() <= cap { 1.0 } else { 0.0 };
    }
    let (lo, hi) = if p < q { (p, q) } else { (q, p) };
    let a = lo.max(-cap);
    let b = hi.min(cap);
    ((b - a) / (hi - lo)).clamp(0.0, 1.0)
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("eps ladder is empty".into()));
    }
    if ladder.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::InvalidArgument("eps ladder entries must be positive".into()));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eps ladder must be strictly decreasing".into()));
    }
    Ok(())
}

/// `∫|v - u|` for `v` continuous piecewise linear on a refinement of the grid of `u`.
fn l1_distance(v: &GridDisplacement, u: &BVDisplacement) -> Result<f64> {
    let fine = *v.domain();
    let uf = u.refine_to(&fine)?;
    let du = v.derivative();
    let slope: Vec<f64> = du.cells().iter().zip(uf.ac_slope().cells()).map(|(a, b)| a - b).collect();
    let jumps = uf.jumps().iter().map(|j| Jump { position: j.position, amplitude: -j.amplitude }).collect();
    let cantor = uf.cantor_mass().iter().map(|c| -c).collect();
    let diff = BVDisplacement::new(fine, CellField::new(fine, slope)?, jumps, cantor, v.nodes()[0] - u.base_value())?;
    Ok(diff.l1_norm())
}

/// One row of the experiment for a single `eps`.
pub fn convergence_row(
    fixture: &BVDisplacement,
    g: &CellField,
    eps: f64,
    p: &ConstitutiveParams,
    q: QuadratureSpec,
    refine: usize,
) -> Result<ConvergenceRow> {
    let (u_s, g_s) = if fixture.has_cantor_part() {
        sbv2_approximation_pair(fixture, g, eps.sqrt(), p)?
    } else {
        (fixture.clone(), g.clone())
    };
    let fine = if u_s.jumps().is_empty() { *u_s.domain() } else { recovery_domain(u_s.domain(), eps)? };
    let (u_eps, g_eps) = recovery_sequence(&u_s, &g_s, eps, &fine)?;
    let e_eps = energy_eps(&u_eps, &g_eps, p, eps, q)?;
    let e_lim = energy_limit(fixture, g, p)?;
    let gamma_eps = Measure1D::from_density(g_eps);
    let gamma = fixture.singular_measure().add(&Measure1D::from_density(g.clone()))?.refine_to(&fine)?;
    let flat = flat_distance(&gamma_eps, &gamma, refine)?;
    let l1 = l1_distance(&u_eps, fixture)?;
    Ok(ConvergenceRow { eps, energy_eps: e_eps.total, energy_limit: e_lim.total, flat_dist_gamma: flat, l1_dist_u: l1 })
}

/// Rows for every `eps` of a strictly decreasing ladder, computed in
/// parallel and returned in ladder order.
///
/// Fixtures with a Cantor part first pass through
/// [`sbv2_approximation_pair`] with `h = eps^(1/2)`.
pub fn run_convergence_experiment(
    fixture: &BVDisplacement,
    g: &CellField,
    eps_ladder: &[f64],
    p: &ConstitutiveParams,
    q: QuadratureSpec,
    refine: usize,
) -> Result<Vec<ConvergenceRow>> {
    check_ladder(eps_ladder)?;
    if fixture.domain() != g.domain() {
        return Err(Error::DomainMismatch);
    }
    eps_ladder
        .par_iter()
        .map(|&eps| {
            convergence_row(fixture, g, eps, p, q, refine).map_err(|e| Error::AtEps { eps, source: Box::new(e) })
        })
        .collect()
}
