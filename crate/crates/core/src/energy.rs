//! Evaluators of the regularized energy `E_eps`, the limit energy `E`, the
//! cohesive energy `F` and the boundary-value variant of `E`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::constitutive::{f_unchecked, psi_unchecked, ConstitutiveParams};
use crate::error::{Error, Result};
use crate::fields::{BVDisplacement, CellField, GridDisplacement, WindowIntegrator};

/// Composite midpoint rule for the outer integral of the non-local term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawQuadrature")]
pub struct QuadratureSpec {
    subcells_per_cell: usize,
}

#[derive(Deserialize)]
struct RawQuadrature {
    subcells_per_cell: usize,
}

impl TryFrom<RawQuadrature> for QuadratureSpec {
    type Error = Error;
    fn try_from(r: RawQuadrature) -> Result<Self> {
        QuadratureSpec::new(r.subcells_per_cell)
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { subcells_per_cell: 8 }
    }
}

impl QuadratureSpec {
    pub fn new(subcells_per_cell: usize) -> Result<Self> {
        if subcells_per_cell == 0 {
            return Err(Error::InvalidArgument("subcells_per_cell must be >= 1".into()));
        }
        Ok(Self { subcells_per_cell })
    }

    #[inline]
    pub fn subcells_per_cell(&self) -> usize {
        self.subcells_per_cell
    }
}

/// Term-by-term value of an energy.
///
/// `nonlocal_or_inelastic` holds the non-local surface term of `E_eps` or
/// `c0 ∫|g|` of `E`; for `F` the volume term `∫psi(|u'|)` is reported in
/// `elastic`. When the displacement violates the cap, `infinite` is set,
/// every part is zero and `total` is `+inf` (serialized as `"inf"`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    pub nonlocal_or_inelastic: f64,
    pub jump: f64,
    pub cantor: f64,
    pub boundary_penalty: f64,
    #[serde(serialize_with = "ser_ext", deserialize_with = "de_ext")]
    pub total: f64,
    #[serde(default)]
    pub infinite: bool,
}

fn ser_ext<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_ext<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ext {
        Num(f64),
        Str(String),
    }
    match Ext::deserialize(d)? {
        Ext::Num(v) => Ok(v),
        Ext::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Ext::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
    }
}

impl EnergyBreakdown {
    fn finite(elastic: f64, nonlocal_or_inelastic: f64, jump: f64, cantor: f64, boundary_penalty: f64) -> Self {
        Self {
            elastic,
            nonlocal_or_inelastic,
            jump,
            cantor,
            boundary_penalty,
            total: elastic + nonlocal_or_inelastic + jump + cantor + boundary_penalty,
            infinite: false,
        }
    }

    /// The marker for configurations outside the admissible class.
    pub fn infinite() -> Self {
        Self {
            elastic: 0.0,
            nonlocal_or_inelastic: 0.0,
            jump: 0.0,
            cantor: 0.0,
            boundary_penalty: 0.0,
            total: f64::INFINITY,
            infinite: true,
        }
    }

    pub fn is_finite(&self) -> bool {
        !self.infinite
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps must be positive and finite, got {eps}")))
    }
}

fn check_interval(lo: f64, hi: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("empty subinterval ({lo}, {hi})")));
    }
    let (lo, hi) = (lo.max(a), hi.min(b));
    if lo >= hi {
        return Err(Error::InvalidArgument("subinterval does not meet the domain".into()));
    }
    Ok((lo, hi))
}

/// `(1/eps) ∫_lo^hi f(eps · mean_{I_eps(x)∩(a,b)} |g|) dx` by the composite
/// midpoint rule on the subcells of every grid cell, clipped to `(lo, hi)`.
pub(crate) fn nonlocal_term(
    wi: &WindowIntegrator,
    eps: f64,
    p: &ConstitutiveParams,
    q: QuadratureSpec,
    lo: f64,
    hi: f64,
) -> f64 {
    let mut acc = 0.0;
    for_each_quadrature_point(wi.domain(), q, lo, hi, |x, w| {
        let (int, width) = wi.window_unchecked(x, eps);
        acc += w * f_unchecked(eps * int / width, p);
    });
    acc / eps
}

/// Calls `visit(x, weight)` for every midpoint-rule node in `(lo, hi)`.
pub(crate) fn for_each_quadrature_point(
    d: &crate::fields::Domain,
    q: QuadratureSpec,
    lo: f64,
    hi: f64,
    mut visit: impl FnMut(f64, f64),
) {
    let m = q.subcells_per_cell;
    let h = d.h();
    let k0 = d.cell_of(lo);
    let k1 = d.cell_of(hi);
    for k in k0..=k1 {
        let left = d.node(k);
        let whole = left >= lo && d.node(k + 1) <= hi;
        for j in 0..m {
            let s = left + h * (j as f64 / m as f64);
            let e = left + h * ((j + 1) as f64 / m as f64);
            if whole {
                visit(0.5 * (s + e), h / m as f64);
            } else {
                let (s, e) = (s.max(lo), e.min(hi));
                if e > s {
                    visit(0.5 * (s + e), e - s);
                }
            }
        }
    }
}

/// Fraction of cell `k` covered by `(lo, hi)`.
#[inline]
fn cell_overlap(d: &crate::fields::Domain, k: usize, lo: f64, hi: f64) -> f64 {
    (d.node(k + 1).min(hi) - d.node(k).max(lo)).max(0.0)
}

/// `E_eps(u, g L¹)` with exact window integrals.
pub fn energy_eps(
    u: &GridDisplacement,
    g: &CellField,
    p: &ConstitutiveParams,
    eps: f64,
    q: QuadratureSpec,
) -> Result<EnergyBreakdown> {
    let d = *u.domain();
    energy_eps_on(u, g, p, eps, q, d.a(), d.b())
}

/// `E_eps(u, g L¹, A)` for the open subinterval `A = (lo, hi)`.
///
/// Both integrals run over `A`; the window means are still taken over
/// `I_eps(x) ∩ (a, b)`.
pub fn energy_eps_on(
    u: &GridDisplacement,
    g: &CellField,
    p: &ConstitutiveParams,
    eps: f64,
    q: QuadratureSpec,
    lo: f64,
    hi: f64,
) -> Result<EnergyBreakdown> {
    let d = *u.domain();
    if *g.domain() != d {
        return Err(Error::DomainMismatch);
    }
    check_eps(eps)?;
    let (lo, hi) = check_interval(lo, hi, d.a(), d.b())?;
    if !u.within_cap(p.k()) {
        return Ok(EnergyBreakdown::infinite());
    }
    let du = u.derivative();
    let mut elastic = 0.0;
    for k in d.cell_of(lo)..=d.cell_of(hi) {
        let r = du.cells()[k] - g.cells()[k];
        elastic += r * r * cell_overlap(&d, k, lo, hi);
    }
    let wi = g.window_integrator();
    let nonlocal = nonlocal_term(&wi, eps, p, q, lo, hi);
    Ok(EnergyBreakdown::finite(elastic, nonlocal, 0.0, 0.0, 0.0))
}

fn limit_parts(u: &BVDisplacement, g: &CellField, p: &ConstitutiveParams, lo: f64, hi: f64) -> (f64, f64, f64, f64) {
    let d = *u.domain();
    let c0 = p.c0();
    let h = d.h();
    let (mut elastic, mut inelastic, mut cantor) = (0.0, 0.0, 0.0);
    for k in d.cell_of(lo)..=d.cell_of(hi) {
        let w = cell_overlap(&d, k, lo, hi);
        let r = u.ac_slope().cells()[k] - g.cells()[k];
        elastic += r * r * w;
        inelastic += c0 * g.cells()[k].abs() * w;
        cantor += c0 * u.cantor_mass()[k].abs() * (w / h);
    }
    let jump = u
        .jumps()
        .iter()
        .filter(|j| j.position > lo && j.position < hi)
        .map(|j| 2.0 * f_unchecked(0.5 * j.amplitude.abs(), p))
        .sum();
    (elastic, inelastic, jump, cantor)
}

/// `E(u, D^s u + g L¹)`.
pub fn energy_limit(u: &BVDisplacement, g: &CellField, p: &ConstitutiveParams) -> Result<EnergyBreakdown> {
    let d = *u.domain();
    energy_limit_on(u, g, p, d.a(), d.b())
}

/// `E(u, D^s u + g L¹, A)` for `A = (lo, hi)`; Cantor mass is split between
/// cells and `A` in proportion to overlap.
pub fn energy_limit_on(
    u: &BVDisplacement,
    g: &CellField,
    p: &ConstitutiveParams,
    lo: f64,
    hi: f64,
) -> Result<EnergyBreakdown> {
    let d = *u.domain();
    if *g.domain() != d {
        return Err(Error::DomainMismatch);
    }
    let (lo, hi) = check_interval(lo, hi, d.a(), d.b())?;
    if !u.within_cap(p.k()) {
        return Ok(EnergyBreakdown::infinite());
    }
    let (e, i, j, c) = limit_parts(u, g, p, lo, hi);
    Ok(EnergyBreakdown::finite(e, i, j, c, 0.0))
}

/// `F(u) = ∫psi(|u'|) + 2 Σ f(|[u]|/2) + c0 |D^c u|`, with the volume term in
/// `elastic`.
pub fn energy_f(u: &BVDisplacement, p: &ConstitutiveParams) -> Result<EnergyBreakdown> {
    if !u.within_cap(p.k()) {
        return Ok(EnergyBreakdown::infinite());
    }
    let h = u.domain().h();
    let volume = h * u.ac_slope().cells().iter().map(|s| psi_unchecked(s.abs(), p)).sum::<f64>();
    let jump = u.jumps().iter().map(|j| 2.0 * f_unchecked(0.5 * j.amplitude.abs(), p)).sum();
    let cantor = p.c0() * u.total_cantor_variation();
    Ok(EnergyBreakdown::finite(volume, 0.0, jump, cantor, 0.0))
}

/// `E` with the boundary values `u(a) = ua`, `u(b) = ub` imposed as extra
/// jumps at the endpoints.
pub fn energy_limit_bc(
    u: &BVDisplacement,
    g: &CellField,
    p: &ConstitutiveParams,
    ua: f64,
    ub: f64,
) -> Result<EnergyBreakdown> {
    if !(ua.is_finite() && ub.is_finite()) {
        return Err(Error::NonFinite("boundary values"));
    }
    if ua.abs() > p.k() || ub.abs() > p.k() {
        return Err(Error::InvalidArgument(format!("boundary values ({ua}, {ub}) exceed the cap {}", p.k())));
    }
    let base = energy_limit(u, g, p)?;
    if base.infinite {
        return Ok(base);
    }
    let d = *u.domain();
    let left = u.right_limit(d.a())?;
    let right = u.left_limit(d.b())?;
    let penalty = 2.0 * f_unchecked(0.5 * (left - ua).abs(), p) + 2.0 * f_unchecked(0.5 * (right - ub).abs(), p);
    Ok(EnergyBreakdown::finite(base.elastic, base.nonlocal_or_inelastic, base.jump, base.cantor, penalty))
}
