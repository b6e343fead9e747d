//! Discrete fields on a uniform grid of `(a, b)`.
//!
//! [`GridDisplacement`] and [`CellField`] are the `(u, g)` pairs of the
//! regularized energy. [`BVDisplacement`] is a structured function of bounded
//! variation (absolutely continuous slope, finitely many jumps, per-cell
//! Cantor mass) used by the limit energies, and [`Measure1D`] is a signed
//! measure made of atoms plus a piecewise-constant density.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid of `n` cells on `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain")]
pub struct Domain {
    a: f64,
    b: f64,
    n: usize,
}

#[derive(Deserialize)]
struct RawDomain {
    a: f64,
    b: f64,
    n: usize,
}

impl TryFrom<RawDomain> for Domain {
    type Error = Error;
    fn try_from(r: RawDomain) -> Result<Self> {
        Domain::new(r.a, r.b, r.n)
    }
}

impl Domain {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidDomain("endpoints must be finite".into()));
        }
        if a >= b {
            return Err(Error::InvalidDomain(format!("need a < b, got ({a}, {b})")));
        }
        if n == 0 {
            return Err(Error::InvalidDomain("need at least one cell".into()));
        }
        Ok(Self { a, b, n })
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Number of cells.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    /// Cell width.
    #[inline]
    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    /// Position of node `i` (`0..=n`).
    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n {
            self.b
        } else {
            self.a + (self.b - self.a) * (i as f64 / self.n as f64)
        }
    }

    #[inline]
    pub fn cell_mid(&self, i: usize) -> f64 {
        self.a + (self.b - self.a) * ((i as f64 + 0.5) / self.n as f64)
    }

    /// Index of the cell containing `x`, clamped into `0..n`.
    #[inline]
    pub fn cell_of(&self, x: f64) -> usize {
        let t = ((x - self.a) / self.h()).floor();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.n - 1)
        }
    }

    pub fn contains_closed(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    pub fn contains_open(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }

    /// The same interval with every cell split into `k` cells.
    pub fn refined(&self, k: usize) -> Result<Domain> {
        if k == 0 {
            return Err(Error::InvalidArgument("refinement factor must be >= 1".into()));
        }
        Domain::new(self.a, self.b, self.n * k)
    }

    /// Refinement factor `k` with `other == self.refined(k)`, if any.
    pub fn refinement_factor_to(&self, other: &Domain) -> Option<usize> {
        if self.a != other.a || self.b != other.b || !other.n.is_multiple_of(self.n) {
            return None;
        }
        Some(other.n / self.n)
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Piecewise-constant density, one value per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCellField")]
pub struct CellField {
    domain: Domain,
    cells: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCellField {
    domain: Domain,
    cells: Vec<f64>,
}

impl TryFrom<RawCellField> for CellField {
    type Error = Error;
    fn try_from(r: RawCellField) -> Result<Self> {
        CellField::new(r.domain, r.cells)
    }
}

impl CellField {
    pub fn new(domain: Domain, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != domain.n {
            return Err(Error::LengthMismatch { expected: domain.n, found: cells.len() });
        }
        check_finite(&cells, "cell values")?;
        Ok(Self { domain, cells })
    }

    pub fn zeros(domain: Domain) -> Self {
        Self { domain, cells: vec![0.0; domain.n] }
    }

    pub fn constant(domain: Domain, c: f64) -> Self {
        Self { domain, cells: vec![c; domain.n] }
    }

    /// Cell values from a function of the cell midpoint.
    pub fn from_midpoints(domain: Domain, f: impl Fn(f64) -> f64) -> Result<Self> {
        let cells = (0..domain.n).map(|i| f(domain.cell_mid(i))).collect();
        Self::new(domain, cells)
    }

    #[inline]
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    #[inline]
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn into_cells(self) -> Vec<f64> {
        self.cells
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<CellField> {
        Self::new(self.domain, self.cells.iter().map(|&v| f(v)).collect())
    }

    /// `∫ |g|`.
    pub fn l1_norm(&self) -> f64 {
        self.domain.h() * self.cells.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.domain.h() * self.cells.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn integral(&self) -> f64 {
        self.domain.h() * self.cells.iter().sum::<f64>()
    }

    /// The same density on a grid with every cell split into `k` cells.
    pub fn refine(&self, k: usize) -> Result<CellField> {
        let domain = self.domain.refined(k)?;
        let cells = self.cells.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect();
        Ok(Self { domain, cells })
    }

    /// Resample onto `target`, which must be a refinement of this grid.
    pub fn refine_to(&self, target: &Domain) -> Result<CellField> {
        let k = self.domain.refinement_factor_to(target).ok_or(Error::DomainMismatch)?;
        self.refine(k)
    }

    /// Prefix-sum accelerator for windowed integrals of `|g|`.
    pub fn window_integrator(&self) -> WindowIntegrator {
        WindowIntegrator::new(self)
    }
}

/// Exact integrals of `|g|` over subintervals of `(a, b)` via prefix sums.
#[derive(Debug, Clone)]
pub struct WindowIntegrator {
    domain: Domain,
    abs_cells: Vec<f64>,
    prefix: Vec<f64>,
}

impl WindowIntegrator {
    pub fn new(g: &CellField) -> Self {
        let h = g.domain.h();
        let abs_cells: Vec<f64> = g.cells.iter().map(|v| v.abs()).collect();
        let mut prefix = Vec::with_capacity(abs_cells.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for v in &abs_cells {
            acc += v * h;
            prefix.push(acc);
        }
        Self { domain: g.domain, abs_cells, prefix }
    }

    #[inline]
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `∫_a^x |g|` for `x` in `[a, b]` (clamped outside).
    #[inline]
    pub fn cumulative(&self, x: f64) -> f64 {
        let d = &self.domain;
        if x <= d.a {
            return 0.0;
        }
        if x >= d.b {
            return self.prefix[d.n];
        }
        let k = d.cell_of(x);
        self.prefix[k] + self.abs_cells[k] * (x - d.node(k))
    }

    /// `∫_{(lo,hi) ∩ (a,b)} |g|`.
    #[inline]
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(self.domain.a);
        let hi = hi.min(self.domain.b);
        if hi <= lo {
            return 0.0;
        }
        // single-cell windows avoid cancellation between prefix sums
        let kl = self.domain.cell_of(lo);
        let kh = self.domain.cell_of(hi);
        if kl == kh {
            return self.abs_cells[kl] * (hi - lo);
        }
        (self.cumulative(hi) - self.cumulative(lo)).max(0.0)
    }

    /// Integral of `|g|` over `I_eps(x) ∩ (a,b)` and the clipped width.
    #[inline]
    pub fn window_unchecked(&self, x: f64, eps: f64) -> (f64, f64) {
        let lo = (x - eps).max(self.domain.a);
        let hi = (x + eps).min(self.domain.b);
        (self.integral(lo, hi), hi - lo)
    }

    pub fn window(&self, x: f64, eps: f64) -> Result<(f64, f64)> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
        }
        if !self.domain.contains_closed(x) {
            return Err(Error::OutOfDomain { x, a: self.domain.a, b: self.domain.b });
        }
        Ok(self.window_unchecked(x, eps))
    }
}

/// `(∫_{(x-eps,x+eps)∩(a,b)} |g|, |(x-eps,x+eps)∩(a,b)|)`.
///
/// Builds the prefix sums on every call; use [`CellField::window_integrator`]
/// for repeated queries.
pub fn window_integral(g: &CellField, eps: f64, x: f64) -> Result<(f64, f64)> {
    WindowIntegrator::new(g).window(x, eps)
}

/// Continuous piecewise-linear displacement given by its nodal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridDisplacement {
    domain: Domain,
    nodes: Vec<f64>,
}

#[derive(Deserialize)]
struct RawGrid {
    domain: Domain,
    nodes: Vec<f64>,
}

impl TryFrom<RawGrid> for GridDisplacement {
    type Error = Error;
    fn try_from(r: RawGrid) -> Result<Self> {
        GridDisplacement::new(r.domain, r.nodes)
    }
}

impl GridDisplacement {
    pub fn new(domain: Domain, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() != domain.n + 1 {
            return Err(Error::LengthMismatch { expected: domain.n + 1, found: nodes.len() });
        }
        check_finite(&nodes, "nodal values")?;
        Ok(Self { domain, nodes })
    }

    pub fn constant(domain: Domain, c: f64) -> Self {
        Self { domain, nodes: vec![c; domain.n + 1] }
    }

    pub fn affine(domain: Domain, base: f64, slope: f64) -> Self {
        let nodes = (0..=domain.n).map(|i| base + slope * (domain.node(i) - domain.a)).collect();
        Self { domain, nodes }
    }

    /// Nodal values from a function of position.
    pub fn from_fn(domain: Domain, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(domain, (0..=domain.n).map(|i| f(domain.node(i))).collect())
    }

    #[inline]
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    #[inline]
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn sup_norm(&self) -> f64 {
        self.nodes.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn within_cap(&self, k: f64) -> bool {
        self.sup_norm() <= k
    }

    /// Linear interpolation of the nodal values.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let d = &self.domain;
        if !d.contains_closed(x) {
            return Err(Error::OutOfDomain { x, a: d.a, b: d.b });
        }
        let k = d.cell_of(x);
        let t = (x - d.node(k)) / d.h();
        Ok(self.nodes[k] + t * (self.nodes[k + 1] - self.nodes[k]))
    }

    /// Discrete derivative, one slope per cell.
    pub fn derivative(&self) -> CellField {
        derivative(self)
    }

    /// The same function as a [`BVDisplacement`] without jumps or Cantor part.
    pub fn to_bv(&self) -> BVDisplacement {
        BVDisplacement::new(self.domain, self.derivative(), Vec::new(), vec![0.0; self.domain.n], self.nodes[0])
            .expect("grid displacement is a valid BV function")
    }
}

/// Cellwise slope `(nodes[i+1] - nodes[i]) / h`.
pub fn derivative(u: &GridDisplacement) -> CellField {
    let h = u.domain.h();
    let cells = u.nodes.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    CellField { domain: u.domain, cells }
}

/// A jump of amplitude `u(x+) - u(x-)` at `position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub position: f64,
    pub amplitude: f64,
}

/// Structured BV displacement: `u(a+)` plus absolutely continuous slope,
/// a finite jump list and per-cell Cantor mass.
///
/// The Cantor mass of a cell is treated as spread uniformly over that cell
/// when evaluating point values, so the continuous part is piecewise linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBV")]
pub struct BVDisplacement {
    domain: Domain,
    ac_slope: CellField,
    jumps: Vec<Jump>,
    cantor_mass: Vec<f64>,
    base_value: f64,
    /// Values of the continuous part (`base + ∫u' + D^c u`) at the nodes.
    #[serde(skip)]
    continuous_nodes: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBV {
    domain: Domain,
    ac_slope: CellField,
    jumps: Vec<Jump>,
    cantor_mass: Vec<f64>,
    base_value: f64,
}

impl TryFrom<RawBV> for BVDisplacement {
    type Error = Error;
    fn try_from(r: RawBV) -> Result<Self> {
        BVDisplacement::new(r.domain, r.ac_slope, r.jumps, r.cantor_mass, r.base_value)
    }
}

impl BVDisplacement {
    pub fn new(
        domain: Domain,
        ac_slope: CellField,
        jumps: Vec<Jump>,
        cantor_mass: Vec<f64>,
        base_value: f64,
    ) -> Result<Self> {
        if ac_slope.domain != domain {
            return Err(Error::DomainMismatch);
        }
        if cantor_mass.len() != domain.n {
            return Err(Error::LengthMismatch { expected: domain.n, found: cantor_mass.len() });
        }
        check_finite(&cantor_mass, "cantor mass")?;
        if !base_value.is_finite() {
            return Err(Error::NonFinite("base value"));
        }
        for (i, j) in jumps.iter().enumerate() {
            if !(j.position.is_finite() && j.amplitude.is_finite()) {
                return Err(Error::NonFinite("jump"));
            }
            if !domain.contains_open(j.position) {
                return Err(Error::InvalidJumps(format!("jump at {} is not interior", j.position)));
            }
            if j.amplitude == 0.0 {
                return Err(Error::InvalidJumps(format!("zero amplitude at {}", j.position)));
            }
            if i > 0 && jumps[i - 1].position >= j.position {
                return Err(Error::InvalidJumps("positions must be strictly increasing".into()));
            }
        }
        let h = domain.h();
        let mut continuous_nodes = Vec::with_capacity(domain.n + 1);
        let mut acc = base_value;
        continuous_nodes.push(acc);
        for (s, c) in ac_slope.cells.iter().zip(&cantor_mass) {
            acc += s * h + c;
            continuous_nodes.push(acc);
        }
        Ok(Self { domain, ac_slope, jumps, cantor_mass, base_value, continuous_nodes })
    }

    /// Affine function `base + slope (x - a)`.
    pub fn affine(domain: Domain, base: f64, slope: f64) -> Self {
        Self::new(domain, CellField::constant(domain, slope), Vec::new(), vec![0.0; domain.n], base)
            .expect("affine function is valid")
    }

    /// Piecewise-constant function with the given jumps, starting at `base`.
    pub fn pure_jump(domain: Domain, base: f64, jumps: Vec<Jump>) -> Result<Self> {
        Self::new(domain, CellField::zeros(domain), jumps, vec![0.0; domain.n], base)
    }

    #[inline]
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    #[inline]
    pub fn ac_slope(&self) -> &CellField {
        &self.ac_slope
    }

    #[inline]
    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    #[inline]
    pub fn cantor_mass(&self) -> &[f64] {
        &self.cantor_mass
    }

    #[inline]
    pub fn base_value(&self) -> f64 {
        self.base_value
    }

    pub fn has_cantor_part(&self) -> bool {
        self.cantor_mass.iter().any(|&c| c != 0.0)
    }

    pub fn total_cantor_variation(&self) -> f64 {
        self.cantor_mass.iter().map(|c| c.abs()).sum()
    }

    /// `∫|u'| + Σ|[u]| + |D^c u|(a,b)`.
    pub fn total_variation(&self) -> f64 {
        self.ac_slope.l1_norm()
            + self.jumps.iter().map(|j| j.amplitude.abs()).sum::<f64>()
            + self.total_cantor_variation()
    }

    /// Continuous part `base + ∫_a^x u' + D^c u((a,x))`.
    fn continuous_at(&self, x: f64) -> f64 {
        let d = &self.domain;
        if x <= d.a {
            return self.base_value;
        }
        if x >= d.b {
            return self.continuous_nodes[d.n];
        }
        let k = d.cell_of(x);
        let t = (x - d.node(k)) / d.h();
        let rise = self.continuous_nodes[k + 1] - self.continuous_nodes[k];
        self.continuous_nodes[k] + t * rise
    }

    /// Sum of jump amplitudes at positions `< x` (or `<= x` if `inclusive`).
    fn jumps_before(&self, x: f64, inclusive: bool) -> f64 {
        let idx = if inclusive {
            self.jumps.partition_point(|j| j.position <= x)
        } else {
            self.jumps.partition_point(|j| j.position < x)
        };
        self.jumps[..idx].iter().map(|j| j.amplitude).sum()
    }

    fn is_jump(&self, x: f64) -> bool {
        self.jumps.binary_search_by(|j| j.position.total_cmp(&x)).is_ok()
    }

    /// Point value of the good representative at an interior non-jump point.
    pub fn reconstruct(&self, x: f64) -> Result<f64> {
        let d = &self.domain;
        if !d.contains_open(x) {
            return Err(Error::OutOfDomain { x, a: d.a, b: d.b });
        }
        if self.is_jump(x) {
            return Err(Error::AtJump(x));
        }
        Ok(self.continuous_at(x) + self.jumps_before(x, false))
    }

    /// `u(x-)` for `x` in `(a, b]`.
    pub fn left_limit(&self, x: f64) -> Result<f64> {
        let d = &self.domain;
        if !(x > d.a && x <= d.b) {
            return Err(Error::OutOfDomain { x, a: d.a, b: d.b });
        }
        Ok(self.continuous_at(x) + self.jumps_before(x, false))
    }

    /// `u(x+)` for `x` in `[a, b)`.
    pub fn right_limit(&self, x: f64) -> Result<f64> {
        let d = &self.domain;
        if !(x >= d.a && x < d.b) {
            return Err(Error::OutOfDomain { x, a: d.a, b: d.b });
        }
        Ok(self.continuous_at(x) + self.jumps_before(x, true))
    }

    /// The same function on a refinement of its grid; Cantor mass is split
    /// evenly among the sub-cells.
    pub fn refine_to(&self, target: &Domain) -> Result<BVDisplacement> {
        let k = self.domain.refinement_factor_to(target).ok_or(Error::DomainMismatch)?;
        let cantor = self.cantor_mass.iter().flat_map(|&c| std::iter::repeat_n(c / k as f64, k)).collect();
        Self::new(*target, self.ac_slope.refine(k)?, self.jumps.clone(), cantor, self.base_value)
    }

    /// Right limit inside `[a, b)`, left limit at `b`; never fails on `[a, b]`.
    pub(crate) fn sample(&self, x: f64) -> f64 {
        if x >= self.domain.b {
            self.continuous_nodes[self.domain.n] + self.jumps_before(x, false)
        } else {
            self.continuous_at(x) + self.jumps_before(x, true)
        }
    }

    /// Sorted breakpoints (grid nodes and jump positions) between which `u`
    /// is affine.
    pub fn breakpoints(&self) -> Vec<f64> {
        let d = &self.domain;
        let mut pts: Vec<f64> = (0..=d.n).map(|i| d.node(i)).collect();
        pts.extend(self.jumps.iter().map(|j| j.position));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `(u(x+), u(y-))` on each affine piece `(x, y)` between breakpoints.
    pub(crate) fn pieces(&self) -> Vec<(f64, f64, f64, f64)> {
        let pts = self.breakpoints();
        pts.windows(2)
            .map(|w| {
                let (x, y) = (w[0], w[1]);
                let ux = self.continuous_at(x) + self.jumps_before(x, true);
                let uy = self.continuous_at(y) + self.jumps_before(y, false);
                (x, y, ux, uy)
            })
            .collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.pieces().iter().fold(0.0, |m, &(_, _, ux, uy)| m.max(ux.abs()).max(uy.abs()))
    }

    pub fn within_cap(&self, k: f64) -> bool {
        self.sup_norm() <= k
    }

    /// Exact `∫_a^b |u|`.
    pub fn l1_norm(&self) -> f64 {
        self.pieces().iter().map(|&(x, y, ux, uy)| abs_linear_integral(y - x, ux, uy)).sum()
    }

    /// `Du = u' L¹ + Σ [u] δ + D^c u`, with the Cantor mass as a cell density.
    pub fn derivative_measure(&self) -> Measure1D {
        let h = self.domain.h();
        let density: Vec<f64> = self.ac_slope.cells.iter().zip(&self.cantor_mass).map(|(s, c)| s + c / h).collect();
        Measure1D::from_parts(self.domain, self.jump_atoms(), density)
    }

    /// `D^s u`: jump atoms plus the Cantor mass as a cell density.
    pub fn singular_measure(&self) -> Measure1D {
        let h = self.domain.h();
        let density: Vec<f64> = self.cantor_mass.iter().map(|c| c / h).collect();
        Measure1D::from_parts(self.domain, self.jump_atoms(), density)
    }

    fn jump_atoms(&self) -> Vec<Atom> {
        self.jumps.iter().map(|j| Atom { position: j.position, weight: j.amplitude }).collect()
    }
}

/// `∫_0^len |l(t)| dt` for `l` affine with end values `p` and `q`.
pub(crate) fn abs_linear_integral(len: f64, p: f64, q: f64) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    if (p >= 0.0 && q >= 0.0) || (p <= 0.0 && q <= 0.0) {
        0.5 * len * (p.abs() + q.abs())
    } else {
        0.5 * len * (p * p + q * q) / (p.abs() + q.abs())
    }
}

/// Level-`levels` approximant of the Cantor function on `domain`.
///
/// The `2^levels` intervals surviving `levels` middle-third removals each
/// carry Cantor mass `2^-levels`, spread over the cells they overlap. The
/// grid must resolve the smallest plateau: `n >= 3^levels`.
pub fn cantor_staircase(levels: u32, domain: Domain) -> Result<BVDisplacement> {
    if levels == 0 {
        return Err(Error::InvalidArgument("levels must be >= 1".into()));
    }
    if levels > 19 {
        return Err(Error::InvalidArgument(format!("levels = {levels} is too deep")));
    }
    let pieces = 3usize.pow(levels);
    if domain.n < pieces {
        return Err(Error::InsufficientResolution(format!(
            "cantor level {levels} needs n >= {pieces}, got {}",
            domain.n
        )));
    }
    let weight = 0.5f64.powi(levels as i32);
    let mut mass = vec![0.0; domain.n];
    let survivors = (0..pieces).filter(|&t| {
        let mut t = t;
        (0..levels).all(|_| {
            let digit = t % 3;
            t /= 3;
            digit != 1
        })
    });
    if domain.n.is_multiple_of(pieces) {
        let m = domain.n / pieces;
        for t in survivors {
            for c in &mut mass[t * m..(t + 1) * m] {
                *c = weight / m as f64;
            }
        }
    } else {
        let width = domain.len() / pieces as f64;
        let h = domain.h();
        for t in survivors {
            let s = domain.a + width * t as f64;
            let e = s + width;
            let first = domain.cell_of(s);
            for (k, m) in mass.iter_mut().enumerate().take(domain.cell_of(e) + 1).skip(first) {
                let overlap = (domain.node(k + 1).min(e) - domain.node(k).max(s)).max(0.0);
                *m += weight * overlap / width;
            }
            debug_assert!(width >= h);
        }
    }
    BVDisplacement::new(domain, CellField::zeros(domain), Vec::new(), mass, 0.0)
}

/// A point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

/// Signed measure on `(a, b)`: atoms plus a piecewise-constant density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct Measure1D {
    domain: Domain,
    atoms: Vec<Atom>,
    density: CellField,
}

#[derive(Deserialize)]
struct RawMeasure {
    domain: Domain,
    atoms: Vec<Atom>,
    density: CellField,
}

impl TryFrom<RawMeasure> for Measure1D {
    type Error = Error;
    fn try_from(r: RawMeasure) -> Result<Self> {
        Measure1D::new(r.domain, r.atoms, r.density)
    }
}

impl Measure1D {
    /// Atoms are sorted and atoms at identical positions merged.
    pub fn new(domain: Domain, atoms: Vec<Atom>, density: CellField) -> Result<Self> {
        if density.domain != domain {
            return Err(Error::DomainMismatch);
        }
        for at in &atoms {
            if !(at.position.is_finite() && at.weight.is_finite()) {
                return Err(Error::NonFinite("atom"));
            }
            if !domain.contains_open(at.position) {
                return Err(Error::InvalidArgument(format!("atom at {} is not interior", at.position)));
            }
        }
        Ok(Self { domain, atoms: merge_atoms(atoms), density })
    }

    fn from_parts(domain: Domain, atoms: Vec<Atom>, density: Vec<f64>) -> Self {
        Self { domain, atoms: merge_atoms(atoms), density: CellField { domain, cells: density } }
    }

    pub fn zero(domain: Domain) -> Self {
        Self { domain, atoms: Vec::new(), density: CellField::zeros(domain) }
    }

    pub fn from_density(density: CellField) -> Self {
        Self { domain: density.domain, atoms: Vec::new(), density }
    }

    pub fn atom(domain: Domain, position: f64, weight: f64) -> Result<Self> {
        Self::new(domain, vec![Atom { position, weight }], CellField::zeros(domain))
    }

    #[inline]
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    #[inline]
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    #[inline]
    pub fn density(&self) -> &CellField {
        &self.density
    }

    /// `|μ|(a,b)`.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight.abs()).sum::<f64>() + self.density.l1_norm()
    }

    /// `μ(a,b)`.
    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum::<f64>() + self.density.integral()
    }

    pub fn scale(&self, c: f64) -> Measure1D {
        Self {
            domain: self.domain,
            atoms: self.atoms.iter().map(|a| Atom { position: a.position, weight: c * a.weight }).collect(),
            density: CellField { domain: self.domain, cells: self.density.cells.iter().map(|v| c * v).collect() },
        }
    }

    fn combine(&self, other: &Measure1D, sign: f64) -> Result<Measure1D> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch);
        }
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().map(|a| Atom { position: a.position, weight: sign * a.weight }));
        let cells = self.density.cells.iter().zip(&other.density.cells).map(|(x, y)| x + sign * y).collect();
        Ok(Self::from_parts(self.domain, atoms, cells))
    }

    pub fn add(&self, other: &Measure1D) -> Result<Measure1D> {
        self.combine(other, 1.0)
    }

    /// `self - other`; atoms at exactly equal positions are merged.
    pub fn sub(&self, other: &Measure1D) -> Result<Measure1D> {
        self.combine(other, -1.0)
    }

    /// The same measure with its density carried on a refined grid.
    pub fn refine_to(&self, target: &Domain) -> Result<Measure1D> {
        Ok(Self { domain: *target, atoms: self.atoms.clone(), density: self.density.refine_to(target)? })
    }
}

fn merge_atoms(mut atoms: Vec<Atom>) -> Vec<Atom> {
    atoms.sort_by(|x, y| x.position.total_cmp(&y.position));
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for at in atoms {
        match out.last_mut() {
            Some(last) if last.position == at.position => last.weight += at.weight,
            _ => out.push(at),
        }
    }
    out.retain(|a| a.weight != 0.0);
    out
}
