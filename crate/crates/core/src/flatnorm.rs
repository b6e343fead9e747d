//! Flat norm of a [`Measure1D`]:
//! `sup { ∫ φ dμ : φ(a) = φ(b) = 0, max(‖φ‖∞, ‖φ'‖∞) ≤ 1 }`.
//!
//! The supremum is taken over continuous piecewise-linear `φ` with kinks on
//! the node set (refined grid plus atom positions). The resulting chain LP
//! is solved exactly by a forward pass over concave piecewise-linear value
//! functions followed by a backward pass that recovers the optimal `φ`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Measure1D;

/// Optimal value, the optimal test function at the nodes, and the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatNormResult {
    pub value: f64,
    pub witness: Vec<f64>,
    pub nodes: Vec<f64>,
}

impl FlatNormResult {
    /// Largest violation of the witness constraints.
    pub fn feasibility_defect(&self) -> f64 {
        let mut defect = self.witness[0].abs().max(self.witness[self.witness.len() - 1].abs());
        for (w, x) in self.witness.windows(2).zip(self.nodes.windows(2)) {
            defect = defect.max((w[1] - w[0]).abs() - (x[1] - x[0]));
        }
        for w in &self.witness {
            defect = defect.max(w.abs() - 1.0);
        }
        defect.max(0.0)
    }
}

/// Node positions and node weights `∫ φ dμ = Σ φ_i m_i` for piecewise-linear `φ`.
pub(crate) fn discretize(mu: &Measure1D, refine: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if refine == 0 {
        return Err(Error::InvalidArgument("refine must be >= 1".into()));
    }
    let fine = mu.domain().refined(refine)?;
    let density = mu.density().refine(refine)?;
    let atoms = mu.atoms();

    let mut nodes = Vec::with_capacity(fine.n() + 1 + atoms.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    let mut ai = 0;
    for k in 0..fine.n() {
        let (s, e) = (fine.node(k), fine.node(k + 1));
        let c = density.cells()[k];
        if nodes.last() != Some(&s) {
            nodes.push(s);
            weights.push(0.0);
        }
        while ai < atoms.len() && atoms[ai].position <= s {
            // atom on a grid node
            *weights.last_mut().unwrap() += atoms[ai].weight;
            ai += 1;
        }
        let mut left = s;
        while ai < atoms.len() && atoms[ai].position < e {
            let x = atoms[ai].position;
            let half = 0.5 * c * (x - left);
            *weights.last_mut().unwrap() += half;
            nodes.push(x);
            weights.push(half + atoms[ai].weight);
            left = x;
            ai += 1;
        }
        let half = 0.5 * c * (e - left);
        *weights.last_mut().unwrap() += half;
        nodes.push(e);
        weights.push(half);
    }
    // atoms sitting exactly on b are excluded by Measure1D validation
    debug_assert_eq!(ai, atoms.len());
    Ok((nodes, weights))
}

/// Concave piecewise-linear function on `[lo, hi]` with its increasing part
/// and nonincreasing part kept as two deques of `(length, stored slope)`;
/// actual slopes are `stored + offset`.
struct ConcavePwl {
    lo: f64,
    hi: f64,
    v_lo: f64,
    offset: f64,
    /// front = leftmost segment, back = segment ending at the argmax.
    rising: VecDeque<(f64, f64)>,
    /// front = rightmost segment, back = segment starting at the argmax.
    falling: VecDeque<(f64, f64)>,
    rising_len: f64,
}

impl ConcavePwl {
    fn point_zero() -> Self {
        Self {
            lo: 0.0,
            hi: 0.0,
            v_lo: 0.0,
            offset: 0.0,
            rising: VecDeque::new(),
            falling: VecDeque::new(),
            rising_len: 0.0,
        }
    }

    /// The maximizer closest to zero.
    fn argmax(&self) -> f64 {
        let left = (self.lo + self.rising_len).min(self.hi);
        let flat = match self.falling.back() {
            Some(&(len, s)) if s + self.offset == 0.0 => len,
            _ => 0.0,
        };
        0.0f64.clamp(left, (left + flat).min(self.hi))
    }

    /// `V(y) <- max_{|x - y| <= d} V(x)`.
    fn window_max(&mut self, d: f64) {
        self.lo -= d;
        self.hi += d;
        if d > 0.0 {
            match self.falling.back_mut() {
                Some(seg) if seg.1 + self.offset == 0.0 => seg.0 += 2.0 * d,
                _ => self.falling.push_back((2.0 * d, -self.offset)),
            }
        }
    }

    /// `V(y) <- V(y) + m y`.
    fn add_linear(&mut self, m: f64) {
        self.v_lo += m * self.lo;
        self.offset += m;
        let off = self.offset;
        while let Some(&(len, s)) = self.falling.back() {
            if s + off > 0.0 {
                self.falling.pop_back();
                self.rising.push_back((len, s));
                self.rising_len += len;
            } else {
                break;
            }
        }
        while let Some(&(len, s)) = self.rising.back() {
            if s + off <= 0.0 {
                self.rising.pop_back();
                self.rising_len -= len;
                self.falling.push_back((len, s));
            } else {
                break;
            }
        }
    }

    /// Restrict the domain to `[-1, 1]`.
    fn clip_unit(&mut self) {
        while self.lo < -1.0 {
            let need = -1.0 - self.lo;
            let in_rising = !self.rising.is_empty();
            let seg = if in_rising { self.rising.front_mut() } else { self.falling.back_mut() };
            let Some(seg) = seg else {
                self.lo = -1.0;
                break;
            };
            let cut = need.min(seg.0);
            let slope = seg.1 + self.offset;
            seg.0 -= cut;
            let empty = seg.0 <= 0.0;
            self.v_lo += slope * cut;
            self.lo += cut;
            if in_rising {
                self.rising_len -= cut;
                if empty {
                    self.rising.pop_front();
                }
            } else if empty {
                self.falling.pop_back();
            }
            if need <= cut {
                self.lo = -1.0;
            }
        }
        while self.hi > 1.0 {
            let need = self.hi - 1.0;
            let in_falling = !self.falling.is_empty();
            let seg = if in_falling { self.falling.front_mut() } else { self.rising.back_mut() };
            let Some(seg) = seg else {
                self.hi = 1.0;
                break;
            };
            let cut = need.min(seg.0);
            seg.0 -= cut;
            let empty = seg.0 <= 0.0;
            self.hi -= cut;
            if !in_falling {
                self.rising_len -= cut;
                if empty {
                    self.rising.pop_back();
                }
            } else if empty {
                self.falling.pop_front();
            }
            if need <= cut {
                self.hi = 1.0;
            }
        }
        if self.rising.is_empty() {
            self.rising_len = 0.0;
        }
    }

    fn value_at(&self, x: f64) -> f64 {
        let mut pos = self.lo;
        let mut val = self.v_lo;
        let segs = self.rising.iter().chain(self.falling.iter().rev());
        for &(len, s) in segs {
            if pos >= x {
                break;
            }
            let step = len.min(x - pos);
            val += (s + self.offset) * step;
            pos += step;
        }
        val
    }
}

/// Exact maximizer of `Σ φ_i m_i` subject to `|φ_i| <= 1`,
/// `|φ_{i+1} - φ_i| <= x_{i+1} - x_i` and `φ_0 = φ_last = 0`.
pub(crate) fn solve_chain(nodes: &[f64], weights: &[f64]) -> (f64, Vec<f64>) {
    let n = nodes.len() - 1;
    let mut phi = vec![0.0; n + 1];
    if n < 2 {
        return (0.0, phi);
    }
    let mut v = ConcavePwl::point_zero();
    let mut peaks = vec![0.0; n + 1];
    for i in 1..n {
        v.window_max(nodes[i] - nodes[i - 1]);
        v.add_linear(weights[i]);
        v.clip_unit();
        peaks[i] = v.argmax().clamp(-1.0, 1.0);
    }
    for i in (1..n).rev() {
        let d = nodes[i + 1] - nodes[i];
        phi[i] = peaks[i].clamp(phi[i + 1] - d, phi[i + 1] + d);
    }
    let d0 = nodes[1] - nodes[0];
    phi[1] = phi[1].clamp(-d0, d0);
    let value = phi.iter().zip(weights).map(|(p, m)| p * m).sum::<f64>();
    // the forward value at the last step cross-checks the backtracked witness
    debug_assert!({
        let mut w = v;
        w.window_max(nodes[n] - nodes[n - 1]);
        let dp = w.value_at(0.0);
        (dp - value).abs() <= 1e-9 * (1.0 + dp.abs())
    });
    (value.max(0.0), phi)
}

/// Flat norm of `mu` on its grid refined by `refine` with atoms as extra nodes.
pub fn flat_norm(mu: &Measure1D, refine: usize) -> Result<FlatNormResult> {
    let (nodes, weights) = discretize(mu, refine)?;
    let (value, witness) = solve_chain(&nodes, &weights);
    Ok(FlatNormResult { value, witness, nodes })
}

/// `‖mu - nu‖_flat`.
pub fn flat_distance(mu: &Measure1D, nu: &Measure1D, refine: usize) -> Result<f64> {
    Ok(flat_norm(&mu.sub(nu)?, refine)?.value)
}
