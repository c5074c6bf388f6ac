//! Physical parameters, σx branches and the closed-form strong-field
//! evolution of coherent-state labels.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Default atomic-to-field frequency ratio ω₀/ω.
pub const DEFAULT_OMEGA0_RATIO: f64 = 2.2;

/// Low-order part of 2π, so that `TAU + TAU_LO` carries ~107 bits.
const TAU_LO: f64 = 2.449_293_598_294_706_4e-16;

/// Frequencies of the two-level atom + single mode Hamiltonian
/// `H = (ω₀/2)σz + ω a†a + Ω σx (a + a†)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Field angular frequency ω.
    pub omega: f64,
    /// Atomic transition frequency ω₀.
    pub omega0: f64,
    /// Rabi coupling frequency Ω.
    pub rabi: f64,
}

impl ModelParams {
    pub fn new(omega: f64, omega0: f64, rabi: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        if !(omega0.is_finite() && omega0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("omega0 must be non-negative, got {omega0}")));
        }
        if !rabi.is_finite() {
            return Err(Error::InvalidParameter(format!("rabi frequency must be finite, got {rabi}")));
        }
        Ok(Self { omega, omega0, rabi })
    }

    /// Parameters in the figure-caption convention: a coupling magnitude
    /// |γ| = Ω/ω with Ω ≥ 0, so the signed γ comes out negative.
    pub fn from_gamma_magnitude(omega: f64, omega0_ratio: f64, gamma_magnitude: f64) -> Result<Self> {
        if !(gamma_magnitude.is_finite() && gamma_magnitude >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma magnitude must be non-negative, got {gamma_magnitude}"
            )));
        }
        Self::new(omega, omega0_ratio * omega, gamma_magnitude * omega)
    }

    /// Signed displacement γ = −Ω/ω that diagonalizes the strong-field part.
    pub fn gamma(&self) -> f64 {
        gamma(self)
    }

    /// Optical cycle T = 2π/ω.
    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    pub fn with_omega0(self, omega0: f64) -> Self {
        Self { omega0, ..self }
    }
}

/// γ = −Ω/ω.
pub fn gamma(params: &ModelParams) -> f64 {
    -params.rabi / params.omega
}

/// σx eigenstate |±⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Plus, Branch::Minus];

    /// σx eigenvalue.
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

/// Coherent label and accumulated phase of one branch at some time:
/// the state `e^{iδ} |branch⟩|α⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchLabel {
    pub branch: Branch,
    pub alpha: C64,
    pub delta: f64,
}

/// `(cos θ, sin θ)` of ωt with θ folded into [0, 2π) first, so whole
/// periods come back to the identity exactly.
fn cycle_phase(params: &ModelParams, t: f64) -> (f64, f64) {
    let theta = (params.omega * t).rem_euclid(TAU);
    (theta.cos(), theta.sin())
}

/// `1 − e^{−iωt}` without cancellation at small ωt.
fn one_minus_rotation(params: &ModelParams, t: f64) -> C64 {
    let theta = (params.omega * t).rem_euclid(TAU);
    let half = (0.5 * theta).sin();
    C64::new(2.0 * half * half, theta.sin())
}

/// Strong-field evolution of `|branch⟩|α⟩` under `ω a†a + Ω σx (a + a†)`:
/// `α±(t) = ±γ + (α ∓ γ)e^{−iωt}` and `δ±(t) = ±γ Im[α − (α ∓ γ)e^{−iωt}]`.
///
/// The common phase from the constant `−Ω²/ω` energy shift is dropped; it is
/// identical for both branches.
pub fn evolve_label(alpha: C64, branch: Branch, params: &ModelParams, t: f64) -> BranchLabel {
    let g = branch.sign() * params.gamma();
    let (c, s) = cycle_phase(params, t);
    let u = C64::new(c, -s);
    let label = g + (alpha - g) * u;
    // α − (α − sγ)u = α(1 − u) + sγu, keeps δ accurate for tiny ωt.
    let delta = g * (alpha * one_minus_rotation(params, t) + g * u).im;
    BranchLabel { branch, alpha: label, delta }
}

/// `(hi, lo)` with `hi + lo = a·b` exactly.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Reduce `hi + lo` modulo 2π into roughly (−π, π].
fn reduce_angle(hi: f64, lo: f64) -> f64 {
    let k = (hi / TAU).round();
    if k == 0.0 {
        return hi + lo;
    }
    let (kp, ke) = two_prod(k, TAU);
    // hi and kp agree to within π, so the subtraction is exact.
    (hi - kp) + (lo - ke - k * TAU_LO)
}

/// `Im(a* b)` reduced modulo 2π with error-free products.
///
/// The result is exact to a few ulps of 2π for the given `f64` inputs. The
/// inputs themselves carry a representation error of order
/// `|a||b|·ε` radians, which no arithmetic can undo.
pub fn conj_product_phase(a: C64, b: C64) -> f64 {
    let (p1, e1) = two_prod(a.re, b.im);
    let (p2, e2) = two_prod(a.im, b.re);
    let (s, es) = two_sum(p1, -p2);
    reduce_angle(s, es + e1 - e2)
}

/// Twice an already reduced angle, reduced again.
fn double_angle(phi: f64) -> f64 {
    reduce_angle(2.0 * phi, 0.0)
}

/// ⟨a|b⟩ for coherent states, as `exp(−|a−b|²/2)·exp(i Im(a* b))`.
///
/// Equal to `exp(a* b − (|a|² + |b|²)/2)` but never overflows.
pub fn coherent_overlap(a: C64, b: C64) -> C64 {
    let mag = (-0.5 * (a - b).norm_sqr()).exp();
    C64::from_polar(mag, conj_product_phase(a, b))
}

/// Displacement ζ with `U₊†(t) U₋(t) = D(ζ)`, where `U±` is the strong-field
/// propagator of branch ±. `ζ = 2γ(1 − e^{iωt})`; the reverse ordering
/// gives `−ζ`.
pub fn cross_displacement(params: &ModelParams, t: f64) -> C64 {
    2.0 * params.gamma() * one_minus_rotation(params, t).conj()
}

/// Single-point coupling `⟨α₊(t)|α₋(t)⟩ e^{i[δ₋(t) − δ₊(t)]}` for an initial
/// label α, evaluated as `⟨α|D(ζ)|α⟩ = e^{−|ζ|²/2} e^{2i Im(ζ α*)}`.
pub fn branch_coupling(alpha: C64, params: &ModelParams, t: f64) -> C64 {
    let zeta = cross_displacement(params, t);
    let phase = double_angle(conj_product_phase(alpha, zeta));
    C64::from_polar((-0.5 * zeta.norm_sqr()).exp(), phase)
}

/// Phase `2 Im(ζ c*)` that multiplies every element of the cross overlap
/// matrix for a lattice centred at `c`.
pub(crate) fn cross_phase(center: C64, zeta: C64) -> f64 {
    double_angle(conj_product_phase(center, zeta))
}
