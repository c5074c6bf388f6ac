//! Brute-force reference dynamics in a truncated photon-number basis.
//!
//! Two independent pictures are provided: direct Schrödinger propagation of
//! the full Hamiltonian, and the displaced-number-state equations in which
//! only the atomic term drives the amplitudes.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{run, Sampling, TrajectoryRecord};
use crate::integrator::IntegratorConfig;
use crate::{Error, ModelParams, Result, C64};

/// Largest initial coherent label accepted by the oracle.
pub const MAX_ORACLE_ALPHA: f64 = 10.0;

/// Photon cutoff and the allowed population in the top 10% of levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockTruncation {
    pub n_max: usize,
    pub tail_tol: f64,
}

impl FockTruncation {
    pub fn new(n_max: usize, tail_tol: f64) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("tail_tol must be in (0, 1), got {tail_tol}")));
        }
        Ok(Self { n_max, tail_tol })
    }

    /// `n_max = ⌈|α|² + 6|α| + 20⌉`, tail tolerance 1e-8.
    pub fn for_alpha(alpha0: C64) -> Self {
        let a = alpha0.norm();
        Self { n_max: (a * a + 6.0 * a + 20.0).ceil() as usize, tail_tol: 1e-8 }
    }

    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    /// First level counted as tail.
    fn tail_start(&self) -> usize {
        let levels = self.levels();
        levels - levels.div_ceil(10)
    }
}

/// Amplitudes over `{|+⟩, |−⟩} ⊗ {|0⟩, …, |n_max⟩}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    pub plus: DVector<C64>,
    pub minus: DVector<C64>,
}

impl FockState {
    /// `|+⟩|α⟩` truncated to `n_max`.
    pub fn plus_coherent(alpha: C64, n_max: usize) -> Self {
        Self { plus: coherent_amplitudes(alpha, n_max), minus: DVector::zeros(n_max + 1) }
    }

    /// `(|+⟩ + |−⟩)/√2 ⊗ |α⟩`.
    pub fn ground_coherent(alpha: C64, n_max: usize) -> Self {
        let a = coherent_amplitudes(alpha, n_max) * C64::new(0.5f64.sqrt(), 0.0);
        Self { plus: a.clone(), minus: a }
    }

    pub fn p_plus(&self) -> f64 {
        self.plus.norm_squared()
    }

    pub fn p_minus(&self) -> f64 {
        self.minus.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.p_plus() + self.p_minus()
    }

    pub fn sigma_x(&self) -> f64 {
        self.p_plus() - self.p_minus()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.plus.dotc(&other.plus) + self.minus.dotc(&other.minus)
    }

    /// Population in the top 10% of photon levels.
    pub fn tail_population(&self, trunc: &FockTruncation) -> f64 {
        tail_of(&self.plus, &self.minus, trunc)
    }

    fn flat(&self) -> Vec<C64> {
        self.plus.iter().chain(self.minus.iter()).copied().collect()
    }

    fn from_flat(y: &[C64]) -> Self {
        let k = y.len() / 2;
        Self { plus: DVector::from_column_slice(&y[..k]), minus: DVector::from_column_slice(&y[k..]) }
    }
}

fn tail_of<'a>(
    plus: impl IntoIterator<Item = &'a C64>,
    minus: impl IntoIterator<Item = &'a C64>,
    trunc: &FockTruncation,
) -> f64 {
    let s = trunc.tail_start();
    let part = |v: &mut dyn Iterator<Item = &'a C64>| v.skip(s).map(|z| z.norm_sqr()).sum::<f64>();
    part(&mut plus.into_iter()) + part(&mut minus.into_iter())
}

/// `⟨n|α⟩` for `n = 0..=n_max`.
pub fn coherent_amplitudes(alpha: C64, n_max: usize) -> DVector<C64> {
    let mut v = DVector::zeros(n_max + 1);
    v[0] = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 1..=n_max {
        v[n] = v[n - 1] * alpha / (n as f64).sqrt();
    }
    v
}

/// `⟨n|D(β)|m⟩` from the associated-Laguerre closed form.
pub fn displacement_matrix_element(n: usize, m: usize, beta: C64) -> C64 {
    if n < m {
        return displacement_matrix_element(m, n, -beta).conj();
    }
    if beta == C64::default() {
        return if n == m { C64::new(1.0, 0.0) } else { C64::default() };
    }
    let k = n - m;
    let x = beta.norm_sqr();
    // ln √(m!/n!) + k ln|β| − |β|²/2
    let ln_fact: f64 = (m + 1..=n).map(|i| (i as f64).ln()).sum();
    let mut log_pre = -0.5 * ln_fact + k as f64 * beta.norm().ln() - 0.5 * x;
    let (lag, scale) = laguerre_scaled(m, k as f64, x);
    if lag == 0.0 {
        return C64::default();
    }
    log_pre += scale;
    let mag = log_pre.exp() * lag.abs();
    let phase = k as f64 * beta.arg() + if lag < 0.0 { std::f64::consts::PI } else { 0.0 };
    C64::from_polar(mag, phase)
}

/// `L_m^{(k)}(x) = value · e^{scale}` by upward recurrence in `m`, rescaled
/// to avoid overflow.
fn laguerre_scaled(m: usize, k: f64, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    if m == 0 {
        return (prev, 0.0);
    }
    let mut cur = 1.0 + k - x;
    let mut scale = 0.0;
    for j in 1..m {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + k - x) * cur - (jf + k) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
        let a = cur.abs().max(prev.abs());
        if a > 1e150 {
            prev /= a;
            cur /= a;
            scale += a.ln();
        }
    }
    (cur, scale)
}

/// Matrix `⟨n|D(β)|m⟩` for `n, m ≤ n_max`.
pub fn displacement_matrix(beta: C64, n_max: usize) -> DMatrix<C64> {
    DMatrix::from_fn(n_max + 1, n_max + 1, |n, m| displacement_matrix_element(n, m, beta))
}

/// SFA eigenenergy `E_n = ω(n − Ω²/ω²)`.
pub fn sfa_eigenenergy(n: usize, params: &ModelParams) -> f64 {
    params.omega * (n as f64 - (params.rabi / params.omega).powi(2))
}

/// `ω a†a + Ω σx (a + a†)` in the `{|+⟩, |−⟩} ⊗ Fock` basis, block ordered.
pub fn sfa_hamiltonian(params: &ModelParams, n_max: usize) -> DMatrix<f64> {
    let l = n_max + 1;
    let mut h = DMatrix::zeros(2 * l, 2 * l);
    for (b, s) in [(0, 1.0), (l, -1.0)] {
        for n in 0..l {
            h[(b + n, b + n)] = params.omega * n as f64;
            if n + 1 < l {
                let c = s * params.rabi * ((n + 1) as f64).sqrt();
                h[(b + n, b + n + 1)] = c;
                h[(b + n + 1, b + n)] = c;
            }
        }
    }
    h
}

/// Observable series of a Fock-basis propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct FockTrajectory {
    pub record: TrajectoryRecord,
    /// Largest tail population seen at any sample.
    pub max_tail: f64,
    /// States at the requested snapshot times, as `(t, state)`.
    pub snapshots: Vec<(f64, FockState)>,
}

fn check_oracle_input(alpha0: C64, trunc: &FockTruncation) -> Result<()> {
    FockTruncation::new(trunc.n_max, trunc.tail_tol)?;
    if alpha0.norm() > MAX_ORACLE_ALPHA {
        return Err(Error::InvalidParameter(format!(
            "Fock oracle is limited to |alpha0| <= {MAX_ORACLE_ALPHA}, got {}",
            alpha0.norm()
        )));
    }
    Ok(())
}

fn fock_run<F>(
    y0: Vec<C64>,
    params: &ModelParams,
    t_end_cycles: f64,
    trunc: &FockTruncation,
    cfg: &IntegratorConfig,
    sampling: &Sampling,
    rhs: F,
) -> Result<FockTrajectory>
where
    F: Fn(f64, &[C64], &mut [C64]),
{
    let l = trunc.levels();
    let initial_tail = tail_of(&y0[..l], &y0[l..], trunc);
    if initial_tail > trunc.tail_tol {
        return Err(Error::TailOverflow { population: initial_tail, tol: trunc.tail_tol });
    }
    let max_tail = std::cell::Cell::new(0.0f64);
    let (record, snaps) = run(y0, params, t_end_cycles, cfg, sampling, rhs, |y| {
        let tail = tail_of(&y[..l], &y[l..], trunc);
        if tail > trunc.tail_tol {
            return Err(Error::TailOverflow { population: tail, tol: trunc.tail_tol });
        }
        max_tail.set(max_tail.get().max(tail));
        let p = y[..l].iter().map(|z| z.norm_sqr()).sum();
        let m = y[l..].iter().map(|z| z.norm_sqr()).sum();
        Ok((p, m))
    })?;
    let snapshots = snaps.into_iter().flatten().map(|(t, y)| (t, FockState::from_flat(&y))).collect();
    Ok(FockTrajectory { record, max_tail: max_tail.get(), snapshots })
}

/// Schrödinger propagation of `|g⟩|α₀⟩` under the full Hamiltonian.
pub fn propagate_fock(
    alpha0: C64,
    params: &ModelParams,
    t_end_cycles: f64,
    trunc: &FockTruncation,
    cfg: &IntegratorConfig,
    sampling: &Sampling,
) -> Result<FockTrajectory> {
    check_oracle_input(alpha0, trunc)?;
    propagate_fock_state(&FockState::ground_coherent(alpha0, trunc.n_max), params, t_end_cycles, trunc, cfg, sampling)
}

/// Schrödinger propagation of an arbitrary truncated state.
///
/// In the σx basis the atomic term `(ω₀/2)σz` swaps the branches, so
/// `i ψ̇_{s,n} = ωnψ_{s,n} + sΩ(√n ψ_{s,n−1} + √(n+1) ψ_{s,n+1}) + (ω₀/2)ψ_{−s,n}`.
pub fn propagate_fock_state(
    initial: &FockState,
    params: &ModelParams,
    t_end_cycles: f64,
    trunc: &FockTruncation,
    cfg: &IntegratorConfig,
    sampling: &Sampling,
) -> Result<FockTrajectory> {
    let l = trunc.levels();
    if initial.plus.len() != l || initial.minus.len() != l {
        return Err(Error::InvalidParameter("state length does not match n_max".into()));
    }
    let sq: Vec<f64> = (0..=l).map(|n| (n as f64).sqrt()).collect();
    let (w, rabi, half) = (params.omega, params.rabi, 0.5 * params.omega0);
    let mi = C64::new(0.0, -1.0);
    fock_run(initial.flat(), params, t_end_cycles, trunc, cfg, sampling, move |_, y, dy| {
        for (b, s) in [(0usize, 1.0), (l, -1.0)] {
            let other = if b == 0 { l } else { 0 };
            for n in 0..l {
                let mut h = y[b + n] * (w * n as f64) + y[other + n] * half;
                let mut ladder = C64::default();
                if n > 0 {
                    ladder += y[b + n - 1] * sq[n];
                }
                if n + 1 < l {
                    ladder += y[b + n + 1] * sq[n + 1];
                }
                h += ladder * (s * rabi);
                dy[b + n] = mi * h;
            }
        }
    })
}

/// Right-hand side of the displaced-number-state equations
/// `i ḃₙ⁺ = (ω₀/2) Σₘ ⟨n|D(−2γ)|m⟩ e^{−iω(m−n)t} bₘ⁻` and its mirror with
/// `D(+2γ)`.
#[derive(Debug, Clone)]
pub struct DisplacedBasisModel {
    params: ModelParams,
    /// `⟨n|D(−2γ)|m⟩`; the mirrored matrix is its adjoint.
    coupling: DMatrix<C64>,
}

impl DisplacedBasisModel {
    pub fn new(params: &ModelParams, n_max: usize) -> Self {
        let g = params.gamma();
        Self { params: *params, coupling: displacement_matrix(C64::new(-2.0 * g, 0.0), n_max) }
    }

    /// Initial `bₙ±` of `|g⟩|α₀⟩`: `e^{±iγ Im α₀} ⟨n|α₀ ∓ γ⟩ / √2`.
    pub fn initial_state(&self, alpha0: C64, n_max: usize) -> FockState {
        let g = self.params.gamma();
        let h = 0.5f64.sqrt();
        let plus = coherent_amplitudes(alpha0 - g, n_max) * C64::from_polar(h, g * alpha0.im);
        let minus = coherent_amplitudes(alpha0 + g, n_max) * C64::from_polar(h, -g * alpha0.im);
        FockState { plus, minus }
    }

    pub fn rhs(&self, t: f64, b: &FockState) -> FockState {
        let l = b.plus.len();
        let f = C64::new(0.0, -0.5 * self.params.omega0);
        let rot = DVector::from_fn(l, |m, _| C64::from_polar(1.0, -self.params.omega * m as f64 * t));
        let rp = b.minus.component_mul(&rot);
        let rm = b.plus.component_mul(&rot);
        let dp = (&self.coupling * rp).component_mul(&rot.conjugate()) * f;
        let dm = (self.coupling.adjoint() * rm).component_mul(&rot.conjugate()) * f;
        FockState { plus: dp, minus: dm }
    }
}

/// Same initial state as [`propagate_fock`], propagated in the displaced
/// number-state picture.
pub fn propagate_displaced(
    alpha0: C64,
    params: &ModelParams,
    t_end_cycles: f64,
    trunc: &FockTruncation,
    cfg: &IntegratorConfig,
    sampling: &Sampling,
) -> Result<FockTrajectory> {
    check_oracle_input(alpha0, trunc)?;
    let model = DisplacedBasisModel::new(params, trunc.n_max);
    let b0 = model.initial_state(alpha0, trunc.n_max);
    fock_run(b0.flat(), params, t_end_cycles, trunc, cfg, sampling, |t, y, dy| {
        let d = model.rhs(t, &FockState::from_flat(y));
        let l = d.plus.len();
        dy[..l].copy_from_slice(d.plus.as_slice());
        dy[l..].copy_from_slice(d.minus.as_slice());
    })
}
