//! Propagation of the lattice coefficients under the full Hamiltonian, and
//! the two-state minimal model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::integrator::{integrate, IntegratorConfig, StepStats};
use crate::lattice::{
    complex_matvec, cross_overlap, dynamic_overlaps, regularized_inverse, static_overlap_real, ExpansionCoefficients,
    LatticeBasis, OverlapSet, DEFAULT_CUTOFF,
};
use crate::model::{branch_coupling, coherent_overlap, cross_displacement, cross_phase, evolve_label};
use crate::{Branch, Error, ModelParams, Result, C64};

/// Coefficients `c±ₖ` at physical time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCoefficients {
    pub t: f64,
    pub c_plus: DVector<C64>,
    pub c_minus: DVector<C64>,
}

impl StateCoefficients {
    pub fn initial(e: &ExpansionCoefficients) -> Self {
        Self { t: 0.0, c_plus: e.c_plus.clone(), c_minus: e.c_minus.clone() }
    }

    pub fn branch(&self, b: Branch) -> &DVector<C64> {
        match b {
            Branch::Plus => &self.c_plus,
            Branch::Minus => &self.c_minus,
        }
    }

    fn to_flat(&self) -> Vec<C64> {
        self.c_plus.iter().chain(self.c_minus.iter()).copied().collect()
    }

    fn from_flat(t: f64, y: &[C64]) -> Self {
        let k = y.len() / 2;
        Self { t, c_plus: DVector::from_column_slice(&y[..k]), c_minus: DVector::from_column_slice(&y[k..]) }
    }
}

/// `c†Mc`, which must be real for Hermitian `M`.
pub(crate) fn quadratic_form(c: &DVector<C64>, m: &DMatrix<C64>, what: &'static str) -> Result<f64> {
    let v = c.dotc(&(m * c));
    let tol = 1e-10 * v.re.abs().max(1.0);
    if v.im.abs() > tol {
        return Err(Error::ImaginaryResidue { what, residue: v.im.abs(), tol });
    }
    Ok(v.re)
}

/// `Σ (c⁺)†𝒩⁺⁺c⁺ + (c⁻)†𝒩⁻⁻c⁻`.
pub fn generalized_norm(state: &StateCoefficients, overlaps: &OverlapSet) -> Result<f64> {
    Ok(quadratic_form(&state.c_plus, &overlaps.pp, "generalized norm")?
        + quadratic_form(&state.c_minus, &overlaps.mm, "generalized norm")?)
}

/// Time derivatives of both coefficient vectors, rebuilding every overlap
/// matrix and pseudo-inverse at `state.t`. Reference implementation; the
/// propagator uses [`LatticePropagator`].
pub fn coefficient_rhs(
    state: &StateCoefficients,
    basis: &LatticeBasis,
    params: &ModelParams,
) -> Result<(DVector<C64>, DVector<C64>)> {
    let o = dynamic_overlaps(basis, params, state.t);
    let ipp = regularized_inverse(&o.pp, DEFAULT_CUTOFF)?;
    let imm = regularized_inverse(&o.mm, DEFAULT_CUTOFF)?;
    let f = C64::new(0.0, -0.5 * params.omega0);
    let dp = &ipp * (&o.pm * &state.c_minus) * f;
    let dm = &imm * (&o.mp * &state.c_plus) * f;
    if dp.iter().chain(dm.iter()).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NonFinite(format!("coefficient derivative at t = {}", state.t)));
    }
    Ok((dp, dm))
}

/// Above this, `e^{ζx*}` factors could overflow and the cross matrix is
/// built entry by entry instead.
const FACTOR_EXPONENT_LIMIT: f64 = 300.0;

/// Precomputed lattice operators for fast right-hand sides.
///
/// The same-branch overlaps are the static real matrix `S` at every time, so
/// its pseudo-inverse `P` is computed once. The cross products use the
/// factorization `𝒩⁺⁻ = g·diag(e^{ζx*})·S·diag(e^{−ζ*x})`.
#[derive(Debug, Clone)]
pub struct LatticePropagator {
    basis: LatticeBasis,
    params: ModelParams,
    stat: DMatrix<f64>,
    pinv: DMatrix<f64>,
    offsets: Vec<C64>,
}

impl LatticePropagator {
    pub fn new(basis: &LatticeBasis, params: &ModelParams, cutoff: f64) -> Result<Self> {
        let stat = static_overlap_real(basis);
        let pinv = regularized_inverse(&stat, cutoff)?;
        Ok(Self { basis: basis.clone(), params: *params, stat, pinv, offsets: basis.offsets() })
    }

    pub fn basis(&self) -> &LatticeBasis {
        &self.basis
    }

    pub fn static_overlap(&self) -> &DMatrix<f64> {
        &self.stat
    }

    /// `⟨αⱼ|D(ζ)|αₘ⟩` applied to `v`.
    fn apply_cross(&self, zeta: C64, v: &DVector<C64>) -> DVector<C64> {
        let g = C64::from_polar((-0.5 * zeta.norm_sqr()).exp(), cross_phase(self.basis.center(), zeta));
        let worst = self.offsets.iter().map(|x| (zeta * x.conj()).re.abs()).fold(0.0, f64::max);
        if worst > FACTOR_EXPONENT_LIMIT {
            return cross_overlap(&self.basis, &self.stat, zeta) * v;
        }
        let right =
            DVector::from_iterator(v.len(), v.iter().zip(&self.offsets).map(|(c, x)| c * (-zeta.conj() * x).exp()));
        let mid = complex_matvec(&self.stat, &right);
        DVector::from_iterator(v.len(), mid.iter().zip(&self.offsets).map(|(w, x)| g * w * (zeta * x.conj()).exp()))
    }

    /// Derivatives for the flattened state `[c⁺; c⁻]` at physical time `t`.
    pub fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let k = y.len() / 2;
        let f = C64::new(0.0, -0.5 * self.params.omega0);
        if self.params.omega0 == 0.0 {
            dy.fill(C64::default());
            return;
        }
        let zeta = cross_displacement(&self.params, t);
        let cp = DVector::from_column_slice(&y[..k]);
        let cm = DVector::from_column_slice(&y[k..]);
        let dp = complex_matvec(&self.pinv, &self.apply_cross(zeta, &cm));
        let dm = complex_matvec(&self.pinv, &self.apply_cross(-zeta, &cp));
        for (o, v) in dy[..k].iter_mut().zip(dp.iter()) {
            *o = f * v;
        }
        for (o, v) in dy[k..].iter_mut().zip(dm.iter()) {
            *o = f * v;
        }
    }

    /// `c†Sc` for one branch.
    pub fn branch_weight(&self, c: &[C64]) -> f64 {
        let v = DVector::from_column_slice(c);
        v.dotc(&complex_matvec(&self.stat, &v)).re
    }
}

/// Output grid and snapshot requests for a propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub samples_per_cycle: usize,
    /// Times, in cycles, at which full coefficient vectors are kept.
    pub snapshot_times: Vec<f64>,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { samples_per_cycle: 4096, snapshot_times: Vec::new() }
    }
}

impl Sampling {
    pub fn new(samples_per_cycle: usize) -> Self {
        Self { samples_per_cycle, snapshot_times: Vec::new() }
    }

    pub fn with_snapshots(mut self, times_cycles: Vec<f64>) -> Self {
        self.snapshot_times = times_cycles;
        self
    }

    /// Uniform grid `i / samples_per_cycle` up to `t_end` cycles.
    pub fn grid(&self, t_end_cycles: f64) -> Vec<f64> {
        let spc = self.samples_per_cycle as f64;
        let n = (t_end_cycles * spc).round() as usize;
        (0..=n).map(|i| i as f64 / spc).collect()
    }
}

/// Observable series on a uniform grid, in cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times_cycles: Vec<f64>,
    pub norm: Vec<f64>,
    pub p_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub snapshots: Vec<StateCoefficients>,
    pub stats: StepStats,
}

impl TrajectoryRecord {
    fn with_capacity(n: usize) -> Self {
        Self {
            times_cycles: Vec::with_capacity(n),
            norm: Vec::with_capacity(n),
            p_plus: Vec::with_capacity(n),
            p_minus: Vec::with_capacity(n),
            sigma_x: Vec::with_capacity(n),
            snapshots: Vec::new(),
            stats: StepStats::default(),
        }
    }

    fn push(&mut self, t_cycles: f64, p_plus: f64, p_minus: f64) {
        self.times_cycles.push(t_cycles);
        self.p_plus.push(p_plus);
        self.p_minus.push(p_minus);
        self.norm.push(p_plus + p_minus);
        self.sigma_x.push(p_plus - p_minus);
    }

    pub fn len(&self) -> usize {
        self.times_cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_cycles.is_empty()
    }

    /// `max |norm − 1|` over the samples.
    pub fn max_norm_drift(&self) -> f64 {
        self.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn validate_run(t_end_cycles: f64, cfg: &IntegratorConfig, sampling: &Sampling) -> Result<()> {
    cfg.validate()?;
    if !(t_end_cycles.is_finite() && t_end_cycles > 0.0) {
        return Err(Error::InvalidParameter(format!("duration must be positive, got {t_end_cycles}")));
    }
    if sampling.samples_per_cycle == 0 {
        return Err(Error::InvalidParameter("samples_per_cycle must be at least 1".into()));
    }
    if sampling.snapshot_times.iter().any(|&s| !(0.0..=t_end_cycles).contains(&s)) {
        return Err(Error::InvalidParameter("snapshot times must lie within the run".into()));
    }
    Ok(())
}

/// Merged integration schedule: `(t_cycles, grid sample?, snapshot slots)`.
fn schedule(grid: &[f64], snaps: &[f64]) -> Vec<(f64, bool, Vec<usize>)> {
    let mut out: Vec<(f64, bool, Vec<usize>)> = grid.iter().map(|&t| (t, true, Vec::new())).collect();
    for (i, &s) in snaps.iter().enumerate() {
        match out.binary_search_by(|e| e.0.total_cmp(&s)) {
            Ok(k) => out[k].2.push(i),
            Err(k) => out.insert(k, (s, false, vec![i])),
        }
    }
    out
}

/// Requested state `(t, y)`, or `None` if not reached.
type Snapshot = Option<(f64, Vec<C64>)>;

/// Shared driver: integrate `y` with `rhs`, recording `(P₊, P₋)` from `weights`.
/// Returns the record and the requested snapshots as `(t, y)`.
pub(crate) fn run<F, W>(
    y0: Vec<C64>,
    params: &ModelParams,
    t_end_cycles: f64,
    cfg: &IntegratorConfig,
    sampling: &Sampling,
    rhs: F,
    weights: W,
) -> Result<(TrajectoryRecord, Vec<Snapshot>)>
where
    F: Fn(f64, &[C64], &mut [C64]),
    W: Fn(&[C64]) -> Result<(f64, f64)>,
{
    validate_run(t_end_cycles, cfg, sampling)?;
    let period = params.period();
    let grid = sampling.grid(t_end_cycles);
    let plan = schedule(&grid, &sampling.snapshot_times);
    let times: Vec<f64> = plan.iter().map(|e| e.0 * period).collect();
    let mut rec = TrajectoryRecord::with_capacity(grid.len());
    let mut snaps: Vec<Option<(f64, Vec<C64>)>> = vec![None; sampling.snapshot_times.len()];
    let mut cursor = 0;
    let (_, stats) = integrate(
        |t, y, dy| {
            rhs(t, y, dy);
            Ok(())
        },
        0.0,
        &y0,
        &times,
        cfg.rel_tol,
        cfg.abs_tol,
        cfg.max_step * period,
        |t, y| {
            let (tc, on_grid, ref slots) = plan[cursor];
            cursor += 1;
            for &s in slots {
                snaps[s] = Some((t, y.to_vec()));
            }
            if on_grid {
                let (pp, pm) = weights(y)?;
                let norm = pp + pm;
                if !norm.is_finite() {
                    return Err(Error::NonFinite(format!("norm at t = {tc} cycles")));
                }
                if (norm - 1.0).abs() > cfg.norm_guard {
                    return Err(Error::NormDrift { t_cycles: tc, norm, guard: cfg.norm_guard });
                }
                rec.push(tc, pp, pm);
            }
            Ok(())
        },
    )?;
    rec.stats = stats;
    Ok((rec, snaps))
}

/// Propagate lattice coefficients for `t_end_cycles` optical cycles.
pub fn propagate(
    initial: &ExpansionCoefficients,
    basis: &LatticeBasis,
    params: &ModelParams,
    t_end_cycles: f64,
    cfg: &IntegratorConfig,
    sampling: &Sampling,
) -> Result<TrajectoryRecord> {
    propagate_with_cutoff(initial, basis, params, t_end_cycles, cfg, sampling, DEFAULT_CUTOFF)
}

pub fn propagate_with_cutoff(
    initial: &ExpansionCoefficients,
    basis: &LatticeBasis,
    params: &ModelParams,
    t_end_cycles: f64,
    cfg: &IntegratorConfig,
    sampling: &Sampling,
    cutoff: f64,
) -> Result<TrajectoryRecord> {
    if initial.c_plus.len() != basis.len() || initial.c_minus.len() != basis.len() {
        return Err(Error::InvalidParameter("coefficient length does not match the lattice".into()));
    }
    let prop = LatticePropagator::new(basis, params, cutoff)?;
    let y0 = StateCoefficients::initial(initial).to_flat();
    let k = basis.len();
    let (mut rec, snaps) = run(
        y0,
        params,
        t_end_cycles,
        cfg,
        sampling,
        |t, y, dy| prop.rhs(t, y, dy),
        |y| Ok((prop.branch_weight(&y[..k]), prop.branch_weight(&y[k..]))),
    )?;
    rec.snapshots = snaps.into_iter().flatten().map(|(t, y)| StateCoefficients::from_flat(t, &y)).collect();
    Ok(rec)
}

/// Two-state model amplitudes `c±(t)` on the sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateTrajectory {
    pub record: TrajectoryRecord,
    pub c_plus: Vec<C64>,
    pub c_minus: Vec<C64>,
}

/// Minimal model: one coherent state per branch, both started from `α₀`,
/// with amplitudes obeying
/// `i ċ⁺ = (ω₀/2) K(t) c⁻`, `i ċ⁻ = (ω₀/2) K*(t) c⁺`,
/// where `K(t) = ⟨α₊(t)|α₋(t)⟩ e^{i(δ₋ − δ₊)}`.
pub fn two_state_propagate(
    alpha0: C64,
    params: &ModelParams,
    t_end_cycles: f64,
    cfg: &IntegratorConfig,
    samples_per_cycle: usize,
) -> Result<TwoStateTrajectory> {
    let f = C64::new(0.0, -0.5 * params.omega0);
    let h = 0.5f64.sqrt();
    let sampling = Sampling::new(samples_per_cycle);
    let grid_len = sampling.grid(t_end_cycles).len();
    let amps = std::cell::RefCell::new(Vec::with_capacity(grid_len));
    let (record, _) = run(
        vec![C64::new(h, 0.0), C64::new(h, 0.0)],
        params,
        t_end_cycles,
        cfg,
        &sampling,
        |t, y, dy| {
            let k = branch_coupling(alpha0, params, t);
            dy[0] = f * k * y[1];
            dy[1] = f * k.conj() * y[0];
        },
        |y| {
            amps.borrow_mut().push((y[0], y[1]));
            Ok((y[0].norm_sqr(), y[1].norm_sqr()))
        },
    )?;
    let (c_plus, c_minus) = amps.into_inner().into_iter().unzip();
    Ok(TwoStateTrajectory { record, c_plus, c_minus })
}

/// Inner product `⟨Ψ_a|Ψ_b⟩` of two lattice states, possibly at different
/// times, from individually evolved labels. Accurate while `|α|²ε` is
/// negligible, i.e. for moderate labels.
pub fn state_overlap(a: &StateCoefficients, b: &StateCoefficients, basis: &LatticeBasis, params: &ModelParams) -> C64 {
    let mut sum = C64::default();
    for br in Branch::BOTH {
        let la: Vec<_> = basis.points.iter().map(|&p| evolve_label(p, br, params, a.t)).collect();
        let lb: Vec<_> = basis.points.iter().map(|&p| evolve_label(p, br, params, b.t)).collect();
        let (ca, cb) = (a.branch(br), b.branch(br));
        for (k, lk) in la.iter().enumerate() {
            let mut row = C64::default();
            for (m, lm) in lb.iter().enumerate() {
                row += coherent_overlap(lk.alpha, lm.alpha) * C64::from_polar(1.0, lm.delta - lk.delta) * cb[m];
            }
            sum += ca[k].conj() * row;
        }
    }
    sum
}

/// Normalized fidelity `|⟨Ψ_a|Ψ_b⟩|² / (⟨Ψ_a|Ψ_a⟩⟨Ψ_b|Ψ_b⟩)`.
pub fn fidelity(a: &StateCoefficients, b: &StateCoefficients, basis: &LatticeBasis, params: &ModelParams) -> f64 {
    let ab = state_overlap(a, b, basis, params);
    let aa = state_overlap(a, a, basis, params).re;
    let bb = state_overlap(b, b, basis, params).re;
    ab.norm_sqr() / (aa * bb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, expand_initial};

    fn setup(alpha0: C64, n: usize, omega0: f64, rabi: f64) -> (LatticeBasis, ExpansionCoefficients, ModelParams) {
        let b = build_lattice(alpha0, n).unwrap();
        let e = expand_initial(alpha0, &b).unwrap();
        (b, e, ModelParams::new(1.0, omega0, rabi).unwrap())
    }

    #[test]
    fn rhs_vanishes_without_atom() {
        let (b, e, p) = setup(C64::new(2.0, 0.0), 2, 0.0, 0.1);
        let s = StateCoefficients { t: 0.7, ..StateCoefficients::initial(&e) };
        let (dp, dm) = coefficient_rhs(&s, &b, &p).unwrap();
        assert_eq!(dp.norm(), 0.0);
        assert_eq!(dm.norm(), 0.0);
    }

    #[test]
    fn rhs_at_whole_periods_is_rabi_flop() {
        let (b, e, p) = setup(C64::new(2.0, 0.5), 2, 2.2, 0.05);
        let mut s = StateCoefficients::initial(&e);
        s.c_minus = s.c_minus.map(|z| z * C64::new(0.3, 0.8));
        for n in [0.0, 1.0, 2.0] {
            s.t = n * p.period();
            let (dp, dm) = coefficient_rhs(&s, &b, &p).unwrap();
            let f = C64::new(0.0, -1.1);
            assert!((dp - &s.c_minus * f).norm() < 1e-9, "n = {n}");
            assert!((dm - &s.c_plus * f).norm() < 1e-9);
        }
    }

    #[test]
    fn fast_rhs_matches_reference() {
        let (b, e, p) = setup(C64::new(3.0, -1.0), 3, 2.2, 0.07);
        let prop = LatticePropagator::new(&b, &p, DEFAULT_CUTOFF).unwrap();
        let mut s = StateCoefficients::initial(&e);
        s.c_minus = s.c_minus.map(|z| z * C64::new(0.6, -0.8));
        for &t in &[0.0, 0.4, 2.1, 5.9] {
            s.t = t;
            let (dp, dm) = coefficient_rhs(&s, &b, &p).unwrap();
            let y = s.to_flat();
            let mut dy = vec![C64::default(); y.len()];
            prop.rhs(t, &y, &mut dy);
            let k = b.len();
            let ep = (DVector::from_column_slice(&dy[..k]) - dp).norm();
            let em = (DVector::from_column_slice(&dy[k..]) - dm).norm();
            assert!(ep < 1e-11 && em < 1e-11, "t = {t}: {ep} {em}");
        }
    }

    #[test]
    fn norm_of_fresh_and_single_states() {
        let (b, e, p) = setup(C64::new(1.3, 0.4), 3, 2.2, 0.1);
        let o = dynamic_overlaps(&b, &p, 0.0);
        let s = StateCoefficients::initial(&e);
        assert!((generalized_norm(&s, &o).unwrap() - 1.0).abs() < 1e-8);
        let mut c = DVector::zeros(b.len());
        c[5] = C64::new(1.0, 0.0);
        let single = StateCoefficients { t: 0.0, c_plus: c, c_minus: DVector::zeros(b.len()) };
        assert_eq!(generalized_norm(&single, &o).unwrap(), 1.0);
    }

    #[test]
    fn frozen_without_atom() {
        let (b, e, p) = setup(C64::new(2.0, 0.0), 2, 0.0, 0.1);
        let rec =
            propagate(&e, &b, &p, 2.0, &IntegratorConfig::default(), &Sampling::new(16).with_snapshots(vec![2.0]))
                .unwrap();
        let last = &rec.snapshots[0];
        assert_eq!(last.c_plus, e.c_plus);
        assert_eq!(last.c_minus, e.c_minus);
        assert_eq!(rec.len(), 33);
        let s0 = rec.sigma_x[0];
        assert!(rec.sigma_x.iter().all(|&s| s == s0));
    }

    #[test]
    fn norm_conserved_small_system() {
        let (b, e, p) = setup(C64::new(2.0, 0.0), 3, 2.2, 0.05);
        let rec = propagate(&e, &b, &p, 3.0, &IntegratorConfig::default(), &Sampling::new(64)).unwrap();
        assert!(rec.max_norm_drift() < 1e-8, "{}", rec.max_norm_drift());
        assert!(rec.sigma_x.iter().all(|s| s.abs() <= 1.0 + 1e-8));
        assert!(rec.sigma_x.iter().any(|s| s.abs() > 1e-3));
    }

    #[test]
    fn norm_guard_trips() {
        let (b, mut e, p) = setup(C64::new(2.0, 0.0), 2, 2.2, 0.05);
        e.c_plus *= C64::new(1.1, 0.0);
        let r = propagate(&e, &b, &p, 1.0, &IntegratorConfig::default(), &Sampling::new(8));
        assert!(matches!(r, Err(Error::NormDrift { .. })));
    }

    #[test]
    fn two_state_start_and_frozen() {
        let p = ModelParams::new(1.0, 0.0, 0.3).unwrap();
        let tr = two_state_propagate(C64::new(5.0, 0.0), &p, 1.0, &IntegratorConfig::default(), 32).unwrap();
        let h = 0.5f64.sqrt();
        assert!(tr.c_plus.iter().all(|&c| c == C64::new(h, 0.0)));
        let p = ModelParams::new(1.0, 2.2, 0.3).unwrap();
        let tr = two_state_propagate(C64::new(5.0, 0.0), &p, 2.0, &IntegratorConfig::default(), 32).unwrap();
        assert!((tr.record.norm[0] - 1.0).abs() < 1e-15);
        assert!(tr.record.max_norm_drift() < 1e-8);
    }

    #[test]
    fn snapshots_and_schedule() {
        let plan = schedule(&[0.0, 0.5, 1.0], &[0.25, 1.0]);
        assert_eq!(plan.len(), 4);
        assert_eq!(plan[1], (0.25, false, vec![0]));
        assert_eq!(plan[3], (1.0, true, vec![1]));
    }

    #[test]
    fn fidelity_of_frozen_sfa_state() {
        let (b, e, p) = setup(C64::new(3.0, 0.0), 2, 0.0, 0.5);
        let s0 = StateCoefficients::initial(&e);
        let s1 = StateCoefficients { t: p.period(), ..s0.clone() };
        assert!((fidelity(&s0, &s1, &b, &p) - 1.0).abs() < 1e-12);
        let half = StateCoefficients { t: 0.5 * p.period(), ..s0.clone() };
        assert!(fidelity(&s0, &half, &b, &p) < 0.5);
    }
}
