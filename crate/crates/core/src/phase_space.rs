//! Wigner function of the field (atom traced out) assembled analytically
//! from the lattice expansion, and the characteristic function used to
//! cross-check it.

use std::f64::consts::{FRAC_2_PI, PI};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::StateCoefficients;
use crate::lattice::{complex_matvec, static_overlap_real, LatticeBasis};
use crate::model::evolve_label;
use crate::{Branch, Error, ModelParams, Result, C64};

/// Tolerated imaginary residue of an assembled Wigner sample.
pub const IMAG_TOL: f64 = 1e-8;

/// Beyond this many standard deviations a Gaussian factor is dropped.
const WINDOW: f64 = 4.5;

/// Fixed work split, independent of the thread count, so sums are
/// reproducible bit for bit.
const CHUNKS: usize = 16;

/// Rectangular sampling grid on the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl PhaseGrid {
    pub fn new(re: (f64, f64), im: (f64, f64), n_re: usize, n_im: usize) -> Result<Self> {
        let g = Self { re_min: re.0, re_max: re.1, im_min: im.0, im_max: im.1, n_re, n_im };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.re_min, self.re_max, self.im_min, self.im_max].iter().all(|x| x.is_finite());
        if !finite || self.re_max <= self.re_min || self.im_max <= self.im_min {
            return Err(Error::InvalidParameter(format!("degenerate phase-space grid {self:?}")));
        }
        if self.n_re < 2 || self.n_im < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 samples per axis".into()));
        }
        Ok(())
    }

    /// Square-ish grid around the centroid of `labels`, extended by `margin`
    /// on every side.
    pub fn covering(labels: &[C64], margin: f64, n: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter("no labels to cover".into()));
        }
        let fold = |f: fn(f64, f64) -> f64, init: f64, part: fn(&C64) -> f64| labels.iter().map(part).fold(init, f);
        let (r0, r1) = (fold(f64::min, f64::INFINITY, |z| z.re), fold(f64::max, f64::NEG_INFINITY, |z| z.re));
        let (i0, i1) = (fold(f64::min, f64::INFINITY, |z| z.im), fold(f64::max, f64::NEG_INFINITY, |z| z.im));
        let half = 0.5 * (r1 - r0).max(i1 - i0) + margin;
        let (cr, ci) = (0.5 * (r0 + r1), 0.5 * (i0 + i1));
        Self::new((cr - half, cr + half), (ci - half, ci + half), n, n)
    }

    pub fn d_re(&self) -> f64 {
        (self.re_max - self.re_min) / (self.n_re - 1) as f64
    }

    pub fn d_im(&self) -> f64 {
        (self.im_max - self.im_min) / (self.n_im - 1) as f64
    }

    pub fn re_axis(&self) -> Vec<f64> {
        (0..self.n_re).map(|j| self.re_min + j as f64 * self.d_re()).collect()
    }

    pub fn im_axis(&self) -> Vec<f64> {
        (0..self.n_im).map(|i| self.im_min + i as f64 * self.d_im()).collect()
    }

    /// Distance from `z` to the nearest grid edge; negative outside.
    pub fn edge_distance(&self, z: C64) -> f64 {
        (z.re - self.re_min).min(self.re_max - z.re).min(z.im - self.im_min).min(self.im_max - z.im)
    }
}

/// Sampled Wigner function; `values[(i, j)]` sits at
/// `re_axis[j] + i·im_axis[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerField {
    pub grid: PhaseGrid,
    pub values: DMatrix<f64>,
    /// Physical time of the state.
    pub t: f64,
    /// Evolved labels of the lattice centre on both branches.
    pub centers: Vec<C64>,
    /// Largest imaginary part seen before it was discarded.
    pub max_imag_residue: f64,
}

/// Centres of the Gaussian for the pair `(k, m)`:
/// `z1 = ½(i Re αₖ + Im αₖ − i Re αₘ + Im αₘ)`,
/// `z2 = ½(−i Im αₖ + Re αₖ + i Im αₘ + Re αₘ)`.
pub fn z_coefficients(alpha_k: C64, alpha_m: C64) -> (C64, C64) {
    let i = C64::i();
    let z1 = 0.5 * (i * alpha_k.re + alpha_k.im - i * alpha_m.re + alpha_m.im);
    let z2 = 0.5 * (-i * alpha_k.im + alpha_k.re + i * alpha_m.im + alpha_m.re);
    (z1, z2)
}

/// Evolved labels `Cₐ + xₖ e^{−iωt}` of every lattice point on one branch.
///
/// Written through the centre label so that large lattices far from the
/// origin keep full precision in the offsets.
fn branch_labels(basis: &LatticeBasis, params: &ModelParams, branch: Branch, t: f64) -> (C64, Vec<C64>, C64) {
    let c = evolve_label(basis.center(), branch, params, t).alpha;
    let theta = (params.omega * t).rem_euclid(std::f64::consts::TAU);
    let u = C64::new(theta.cos(), -theta.sin());
    let x: Vec<C64> = basis.offsets().iter().map(|&x| x * u).collect();
    (c, x, u)
}

/// One `(k, m)` summand: weight and the Gaussian factors along each axis,
/// written relative to the pair centre `(p, r)` as
/// `e^{−2(y−r)² + 4is(y−r)} · e^{−2(x−p)² + 4iq(x−p)}`.
struct PairTerm {
    weight: C64,
    p: f64,
    q: f64,
    r: f64,
    s: f64,
}

fn pair_terms(state: &StateCoefficients, basis: &LatticeBasis, params: &ModelParams) -> (Vec<PairTerm>, Vec<C64>) {
    let stat = static_overlap_real(basis);
    let mut terms = Vec::new();
    let mut centers = Vec::new();
    let biggest = state.c_plus.iter().chain(state.c_minus.iter()).map(|c| c.norm()).fold(0.0, f64::max);
    let floor = 1e-16 * biggest * biggest;
    for b in Branch::BOTH {
        let (c0, x, _) = branch_labels(basis, params, b, state.t);
        centers.push(c0);
        let c = state.branch(b);
        for k in 0..x.len() {
            for m in 0..x.len() {
                let w = c[k].conj() * c[m];
                if w.norm() <= floor {
                    continue;
                }
                // Same-branch overlap phase is the static lattice sign.
                let sign = stat[(k, m)].signum();
                // z1, z2 of the full labels, with the centre split off.
                let (z1, z2) = z_coefficients(x[k], x[m]);
                terms.push(PairTerm {
                    weight: FRAC_2_PI * sign * w,
                    p: c0.re + z2.re,
                    q: z2.im,
                    r: c0.im + z1.re,
                    s: z1.im,
                });
            }
        }
    }
    (terms, centers)
}

/// Windowed samples of `e^{−2(v−c)² + 4iκ(v−c)}` on a uniform axis.
fn gaussian_factor(axis_min: f64, step: f64, n: usize, c: f64, kappa: f64) -> (usize, Vec<C64>) {
    let lo = (((c - WINDOW) - axis_min) / step).ceil().max(0.0) as usize;
    let hi_f = (((c + WINDOW) - axis_min) / step).floor();
    if hi_f < 0.0 || lo >= n {
        return (0, Vec::new());
    }
    let hi = (hi_f as usize).min(n - 1);
    if hi < lo {
        return (0, Vec::new());
    }
    let vals = (lo..=hi)
        .map(|i| {
            let d = axis_min + i as f64 * step - c;
            C64::new(-2.0 * d * d, 4.0 * kappa * d).exp()
        })
        .collect();
    (lo, vals)
}

/// Wigner function of the field part of `state` on `grid`.
pub fn wigner_field(
    state: &StateCoefficients,
    basis: &LatticeBasis,
    params: &ModelParams,
    grid: &PhaseGrid,
) -> Result<WignerField> {
    grid.validate()?;
    let (terms, centers) = pair_terms(state, basis, params);
    let (n_re, n_im) = (grid.n_re, grid.n_im);
    let (d_re, d_im) = (grid.d_re(), grid.d_im());
    let chunk = terms.len().div_ceil(CHUNKS).max(1);
    let partials: Vec<DMatrix<C64>> = terms
        .par_chunks(chunk)
        .map(|part| {
            let mut acc = DMatrix::<C64>::zeros(n_im, n_re);
            for t in part {
                let (i0, f) = gaussian_factor(grid.im_min, d_im, n_im, t.r, t.s);
                if f.is_empty() {
                    continue;
                }
                let (j0, g) = gaussian_factor(grid.re_min, d_re, n_re, t.p, t.q);
                if g.is_empty() {
                    continue;
                }
                let gw: Vec<C64> = g.iter().map(|&v| v * t.weight).collect();
                for (jj, &gv) in gw.iter().enumerate() {
                    let mut col = acc.column_mut(j0 + jj);
                    for (ii, &fv) in f.iter().enumerate() {
                        col[i0 + ii] += fv * gv;
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = DMatrix::<C64>::zeros(n_im, n_re);
    for p in &partials {
        total += p;
    }
    let (re_axis, im_axis) = (grid.re_axis(), grid.im_axis());
    let mut max_imag: f64 = 0.0;
    for i in 0..n_im {
        for j in 0..n_re {
            let v = total[(i, j)];
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFiniteWigner { re: re_axis[j], im: im_axis[i] });
            }
            max_imag = max_imag.max(v.im.abs());
        }
    }
    if max_imag > IMAG_TOL {
        return Err(Error::ImaginaryResidue { what: "Wigner sample", residue: max_imag, tol: IMAG_TOL });
    }
    Ok(WignerField { grid: *grid, values: total.map(|v| v.re), t: state.t, centers, max_imag_residue: max_imag })
}

/// Result of a grid integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WignerIntegral {
    pub value: f64,
    /// A branch centre sits within four Gaussian widths of the grid edge.
    pub support_clipped: bool,
}

/// Distance from the grid edge below which support counts as clipped.
pub const SUPPORT_MARGIN: f64 = 2.0;

/// Trapezoidal integral of the field over its grid.
pub fn wigner_integral(field: &WignerField) -> WignerIntegral {
    let g = &field.grid;
    let w = |i: usize, n: usize| if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
    let mut sum = 0.0;
    for i in 0..g.n_im {
        let wi = w(i, g.n_im);
        for j in 0..g.n_re {
            sum += wi * w(j, g.n_re) * field.values[(i, j)];
        }
    }
    let clipped = field.centers.iter().any(|&c| g.edge_distance(c) < SUPPORT_MARGIN);
    WignerIntegral { value: sum * g.d_re() * g.d_im(), support_clipped: clipped }
}

/// Strict local maxima (8-neighbourhood) above `min_value`, refined by a
/// parabola through the neighbours on each axis. Sorted by height,
/// highest first.
pub fn local_maxima(field: &WignerField, min_value: f64) -> Vec<(C64, f64)> {
    let v = &field.values;
    let g = &field.grid;
    let (re, im) = (g.re_axis(), g.im_axis());
    let mut out = Vec::new();
    for i in 1..g.n_im.saturating_sub(1) {
        for j in 1..g.n_re.saturating_sub(1) {
            let c = v[(i, j)];
            if c < min_value {
                continue;
            }
            let mut is_max = true;
            for di in 0..3 {
                for dj in 0..3 {
                    if (di, dj) != (1, 1) && v[(i + di - 1, j + dj - 1)] >= c {
                        is_max = false;
                    }
                }
            }
            if !is_max {
                continue;
            }
            let vertex = |a: f64, b: f64, cc: f64| {
                let den = a - 2.0 * b + cc;
                if den.abs() > 0.0 {
                    0.5 * (a - cc) / den
                } else {
                    0.0
                }
            };
            let dx = vertex(v[(i, j - 1)], c, v[(i, j + 1)]);
            let dy = vertex(v[(i - 1, j)], c, v[(i + 1, j)]);
            out.push((C64::new(re[j] + dx * g.d_re(), im[i] + dy * g.d_im()), c));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

/// Precomputed evaluator of the characteristic function `χ(λ) = ⟨D(λ)⟩`
/// of the field.
#[derive(Debug, Clone)]
pub struct CharacteristicFunction {
    stat: DMatrix<f64>,
    branches: Vec<(C64, Vec<C64>, DVector<C64>)>,
}

impl CharacteristicFunction {
    pub fn new(state: &StateCoefficients, basis: &LatticeBasis, params: &ModelParams) -> Self {
        let branches = Branch::BOTH
            .iter()
            .map(|&b| {
                let (c0, x, _) = branch_labels(basis, params, b, state.t);
                (c0, x, state.branch(b).clone())
            })
            .collect();
        Self { stat: static_overlap_real(basis), branches }
    }

    /// `χ(λ) = e^{−|λ|²/2} Σₐ e^{2i Im(λCₐ*)} Σₖₘ [cₖ e^{λ*xₖ}]* Sₖₘ [cₘ e^{−λ*xₘ}]`
    /// with `xₖ` the rotated offsets and `Cₐ` the evolved centre.
    ///
    /// The envelope is split between the two factors so that each pair
    /// term stays bounded by `|cₖcₘ|` for any `λ`.
    pub fn eval(&self, lambda: C64) -> C64 {
        let q = -0.25 * lambda.norm_sqr();
        let mut total = C64::default();
        for (c0, x, c) in &self.branches {
            let left =
                DVector::from_iterator(x.len(), c.iter().zip(x).map(|(ck, xk)| ck * (lambda.conj() * xk + q).exp()));
            let right =
                DVector::from_iterator(x.len(), c.iter().zip(x).map(|(cm, xm)| cm * (-lambda.conj() * xm + q).exp()));
            let s = left.dotc(&complex_matvec(&self.stat, &right));
            total += C64::from_polar(1.0, 2.0 * (lambda * c0.conj()).im) * s;
        }
        total
    }

    /// Radius beyond which every pair term is below `e^{−18}` of its weight.
    pub fn support_radius(&self) -> f64 {
        let x = &self.branches[0].1;
        let span = x.iter().flat_map(|a| x.iter().map(move |b| (a - b).norm())).fold(0.0, f64::max);
        span + 6.0
    }
}

/// `χ(λ)` for a single point; see [`CharacteristicFunction`].
pub fn characteristic_function(
    state: &StateCoefficients,
    basis: &LatticeBasis,
    params: &ModelParams,
    lambda: C64,
) -> C64 {
    CharacteristicFunction::new(state, basis, params).eval(lambda)
}

/// `W(β) = π⁻² ∫ χ(λ) e^{βλ* − β*λ} d²λ` by the trapezoid rule on the
/// square `|Re λ|, |Im λ| ≤ half_width` with spacing `step`.
pub fn wigner_via_characteristic(chi: &CharacteristicFunction, points: &[C64], half_width: f64, step: f64) -> Vec<f64> {
    let n = (half_width / step).round() as i64;
    let axis: Vec<f64> = (-n..=n).map(|i| i as f64 * step).collect();
    let edge = |i: usize| if i == 0 || i + 1 == axis.len() { 0.5 } else { 1.0 };
    // Rows follow Re λ, columns Im λ.
    let rows: Vec<Vec<C64>> = axis
        .par_iter()
        .enumerate()
        .map(|(i, &u)| axis.iter().enumerate().map(|(j, &v)| chi.eval(C64::new(u, v)) * (edge(i) * edge(j))).collect())
        .collect();
    let scale = step * step / (PI * PI);
    // βλ* − β*λ = 2i(Im β Re λ − Re β Im λ), so the kernel factorises.
    points
        .par_iter()
        .map(|&beta| {
            let kv: Vec<C64> = axis.iter().map(|&v| C64::from_polar(1.0, -2.0 * beta.re * v)).collect();
            let s: C64 = rows
                .iter()
                .zip(&axis)
                .map(|(row, &u)| {
                    let inner: C64 = row.iter().zip(&kv).map(|(a, b)| a * b).sum();
                    inner * C64::from_polar(1.0, 2.0 * beta.im * u)
                })
                .sum();
            s.re * scale
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, expand_initial, spacing};
    use nalgebra::DVector;

    fn single(basis: &LatticeBasis, k: usize) -> StateCoefficients {
        let mut c = DVector::zeros(basis.len());
        c[k] = C64::new(1.0, 0.0);
        StateCoefficients { t: 0.0, c_plus: c, c_minus: DVector::zeros(basis.len()) }
    }

    #[test]
    fn z_examples() {
        let a = C64::new(0.7, -1.3);
        let (z1, z2) = z_coefficients(a, a);
        assert_eq!(z1, C64::new(a.im, 0.0));
        assert_eq!(z2, C64::new(a.re, 0.0));
        let s = spacing();
        let (z1, z2) = z_coefficients(C64::new(s, 0.0), C64::default());
        assert!((z1 - C64::new(0.0, s / 2.0)).norm() < 1e-15);
        assert!((z2 - C64::new(s / 2.0, 0.0)).norm() < 1e-15);
        let (b, c) = (C64::new(0.2, 1.1), C64::new(-0.5, 0.4));
        let (p1, p2) = z_coefficients(b, c);
        let (q1, q2) = z_coefficients(c, b);
        assert_eq!((p1.conj(), p2.conj()), (q1, q2));
    }

    #[test]
    fn single_coherent_state() {
        let b = build_lattice(C64::default(), 1).unwrap();
        let p = ModelParams::new(1.0, 2.2, 0.0).unwrap();
        let g = PhaseGrid::new((-5.0, 5.0), (-5.0, 5.0), 201, 201).unwrap();
        let s = single(&b, b.center_index());
        let w = wigner_field(&s, &b, &p, &g).unwrap();
        assert!((w.values[(100, 100)] - FRAC_2_PI).abs() < 1e-12);
        let re = g.re_axis();
        let im = g.im_axis();
        for (i, j) in [(80, 110), (100, 37), (150, 150)] {
            let e = FRAC_2_PI * (-2.0 * (re[j] * re[j] + im[i] * im[i])).exp();
            assert!((w.values[(i, j)] - e).abs() < 1e-14);
        }
        let int = wigner_integral(&w);
        assert!((int.value - 1.0).abs() < 1e-6);
        assert!(!int.support_clipped);
    }

    #[test]
    fn half_window_integral() {
        let b = build_lattice(C64::default(), 1).unwrap();
        let p = ModelParams::new(1.0, 2.2, 0.0).unwrap();
        let g = PhaseGrid::new((0.0, 5.0), (-5.0, 5.0), 201, 401).unwrap();
        let w = wigner_field(&single(&b, b.center_index()), &b, &p, &g).unwrap();
        let int = wigner_integral(&w);
        assert!((int.value - 0.5).abs() < 1e-3);
        assert!(int.support_clipped);
    }

    #[test]
    fn expanded_state_integrates_to_one() {
        let a0 = C64::new(2.0, 0.0);
        let b = build_lattice(a0, 3).unwrap();
        let e = expand_initial(a0, &b).unwrap();
        let p = ModelParams::new(1.0, 2.2, 0.05).unwrap();
        let g = PhaseGrid::new((-6.0, 10.0), (-8.0, 8.0), 161, 161).unwrap();
        let w = wigner_field(&StateCoefficients::initial(&e), &b, &p, &g).unwrap();
        assert!((wigner_integral(&w).value - 1.0).abs() < 1e-3);
        let peaks = local_maxima(&w, 0.1);
        assert!((peaks[0].0 - a0).norm() < 0.1, "{:?}", peaks[0]);
        assert!(w.values.iter().all(|v| v.abs() <= FRAC_2_PI + 1e-9));
    }

    #[test]
    fn characteristic_basics() {
        let a0 = C64::new(1.5, -0.5);
        let b = build_lattice(a0, 3).unwrap();
        let e = expand_initial(a0, &b).unwrap();
        let p = ModelParams::new(1.0, 2.2, 0.1).unwrap();
        let s = StateCoefficients::initial(&e);
        assert!((characteristic_function(&s, &b, &p, C64::default()) - 1.0).norm() < 1e-8);
        let one = single(&b, 10);
        for &l in &[C64::new(0.3, 0.2), C64::new(-1.0, 2.0)] {
            let chi = characteristic_function(&one, &b, &p, l);
            assert!((chi.norm() - (-0.5 * l.norm_sqr()).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_of_characteristic_matches_vacuum() {
        let b = build_lattice(C64::default(), 1).unwrap();
        let p = ModelParams::new(1.0, 2.2, 0.0).unwrap();
        let chi = CharacteristicFunction::new(&single(&b, b.center_index()), &b, &p);
        let pts = [C64::default(), C64::new(0.5, -0.3)];
        let w = wigner_via_characteristic(&chi, &pts, 8.0, 0.1);
        for (z, v) in pts.iter().zip(w) {
            assert!((v - FRAC_2_PI * (-2.0 * z.norm_sqr()).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn grid_validation_and_cover() {
        assert!(PhaseGrid::new((1.0, 1.0), (0.0, 1.0), 4, 4).is_err());
        assert!(PhaseGrid::new((0.0, 1.0), (0.0, 1.0), 1, 4).is_err());
        let g = PhaseGrid::covering(&[C64::new(-1.0, 0.0), C64::new(3.0, 1.0)], 2.0, 64).unwrap();
        assert!((g.re_min + 3.0).abs() < 1e-12 && (g.re_max - 5.0).abs() < 1e-12);
        assert!((g.edge_distance(C64::new(1.0, 0.5)) - 4.0).abs() < 1e-12);
    }
}
