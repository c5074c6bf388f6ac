//! Finite patch of the von Neumann lattice, its overlap matrices and the
//! expansion of the initial coherent state.

use std::f64::consts::PI;

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::model::{coherent_overlap, conj_product_phase, cross_displacement, cross_phase, evolve_label};
use crate::{Branch, Error, ModelParams, Result, C64};

/// Default relative singular-value cutoff for the pseudo-inverse.
pub const DEFAULT_CUTOFF: f64 = 1e-12;

/// Largest supported half-size.
pub const MAX_HALF_SIZE: usize = 10;

/// Lattice spacing √π.
pub fn spacing() -> f64 {
    PI.sqrt()
}

/// A `(2N+1)²` block of lattice points `(m + i n)√π` around `(m₀, n₀)`.
///
/// Points are stored row by row, starting at the top-left corner
/// `(m₀−N, n₀+N)` and running left to right, then downwards.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeBasis {
    pub half_size: usize,
    pub center_indices: (i64, i64),
    pub points: Vec<C64>,
    indices: Vec<(i64, i64)>,
}

impl LatticeBasis {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Side length `2N + 1`.
    pub fn side(&self) -> usize {
        2 * self.half_size + 1
    }

    /// Integer lattice indices `(m, n)` of point `k`.
    pub fn indices(&self) -> &[(i64, i64)] {
        &self.indices
    }

    pub fn index_of(&self, m: i64, n: i64) -> Option<usize> {
        let (m0, n0) = self.center_indices;
        let h = self.half_size as i64;
        let (dm, dn) = (m - m0, n0 - n);
        if dm.abs() > h || dn.abs() > h {
            return None;
        }
        Some(((dn + h) * (2 * h + 1) + dm + h) as usize)
    }

    pub fn center_index(&self) -> usize {
        let (m0, n0) = self.center_indices;
        self.index_of(m0, n0).expect("center lies in the lattice")
    }

    pub fn center(&self) -> C64 {
        let (m0, n0) = self.center_indices;
        spacing() * C64::new(m0 as f64, n0 as f64)
    }

    /// Offsets `αₖ − center`, exact multiples of √π.
    pub fn offsets(&self) -> Vec<C64> {
        let (m0, n0) = self.center_indices;
        self.indices.iter().map(|&(m, n)| spacing() * C64::new((m - m0) as f64, (n - n0) as f64)).collect()
    }

    /// Indices of the outermost ring of points.
    pub fn edge_indices(&self) -> Vec<usize> {
        let (m0, n0) = self.center_indices;
        let h = self.half_size as i64;
        self.indices
            .iter()
            .enumerate()
            .filter(|(_, &(m, n))| (m - m0).abs() == h || (n - n0).abs() == h)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Nearest integer, ties toward the smaller one.
fn nearest_index(x: f64) -> i64 {
    (x - 0.5).ceil() as i64
}

/// Lattice of half-size `N` centred on the lattice point nearest `alpha0`.
pub fn build_lattice(alpha0: C64, half_size: usize) -> Result<LatticeBasis> {
    if !(1..=MAX_HALF_SIZE).contains(&half_size) {
        return Err(Error::InvalidParameter(format!(
            "lattice half-size must be in 1..={MAX_HALF_SIZE}, got {half_size}"
        )));
    }
    if !(alpha0.re.is_finite() && alpha0.im.is_finite()) {
        return Err(Error::NonFinite("initial coherent label".into()));
    }
    let s = spacing();
    let m0 = nearest_index(alpha0.re / s);
    let n0 = nearest_index(alpha0.im / s);
    let h = half_size as i64;
    let mut points = Vec::with_capacity((2 * half_size + 1).pow(2));
    let mut indices = Vec::with_capacity(points.capacity());
    for n in (n0 - h..=n0 + h).rev() {
        for m in m0 - h..=m0 + h {
            indices.push((m, n));
            points.push(s * C64::new(m as f64, n as f64));
        }
    }
    Ok(LatticeBasis { half_size, center_indices: (m0, n0), points, indices })
}

/// Time-dependent overlap matrices are plain dense complex matrices.
pub type OverlapMatrix = DMatrix<C64>;

/// The four branch-resolved overlap matrices at a common time.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSet {
    pub t: f64,
    pub pp: OverlapMatrix,
    pub mm: OverlapMatrix,
    pub pm: OverlapMatrix,
    pub mp: OverlapMatrix,
}

impl OverlapSet {
    pub fn diagonal(&self, branch: Branch) -> &OverlapMatrix {
        match branch {
            Branch::Plus => &self.pp,
            Branch::Minus => &self.mm,
        }
    }
}

/// Static overlap `⟨αⱼ|αₖ⟩` on the lattice, which is real:
/// `(−1)^{mⱼnₖ − nⱼmₖ} exp(−π|Δ|²/2)` with `Δ` in index units.
pub fn static_overlap_real(basis: &LatticeBasis) -> DMatrix<f64> {
    let idx = basis.indices();
    let k = idx.len();
    DMatrix::from_fn(k, k, |i, j| {
        let (mi, ni) = idx[i];
        let (mj, nj) = idx[j];
        let (dm, dn) = ((mi - mj) as f64, (ni - nj) as f64);
        let mag = (-0.5 * PI * (dm * dm + dn * dn)).exp();
        if (mi * nj - ni * mj).rem_euclid(2) == 0 {
            mag
        } else {
            -mag
        }
    })
}

pub fn static_overlap(basis: &LatticeBasis) -> OverlapMatrix {
    static_overlap_real(basis).map(|x| C64::new(x, 0.0))
}

/// SVD pseudo-inverse dropping singular values below `cutoff·σ_max`.
pub fn regularized_inverse<T>(m: &DMatrix<T>, cutoff: f64) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64>,
{
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(Error::InvalidParameter(format!("pseudo-inverse cutoff must be in (0, 1), got {cutoff}")));
    }
    if !m.is_square() {
        return Err(Error::InvalidParameter(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    if m.iter().any(|x| !(x.clone().real().is_finite() && x.clone().imaginary().is_finite())) {
        return Err(Error::NonFinite("overlap matrix".into()));
    }
    if m.is_empty() {
        return Ok(m.clone());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    svd.pseudo_inverse(cutoff * smax).map_err(|e| Error::InvalidParameter(format!("pseudo-inverse failed: {e}")))
}

/// Lattice coefficients of both branches.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionCoefficients {
    pub c_plus: DVector<C64>,
    pub c_minus: DVector<C64>,
    /// Norm of the projection of `|α₀⟩` onto the span of the lattice patch,
    /// before renormalization. Below 1 when `α₀` is off-lattice.
    pub projection_norm: f64,
}

/// `⟨αₖ|α₀⟩` for every lattice point, computed from offsets to the lattice
/// centre so the phase survives at very large labels.
pub fn initial_projection(alpha0: C64, basis: &LatticeBasis) -> DVector<C64> {
    let c = basis.center();
    let x0 = alpha0 - c;
    let global = conj_product_phase(c, x0);
    let (m0, n0) = basis.center_indices;
    let offsets = basis.offsets();
    DVector::from_iterator(
        basis.len(),
        basis.indices().iter().zip(&offsets).map(|(&(m, n), &x)| {
            let (p, q) = (m - m0, n - n0);
            let parity = if (m0 * q - n0 * p).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let arg = global + conj_product_phase(x, x0);
            parity * C64::from_polar((-0.5 * (x - x0).norm_sqr()).exp(), arg)
        }),
    )
}

/// Expansion of `|g⟩|α₀⟩ = (|+⟩ + |−⟩)|α₀⟩/√2` with the default cutoff.
pub fn expand_initial(alpha0: C64, basis: &LatticeBasis) -> Result<ExpansionCoefficients> {
    expand_initial_with_cutoff(alpha0, basis, DEFAULT_CUTOFF)
}

/// As [`expand_initial`], with an explicit pseudo-inverse cutoff.
///
/// The lattice patch cannot represent an off-lattice coherent state exactly,
/// so the projection is rescaled to unit generalized norm and the original
/// projection norm is reported.
pub fn expand_initial_with_cutoff(alpha0: C64, basis: &LatticeBasis, cutoff: f64) -> Result<ExpansionCoefficients> {
    let pinv = regularized_inverse(&static_overlap_real(basis), cutoff)?;
    let v = initial_projection(alpha0, basis);
    let c = complex_matvec(&pinv, &v);
    let norm_sq = v.dotc(&c).re;
    if !(norm_sq.is_finite() && norm_sq > 0.0) {
        return Err(Error::NonFinite("initial projection".into()));
    }
    let projection_norm = norm_sq.sqrt();
    let c = c * C64::new(1.0 / (2.0f64.sqrt() * projection_norm), 0.0);
    Ok(ExpansionCoefficients { c_plus: c.clone(), c_minus: c, projection_norm })
}

/// Real matrix times complex vector.
pub(crate) fn complex_matvec(m: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    let re = m * v.map(|z| z.re);
    let im = m * v.map(|z| z.im);
    re.zip_map(&im, C64::new)
}

/// Overlap matrices at time `t` from the closed form.
///
/// The same-branch matrices do not depend on time (both states evolve under
/// one unitary) and equal the static matrix. The cross matrices are
/// `⟨αⱼ|D(ζ)|αₘ⟩` with `ζ` from [`cross_displacement`], evaluated in offsets
/// from the lattice centre.
pub fn dynamic_overlaps(basis: &LatticeBasis, params: &ModelParams, t: f64) -> OverlapSet {
    let stat = static_overlap_real(basis);
    let zeta = cross_displacement(params, t);
    let pm = cross_overlap(basis, &stat, zeta);
    let mp = pm.adjoint();
    let s = stat.map(|x| C64::new(x, 0.0));
    OverlapSet { t, pp: s.clone(), mm: s, pm, mp }
}

/// `⟨αⱼ|D(ζ)|αₘ⟩ = e^{2i Im(ζc*)} e^{−|ζ|²/2} e^{ζxⱼ*} Sⱼₘ e^{−ζ*xₘ}`.
pub(crate) fn cross_overlap(basis: &LatticeBasis, stat: &DMatrix<f64>, zeta: C64) -> OverlapMatrix {
    let x = basis.offsets();
    let global = C64::from_polar(1.0, cross_phase(basis.center(), zeta));
    let shift = -0.5 * zeta.norm_sqr();
    DMatrix::from_fn(x.len(), x.len(), |j, m| {
        let e = zeta * x[j].conj() - zeta.conj() * x[m] + shift;
        global * stat[(j, m)] * e.exp()
    })
}

/// Reference route: overlaps from individually evolved labels and phases,
/// `⟨αⱼₐ(t)|αₘᵦ(t)⟩ e^{i(δᵦₘ − δₐⱼ)}`. Loses phase accuracy as `|α|²ε`,
/// so only meaningful at moderate labels.
pub fn dynamic_overlaps_from_labels(basis: &LatticeBasis, params: &ModelParams, t: f64) -> OverlapSet {
    let labels = |b: Branch| -> Vec<_> { basis.points.iter().map(|&a| evolve_label(a, b, params, t)).collect() };
    let plus = labels(Branch::Plus);
    let minus = labels(Branch::Minus);
    let block = |a: &[crate::BranchLabel], b: &[crate::BranchLabel]| {
        DMatrix::from_fn(a.len(), b.len(), |j, m| {
            coherent_overlap(a[j].alpha, b[m].alpha) * C64::from_polar(1.0, b[m].delta - a[j].delta)
        })
    };
    OverlapSet {
        t,
        pp: block(&plus, &plus),
        mm: block(&minus, &minus),
        pm: block(&plus, &minus),
        mp: block(&minus, &plus),
    }
}

/// `‖|α₀⟩ − Σₖ √2 cₖ⁺ |αₖ⟩‖` for a `c⁺` vector from [`expand_initial`].
pub fn reconstruction_residual(alpha0: C64, basis: &LatticeBasis, c_plus: &DVector<C64>) -> f64 {
    let v = initial_projection(alpha0, basis);
    let c = c_plus * C64::new(2.0f64.sqrt(), 0.0);
    let s = static_overlap_real(basis);
    let gram = c.dotc(&complex_matvec(&s, &c)).re;
    let cross = v.dotc(&c).re;
    (1.0 - 2.0 * cross + gram).max(0.0).sqrt()
}
