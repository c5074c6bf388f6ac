//! Adaptive Dormand–Prince 5(4) integrator for complex state vectors with
//! dense output at prescribed sample times.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Tolerances and guards for the coefficient propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step, in optical cycles.
    pub max_step: f64,
    /// Abort when the generalized norm leaves `1 ± norm_guard`.
    pub norm_guard: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-12, max_step: 0.05, norm_guard: 1e-4 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !(ok(self.rel_tol) && ok(self.abs_tol) && ok(self.max_step) && ok(self.norm_guard)) {
            return Err(Error::InvalidParameter(format!("integrator settings must be positive and finite: {self:?}")));
        }
        Ok(())
    }
}

/// Step bookkeeping of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense output (Hairer & Wanner, DOPRI5).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// `out = y + h Σ aᵢ kᵢ`.
fn combine(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    out.copy_from_slice(y);
    for &(a, k) in terms {
        let ha = h * a;
        for (o, &ki) in out.iter_mut().zip(k) {
            *o += ki * ha;
        }
    }
}

fn check_finite(v: &[C64], t: f64) -> Result<()> {
    if v.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("state derivative at t = {t}")))
    }
}

/// Integrate `y' = f(t, y)` from `t0` to the last entry of `samples`,
/// handing the interpolated state at every sample time to `on_sample`.
///
/// `samples` must be non-decreasing and start at or after `t0`; a sample at
/// `t0` receives the initial state untouched. Returns the final state.
#[allow(clippy::too_many_arguments)]
pub fn integrate<F, S>(
    mut rhs: F,
    t0: f64,
    y0: &[C64],
    samples: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_step: f64,
    mut on_sample: S,
) -> Result<(Vec<C64>, StepStats)>
where
    F: FnMut(f64, &[C64], &mut [C64]) -> Result<()>,
    S: FnMut(f64, &[C64]) -> Result<()>,
{
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut next = 0;
    while next < samples.len() && samples[next] <= t0 {
        on_sample(samples[next], &y)?;
        next += 1;
    }
    let Some(&t_end) = samples.last() else {
        return Ok((y, stats));
    };
    if next == samples.len() {
        return Ok((y, stats));
    }

    let mut k1 = vec![C64::default(); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut k5 = k1.clone();
    let mut k6 = k1.clone();
    let mut k7 = k1.clone();
    let mut tmp = k1.clone();
    let mut y_new = k1.clone();
    let mut dense = vec![[C64::default(); 5]; n];
    let mut interp = k1.clone();

    rhs(t, &y, &mut k1)?;
    stats.rhs_evals += 1;
    check_finite(&k1, t)?;

    let err_norm = |a: &[C64], b: &[C64], e: &[C64]| -> f64 {
        let s: f64 = a
            .iter()
            .zip(b)
            .zip(e)
            .map(|((&ya, &yb), &ei)| {
                let sc = abs_tol + rel_tol * ya.norm().max(yb.norm());
                (ei.norm() / sc).powi(2)
            })
            .sum();
        (s / n.max(1) as f64).sqrt()
    };

    // Initial step guess (Hairer, Nørsett & Wanner II.4).
    let mut h = {
        let d0 = err_norm(&y, &y, &y);
        let d1 = err_norm(&y, &y, &k1);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(max_step).min(t_end - t);
        combine(&mut tmp, &y, h0, &[(1.0, &k1)]);
        rhs(t + h0, &tmp, &mut k2)?;
        stats.rhs_evals += 1;
        for i in 0..n {
            k3[i] = (k2[i] - k1[i]) / h0;
        }
        let d2 = err_norm(&y, &y, &k3);
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(max_step)
    };

    let mut err_prev: f64 = 1e-4;
    let mut last_rejected = false;
    loop {
        let remaining = t_end - t;
        if remaining <= 0.0 {
            break;
        }
        if h >= remaining || h * 1.01 >= remaining {
            h = remaining;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, step: h });
        }

        combine(&mut tmp, &y, h, &[(A21, &k1)]);
        rhs(t + C2 * h, &tmp, &mut k2)?;
        combine(&mut tmp, &y, h, &[(A31, &k1), (A32, &k2)]);
        rhs(t + C3 * h, &tmp, &mut k3)?;
        combine(&mut tmp, &y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        rhs(t + C4 * h, &tmp, &mut k4)?;
        combine(&mut tmp, &y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        rhs(t + C5 * h, &tmp, &mut k5)?;
        combine(&mut tmp, &y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        rhs(t + h, &tmp, &mut k6)?;
        combine(&mut y_new, &y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t_new = if h == remaining { t_end } else { t + h };
        rhs(t_new, &y_new, &mut k7)?;
        stats.rhs_evals += 6;
        check_finite(&k7, t_new)?;

        for i in 0..n {
            tmp[i] = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        }
        let err = err_norm(&y, &y_new, &tmp);
        if !err.is_finite() {
            return Err(Error::NonFinite(format!("error estimate at t = {t}")));
        }

        if err <= 1.0 {
            stats.accepted += 1;
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = k1[i] * h - ydiff;
                dense[i] = [
                    y[i],
                    ydiff,
                    bspl,
                    ydiff - k7[i] * h - bspl,
                    (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h,
                ];
            }
            while next < samples.len() && samples[next] <= t_new {
                let s = samples[next];
                if s == t_new {
                    on_sample(s, &y_new)?;
                } else {
                    let th = (s - t) / h;
                    let th1 = 1.0 - th;
                    for (o, r) in interp.iter_mut().zip(&dense) {
                        *o = r[0] + (r[1] + (r[2] + (r[3] + r[4] * th1) * th) * th1) * th;
                    }
                    on_sample(s, &interp)?;
                }
                next += 1;
            }
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;

            let err_c = err.max(1e-10);
            let mut fac = 0.9 * err_c.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(max_step);
            err_prev = err_c;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            last_rejected = true;
        }
    }
    Ok((y, stats))
}
