//! Dipole expectation, branch probabilities, power spectra and harmonic
//! feature extraction.

use std::f64::consts::TAU;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::{quadratic_form, StateCoefficients};
use crate::lattice::OverlapSet;
use crate::{Branch, Error, Result, C64};

/// `P± = (c±)†𝒩^{±±}c±`.
pub fn branch_probability(state: &StateCoefficients, overlaps: &OverlapSet, branch: Branch) -> Result<f64> {
    quadratic_form(state.branch(branch), overlaps.diagonal(branch), "branch probability")
}

/// `⟨σx⟩ = P₊ − P₋`.
pub fn sigma_x_expectation(state: &StateCoefficients, overlaps: &OverlapSet) -> Result<f64> {
    Ok(branch_probability(state, overlaps, Branch::Plus)? - branch_probability(state, overlaps, Branch::Minus)?)
}

/// Real samples on a uniform time grid, in optical cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::NonUniformSeries(format!("{} times but {} values", times.len(), values.len())));
        }
        if times.len() < 2 {
            return Err(Error::NonUniformSeries("need at least 2 samples".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("time-series value at index {i}")));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if dt.is_nan() || dt <= 0.0 {
            return Err(Error::NonUniformSeries("times must increase".into()));
        }
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(Error::NonUniformSeries(format!("step {i} is {} instead of {dt}", w[1] - w[0])));
            }
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample spacing in cycles.
    pub fn dt(&self) -> f64 {
        (self.times[self.len() - 1] - self.times[0]) / (self.len() - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    None,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            Window::Hann => (0..n).map(|i| 0.5 * (1.0 - (TAU * i as f64 / n as f64).cos())).collect(),
        }
    }
}

/// One-sided power spectrum on a harmonic-order axis.
///
/// `power[k] = cₖ|Xₖ|²/M` with `cₖ = 2` except at DC and Nyquist, so the
/// powers sum to the energy of the windowed, mean-subtracted series. Entry
/// 0 is the DC bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub harmonic_order: Vec<f64>,
    pub power: Vec<f64>,
    pub window: Window,
    /// Mean removed before the transform.
    pub mean: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    /// Spacing of the order axis.
    pub fn order_step(&self) -> f64 {
        if self.len() > 1 {
            self.harmonic_order[1]
        } else {
            f64::INFINITY
        }
    }
}

/// Mean-subtracted, windowed copy of the series.
pub fn windowed_series(series: &TimeSeries, window: Window) -> (Vec<f64>, f64) {
    let v = series.values();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let w = window.coefficients(v.len());
    (v.iter().zip(&w).map(|(x, w)| (x - mean) * w).collect(), mean)
}

pub fn power_spectrum(series: &TimeSeries, window: Window) -> Spectrum {
    let (x, mean) = windowed_series(series, window);
    let m = x.len();
    let mut buf: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2;
    let span = m as f64 * series.dt();
    let mut harmonic_order = Vec::with_capacity(half + 1);
    let mut power = Vec::with_capacity(half + 1);
    for (k, z) in buf.iter().take(half + 1).enumerate() {
        let edge = k == 0 || (m % 2 == 0 && k == half);
        let c = if edge { 1.0 } else { 2.0 };
        harmonic_order.push(k as f64 / span);
        power.push(c * z.norm_sqr() / m as f64);
    }
    Spectrum { harmonic_order, power, window, mean }
}

/// A detected harmonic peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub order: f64,
    pub power: f64,
    /// Level relative to the strongest non-DC bin.
    pub db: f64,
}

/// Peak list, plateau level and cutoff of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFeatures {
    pub peaks: Vec<Peak>,
    pub plateau_peaks: Vec<Peak>,
    pub plateau_db: f64,
    pub cutoff_order: f64,
    pub criteria: FeatureCriteria,
}

/// Conventions used by [`detect_features`], echoed into outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureCriteria {
    /// Required rise of a peak above both edges of its order window.
    pub prominence_db: f64,
    /// Peaks further than this below the strongest bin are ignored.
    pub floor_db: f64,
    /// Cutoff: highest peak within this distance of the plateau level.
    pub cutoff_drop_db: f64,
    /// First order counted in the plateau.
    pub plateau_start: f64,
}

impl Default for FeatureCriteria {
    fn default() -> Self {
        Self { prominence_db: 6.0, floor_db: 100.0, cutoff_drop_db: 10.0, plateau_start: 2.0 }
    }
}

pub fn detect_features(spec: &Spectrum) -> Result<SpectrumFeatures> {
    detect_features_with(spec, FeatureCriteria::default())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Peaks are searched one per harmonic window `(h − ½, h + ½]`, `h ≥ 1`:
/// the strongest bin there counts if it is a strict local maximum, rises
/// `prominence_db` above both window edges and lies within `floor_db` of
/// the strongest bin. The plateau level is the median peak level over
/// orders `[plateau_start, last peak]`; the cutoff is the highest peak
/// within `cutoff_drop_db` of it.
pub fn detect_features_with(spec: &Spectrum, criteria: FeatureCriteria) -> Result<SpectrumFeatures> {
    if spec.is_empty() {
        return Err(Error::InvalidParameter("empty spectrum".into()));
    }
    let n = spec.len();
    let top = spec.power.iter().skip(1).copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Err(Error::NoPlateau { peaks: 0 });
    }
    let db = |p: f64| 10.0 * (p / top).max(1e-300).log10();
    let step = spec.order_step();
    let max_order = spec.harmonic_order[n - 1];
    let mut peaks = Vec::new();
    let mut h = 1.0;
    while h - 0.5 < max_order {
        let lo = ((h - 0.5) / step).floor() as usize + 1;
        let hi = (((h + 0.5) / step).floor() as usize).min(n - 1);
        if lo + 2 <= hi {
            let k = (lo..=hi).max_by(|&a, &b| spec.power[a].total_cmp(&spec.power[b])).unwrap();
            let p = spec.power[k];
            let strict = k > 0 && k + 1 < n && p > spec.power[k - 1] && p > spec.power[k + 1];
            let edge = spec.power[lo].max(spec.power[hi]);
            if strict && db(p) - db(edge) >= criteria.prominence_db && db(p) >= -criteria.floor_db {
                peaks.push(Peak { order: spec.harmonic_order[k], power: p, db: db(p) });
            }
        }
        h += 1.0;
    }
    if peaks.len() < 3 {
        return Err(Error::NoPlateau { peaks: peaks.len() });
    }
    let last = peaks.last().unwrap().order;
    let in_range: Vec<f64> =
        peaks.iter().filter(|p| p.order >= criteria.plateau_start && p.order <= last).map(|p| p.db).collect();
    if in_range.is_empty() {
        return Err(Error::NoPlateau { peaks: peaks.len() });
    }
    let plateau_db = median(in_range);
    let threshold = plateau_db - criteria.cutoff_drop_db;
    let cutoff_order = peaks.iter().filter(|p| p.db >= threshold).map(|p| p.order).fold(f64::NAN, f64::max);
    let plateau_peaks = peaks
        .iter()
        .filter(|p| p.order >= criteria.plateau_start && p.order <= cutoff_order && p.db >= threshold)
        .copied()
        .collect();
    Ok(SpectrumFeatures { peaks, plateau_peaks, plateau_db, cutoff_order, criteria })
}
