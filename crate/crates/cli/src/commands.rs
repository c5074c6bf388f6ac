use std::path::Path;

use hhg_core::dynamics::{propagate_with_cutoff, two_state_propagate, Sampling, TrajectoryRecord};
use hhg_core::fock::{propagate_fock, FockTruncation};
use hhg_core::integrator::StepStats;
use hhg_core::lattice::{build_lattice, expand_initial_with_cutoff, LatticeBasis};
use hhg_core::model::evolve_label;
use hhg_core::observables::{detect_features, power_spectrum, Spectrum, SpectrumFeatures, TimeSeries};
use hhg_core::phase_space::{local_maxima, wigner_field, wigner_integral};
use hhg_core::{Branch, Error, ModelParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Complex, Propagator, RunConfig};
use crate::error::CliError;
use crate::output::{ensure_dir, num, write_json, Csv};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct Meta<'a, R: Serialize> {
    subcommand: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    results: R,
}

fn write_meta<R: Serialize>(out: &Path, subcommand: &'static str, cfg: &RunConfig, results: R) -> Result<(), CliError> {
    write_json(&out.join("meta.json"), &Meta { subcommand, version: VERSION, config: cfg, results })
}

#[derive(Serialize)]
struct RunSummary {
    max_norm_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    projection_norm: Option<f64>,
    steps: StepStats,
}

struct Run {
    record: TrajectoryRecord,
    basis: Option<LatticeBasis>,
    projection_norm: Option<f64>,
}

impl Run {
    fn summary(&self) -> RunSummary {
        RunSummary {
            max_norm_drift: self.record.max_norm_drift(),
            projection_norm: self.projection_norm,
            steps: self.record.stats,
        }
    }
}

fn trajectory(cfg: &RunConfig, params: &ModelParams, snapshots: Vec<f64>) -> Result<Run, CliError> {
    let alpha0 = cfg.alpha0();
    match cfg.propagator {
        Propagator::Lattice => {
            let basis = build_lattice(alpha0, cfg.lattice.half_size)?;
            let init = expand_initial_with_cutoff(alpha0, &basis, cfg.lattice.cutoff)?;
            let sampling = Sampling::new(cfg.samples_per_cycle).with_snapshots(snapshots);
            let record = propagate_with_cutoff(
                &init,
                &basis,
                params,
                cfg.duration_cycles,
                &cfg.integrator,
                &sampling,
                cfg.lattice.cutoff,
            )?;
            Ok(Run { record, basis: Some(basis), projection_norm: Some(init.projection_norm) })
        }
        Propagator::TwoState => {
            if !snapshots.is_empty() {
                return Err(CliError::Config("the two-state propagator keeps no lattice state to snapshot".into()));
            }
            let tr = two_state_propagate(alpha0, params, cfg.duration_cycles, &cfg.integrator, cfg.samples_per_cycle)?;
            Ok(Run { record: tr.record, basis: None, projection_norm: None })
        }
    }
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.model.params()?;
    let weight_times: Vec<f64> = match cfg.weight_samples_per_cycle {
        Some(w) => (0..=(cfg.duration_cycles * w as f64).round() as usize).map(|i| i as f64 / w as f64).collect(),
        None => Vec::new(),
    };
    let run = trajectory(cfg, &params, weight_times.clone())?;
    ensure_dir(out)?;
    let r = &run.record;
    let mut csv = Csv::new(&["t_cycles", "sigma_x", "norm", "p_plus", "p_minus"]);
    for i in 0..r.len() {
        csv.row([r.times_cycles[i], r.sigma_x[i], r.norm[i], r.p_plus[i], r.p_minus[i]]);
    }
    csv.write(&out.join("timeseries.csv"))?;
    if let Some(basis) = &run.basis {
        if !weight_times.is_empty() {
            let mut header = vec!["t_cycles".to_string()];
            for b in ["plus", "minus"] {
                header.extend(basis.indices().iter().map(|(m, n)| format!("{b}_m{m}_n{n}")));
            }
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut w = Csv::new(&header);
            for (t, s) in weight_times.iter().zip(&r.snapshots) {
                let vals = s.c_plus.iter().chain(s.c_minus.iter()).map(|c| c.norm_sqr());
                w.row(std::iter::once(*t).chain(vals));
            }
            w.write(&out.join("weights.csv"))?;
        }
    }
    write_meta(out, "simulate", cfg, run.summary())
}

#[derive(Serialize)]
struct Maximum {
    re: f64,
    im: f64,
    value: f64,
}

#[derive(Serialize)]
struct Snapshot {
    t_cycles: f64,
    file: String,
    integral: f64,
    support_clipped: bool,
    max_abs: f64,
    max_imag_residue: f64,
    label_plus: Complex,
    label_minus: Complex,
    maxima: Vec<Maximum>,
}

#[derive(Serialize)]
struct WignerResults {
    #[serde(flatten)]
    run: RunSummary,
    snapshots: Vec<Snapshot>,
}

pub fn wigner(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let grid = cfg.grid.ok_or_else(|| CliError::Config("the wigner subcommand needs `grid`".into()))?;
    if cfg.propagator != Propagator::Lattice {
        return Err(CliError::Config("the wigner subcommand needs the lattice propagator".into()));
    }
    cfg.validate_wigner_times()?;
    let params = cfg.model.params()?;
    let run = trajectory(cfg, &params, cfg.wigner_times.clone())?;
    let basis = run.basis.as_ref().expect("lattice run");
    ensure_dir(out)?;
    let mut snaps = Vec::new();
    for (&t_cycles, state) in cfg.wigner_times.iter().zip(&run.record.snapshots) {
        let field = wigner_field(state, basis, &params, &grid)?;
        let integral = wigner_integral(&field);
        if integral.support_clipped {
            eprintln!("warning=support_clipped t_cycles={} a branch centre lies near the grid edge", num(t_cycles));
        }
        let file = format!("wigner_t{}.csv", num(t_cycles));
        let mut csv = Csv::bare();
        csv.comment(&format!("wigner t_cycles={} rows follow im, columns follow re", num(t_cycles)));
        csv.labelled_row("re", grid.re_axis());
        csv.labelled_row("im", grid.im_axis());
        for i in 0..grid.n_im {
            csv.row(field.values.row(i).iter().copied());
        }
        csv.write(&out.join(&file))?;
        let label = |b| {
            let a = evolve_label(cfg.alpha0(), b, &params, state.t).alpha;
            Complex { re: a.re, im: a.im }
        };
        let top = field.values.max();
        let maxima = local_maxima(&field, 0.1 * top)
            .into_iter()
            .take(4)
            .map(|(z, v)| Maximum { re: z.re, im: z.im, value: v })
            .collect();
        snaps.push(Snapshot {
            t_cycles,
            file,
            integral: integral.value,
            support_clipped: integral.support_clipped,
            max_abs: field.values.amax(),
            max_imag_residue: field.max_imag_residue,
            label_plus: label(Branch::Plus),
            label_minus: label(Branch::Minus),
            maxima,
        });
    }
    write_meta(out, "wigner", cfg, WignerResults { run: run.summary(), snapshots: snaps })
}

#[derive(Serialize)]
struct FeaturesFile<'a> {
    window: hhg_core::observables::Window,
    mean: f64,
    order_step: f64,
    features: Option<&'a SpectrumFeatures>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

/// Result of one spectrum run, as listed in the sweep table.
pub struct SpectrumOutcome {
    pub features: Option<SpectrumFeatures>,
}

fn spectrum_of(record: &TrajectoryRecord, cfg: &RunConfig) -> Result<Spectrum, CliError> {
    // The last sample closes the final period; drop it so the series is periodic.
    let n = record.len().saturating_sub(1);
    let series = TimeSeries::new(record.times_cycles[..n].to_vec(), record.sigma_x[..n].to_vec())?;
    Ok(power_spectrum(&series, cfg.window))
}

pub fn spectrum(cfg: &RunConfig, out: &Path) -> Result<SpectrumOutcome, CliError> {
    if cfg.duration_cycles < 20.0 {
        eprintln!(
            "warning=short_duration duration_cycles={} harmonic lines are poorly resolved below 20 cycles",
            num(cfg.duration_cycles)
        );
    }
    let params = cfg.model.params()?;
    let run = trajectory(cfg, &params, Vec::new())?;
    let spec = spectrum_of(&run.record, cfg)?;
    ensure_dir(out)?;
    let mut csv = Csv::new(&["harmonic_order", "power"]);
    for (o, p) in spec.harmonic_order.iter().zip(&spec.power) {
        csv.row([*o, *p]);
    }
    csv.write(&out.join("spectrum.csv"))?;
    let (features, note) = match detect_features(&spec) {
        Ok(f) => (Some(f), None),
        Err(e @ Error::NoPlateau { .. }) => {
            eprintln!("warning=no_plateau {e}");
            (None, Some(e.to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    let file = FeaturesFile {
        window: spec.window,
        mean: spec.mean,
        order_step: spec.order_step(),
        features: features.as_ref(),
        note,
    };
    write_json(&out.join("features.json"), &file)?;
    write_meta(out, "spectrum", cfg, run.summary())?;
    Ok(SpectrumOutcome { features })
}

#[derive(Serialize)]
struct OracleReport {
    sup_abs_diff: f64,
    sup_abs_diff_p_plus: f64,
    threshold: f64,
    pass: bool,
    n_max: usize,
    max_tail_population: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    projection_norm: Option<f64>,
}

pub fn oracle_compare(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.model.params()?;
    let alpha0 = cfg.alpha0();
    let n_max = cfg.oracle.n_max.unwrap_or_else(|| FockTruncation::for_alpha(alpha0).n_max);
    let trunc = FockTruncation::new(n_max, cfg.oracle.tail_tol)?;
    let fock = propagate_fock(
        alpha0,
        &params,
        cfg.duration_cycles,
        &trunc,
        &cfg.integrator,
        &Sampling::new(cfg.samples_per_cycle),
    )?;
    let run = trajectory(cfg, &params, Vec::new())?;
    ensure_dir(out)?;
    let (lat, orc) = (&run.record, &fock.record);
    let mut csv = Csv::new(&["t_cycles", "sigma_x_lattice", "sigma_x_fock", "abs_diff"]);
    let mut sup: f64 = 0.0;
    let mut sup_p: f64 = 0.0;
    for i in 0..lat.len() {
        let d = (lat.sigma_x[i] - orc.sigma_x[i]).abs();
        sup = sup.max(d);
        sup_p = sup_p.max((lat.p_plus[i] - orc.p_plus[i]).abs());
        csv.row([lat.times_cycles[i], lat.sigma_x[i], orc.sigma_x[i], d]);
    }
    csv.write(&out.join("compare.csv"))?;
    let threshold = cfg.oracle.threshold;
    let pass = sup < threshold;
    let report = OracleReport {
        sup_abs_diff: sup,
        sup_abs_diff_p_plus: sup_p,
        threshold,
        pass,
        n_max,
        max_tail_population: fock.max_tail,
        projection_norm: run.projection_norm,
    };
    write_json(&out.join("report.json"), &report)?;
    write_meta(out, "oracle-compare", cfg, run.summary())?;
    if pass {
        Ok(())
    } else {
        Err(CliError::OracleThreshold { sup, threshold })
    }
}

/// Worker count for sweeps: `HHG_THREADS` when set, else all cores.
pub fn sweep_threads() -> Result<usize, CliError> {
    match std::env::var("HHG_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Config(format!("HHG_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn sweep(cfgs: &[RunConfig], out: &Path) -> Result<(), CliError> {
    let names: Vec<String> =
        cfgs.iter().enumerate().map(|(i, c)| c.label.clone().unwrap_or_else(|| format!("run_{i:03}"))).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(CliError::Config(format!("duplicate sweep label `{n}`")));
        }
        if n.is_empty() || n.contains(['/', '\\']) || n == "." || n == ".." {
            return Err(CliError::Config(format!("sweep label `{n}` is not a valid directory name")));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads()?)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    ensure_dir(out)?;
    let results: Vec<Result<SpectrumOutcome, CliError>> =
        pool.install(|| cfgs.par_iter().zip(&names).map(|(c, n)| spectrum(c, &out.join(n))).collect());

    let mut table = Csv::new(&[
        "run",
        "alpha0_re",
        "alpha0_im",
        "gamma",
        "omega0_ratio",
        "propagator",
        "peaks",
        "plateau_peaks",
        "plateau_db",
        "cutoff_order",
        "status",
    ]);
    let mut first_err = None;
    for ((cfg, name), res) in cfgs.iter().zip(&names).zip(results) {
        let params = cfg.model.params()?;
        let prop = match cfg.propagator {
            Propagator::Lattice => "lattice",
            Propagator::TwoState => "two_state",
        };
        let mut cells = vec![
            name.clone(),
            num(cfg.model.alpha0.re),
            num(cfg.model.alpha0.im),
            num(params.gamma().abs()),
            num(cfg.model.omega0_ratio),
            prop.to_string(),
        ];
        match res {
            Ok(SpectrumOutcome { features: Some(f) }) => {
                cells.extend([
                    f.peaks.len().to_string(),
                    f.plateau_peaks.len().to_string(),
                    num(f.plateau_db),
                    num(f.cutoff_order),
                    "ok".into(),
                ]);
            }
            Ok(SpectrumOutcome { features: None }) => {
                cells.extend(["".into(), "".into(), "".into(), "".into(), "no_plateau".into()]);
            }
            Err(e) => {
                eprintln!("{} run={name}", e.line());
                cells.extend(["".into(), "".into(), "".into(), "".into(), e.kind().into()]);
                first_err.get_or_insert(e);
            }
        }
        table.raw_row(&cells);
    }
    table.write(&out.join("features.csv"))?;
    first_err.map_or(Ok(()), Err)
}
