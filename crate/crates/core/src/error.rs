use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Generalized norm left the `1 ± guard` band. Usually means the lattice
    /// patch is too small or the tolerances too loose.
    #[error("norm drift at t = {t_cycles} cycles: norm = {norm}, guard = {guard}")]
    NormDrift { t_cycles: f64, norm: f64, guard: f64 },

    #[error("step size underflow at t = {t}: h = {step}")]
    StepUnderflow { t: f64, step: f64 },

    #[error("photon-number cutoff too small: tail population {population:e} exceeds {tol:e}")]
    TailOverflow { population: f64, tol: f64 },

    #[error("no plateau: only {peaks} spectral peaks detected")]
    NoPlateau { peaks: usize },

    #[error("time series is not uniformly sampled: {0}")]
    NonUniformSeries(String),

    #[error("non-finite Wigner sample at ({re}, {im})")]
    NonFiniteWigner { re: f64, im: f64 },

    /// A quantity that must be real came out with a sizeable imaginary part.
    #[error("{what}: imaginary residue {residue:e} exceeds {tol:e}")]
    ImaginaryResidue { what: &'static str, residue: f64, tol: f64 },
}
