use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate or left-handed lattice: a1.(a2 x a3) = {det:e}")]
    DegenerateLattice { det: f64 },

    #[error("kinetic-energy cutoff must be positive, got {0}")]
    InvalidCutoff(f64),

    #[error("k-grid dimensions must be >= 1, got {0:?}")]
    InvalidKGrid([usize; 3]),

    #[error("unknown potential preset `{0}`")]
    UnknownPreset(String),

    #[error("potential is not real-valued: coefficient at {g:?} has no conjugate partner")]
    NonHermitianPotential { g: [i32; 3] },

    #[error("cell grid of size {got} aliases Fourier index {max_index}; need at least {needed}")]
    Aliasing { max_index: i32, needed: usize, got: usize },

    #[error("eigensolver failed at k-point {k}")]
    EigenFailure { k: usize },

    #[error("requested {nbands} bands but the basis has only {basis}")]
    TooManyBands { nbands: usize, basis: usize },

    #[error("need at least Z+1 = {needed} bands for the gap check, have {nbands}")]
    TooFewBands { nbands: usize, needed: usize },

    #[error("not an insulator: gap {gap:e} <= tolerance {tol:e} (valence maximum at k-point {vbm_k}, conduction minimum at k-point {cbm_k})")]
    NotInsulator { gap: f64, tol: f64, vbm_k: usize, cbm_k: usize },

    #[error("transition frequency {omega_mn:e} at k-point {k} (bands {n},{m}) is below half the gap {gap:e}")]
    GapInconsistent { k: usize, n: usize, m: usize, omega_mn: f64, gap: f64 },

    #[error("source has nonzero cell mean {mean:e}; the periodic Poisson problem has no solution")]
    NonNeutralSource { mean: f64 },

    #[error("frequency {omega} is within {tol:e} of transition frequency {nearest} (k-point {k}); add broadening")]
    Resonance { omega: f64, nearest: f64, k: usize, tol: f64 },

    #[error("invalid frequency: {0}")]
    InvalidFrequency(String),

    #[error("local-field system is plasmon-singular at omega = {omega}: condition number {cond:e}")]
    PlasmonSingular { omega: f64, cond: f64 },

    #[error("mode (omega = {omega}, q = {q:?}) lies on the dispersion surface: condition number {cond:e}")]
    SingularMode { omega: f64, q: [f64; 3], cond: f64 },

    #[error("wave vector q = 0 has no macroscopic mode")]
    ZeroWaveVector,

    #[error("kernel trace under-resolved: {0}")]
    UnderResolvedTrace(String),

    #[error("exchange-correlation model: {0}")]
    Xc(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Json(_)
            | Error::UnknownPreset(_)
            | Error::DegenerateLattice { .. }
            | Error::InvalidCutoff(_)
            | Error::InvalidKGrid(_)
            | Error::NonHermitianPotential { .. }
            | Error::InvalidFrequency(_)
            | Error::Xc(_) => 2,
            Error::NotInsulator { .. } | Error::GapInconsistent { .. } => 3,
            Error::Resonance { .. } => 4,
            Error::SingularMode { .. } | Error::ZeroWaveVector => 5,
            _ => 1,
        }
    }
}
