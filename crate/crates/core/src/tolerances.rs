//! Pinned numerical thresholds. Values used by the acceptance suite are
//! grouped at the bottom and must not be loosened.

/// Eigenvalues closer than this are treated as degenerate when ordering bands.
pub const DEGENERACY: f64 = 1e-10;

/// Default insulator threshold for the band gap.
pub const GAP_TOL: f64 = 1e-8;

/// Cell mean above which a source is rejected by the periodic Poisson solve.
pub const NEUTRALITY: f64 = 1e-10;

/// Velocity element and transition frequency below which `X = 0` (empty-lattice limit only).
pub const ZERO_OVER_ZERO: f64 = 1e-12;

/// Smallest admissible `|omega|`; coefficient `P^r` divides by `omega`.
pub const MIN_OMEGA: f64 = 1e-3;

/// Default distance from a transition frequency for unbroadened evaluation.
pub const RESONANCE: f64 = 1e-6;

/// Local-field and Maxwell systems with larger condition numbers are singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Default broadening `gamma`.
pub const DEFAULT_GAMMA: f64 = 0.05;

// Acceptance thresholds.

pub const VACUUM_EPS: f64 = 1e-10;
pub const SUM_RULE_REL: f64 = 0.02;
pub const SUM_RULE_OFFDIAG: f64 = 1e-8;
pub const CONSTRAINT_ONE: f64 = 1e-8;
pub const BERRY_FD_REL: f64 = 1e-4;
pub const RELATION: f64 = 1e-10;
pub const D_DUAL_PATH: f64 = 1e-8;
pub const HF_RATIO_MIN: f64 = 10.0;
pub const HF_RATIO_MAX: f64 = 22.0;
pub const PR_ANTISYMMETRY: f64 = 1e-14;
pub const PR_RELATIVE: f64 = 1e-8;
pub const LOCAL_FIELD_REL: f64 = 1e-10;
pub const KERNEL_FOURIER_REL: f64 = 1e-3;
pub const MAXWELL_VACUUM: f64 = 1e-12;
pub const MAXWELL_ROUND_TRIP: f64 = 1e-10;
pub const MAXWELL_IDENTITY: f64 = 1e-14;
pub const BLOCH_ORACLE: f64 = 1e-8;
