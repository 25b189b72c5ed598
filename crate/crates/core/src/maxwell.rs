//! Effective Maxwell system for one macroscopic Fourier mode `(omega, q)`.
//!
//! Fields are `e^{i q.x}` modes, so spatial derivatives become `i q`; time
//! derivatives become `-i omega` under the one-sided transform
//! `int_0^inf e^{i omega t} dt` with vanishing initial data. The solver works
//! at the complex frequency `z = omega + i gamma` used for the coefficients.
//!
//! Unknowns are `U0` and the two transverse components of `A0` (Coulomb
//! gauge `q.A0 = 0`). The scalar equation and the transverse projection of
//! the vector equation are solved; the longitudinal projection is only
//! reported.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::permittivity::{maxwell_coefficients, CoefficientSet, Tensor};
use crate::scalar::{cabs, cre, czero, lit, to_f64, Cplx, Real};
use crate::tolerances;

pub type CVec3<T> = Vector3<Cplx<T>>;

/// `A`, `B`, `C`, `D` at one frequency; `eps = I + A`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeCoefficients<T: Real> {
    pub a: Tensor<T>,
    pub b: Tensor<T>,
    pub c: Tensor<T>,
    pub d: Tensor<T>,
}

impl<T: Real> ModeCoefficients<T> {
    pub fn vacuum() -> Self {
        let z = Matrix3::from_element(czero());
        ModeCoefficients {
            a: z,
            b: z,
            c: z,
            d: z,
        }
    }

    /// Coefficients implied by a given permittivity through `B = -i z A`, `C = -B`, `D = -i z C`.
    pub fn from_epsilon(eps: &Tensor<T>, z: Cplx<T>) -> Self {
        let a = eps - Matrix3::identity();
        let (b, c, d) = maxwell_coefficients(&a, z);
        ModeCoefficients { a, b, c, d }
    }

    pub fn from_set(set: &CoefficientSet<T>) -> Self {
        ModeCoefficients {
            a: set.a,
            b: set.b,
            c: set.c,
            d: set.d,
        }
    }

    pub fn epsilon(&self) -> Tensor<T> {
        Matrix3::identity() + self.a
    }
}

fn cvec<T: Real>(v: &Vector3<T>) -> CVec3<T> {
    v.map(cre)
}

fn i_times<T: Real>(v: &CVec3<T>) -> CVec3<T> {
    v.map(|x| Cplx::new(-x.im, x.re))
}

fn cross<T: Real>(a: &CVec3<T>, b: &CVec3<T>) -> CVec3<T> {
    Vector3::new(
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )
}

fn dot<T: Real>(a: &CVec3<T>, b: &CVec3<T>) -> Cplx<T> {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cnorm<T: Real>(v: &CVec3<T>) -> f64 {
    v.iter().map(|x| to_f64(crate::scalar::cabs2(*x))).sum::<f64>().sqrt()
}

/// Orthonormal pair spanning the plane orthogonal to `q`.
pub fn transverse_basis<T: Real>(q: &Vector3<T>) -> Result<(Vector3<T>, Vector3<T>)> {
    let n = q.norm();
    if n <= T::zero() {
        return Err(Error::ZeroWaveVector);
    }
    let qh = q / n;
    // axis least aligned with q
    let mut axis = 0;
    for i in 1..3 {
        if qh[i].abs() < qh[axis].abs() {
            axis = i;
        }
    }
    let mut e = Vector3::zeros();
    e[axis] = T::one();
    let e1 = (e - qh * qh[axis]).normalize();
    let e2 = qh.cross(&e1);
    Ok((e1, e2))
}

/// `rho = |q|^2 V`, `J = (|q|^2 - z^2) A + (-i z)(i q) V`.
pub fn external_sources<T: Real>(z: Cplx<T>, q: &Vector3<T>, v_ext: Cplx<T>, a_ext: &CVec3<T>) -> (Cplx<T>, CVec3<T>) {
    let q2 = cre(q.norm_squared());
    let rho = v_ext * q2;
    let j = a_ext * (q2 - z * z) + cvec(q) * (z * v_ext);
    (rho, j)
}

/// Removes the component of `a` along `q`.
pub fn project_transverse<T: Real>(q: &Vector3<T>, a: &CVec3<T>) -> CVec3<T> {
    let qh = cvec(&(q / q.norm()));
    a - qh * dot(&qh, a)
}

/// Left-hand sides of the scalar and vector mode equations for given potentials.
pub fn mode_operator<T: Real>(
    z: Cplx<T>,
    q: &Vector3<T>,
    coef: &ModeCoefficients<T>,
    u: Cplx<T>,
    a: &CVec3<T>,
) -> (Cplx<T>, CVec3<T>) {
    let qc = cvec(q);
    let iq = i_times(&qc);
    let eps = coef.epsilon();
    let scalar = dot(&qc, &(eps * qc)) * u - dot(&iq, &(coef.b * a));
    let minus_iz = Cplx::new(z.im, -z.re);
    let vector = a * (cre(q.norm_squared()) - z * z) + iq * (minus_iz * u) - coef.c * iq * u - coef.d * a;
    (scalar, vector)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxwellResiduals {
    /// `|i q.(eps E) - rho|`
    pub gauss: f64,
    /// `|i q.B|`
    pub div_b: f64,
    /// `|i q x E - i z B|`
    pub faraday: f64,
    /// `|i q x B + i z eps E - J|`
    pub ampere: f64,
    /// longitudinal projection of the vector potential equation
    pub longitudinal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution<T: Real> {
    pub z: Cplx<T>,
    pub q: Vector3<T>,
    pub u: Cplx<T>,
    pub a: CVec3<T>,
    pub e: CVec3<T>,
    pub b: CVec3<T>,
    pub condition: f64,
    pub residuals: MaxwellResiduals,
}

/// The 3x3 system in the unknowns `(U0, a1, a2)`, with `A0 = a1 e1 + a2 e2`.
fn mode_matrix<T: Real>(
    z: Cplx<T>,
    q: &Vector3<T>,
    coef: &ModeCoefficients<T>,
    e1: &Vector3<T>,
    e2: &Vector3<T>,
) -> Matrix3<Cplx<T>> {
    let basis = [cvec(e1), cvec(e2)];
    let mut m = Matrix3::from_element(czero());
    // column 0: unit U0; columns 1, 2: unit transverse amplitudes
    let (s, v) = mode_operator(z, q, coef, cre(T::one()), &Vector3::from_element(czero()));
    m[(0, 0)] = s;
    for (i, e) in basis.iter().enumerate() {
        m[(i + 1, 0)] = dot(e, &v);
    }
    for (j, ej) in basis.iter().enumerate() {
        let (s, v) = mode_operator(z, q, coef, czero(), ej);
        m[(0, j + 1)] = s;
        for (i, ei) in basis.iter().enumerate() {
            m[(i + 1, j + 1)] = dot(ei, &v);
        }
    }
    m
}

/// Row scaling that makes the mode matrix dimensionless.
fn normalized<T: Real>(m: &Matrix3<Cplx<T>>, z: Cplx<T>, q: &Vector3<T>) -> Matrix3<Cplx<T>> {
    let q2 = q.norm_squared();
    let scale = [q2, q2 + crate::scalar::cabs2(z), q2 + crate::scalar::cabs2(z)];
    Matrix3::from_fn(|i, j| m[(i, j)] / scale[i])
}

fn condition<T: Real>(m: &Matrix3<Cplx<T>>) -> (f64, f64) {
    let sv = m.singular_values();
    let smax = to_f64(sv.max());
    let smin = to_f64(sv.min());
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    (cond, smin)
}

pub fn solve_mode<T: Real>(
    z: Cplx<T>,
    q: &Vector3<T>,
    coef: &ModeCoefficients<T>,
    rho: Cplx<T>,
    j: &CVec3<T>,
) -> Result<FieldSolution<T>> {
    let (e1, e2) = transverse_basis(q)?;
    let m = mode_matrix(z, q, coef, &e1, &e2);
    let (cond, _) = condition(&normalized(&m, z, q));
    let q_f64 = [to_f64(q[0]), to_f64(q[1]), to_f64(q[2])];
    if cond > tolerances::MAX_CONDITION {
        return Err(Error::SingularMode {
            omega: to_f64(z.re),
            q: q_f64,
            cond,
        });
    }
    let rhs = Vector3::new(rho, dot(&cvec(&e1), j), dot(&cvec(&e2), j));
    let x = m.lu().solve(&rhs).ok_or(Error::SingularMode {
        omega: to_f64(z.re),
        q: q_f64,
        cond,
    })?;
    let u = x[0];
    let a = cvec(&e1) * x[1] + cvec(&e2) * x[2];
    let qc = cvec(q);
    let iq = i_times(&qc);
    let e = -(iq * u) + i_times(&a) * z;
    let b = cross(&iq, &a);
    let (_, lhs) = mode_operator(z, q, coef, u, &a);
    let qh = cvec(&(q / q.norm()));
    let longitudinal = to_f64(cabs(dot(&qh, &(lhs - j))));
    let mut sol = FieldSolution {
        z,
        q: *q,
        u,
        a,
        e,
        b,
        condition: cond,
        residuals: MaxwellResiduals {
            gauss: 0.0,
            div_b: 0.0,
            faraday: 0.0,
            ampere: 0.0,
            longitudinal,
        },
    };
    sol.residuals = maxwell_residual(&sol, &coef.epsilon(), rho, j);
    Ok(sol)
}

pub fn maxwell_residual<T: Real>(sol: &FieldSolution<T>, eps: &Tensor<T>, rho: Cplx<T>, j: &CVec3<T>) -> MaxwellResiduals {
    let iq = i_times(&cvec(&sol.q));
    let d = eps * sol.e;
    let iz = Cplx::new(-sol.z.im, sol.z.re);
    MaxwellResiduals {
        gauss: to_f64(cabs(dot(&iq, &d) - rho)),
        div_b: to_f64(cabs(dot(&iq, &sol.b))),
        faraday: cnorm(&(cross(&iq, &sol.e) - sol.b * iz)),
        ampere: cnorm(&(cross(&iq, &sol.b) + d * iz - j)),
        longitudinal: sol.residuals.longitudinal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionPoint {
    pub omega: f64,
    pub q: f64,
    pub sigma_min: f64,
}

/// For each frequency, the `|q|` along `direction` that minimizes the
/// smallest singular value of the normalized homogeneous mode operator.
pub fn dispersion_scan<T: Real>(
    samples: &[(Cplx<T>, ModeCoefficients<T>)],
    direction: &Vector3<T>,
    q_max: T,
    q_points: usize,
) -> Result<Vec<DispersionPoint>> {
    let n = direction.norm();
    if n <= T::zero() {
        return Err(Error::ZeroWaveVector);
    }
    let dir = direction / n;
    let step = q_max / lit(q_points as f64);
    samples
        .iter()
        .map(|(z, coef)| {
            let mut best = DispersionPoint {
                omega: to_f64(z.re),
                q: f64::NAN,
                sigma_min: f64::INFINITY,
            };
            for iq in 1..=q_points {
                let qn = step * lit(iq as f64);
                let q = dir * qn;
                let (e1, e2) = transverse_basis(&q)?;
                let m = normalized(&mode_matrix(*z, &q, coef, &e1, &e2), *z, &q);
                let (_, smin) = condition(&m);
                if smin < best.sigma_min {
                    best.sigma_min = smin;
                    best.q = to_f64(qn);
                }
            }
            Ok(best)
        })
        .collect()
}

/// JSON record of one solved mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRecord {
    pub omega: [f64; 2],
    pub q: [f64; 3],
    #[serde(rename = "U0")]
    pub u0: [f64; 2],
    #[serde(rename = "A0")]
    pub a0: [[f64; 2]; 3],
    #[serde(rename = "E")]
    pub e: [[f64; 2]; 3],
    #[serde(rename = "B")]
    pub b: [[f64; 2]; 3],
    pub condition: f64,
    pub residuals: MaxwellResiduals,
}

fn pair<T: Real>(x: Cplx<T>) -> [f64; 2] {
    [to_f64(x.re), to_f64(x.im)]
}

impl<T: Real> From<&FieldSolution<T>> for ModeRecord {
    fn from(s: &FieldSolution<T>) -> Self {
        ModeRecord {
            omega: pair(s.z),
            q: [to_f64(s.q[0]), to_f64(s.q[1]), to_f64(s.q[2])],
            u0: pair(s.u),
            a0: std::array::from_fn(|i| pair(s.a[i])),
            e: std::array::from_fn(|i| pair(s.e[i])),
            b: std::array::from_fn(|i| pair(s.b[i])),
            condition: s.condition,
            residuals: s.residuals,
        }
    }
}
