//! Macroscopic coefficient tensors and the dynamic permittivity
//! `eps(omega) = I + A(omega)`.

use std::io::Write;

use nalgebra::Matrix3;

use crate::error::Result;
use crate::matrix_elements::Transitions;
use crate::response::{
    chi_matrix, conj_reflect, f_hat, g_hat, CellFunction, CellOperator, Frequency, LocalFieldSolver,
    ResponseOptions,
};
use crate::scalar::{cabs, cdiv, cre, czero, format_number, lit, to_f64, Cplx, Real};
use crate::tolerances;

pub type Tensor<T> = Matrix3<Cplx<T>>;

/// The four interband tensors built from products of `X` and `<i d_zeta>`,
/// and the antisymmetric correction `P^r`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTensors<T: Real> {
    pub p_hat: Tensor<T>,
    pub p_r: Tensor<T>,
    pub r_hat: Tensor<T>,
    pub m_hat: Tensor<T>,
    pub n_hat: Tensor<T>,
}

/// `sum avg_k [conj(a^i) b^j / (z + omega_mn) - a^i conj(b^j) / (z - omega_mn)]`.
fn pair_tensor<T: Real>(
    tr: &Transitions<T>,
    z: Cplx<T>,
    a: impl Fn(usize) -> [Cplx<T>; 3],
    b: impl Fn(usize) -> [Cplx<T>; 3],
) -> Tensor<T> {
    let mut out = Matrix3::from_element(czero());
    for (t, item) in tr.items.iter().enumerate() {
        let w = cre(item.weight);
        let plus = cdiv(w, z + cre(item.omega));
        let minus = cdiv(w, z - cre(item.omega));
        let (av, bv) = (a(t), b(t));
        for i in 0..3 {
            for j in 0..3 {
                out[(i, j)] += av[i].conj() * bv[j] * plus - av[i] * bv[j].conj() * minus;
            }
        }
    }
    out
}

pub fn coefficient_tensors<T: Real>(tr: &Transitions<T>, z: Cplx<T>) -> CoefficientTensors<T> {
    let x = |t: usize| tr.items[t].x;
    let y = |t: usize| tr.items[t].y;
    // 2i Im H = H - H^T for the Hermitian H = sum conj(X^a) X^b
    let h = tr.berry_gram();
    CoefficientTensors {
        p_hat: pair_tensor(tr, z, x, x),
        p_r: (h - h.transpose()).map(|v| cdiv(v, z)),
        r_hat: pair_tensor(tr, z, x, y),
        m_hat: pair_tensor(tr, z, y, x),
        n_hat: pair_tensor(tr, z, y, y),
    }
}

/// `A = P - P^r - <f^* V (I - chi V)^-1 f>`.
pub fn assemble_a<T: Real>(tensors: &CoefficientTensors<T>, local_field: &Tensor<T>) -> Tensor<T> {
    tensors.p_hat - tensors.p_r - local_field
}

/// `B = -i omega A`, `C = -B`, `D = -i omega C`.
pub fn maxwell_coefficients<T: Real>(a: &Tensor<T>, z: Cplx<T>) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let miw = Cplx::new(z.im, -z.re);
    let b = a * miw;
    let c = -b;
    let d = c * miw;
    (b, c, d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermittivityTensor<T: Real> {
    pub frequency: Frequency<T>,
    pub eps: Tensor<T>,
}

pub fn epsilon<T: Real>(frequency: Frequency<T>, a: &Tensor<T>) -> PermittivityTensor<T> {
    PermittivityTensor {
        frequency,
        eps: Matrix3::identity() + a,
    }
}

/// Residuals of the identities linking the coefficient tensors. Each entry is
/// the largest absolute entry-wise deviation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RelationResiduals {
    /// `g = -i omega f`
    pub g_f: f64,
    /// `R = -i omega (P - P^r)`
    pub r_p: f64,
    /// `M = -R`
    pub m_r: f64,
    /// `N - Z I = -i omega M`
    pub n_m: f64,
    /// `R - <f^* W g> = -i omega A`
    pub b_a: f64,
    /// `M - <g^* W f> = -B`
    pub c_b: f64,
    /// `D = -i omega C`
    pub d_c: f64,
    /// `N - <g^* W g> - Z I` against `-i omega C`
    pub d_dual: f64,
    /// `P^r + (P^r)^T`
    pub p_r_antisymmetry: f64,
    /// `|A - (P - (2i/omega) Im H - <f^* W f>)|`
    pub a_display: f64,
}

impl RelationResiduals {
    pub fn chain_max(&self) -> f64 {
        [self.g_f, self.r_p, self.m_r, self.n_m, self.b_a, self.c_b, self.d_c]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Everything computed at one frequency.
#[derive(Debug, Clone)]
pub struct CoefficientSet<T: Real> {
    pub frequency: Frequency<T>,
    pub tensors: CoefficientTensors<T>,
    /// `<f^* W f>`, `<f^* W g>`, `<g^* W f>`, `<g^* W g>` with `W = V (I - chi V)^-1`
    pub local_ff: Tensor<T>,
    pub local_fg: Tensor<T>,
    pub local_gf: Tensor<T>,
    pub local_gg: Tensor<T>,
    pub a: Tensor<T>,
    pub b: Tensor<T>,
    pub c: Tensor<T>,
    pub d: Tensor<T>,
    pub mean_density: T,
    /// condition number of `I - chi V`
    pub condition: T,
    pub residuals: RelationResiduals,
}

impl<T: Real> CoefficientSet<T> {
    pub fn permittivity(&self) -> PermittivityTensor<T> {
        epsilon(self.frequency, &self.a)
    }
}

fn max_entry<T: Real>(m: &Tensor<T>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(to_f64(cabs(*v))))
}

fn max_diff<T: Real>(a: &[CellFunction<T>; 3], b: &[CellFunction<T>; 3]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| to_f64(cabs(*p - *q))))
        .fold(0.0, f64::max)
}

/// Transitions plus the potential operator: everything needed to evaluate
/// the coefficient set at any frequency.
#[derive(Debug, Clone)]
pub struct ResponseModel<T: Real> {
    pub transitions: Transitions<T>,
    pub potential: CellOperator<T>,
    pub occupied: usize,
    pub options: ResponseOptions,
    pub resonance_tol: f64,
}

impl<T: Real> ResponseModel<T> {
    pub fn new(transitions: Transitions<T>, potential: CellOperator<T>, occupied: usize) -> Self {
        ResponseModel {
            transitions,
            potential,
            occupied,
            options: ResponseOptions::default(),
            resonance_tol: tolerances::RESONANCE,
        }
    }

    pub fn evaluate(&self, frequency: Frequency<T>) -> Result<CoefficientSet<T>> {
        frequency.check_resonance(&self.transitions, self.resonance_tol)?;
        let tr = &self.transitions;
        let z = frequency.complex();
        let opts = self.options;
        let tensors = coefficient_tensors(tr, z);

        let f = f_hat(tr, z, opts);
        let g = g_hat(tr, z, opts);
        let f_left = conj_reflect(f_hat(tr, z.conj(), opts));
        let g_left = conj_reflect(g_hat(tr, z.conj(), opts));
        let chi = chi_matrix(tr, z, opts);
        let solver = LocalFieldSolver::new(&self.potential, &chi, tr.volume, to_f64(frequency.omega))?;
        let local_ff = solver.bracket(&f_left, &f);
        let local_fg = solver.bracket(&f_left, &g);
        let local_gf = solver.bracket(&g_left, &f);
        let local_gg = solver.bracket(&g_left, &g);

        let a = assemble_a(&tensors, &local_ff);
        let (b, c, d) = maxwell_coefficients(&a, z);

        let miw = Cplx::new(z.im, -z.re);
        let zmat = Matrix3::identity() * cre(lit::<T>(self.occupied as f64));
        let b_def = tensors.r_hat - local_fg;
        let c_def = tensors.m_hat - local_gf;
        let d_def = tensors.n_hat - local_gg - zmat;
        let h = tr.berry_gram();
        let two_i_im_h = h.map(|v| Cplx::new(T::zero(), lit::<T>(2.0) * v.im));
        let a_display = tensors.p_hat - two_i_im_h.map(|v| cdiv(v, z)) - local_ff;
        let minus_iw_f: [CellFunction<T>; 3] = std::array::from_fn(|i| &f[i] * miw);
        let residuals = RelationResiduals {
            g_f: max_diff(&g, &minus_iw_f),
            r_p: max_entry(&(tensors.r_hat - (tensors.p_hat - tensors.p_r) * miw)),
            m_r: max_entry(&(tensors.m_hat + tensors.r_hat)),
            n_m: max_entry(&(tensors.n_hat - zmat - tensors.m_hat * miw)),
            b_a: max_entry(&(b_def - a * miw)),
            c_b: max_entry(&(c_def + b_def)),
            d_c: max_entry(&(d - c * miw)),
            d_dual: max_entry(&(d_def - c * miw)),
            p_r_antisymmetry: max_entry(&(tensors.p_r + tensors.p_r.transpose())),
            a_display: max_entry(&(a - a_display)),
        };
        Ok(CoefficientSet {
            frequency,
            tensors,
            local_ff,
            local_fg,
            local_gf,
            local_gg,
            a,
            b,
            c,
            d,
            mean_density: lit(self.occupied as f64),
            condition: solver.condition,
            residuals,
        })
    }
}

const COMPONENTS: [&str; 3] = ["x", "y", "z"];

/// Writes the permittivity table: `omega_re, omega_im`, then real and
/// imaginary parts of each entry in row-major order.
pub fn write_epsilon_csv<T: Real, W: Write>(out: W, rows: &[PermittivityTensor<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["omega_re".to_string(), "omega_im".to_string()];
    for a in COMPONENTS {
        for b in COMPONENTS {
            header.push(format!("eps_{a}{b}_re"));
            header.push(format!("eps_{a}{b}_im"));
        }
    }
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![format_number(to_f64(row.frequency.omega)), format_number(to_f64(row.frequency.gamma))];
        for i in 0..3 {
            for j in 0..3 {
                rec.push(format_number(to_f64(row.eps[(i, j)].re)));
                rec.push(format_number(to_f64(row.eps[(i, j)].im)));
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(std::io::Error::other(e))
}
