//! Interband matrix elements: velocity elements, Berry connections and the
//! sum-rule style identities they satisfy.
//!
//! For `n <= Z < m`, the Berry connection is obtained without differentiating
//! eigenvectors:
//! `X_nm = <u_n|i d_k|u_m> = <u_n|i d_zeta|u_m> / (i omega_mn)`, with
//! `<u_n|i d_zeta|u_m> = -sum_G conj(c_n(G)) G c_m(G)`.

use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;

use crate::bloch::BlochSpectrum;
use crate::crystal::{eval_cell_grid, Miller, PlaneWaveBasis};
use crate::error::{Error, Result};
use crate::scalar::{cabs, cre, czero, lit, to_f64, Cplx, Real};
use crate::tolerances;

/// `Pi^a_nm(k) = sum_G conj(c_n(G)) (G + k)^a c_m(G)` for all band pairs.
type PairColumns<T> = (Vec<Cplx<T>>, Vec<Cplx<T>>);

pub fn velocity_elements<T: Real>(
    spec: &BlochSpectrum<T>,
    basis: &PlaneWaveBasis<T>,
    ik: usize,
) -> [DMatrix<Cplx<T>>; 3] {
    let c = &spec.coeffs[ik];
    let k = spec.kpoints[ik];
    std::array::from_fn(|a| {
        let mut scaled = c.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= cre(basis.gvecs[i][a] + k[a]);
        }
        c.adjoint() * scaled
    })
}

/// `<u_n|i d_zeta|u_m>` for occupied `n` and unoccupied `m` (`Z x (nbands - Z)`).
pub fn zeta_elements<T: Real>(
    spec: &BlochSpectrum<T>,
    basis: &PlaneWaveBasis<T>,
    ik: usize,
    z: usize,
) -> [DMatrix<Cplx<T>>; 3] {
    let c = &spec.coeffs[ik];
    let occ = c.columns(0, z);
    let unocc = c.columns(z, spec.nbands - z);
    std::array::from_fn(|a| {
        let mut scaled = unocc.clone_owned();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= cre(-basis.gvecs[i][a]);
        }
        occ.adjoint() * scaled
    })
}

/// Berry connections `X^a_nm` for `n <= Z < m`, with the matching
/// `<u_n|i d_zeta|u_m>` and `omega_mn`.
#[derive(Debug, Clone)]
pub struct BerryBlock<T: Real> {
    pub x: [DMatrix<Cplx<T>>; 3],
    pub zeta: [DMatrix<Cplx<T>>; 3],
    pub omega: DMatrix<T>,
}

pub fn berry_connection<T: Real>(
    spec: &BlochSpectrum<T>,
    basis: &PlaneWaveBasis<T>,
    ik: usize,
    z: usize,
    gap: f64,
) -> Result<BerryBlock<T>> {
    let zeta = zeta_elements(spec, basis, ik, z);
    let nun = spec.nbands - z;
    let e = &spec.energies[ik];
    let omega = DMatrix::from_fn(z, nun, |n, m| e[z + m] - e[n]);
    let tiny = lit::<T>(tolerances::ZERO_OVER_ZERO);
    let mut x: [DMatrix<Cplx<T>>; 3] = std::array::from_fn(|_| DMatrix::from_element(z, nun, czero()));
    for n in 0..z {
        for m in 0..nun {
            let w = omega[(n, m)];
            if gap > 0.0 && to_f64(w) < 0.5 * gap {
                return Err(Error::GapInconsistent {
                    k: ik,
                    n,
                    m: z + m,
                    omega_mn: to_f64(w),
                    gap,
                });
            }
            let largest = (0..3).fold(T::zero(), |acc, a| acc.max(cabs(zeta[a][(n, m)])));
            if w < tiny {
                if largest < tiny {
                    continue;
                }
                return Err(Error::GapInconsistent {
                    k: ik,
                    n,
                    m: z + m,
                    omega_mn: to_f64(w),
                    gap,
                });
            }
            // X = D / (i w) = -i D / w
            for a in 0..3 {
                let d = zeta[a][(n, m)];
                x[a][(n, m)] = Cplx::new(d.im / w, -d.re / w);
            }
        }
    }
    Ok(BerryBlock { x, zeta, omega })
}

/// Interband data for all k-points.
#[derive(Debug, Clone)]
pub struct InterbandElements<T: Real> {
    pub occupied: usize,
    pub blocks: Vec<BerryBlock<T>>,
}

pub fn interband_elements<T: Real>(
    spec: &BlochSpectrum<T>,
    basis: &PlaneWaveBasis<T>,
    z: usize,
    gap: f64,
) -> Result<InterbandElements<T>> {
    let blocks = (0..spec.nk())
        .into_par_iter()
        .map(|ik| berry_connection(spec, basis, ik, z, gap))
        .collect::<Result<_>>()?;
    Ok(InterbandElements {
        occupied: z,
        blocks,
    })
}

/// One occupied-to-unoccupied transition at one k-point.
#[derive(Debug, Clone, Copy)]
pub struct Transition<T: Real> {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub weight: T,
    pub omega: T,
    /// `<u_n|i d_k|u_m>`
    pub x: [Cplx<T>; 3],
    /// `<u_n|i d_zeta|u_m>`
    pub y: [Cplx<T>; 3],
}

/// Flattened transitions with their pair densities on the basis `Q`-set:
/// column `t` of `rho_nm` is the Fourier series of `u_n u_m^*`, column `t`
/// of `rho_mn` that of `u_n^* u_m`.
#[derive(Debug, Clone)]
pub struct Transitions<T: Real> {
    pub items: Vec<Transition<T>>,
    pub rho_nm: DMatrix<Cplx<T>>,
    pub rho_mn: DMatrix<Cplx<T>>,
    pub volume: T,
    pub millers: Vec<Miller>,
}

impl<T: Real> Transitions<T> {
    pub fn build(
        spec: &BlochSpectrum<T>,
        elements: &InterbandElements<T>,
        basis: &PlaneWaveBasis<T>,
        volume: T,
    ) -> Self {
        let z = elements.occupied;
        let mut items = Vec::new();
        for (ik, block) in elements.blocks.iter().enumerate() {
            for n in 0..z {
                for m in 0..(spec.nbands - z) {
                    items.push(Transition {
                        k: ik,
                        n,
                        m: z + m,
                        weight: spec.weights[ik],
                        omega: block.omega[(n, m)],
                        x: std::array::from_fn(|a| block.x[a][(n, m)]),
                        y: std::array::from_fn(|a| block.zeta[a][(n, m)]),
                    });
                }
            }
        }
        let pairs = basis.difference_pairs();
        let nq = basis.len();
        let inv_vol = T::one() / volume;
        let columns: Vec<PairColumns<T>> = items
            .par_iter()
            .map(|t| {
                let c = &spec.coeffs[t.k];
                let cn = c.column(t.n);
                let cm = c.column(t.m);
                let mut nm = vec![czero(); nq];
                let mut mn = vec![czero(); nq];
                for (iq, list) in pairs.iter().enumerate() {
                    let mut a = czero();
                    let mut b = czero();
                    for &(i, j) in list {
                        a += cn[i] * cm[j].conj();
                        b += cm[i] * cn[j].conj();
                    }
                    nm[iq] = a * inv_vol;
                    mn[iq] = b * inv_vol;
                }
                (nm, mn)
            })
            .collect();
        let rho_nm = DMatrix::from_fn(nq, items.len(), |q, t| columns[t].0[q]);
        let rho_mn = DMatrix::from_fn(nq, items.len(), |q, t| columns[t].1[q]);
        Transitions {
            items,
            rho_nm,
            rho_mn,
            volume,
            millers: basis.millers.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn max_omega(&self) -> T {
        self.items.iter().fold(T::zero(), |a, t| a.max(t.omega))
    }

    pub fn min_omega(&self) -> T {
        self.items
            .iter()
            .fold(T::max_value().unwrap_or(lit(1e300)), |a, t| a.min(t.omega))
    }

    /// Fourier coefficients of the cell function
    /// `2 Im sum_{n<=Z<m} avg_k u_n u_m^* <u_n|i d_k^a|u_m>`.
    pub fn constraint_one(&self) -> [Vec<Cplx<T>>; 3] {
        let nq = self.millers.len();
        std::array::from_fn(|a| {
            let mut out = vec![czero::<T>(); nq];
            for (t, tr) in self.items.iter().enumerate() {
                let xa = tr.x[a] * tr.weight;
                let xc = tr.x[a].conj() * tr.weight;
                for (q, o) in out.iter_mut().enumerate() {
                    *o += self.rho_nm[(q, t)] * xa - self.rho_mn[(q, t)] * xc;
                }
            }
            // 2 Im a = -i (a - conj a)
            out.into_iter().map(|v| Cplx::new(v.im, -v.re)).collect()
        })
    }

    /// `S_ab = -2 Im sum avg_k conj(<u_n|i d_zeta^a|u_m>) <u_n|i d_k^b|u_m>`.
    pub fn sum_rule_matrix(&self) -> Matrix3<T> {
        let mut s = Matrix3::zeros();
        for tr in &self.items {
            for a in 0..3 {
                for b in 0..3 {
                    let v = tr.y[a].conj() * tr.x[b];
                    s[(a, b)] -= lit::<T>(2.0) * tr.weight * v.im;
                }
            }
        }
        s
    }

    /// `H_ab = sum avg_k conj(X^a) X^b` (Hermitian).
    pub fn berry_gram(&self) -> Matrix3<Cplx<T>> {
        let mut h = Matrix3::from_element(czero());
        for tr in &self.items {
            for a in 0..3 {
                for b in 0..3 {
                    h[(a, b)] += tr.x[a].conj() * tr.x[b] * tr.weight;
                }
            }
        }
        h
    }
}

/// Residuals of the two constraint identities.
#[derive(Debug, Clone)]
pub struct ConstraintResiduals<T: Real> {
    /// max over grid points and components of the first identity's cell function
    pub r1: T,
    /// `|S_ab - Z delta_ab|`
    pub r2: Matrix3<T>,
    pub sum_rule: Matrix3<T>,
}

pub fn constraint_residuals<T: Real>(
    transitions: &Transitions<T>,
    z: usize,
    grid_n: usize,
) -> Result<ConstraintResiduals<T>> {
    let c1 = transitions.constraint_one();
    let mut r1 = T::zero();
    for comp in &c1 {
        let grid = eval_cell_grid(transitions.millers.iter().zip(comp.iter()), grid_n)?;
        r1 = r1.max(grid.max_abs());
    }
    let s = transitions.sum_rule_matrix();
    let zf = lit::<T>(z as f64);
    let r2 = Matrix3::from_fn(|a, b| {
        let target = if a == b { zf } else { T::zero() };
        (s[(a, b)] - target).abs()
    });
    Ok(ConstraintResiduals {
        r1,
        r2,
        sum_rule: s,
    })
}
