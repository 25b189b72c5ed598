//! Bloch Hamiltonian in the plane-wave basis, band structure, band gap and
//! ground-state density.
//!
//! Periodic Bloch functions are normalized on the cell:
//! `u_{n,k}(z) = |Gamma|^{-1/2} sum_G c_n(G) e^{i G.z}` with `sum_G |c_n(G)|^2 = 1`,
//! and `psi_{n,k} = e^{i k.x} u_{n,k}`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::crystal::{eval_cell_grid, CellGrid, CrystalModel, KGrid, LatticeSpec, Miller};
use crate::error::{Error, Result};
use crate::scalar::{cabs, cabs2, cre, czero, lit, to_f64, Cplx, Real};
use crate::tolerances;

/// `H(k)_{GG'} = |k+G|^2/2 delta_{GG'} + v(G - G')`, Hermitian by construction.
pub fn assemble_hk<T: Real>(model: &CrystalModel<T>, k: &Vector3<T>) -> DMatrix<Cplx<T>> {
    let basis = &model.basis;
    let n = basis.len();
    let half = lit::<T>(0.5);
    let mut h = DMatrix::from_element(n, n, czero());
    for i in 0..n {
        let kg = k + basis.gvecs[i];
        h[(i, i)] = cre(half * kg.norm_squared() + model.potential.coefficient(&[0, 0, 0]).re);
        for j in (i + 1)..n {
            let hi = basis.millers[i];
            let hj = basis.millers[j];
            let v = model
                .potential
                .coefficient(&[hi[0] - hj[0], hi[1] - hj[1], hi[2] - hj[2]]);
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
    }
    h
}

/// Band energies and periodic Bloch functions on a k-grid.
#[derive(Debug, Clone)]
pub struct BlochSpectrum<T: Real> {
    pub kpoints: Vec<Vector3<T>>,
    pub weights: Vec<T>,
    /// `energies[ik][n]`, ascending.
    pub energies: Vec<Vec<T>>,
    /// `coeffs[ik]` is `basis x nbands`; column `n` holds `c_n(G)`.
    pub coeffs: Vec<DMatrix<Cplx<T>>>,
    pub nbands: usize,
}

impl<T: Real> BlochSpectrum<T> {
    pub fn nk(&self) -> usize {
        self.kpoints.len()
    }

    /// `max_{n,m} |<u_n|u_m> - delta_nm|` over all k.
    pub fn orthonormality_error(&self) -> T {
        self.coeffs
            .iter()
            .map(|c| {
                let g = c.adjoint() * c;
                let mut err = T::zero();
                for i in 0..g.nrows() {
                    for j in 0..g.ncols() {
                        let target = if i == j { T::one() } else { T::zero() };
                        err = err.max(cabs(g[(i, j)] - cre(target)));
                    }
                }
                err
            })
            .fold(T::zero(), |a, b| a.max(b))
    }
}

fn fix_phase<T: Real>(col: &mut [Cplx<T>]) {
    let mut best = 0;
    let mut best_abs = T::zero();
    for (i, c) in col.iter().enumerate() {
        let a = cabs2(*c);
        if a > best_abs {
            best_abs = a;
            best = i;
        }
    }
    if best_abs > T::zero() {
        let c = col[best];
        let m = cabs(c);
        let rot = Cplx::new(c.re / m, -c.im / m);
        for x in col.iter_mut() {
            *x *= rot;
        }
        col[best] = cre(m);
    }
}

fn lexicographic<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Ordering {
    let tol = lit::<T>(1e-12);
    for (x, y) in a.iter().zip(b) {
        if (x.re - y.re).abs() > tol {
            return x.re.partial_cmp(&y.re).unwrap_or(Ordering::Equal);
        }
        if (x.im - y.im).abs() > tol {
            return x.im.partial_cmp(&y.im).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

fn diagonalize<T: Real>(
    h: DMatrix<Cplx<T>>,
    nbands: usize,
    ik: usize,
) -> Result<(Vec<T>, DMatrix<Cplx<T>>)> {
    let n = h.nrows();
    let eig = SymmetricEigen::try_new(h, T::default_epsilon(), 0)
        .ok_or(Error::EigenFailure { k: ik })?;
    let mut cols: Vec<(T, Vec<Cplx<T>>)> = (0..n)
        .map(|j| {
            let mut v: Vec<Cplx<T>> = eig.eigenvectors.column(j).iter().copied().collect();
            fix_phase(&mut v);
            (eig.eigenvalues[j], v)
        })
        .collect();
    if cols.iter().any(|(e, _)| !e.is_finite()) {
        return Err(Error::EigenFailure { k: ik });
    }
    cols.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    // Degenerate groups are ordered by their coefficient vectors.
    let deg = lit::<T>(tolerances::DEGENERACY);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && cols[end].0 - cols[end - 1].0 < deg {
            end += 1;
        }
        if end - start > 1 {
            cols[start..end].sort_by(|a, b| lexicographic(&a.1, &b.1));
        }
        start = end;
    }
    let energies = cols.iter().take(nbands).map(|c| c.0).collect();
    let mut coeffs = DMatrix::from_element(n, nbands, czero());
    for (j, (_, v)) in cols.iter().take(nbands).enumerate() {
        for (i, x) in v.iter().enumerate() {
            coeffs[(i, j)] = *x;
        }
    }
    Ok((energies, coeffs))
}

/// Diagonalizes `H(k)` at every grid point; k-points are independent and
/// solved in parallel, results kept in grid order.
pub fn solve_bands<T: Real>(
    model: &CrystalModel<T>,
    kgrid: &KGrid<T>,
    nbands: usize,
) -> Result<BlochSpectrum<T>> {
    solve_bands_at(model, &kgrid.points, &kgrid.weights, nbands)
}

pub fn solve_bands_at<T: Real>(
    model: &CrystalModel<T>,
    kpoints: &[Vector3<T>],
    weights: &[T],
    nbands: usize,
) -> Result<BlochSpectrum<T>> {
    if nbands > model.basis.len() {
        return Err(Error::TooManyBands {
            nbands,
            basis: model.basis.len(),
        });
    }
    let solved: Vec<(Vec<T>, DMatrix<Cplx<T>>)> = kpoints
        .par_iter()
        .enumerate()
        .map(|(ik, k)| diagonalize(assemble_hk(model, k), nbands, ik))
        .collect::<Result<_>>()?;
    let (energies, coeffs) = solved.into_iter().unzip();
    Ok(BlochSpectrum {
        kpoints: kpoints.to_vec(),
        weights: weights.to_vec(),
        energies,
        coeffs,
        nbands,
    })
}

/// Result of the band-insulator check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapReport {
    pub gap: f64,
    pub insulator: bool,
    pub valence_max_k: usize,
    pub conduction_min_k: usize,
}

/// `E_g = min_k E_{Z+1}(k) - max_k E_Z(k)`. Fails unless `E_g > gap_tol` or
/// `allow_metal` is set.
pub fn gap_check<T: Real>(
    spec: &BlochSpectrum<T>,
    z: usize,
    gap_tol: T,
    allow_metal: bool,
) -> Result<GapReport> {
    if z == 0 || spec.nbands < z + 1 {
        return Err(Error::TooFewBands {
            nbands: spec.nbands,
            needed: z + 1,
        });
    }
    let mut vbm = (T::min_value().unwrap_or(lit(-1e300)), 0);
    let mut cbm = (T::max_value().unwrap_or(lit(1e300)), 0);
    for (ik, e) in spec.energies.iter().enumerate() {
        if e[z - 1] > vbm.0 {
            vbm = (e[z - 1], ik);
        }
        if e[z] < cbm.0 {
            cbm = (e[z], ik);
        }
    }
    let gap = cbm.0 - vbm.0;
    let insulator = gap > gap_tol;
    if !insulator && !allow_metal {
        return Err(Error::NotInsulator {
            gap: to_f64(gap),
            tol: to_f64(gap_tol),
            vbm_k: vbm.1,
            cbm_k: cbm.1,
        });
    }
    Ok(GapReport {
        gap: to_f64(gap),
        insulator,
        valence_max_k: vbm.1,
        conduction_min_k: cbm.1,
    })
}

/// Ground-state density `rho_0(z) = sum_{n<=Z} avg_k |u_{n,k}(z)|^2`.
#[derive(Debug, Clone)]
pub struct GroundDensity<T: Real> {
    /// Fourier coefficients on the difference set of the basis.
    pub coeffs: BTreeMap<Miller, Cplx<T>>,
    pub grid: CellGrid<T>,
    /// `int_Gamma rho_0`
    pub total_charge: T,
    pub z: usize,
}

impl<T: Real> GroundDensity<T> {
    pub fn samples(&self) -> Vec<T> {
        self.grid.real_parts()
    }

    /// `int_Gamma rho_0 dz`.
    pub fn mean_density(&self) -> T {
        self.total_charge
    }
}

/// Smallest cell grid that resolves products of two cell functions against a
/// third: Fourier indices up to `4 h_max`.
pub fn default_grid_size(max_index: i32) -> usize {
    4 * max_index as usize + 2
}

pub fn ground_density<T: Real>(
    spec: &BlochSpectrum<T>,
    model: &CrystalModel<T>,
    z: usize,
    grid_n: Option<usize>,
) -> Result<GroundDensity<T>> {
    let basis = &model.basis;
    let volume = model.lattice.cell_volume;
    let mut coeffs: BTreeMap<Miller, Cplx<T>> = BTreeMap::new();
    // Pair table: Q = G_i - G_j.
    let mut diff_index: BTreeMap<Miller, usize> = BTreeMap::new();
    let n = basis.len();
    let mut table = vec![0usize; n * n];
    for i in 0..n {
        for j in 0..n {
            let hi = basis.millers[i];
            let hj = basis.millers[j];
            let q = [hi[0] - hj[0], hi[1] - hj[1], hi[2] - hj[2]];
            let len = diff_index.len();
            let idx = *diff_index.entry(q).or_insert(len);
            table[i * n + j] = idx;
        }
    }
    let mut acc = vec![czero::<T>(); diff_index.len()];
    for (ik, c) in spec.coeffs.iter().enumerate() {
        let w = spec.weights[ik];
        for band in 0..z {
            let col = c.column(band);
            for i in 0..n {
                let ci = col[i] * w;
                for j in 0..n {
                    acc[table[i * n + j]] += ci * col[j].conj();
                }
            }
        }
    }
    for (q, idx) in &diff_index {
        coeffs.insert(*q, acc[*idx] / volume);
    }
    let total_charge = coeffs[&[0, 0, 0]].re * volume;
    let grid_n = grid_n.unwrap_or_else(|| default_grid_size(basis.max_index()));
    let grid = eval_cell_grid(&coeffs, grid_n)?;
    Ok(GroundDensity {
        coeffs,
        grid,
        total_charge,
        z,
    })
}

/// JSON record for the band-structure export.
#[derive(Debug, Clone, Serialize)]
pub struct BandRecord {
    pub k: [f64; 3],
    #[serde(rename = "E")]
    pub e: Vec<f64>,
}

pub fn band_records<T: Real>(spec: &BlochSpectrum<T>) -> Vec<BandRecord> {
    spec.kpoints
        .iter()
        .zip(&spec.energies)
        .map(|(k, e)| BandRecord {
            k: [to_f64(k[0]), to_f64(k[1]), to_f64(k[2])],
            e: e.iter().map(|x| to_f64(*x)).collect(),
        })
        .collect()
}

/// Reduced coordinates of a Cartesian k-vector.
pub fn reduced_k<T: Real>(lat: &LatticeSpec<T>, k: &Vector3<T>) -> Vector3<T> {
    Vector3::new(
        lat.a[0].dot(k) / T::two_pi(),
        lat.a[1].dot(k) / T::two_pi(),
        lat.a[2].dot(k) / T::two_pi(),
    )
}
