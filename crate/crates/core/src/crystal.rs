//! Lattice geometry, plane-wave basis, Brillouin-zone sampling, the periodic
//! ground-state potential and the exchange-correlation model.
//!
//! Units are nondimensional throughout: `hbar = m_e = 1` and the lattice
//! constant is of order one. Reciprocal vectors satisfy `a_i . b_j = 2 pi
//! delta_ij`, and cell functions are expanded as `f(z) = sum_G f(G) e^{i G.z}`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scalar::{cis, cre, czero, lit, to_f64, Cplx, Real};

/// Integer coordinates of a reciprocal-lattice vector in the `b_i` basis.
pub type Miller = [i32; 3];

/// Direct and reciprocal lattice of the unit cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec<T: Real> {
    pub a: [Vector3<T>; 3],
    pub b: [Vector3<T>; 3],
    /// `|Gamma|`
    pub cell_volume: T,
    /// `|Gamma*|`
    pub reciprocal_volume: T,
}

/// Builds the reciprocal lattice. Rejects degenerate and left-handed cells.
pub fn reciprocal_lattice<T: Real>(
    a1: Vector3<T>,
    a2: Vector3<T>,
    a3: Vector3<T>,
) -> Result<LatticeSpec<T>> {
    let det = a1.dot(&a2.cross(&a3));
    if det < lit(1e-12) {
        return Err(Error::DegenerateLattice { det: to_f64(det) });
    }
    let two_pi = T::two_pi();
    let b1 = a2.cross(&a3) * (two_pi / det);
    let b2 = a3.cross(&a1) * (two_pi / det);
    let b3 = a1.cross(&a2) * (two_pi / det);
    let reciprocal_volume = b1.dot(&b2.cross(&b3));
    Ok(LatticeSpec {
        a: [a1, a2, a3],
        b: [b1, b2, b3],
        cell_volume: det,
        reciprocal_volume,
    })
}

impl<T: Real> LatticeSpec<T> {
    pub fn cubic(a: T) -> Self {
        let z = T::zero();
        reciprocal_lattice(
            Vector3::new(a, z, z),
            Vector3::new(z, a, z),
            Vector3::new(z, z, a),
        )
        .expect("cubic lattice is nondegenerate")
    }

    /// Cartesian reciprocal vector with the given Miller indices.
    pub fn cart(&self, h: &Miller) -> Vector3<T> {
        self.b[0] * lit::<T>(h[0] as f64)
            + self.b[1] * lit::<T>(h[1] as f64)
            + self.b[2] * lit::<T>(h[2] as f64)
    }

    /// Cartesian position of fractional coordinates `(f1, f2, f3)` in the cell.
    pub fn position(&self, frac: &Vector3<T>) -> Vector3<T> {
        self.a[0] * frac[0] + self.a[1] * frac[1] + self.a[2] * frac[2]
    }

    /// `max |a_i . b_j - 2 pi delta_ij|`
    pub fn duality_error(&self) -> T {
        let mut err = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { T::two_pi() } else { T::zero() };
                err = err.max((self.a[i].dot(&self.b[j]) - target).abs());
            }
        }
        err
    }
}

/// Plane waves `e^{i G.z}` with `|G|^2 / 2 <= ecut`, in lexicographic Miller order.
#[derive(Debug, Clone)]
pub struct PlaneWaveBasis<T: Real> {
    pub ecut: T,
    pub millers: Vec<Miller>,
    pub gvecs: Vec<Vector3<T>>,
    index: HashMap<Miller, usize>,
}

pub fn build_basis<T: Real>(lat: &LatticeSpec<T>, ecut: T) -> Result<PlaneWaveBasis<T>> {
    if ecut.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidCutoff(to_f64(ecut)));
    }
    // |h_i| = |G.a_i| / 2pi <= |G| |a_i| / 2pi
    let gmax = (lit::<T>(2.0) * ecut).sqrt();
    let bound = |i: usize| -> i32 {
        let x = to_f64(gmax * lat.a[i].norm() / T::two_pi());
        x.floor() as i32 + 1
    };
    let (n0, n1, n2) = (bound(0), bound(1), bound(2));
    let mut millers = Vec::new();
    for h0 in -n0..=n0 {
        for h1 in -n1..=n1 {
            for h2 in -n2..=n2 {
                let h = [h0, h1, h2];
                let g = lat.cart(&h);
                if lit::<T>(0.5) * g.norm_squared() <= ecut {
                    millers.push(h);
                }
            }
        }
    }
    // Loop order already yields lexicographic order; keep the sort explicit.
    millers.sort_unstable();
    Ok(PlaneWaveBasis::from_millers(lat, ecut, millers))
}

impl<T: Real> PlaneWaveBasis<T> {
    fn from_millers(lat: &LatticeSpec<T>, ecut: T, millers: Vec<Miller>) -> Self {
        let gvecs = millers.iter().map(|h| lat.cart(h)).collect();
        let index = millers.iter().enumerate().map(|(i, h)| (*h, i)).collect();
        PlaneWaveBasis {
            ecut,
            millers,
            gvecs,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.millers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.millers.is_empty()
    }

    pub fn index_of(&self, h: &Miller) -> Option<usize> {
        self.index.get(h).copied()
    }

    pub fn zero_index(&self) -> usize {
        self.index[&[0, 0, 0]]
    }

    /// Largest `|h_i|` over the basis.
    pub fn max_index(&self) -> i32 {
        self.millers
            .iter()
            .flat_map(|h| h.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Position of `-G` for every `G`.
    pub fn negation_map(&self) -> Vec<usize> {
        self.millers
            .iter()
            .map(|h| self.index[&[-h[0], -h[1], -h[2]]])
            .collect()
    }

    /// For every `Q` in the basis, the pairs `(i, j)` with `G_i - G_j = Q`.
    pub fn difference_pairs(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = vec![Vec::new(); self.len()];
        for (i, hi) in self.millers.iter().enumerate() {
            for (j, hj) in self.millers.iter().enumerate() {
                let q = [hi[0] - hj[0], hi[1] - hj[1], hi[2] - hj[2]];
                if let Some(iq) = self.index_of(&q) {
                    out[iq].push((i, j));
                }
            }
        }
        out
    }
}

/// Uniform Brillouin-zone grid. Weights implement the normalized cell average.
#[derive(Debug, Clone)]
pub struct KGrid<T: Real> {
    pub dims: [usize; 3],
    pub shifted: bool,
    /// Reduced coordinates in `[-1/2, 1/2)`.
    pub fractional: Vec<Vector3<T>>,
    pub points: Vec<Vector3<T>>,
    pub weights: Vec<T>,
}

/// Builds an `n1 x n2 x n3` grid. The unshifted grid contains `k = 0`; the
/// shifted grid is offset by half a spacing and is symmetric under `k -> -k`
/// without any lattice translation.
pub fn build_kgrid<T: Real>(
    lat: &LatticeSpec<T>,
    dims: [usize; 3],
    shifted: bool,
) -> Result<KGrid<T>> {
    if dims.contains(&0) {
        return Err(Error::InvalidKGrid(dims));
    }
    let coord = |m: usize, n: usize| -> T {
        if shifted {
            (lit::<T>(m as f64) + lit(0.5)) / lit(n as f64) - lit(0.5)
        } else if 2 * m < n {
            lit::<T>(m as f64) / lit(n as f64)
        } else {
            lit::<T>(m as f64) / lit(n as f64) - T::one()
        }
    };
    let total = dims[0] * dims[1] * dims[2];
    let w = T::one() / lit(total as f64);
    let mut fractional = Vec::with_capacity(total);
    for m0 in 0..dims[0] {
        for m1 in 0..dims[1] {
            for m2 in 0..dims[2] {
                fractional.push(Vector3::new(
                    coord(m0, dims[0]),
                    coord(m1, dims[1]),
                    coord(m2, dims[2]),
                ));
            }
        }
    }
    let points = fractional
        .iter()
        .map(|f| lat.b[0] * f[0] + lat.b[1] * f[1] + lat.b[2] * f[2])
        .collect();
    Ok(KGrid {
        dims,
        shifted,
        fractional,
        points,
        weights: vec![w; total],
    })
}

impl<T: Real> KGrid<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn flat_index(&self, m: [usize; 3]) -> usize {
        (m[0] * self.dims[1] + m[1]) * self.dims[2] + m[2]
    }

    /// Periodic neighbour of point `ik` displaced by `step` grid units along axis `axis`.
    pub fn neighbor(&self, ik: usize, axis: usize, step: isize) -> usize {
        let m2 = ik % self.dims[2];
        let m1 = (ik / self.dims[2]) % self.dims[1];
        let m0 = ik / (self.dims[1] * self.dims[2]);
        let mut m = [m0, m1, m2];
        let n = self.dims[axis] as isize;
        m[axis] = ((m[axis] as isize + step).rem_euclid(n)) as usize;
        self.flat_index(m)
    }

    /// Index of the point at `-k` (modulo the reciprocal lattice).
    pub fn negated(&self, ik: usize) -> usize {
        let m2 = ik % self.dims[2];
        let m1 = (ik / self.dims[2]) % self.dims[1];
        let m0 = ik / (self.dims[1] * self.dims[2]);
        let neg = |m: usize, n: usize| -> usize {
            if self.shifted {
                n - 1 - m
            } else {
                (n - m) % n
            }
        };
        self.flat_index([
            neg(m0, self.dims[0]),
            neg(m1, self.dims[1]),
            neg(m2, self.dims[2]),
        ])
    }
}

/// Fourier coefficients of the cell-periodic ground-state potential.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeriodicPotential<T: Real> {
    pub coeffs: BTreeMap<Miller, Cplx<T>>,
}

impl<T: Real> PeriodicPotential<T> {
    pub fn coefficient(&self, h: &Miller) -> Cplx<T> {
        self.coeffs.get(h).copied().unwrap_or_else(czero)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialPreset<T: Real> {
    Empty,
    /// `v(z) = 2 V0 (cos(b1.z) + cos(b2.z) + cos(b3.z))`
    Cosine3d { amplitude: T },
    /// `v(z) = 2 V0 cos(b1.z)`: a chain modulated along the first axis only.
    Cosine1d { amplitude: T },
    FourierList(Vec<(Miller, Cplx<T>)>),
}

impl<T: Real> PotentialPreset<T> {
    pub fn from_name(name: &str, amplitude: T) -> Result<Self> {
        match name {
            "empty" => Ok(PotentialPreset::Empty),
            "cosine3d" => Ok(PotentialPreset::Cosine3d { amplitude }),
            "cosine1d" => Ok(PotentialPreset::Cosine1d { amplitude }),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

const HERMITIAN_TOL: f64 = 1e-12;

pub fn potential_from_preset<T: Real>(
    preset: &PotentialPreset<T>,
    basis: &PlaneWaveBasis<T>,
) -> Result<PeriodicPotential<T>> {
    let mut raw: BTreeMap<Miller, Cplx<T>> = BTreeMap::new();
    match preset {
        PotentialPreset::Empty => {}
        PotentialPreset::Cosine3d { amplitude } => {
            for axis in 0..3 {
                for sign in [-1, 1] {
                    let mut h = [0; 3];
                    h[axis] = sign;
                    raw.insert(h, cre(*amplitude));
                }
            }
        }
        PotentialPreset::Cosine1d { amplitude } => {
            raw.insert([1, 0, 0], cre(*amplitude));
            raw.insert([-1, 0, 0], cre(*amplitude));
        }
        PotentialPreset::FourierList(list) => {
            for (h, c) in list {
                *raw.entry(*h).or_insert_with(czero) += *c;
            }
        }
    }
    for (h, c) in &raw {
        let partner = raw
            .get(&[-h[0], -h[1], -h[2]])
            .copied()
            .unwrap_or_else(czero);
        let mismatch = (c.re - partner.re).abs() + (c.im + partner.im).abs();
        let scale = T::one().max(c.re.abs() + c.im.abs());
        if mismatch > lit::<T>(HERMITIAN_TOL) * scale {
            return Err(Error::NonHermitianPotential { g: *h });
        }
    }
    let mut coeffs = BTreeMap::new();
    for (h, c) in raw {
        if basis.index_of(&h).is_some() {
            coeffs.insert(h, c);
        } else {
            log::warn!("potential coefficient at {h:?} lies outside the plane-wave basis; dropped");
        }
    }
    Ok(PeriodicPotential { coeffs })
}

/// Adiabatic exchange-correlation model `eta(rho)`, used only through `eta'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XcModel<T: Real> {
    None,
    /// `eta(rho) = c rho^p`
    Power { c: T, p: T },
}

impl<T: Real> XcModel<T> {
    /// `eta'(rho)`.
    pub fn eta_prime(&self, rho: T) -> Result<T> {
        match *self {
            XcModel::None => Ok(T::zero()),
            XcModel::Power { c, p } => {
                if p < T::one() && rho <= lit(1e-12) {
                    return Err(Error::Xc(format!(
                        "eta' = c p rho^(p-1) with p = {} is singular at rho = {:e}",
                        to_f64(p),
                        to_f64(rho)
                    )));
                }
                if p == T::one() {
                    return Ok(c);
                }
                Ok(c * p * rho.max(T::zero()).powf(p - T::one()))
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, XcModel::None)
    }
}

/// Everything that defines the unperturbed crystal.
#[derive(Debug, Clone)]
pub struct CrystalModel<T: Real> {
    pub lattice: LatticeSpec<T>,
    pub basis: PlaneWaveBasis<T>,
    pub potential: PeriodicPotential<T>,
    /// Occupied bands (electrons per cell).
    pub occupied: usize,
    pub xc: XcModel<T>,
}

impl<T: Real> CrystalModel<T> {
    pub fn new(
        lattice: LatticeSpec<T>,
        ecut: T,
        preset: &PotentialPreset<T>,
        occupied: usize,
        xc: XcModel<T>,
    ) -> Result<Self> {
        let basis = build_basis(&lattice, ecut)?;
        let potential = potential_from_preset(preset, &basis)?;
        Ok(CrystalModel {
            lattice,
            basis,
            potential,
            occupied,
            xc,
        })
    }
}

/// Samples of a cell function on the uniform grid `z_j = sum_i (j_i / n) a_i`.
/// Flat index is `(j0 * n + j1) * n + j2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid<T: Real> {
    pub n: usize,
    pub values: Vec<Cplx<T>>,
}

impl<T: Real> CellGrid<T> {
    pub fn max_abs_imag(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.im.abs()))
    }

    pub fn max_abs_real(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.re.abs()))
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(crate::scalar::cabs(*v)))
    }

    pub fn real_parts(&self) -> Vec<T> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn fractional_point(&self, j: usize) -> Vector3<T> {
        let n = self.n;
        let inv = T::one() / lit(n as f64);
        Vector3::new(
            lit::<T>((j / (n * n)) as f64) * inv,
            lit::<T>(((j / n) % n) as f64) * inv,
            lit::<T>((j % n) as f64) * inv,
        )
    }
}

fn phase_table<T: Real>(n: usize, sign: f64) -> Vec<Cplx<T>> {
    (0..n)
        .map(|m| cis(lit::<T>(sign * std::f64::consts::TAU * m as f64 / n as f64)))
        .collect()
}

/// Synthesizes `f(z_j) = sum_G f(G) e^{i G.z_j}` on an `n^3` grid.
pub fn eval_cell_grid<'a, T, I>(coeffs: I, n: usize) -> Result<CellGrid<T>>
where
    T: Real,
    I: IntoIterator<Item = (&'a Miller, &'a Cplx<T>)>,
{
    let terms: Vec<(Miller, Cplx<T>)> = coeffs.into_iter().map(|(h, c)| (*h, *c)).collect();
    let max_index = terms
        .iter()
        .flat_map(|(h, _)| h.iter().map(|x| x.abs()))
        .max()
        .unwrap_or(0);
    let needed = 2 * max_index as usize + 1;
    if n < needed {
        return Err(Error::Aliasing {
            max_index,
            needed,
            got: n,
        });
    }
    let table = phase_table::<T>(n, 1.0);
    let ni = n as i64;
    let mut values = vec![czero(); n * n * n];
    for (j0, plane) in values.chunks_mut(n * n).enumerate() {
        for (j1, row) in plane.chunks_mut(n).enumerate() {
            for (j2, v) in row.iter_mut().enumerate() {
                let mut acc = czero();
                for (h, c) in &terms {
                    let p = (h[0] as i64 * j0 as i64
                        + h[1] as i64 * j1 as i64
                        + h[2] as i64 * j2 as i64)
                        .rem_euclid(ni) as usize;
                    acc += *c * table[p];
                }
                *v = acc;
            }
        }
    }
    Ok(CellGrid { n, values })
}

/// Projects grid samples onto the requested Fourier components:
/// `f(G) = n^-3 sum_j f(z_j) e^{-i G.z_j}`.
pub fn analyze_cell_grid<T: Real>(grid: &CellGrid<T>, millers: &[Miller]) -> Vec<Cplx<T>> {
    let n = grid.n;
    let table = phase_table::<T>(n, -1.0);
    let ni = n as i64;
    let norm = T::one() / lit((n * n * n) as f64);
    millers
        .iter()
        .map(|h| {
            let mut acc = czero();
            for (j, v) in grid.values.iter().enumerate() {
                let j0 = (j / (n * n)) as i64;
                let j1 = ((j / n) % n) as i64;
                let j2 = (j % n) as i64;
                let p = (h[0] as i64 * j0 + h[1] as i64 * j1 + h[2] as i64 * j2).rem_euclid(ni)
                    as usize;
                acc += *v * table[p];
            }
            acc * norm
        })
        .collect()
}
