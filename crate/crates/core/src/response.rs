//! Cell-level linear response: the linearized potential operator `V`, the
//! independent-particle susceptibility `chi(omega)`, the source functions
//! `f(omega)`, `g(omega)` and the local-field solve `V (I - chi V)^-1`.
//!
//! Cell functions are stored as Fourier coefficients over the plane-wave
//! basis `G`-set. Inner products use `int_Gamma conj(a) b = |Gamma| sum conj(a_G) b_G`.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::bloch::GroundDensity;
use crate::crystal::{analyze_cell_grid, eval_cell_grid, CellGrid, PlaneWaveBasis, XcModel};
use crate::error::{Error, Result};
use crate::matrix_elements::Transitions;
use crate::scalar::{cabs, cdiv, cre, czero, lit, to_f64, Cplx, Real};
use crate::tolerances;

/// Fourier coefficients of a cell function, in basis order.
pub type CellFunction<T> = DVector<Cplx<T>>;

/// Dense matrix of a linear map on cell functions.
pub type CellOperator<T> = DMatrix<Cplx<T>>;

pub fn synthesize<T: Real>(f: &CellFunction<T>, basis: &PlaneWaveBasis<T>, n: usize) -> Result<CellGrid<T>> {
    eval_cell_grid(basis.millers.iter().zip(f.iter()), n)
}

pub fn analyze<T: Real>(grid: &CellGrid<T>, basis: &PlaneWaveBasis<T>) -> CellFunction<T> {
    DVector::from_vec(analyze_cell_grid(grid, &basis.millers))
}

/// Evaluation frequency `omega + i gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequency<T: Real> {
    pub omega: T,
    pub gamma: T,
}

impl<T: Real> Frequency<T> {
    pub fn new(omega: T, gamma: T) -> Result<Self> {
        let (w, g) = (to_f64(omega), to_f64(gamma));
        if !w.is_finite() || !g.is_finite() {
            return Err(Error::InvalidFrequency(format!("non-finite omega {w} / gamma {g}")));
        }
        if g < 0.0 {
            return Err(Error::InvalidFrequency(format!("negative broadening {g}")));
        }
        if w.abs() < tolerances::MIN_OMEGA {
            return Err(Error::InvalidFrequency(format!(
                "|omega| = {} is below {}",
                w.abs(),
                tolerances::MIN_OMEGA
            )));
        }
        Ok(Frequency { omega, gamma })
    }

    pub fn complex(&self) -> Cplx<T> {
        Cplx::new(self.omega, self.gamma)
    }

    /// Rejects an unbroadened frequency sitting on a transition.
    pub fn check_resonance(&self, transitions: &Transitions<T>, tol: f64) -> Result<()> {
        if to_f64(self.gamma) > 0.0 {
            return Ok(());
        }
        let w = to_f64(self.omega).abs();
        let nearest = transitions
            .items
            .iter()
            .map(|t| (t.k, to_f64(t.omega)))
            .min_by(|a, b| (a.1 - w).abs().total_cmp(&(b.1 - w).abs()));
        match nearest {
            Some((k, wt)) if (wt - w).abs() < tol => Err(Error::Resonance {
                omega: to_f64(self.omega),
                nearest: wt,
                k,
                tol,
            }),
            _ => Ok(()),
        }
    }
}

/// Switches used by the mutation tests of the verification suite.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ResponseOptions {
    /// Flip the sign of the `1/(omega - omega_mn)` term of every response sum.
    pub flip_second_term: bool,
}

/// Per-transition denominators `w/(z + omega_mn)` and `w/(z - omega_mn)`.
fn resolvents<T: Real>(tr: &Transitions<T>, z: Cplx<T>, opts: ResponseOptions) -> (Vec<Cplx<T>>, Vec<Cplx<T>>) {
    let sign = if opts.flip_second_term { -T::one() } else { T::one() };
    tr.items
        .iter()
        .map(|t| {
            let w = cre(t.weight);
            (cdiv(w, z + cre(t.omega)), cdiv(w * sign, z - cre(t.omega)))
        })
        .unzip()
}

fn weighted_sum<T: Real>(
    tr: &Transitions<T>,
    z: Cplx<T>,
    opts: ResponseOptions,
    elem: impl Fn(usize) -> [Cplx<T>; 3],
) -> [CellFunction<T>; 3] {
    let (plus, minus) = resolvents(tr, z, opts);
    std::array::from_fn(|a| {
        let left = DVector::from_fn(tr.len(), |t, _| -plus[t] * elem(t)[a]);
        let right = DVector::from_fn(tr.len(), |t, _| minus[t] * elem(t)[a].conj());
        &tr.rho_nm * left + &tr.rho_mn * right
    })
}

/// `f(z) = -sum avg_k u_n u_m^* X_nm / (z + omega_mn) + sum avg_k u_n^* u_m conj(X_nm) / (z - omega_mn)`.
pub fn f_hat<T: Real>(tr: &Transitions<T>, z: Cplx<T>, opts: ResponseOptions) -> [CellFunction<T>; 3] {
    weighted_sum(tr, z, opts, |t| tr.items[t].x)
}

/// As [`f_hat`] with `<u_n|i d_zeta|u_m>` in place of `X`.
pub fn g_hat<T: Real>(tr: &Transitions<T>, z: Cplx<T>, opts: ResponseOptions) -> [CellFunction<T>; 3] {
    weighted_sum(tr, z, opts, |t| tr.items[t].y)
}

/// Coefficient-wise conjugate of `f(conj z)`: the left factor of the
/// local-field brackets. Reduces to plain conjugation for real `z`.
pub fn conj_reflect<T: Real>(f: [CellFunction<T>; 3]) -> [CellFunction<T>; 3] {
    f.map(|v| v.conjugate())
}

/// `chi(z) v = -sum avg_k u_n u_m^* <n|v|m> / (z + omega_mn) + sum avg_k u_n^* u_m <m|v|n> / (z - omega_mn)`.
///
/// Matrix elements are convolution sums in Fourier space:
/// `<n|v|m> = |Gamma| sum_Q v(Q) conj(rho_nm(Q))`.
pub fn chi_apply<T: Real>(
    tr: &Transitions<T>,
    z: Cplx<T>,
    v: &CellFunction<T>,
    opts: ResponseOptions,
) -> CellFunction<T> {
    let (plus, minus) = resolvents(tr, z, opts);
    let vol = cre(tr.volume);
    let nm = tr.rho_nm.ad_mul(v);
    let mn = tr.rho_mn.ad_mul(v);
    let left = DVector::from_fn(tr.len(), |t, _| -plus[t] * nm[t] * vol);
    let right = DVector::from_fn(tr.len(), |t, _| minus[t] * mn[t] * vol);
    &tr.rho_nm * left + &tr.rho_mn * right
}

/// Dense matrix of [`chi_apply`].
pub fn chi_matrix<T: Real>(tr: &Transitions<T>, z: Cplx<T>, opts: ResponseOptions) -> CellOperator<T> {
    let (plus, minus) = resolvents(tr, z, opts);
    let vol = cre(tr.volume);
    let mut left = tr.rho_nm.clone();
    let mut right = tr.rho_mn.clone();
    for t in 0..tr.len() {
        left.column_mut(t).scale_mut_c(-plus[t] * vol);
        right.column_mut(t).scale_mut_c(minus[t] * vol);
    }
    left * tr.rho_nm.adjoint() + right * tr.rho_mn.adjoint()
}

trait ScaleC<T: Real> {
    fn scale_mut_c(&mut self, s: Cplx<T>);
}

impl<T: Real, S> ScaleC<T> for nalgebra::Matrix<Cplx<T>, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<Cplx<T>, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_c(&mut self, s: Cplx<T>) {
        for x in self.iter_mut() {
            *x *= s;
        }
    }
}

/// Periodic Poisson solve `-Lap phi = f`, `<phi> = 0`.
pub fn coulomb_solve<T: Real>(f: &CellFunction<T>, basis: &PlaneWaveBasis<T>) -> Result<CellFunction<T>> {
    let zero = basis.zero_index();
    let mean = to_f64(cabs(f[zero]));
    if mean > tolerances::NEUTRALITY {
        return Err(Error::NonNeutralSource { mean });
    }
    Ok(DVector::from_fn(basis.len(), |i, _| {
        if i == zero {
            czero()
        } else {
            f[i] / basis.gvecs[i].norm_squared()
        }
    }))
}

/// `(V f)(z) = phi(z) + eta'(rho_0(z)) f(z)`, with the product formed on the
/// real-space grid. The Coulomb part can be disabled for tests.
#[derive(Debug, Clone)]
pub struct PotentialOperator<T: Real> {
    basis: PlaneWaveBasis<T>,
    coulomb: bool,
    /// `eta'(rho_0)` on the density grid
    xc: Option<(usize, Vec<T>)>,
}

impl<T: Real> PotentialOperator<T> {
    pub fn new(
        basis: &PlaneWaveBasis<T>,
        xc: &XcModel<T>,
        density: Option<&GroundDensity<T>>,
        coulomb: bool,
    ) -> Result<Self> {
        let xc = if xc.is_none() {
            None
        } else {
            let rho = density.ok_or_else(|| Error::Xc("exchange-correlation term needs the ground density".into()))?;
            let eta = rho
                .samples()
                .into_iter()
                .map(|r| xc.eta_prime(r))
                .collect::<Result<Vec<_>>>()?;
            Some((rho.grid.n, eta))
        };
        Ok(PotentialOperator {
            basis: basis.clone(),
            coulomb,
            xc,
        })
    }

    pub fn is_zero(&self) -> bool {
        !self.coulomb && self.xc.is_none()
    }

    pub fn apply(&self, f: &CellFunction<T>) -> Result<CellFunction<T>> {
        let mut out = coulomb_solve(f, &self.basis)?;
        if !self.coulomb {
            out.fill(czero());
        }
        if let Some((n, eta)) = &self.xc {
            let mut grid = synthesize(f, &self.basis, *n)?;
            for (v, e) in grid.values.iter_mut().zip(eta) {
                *v *= *e;
            }
            out += analyze(&grid, &self.basis);
        }
        Ok(out)
    }

    /// Matrix of [`Self::apply`] on the zero-mean subspace; the `G = 0`
    /// column is zero since response densities carry no net charge.
    pub fn matrix(&self) -> Result<CellOperator<T>> {
        let n = self.basis.len();
        let zero = self.basis.zero_index();
        let mut m = DMatrix::from_element(n, n, czero());
        for j in 0..n {
            if j == zero {
                continue;
            }
            let mut e = DVector::from_element(n, czero());
            e[j] = cre(T::one());
            m.set_column(j, &self.apply(&e)?);
        }
        Ok(m)
    }
}

/// Factorized `I - chi V` at one frequency.
pub struct LocalFieldSolver<T: Real> {
    v: CellOperator<T>,
    lu: nalgebra::LU<Cplx<T>, nalgebra::Dyn, nalgebra::Dyn>,
    volume: T,
    pub condition: T,
}

impl<T: Real> LocalFieldSolver<T> {
    pub fn new(v: &CellOperator<T>, chi: &CellOperator<T>, volume: T, omega: f64) -> Result<Self> {
        let n = v.nrows();
        let k = DMatrix::identity(n, n) - chi * v;
        let sv = k.clone().singular_values();
        let smax = sv.iter().fold(T::zero(), |a, &s| a.max(s));
        let smin = sv.iter().fold(smax, |a, &s| a.min(s));
        let condition = if smin > T::zero() {
            smax / smin
        } else {
            lit(f64::INFINITY)
        };
        if to_f64(condition) > tolerances::MAX_CONDITION {
            return Err(Error::PlasmonSingular {
                omega,
                cond: to_f64(condition),
            });
        }
        Ok(LocalFieldSolver {
            v: v.clone(),
            lu: k.lu(),
            volume,
            condition,
        })
    }

    /// `V (I - chi V)^-1 b`
    pub fn apply(&self, b: &CellFunction<T>) -> CellFunction<T> {
        let x = self.lu.solve(b).expect("factorization checked by condition number");
        &self.v * x
    }

    /// `M_ab = int_Gamma a_a [V (I - chi V)^-1 b_b]`, where `a` already holds
    /// the left factor's (conjugated) coefficients.
    pub fn bracket(&self, a: &[CellFunction<T>; 3], b: &[CellFunction<T>; 3]) -> Matrix3<Cplx<T>> {
        let wb: Vec<CellFunction<T>> = b.iter().map(|x| self.apply(x)).collect();
        let vol = cre(self.volume);
        Matrix3::from_fn(|i, j| a[i].dot(&wb[j]) * vol)
    }
}

/// `< a^*_a V (I - chi V)^-1 b_b >_z`, with `a^*` passed as coefficients of
/// the conjugated function (see [`conj_reflect`]).
pub fn local_field_solve<T: Real>(
    omega: f64,
    a_conj: &[CellFunction<T>; 3],
    b: &[CellFunction<T>; 3],
    v: &CellOperator<T>,
    chi: &CellOperator<T>,
    volume: T,
) -> Result<(Matrix3<Cplx<T>>, T)> {
    let solver = LocalFieldSolver::new(v, chi, volume, omega)?;
    Ok((solver.bracket(a_conj, b), solver.condition))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{gap_check, ground_density, solve_bands, BlochSpectrum};
    use crate::crystal::{build_kgrid, CrystalModel, LatticeSpec, PotentialPreset};
    use crate::matrix_elements::interband_elements;
    use rand::{Rng, SeedableRng};

    fn model(preset: PotentialPreset<f64>, ecut: f64, xc: XcModel<f64>) -> (CrystalModel<f64>, BlochSpectrum<f64>, Transitions<f64>) {
        let m = CrystalModel::new(LatticeSpec::cubic(1.0), ecut, &preset, 1, xc).unwrap();
        let grid = build_kgrid(&m.lattice, [2, 2, 2], true).unwrap();
        let spec = solve_bands(&m, &grid, m.basis.len()).unwrap();
        let gap = gap_check(&spec, 1, 1e-8, true).unwrap().gap;
        let el = interband_elements(&spec, &m.basis, 1, gap).unwrap();
        let tr = Transitions::build(&spec, &el, &m.basis, m.lattice.cell_volume);
        (m, spec, tr)
    }

    fn random_fn(rng: &mut rand::rngs::StdRng, basis: &PlaneWaveBasis<f64>) -> CellFunction<f64> {
        let mut v = DVector::from_fn(basis.len(), |_, _| Cplx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        v[basis.zero_index()] = czero();
        v
    }

    #[test]
    fn coulomb_single_mode() {
        let basis = crate::crystal::build_basis(&LatticeSpec::cubic(1.0), 30.0).unwrap();
        let b1 = basis.index_of(&[1, 0, 0]).unwrap();
        let bm = basis.index_of(&[-1, 0, 0]).unwrap();
        let mut f = DVector::from_element(basis.len(), czero());
        f[b1] = cre(0.5);
        f[bm] = cre(0.5);
        let phi = coulomb_solve(&f, &basis).unwrap();
        let g2 = 4.0 * std::f64::consts::PI.powi(2);
        assert!((phi[b1] - cre(0.5 / g2)).norm() < 1e-15);
        assert!((phi[bm] - cre(0.5 / g2)).norm() < 1e-15);
        assert_eq!(phi.iter().filter(|x| x.norm() > 0.0).count(), 2);

        let mut one = DVector::from_element(basis.len(), czero());
        one[basis.zero_index()] = cre(1.0);
        assert!(matches!(coulomb_solve(&one, &basis), Err(Error::NonNeutralSource { .. })));
    }

    #[test]
    fn cell_function_round_trip() {
        let basis = crate::crystal::build_basis(&LatticeSpec::cubic(1.0), 60.0).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let f = random_fn(&mut rng, &basis);
        let grid = synthesize(&f, &basis, 2 * basis.max_index() as usize + 1).unwrap();
        assert!((analyze(&grid, &basis) - &f).camax() < 1e-12);
    }

    #[test]
    fn xc_constant_multiplier() {
        // empty lattice: rho_0 = Z/|Gamma| everywhere, so eta' = 2 Z/|Gamma| for c=1, p=2
        let xc = XcModel::Power { c: 1.0, p: 2.0 };
        let (m, spec, _) = model(PotentialPreset::Empty, 30.0, xc);
        let rho = ground_density(&spec, &m, 1, None).unwrap();
        let v = PotentialOperator::new(&m.basis, &xc, Some(&rho), true).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        let f = random_fn(&mut rng, &m.basis);
        let expected = coulomb_solve(&f, &m.basis).unwrap() + &f * cre(2.0);
        assert!((v.apply(&f).unwrap() - expected).camax() < 1e-12);

        let plain = PotentialOperator::new(&m.basis, &XcModel::None, None, true).unwrap();
        assert_eq!(plain.apply(&f).unwrap(), coulomb_solve(&f, &m.basis).unwrap());
        assert!(v.matrix().unwrap().iter().all(|x| x.re.is_finite()));
    }

    #[test]
    fn chi_paths_agree_and_are_linear() {
        let (m, _, tr) = model(PotentialPreset::Cosine3d { amplitude: 3.0 }, 30.0, XcModel::None);
        let z = Cplx::new(0.7, 0.05);
        let opts = ResponseOptions::default();
        let chi = chi_matrix(&tr, z, opts);
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let v1 = random_fn(&mut rng, &m.basis);
        let v2 = random_fn(&mut rng, &m.basis);
        let a = Cplx::new(0.3, -1.2);
        let b = Cplx::new(-2.0, 0.4);
        let direct = chi_apply(&tr, z, &v1, opts);
        assert!((&chi * &v1 - &direct).camax() < 1e-12 * direct.camax().max(1.0));
        let combo = chi_apply(&tr, z, &(&v1 * a + &v2 * b), opts);
        let sep = direct * a + chi_apply(&tr, z, &v2, opts) * b;
        assert!((combo - sep).camax() < 1e-12);
        // constants are annihilated
        let mut c = DVector::from_element(m.basis.len(), czero());
        c[m.basis.zero_index()] = cre(1.0);
        assert!(chi_apply(&tr, z, &c, opts).camax() < 1e-14);
    }

    #[test]
    fn g_is_minus_i_omega_f() {
        let (_, _, tr) = model(PotentialPreset::Cosine3d { amplitude: 3.0 }, 30.0, XcModel::None);
        for z in [Cplx::new(0.5, 0.05), Cplx::new(2.0, 0.0), Cplx::new(-1.3, 0.2)] {
            let f = f_hat(&tr, z, ResponseOptions::default());
            let g = g_hat(&tr, z, ResponseOptions::default());
            for a in 0..3 {
                let r: f64 = (&g[a] - &f[a] * (-Cplx::<f64>::i() * z)).camax();
                assert!(r < 1e-12, "{r}");
            }
        }
    }

    #[test]
    fn empty_lattice_sources_vanish() {
        let (_, _, tr) = model(PotentialPreset::Empty, 30.0, XcModel::None);
        let z = Cplx::new(1.0, 0.05);
        for v in f_hat(&tr, z, ResponseOptions::default())
            .iter()
            .chain(g_hat(&tr, z, ResponseOptions::default()).iter())
        {
            assert_eq!(v.camax(), 0.0);
        }
    }

    #[test]
    fn local_field_matches_dense_inverse() {
        let (m, _, tr) = model(PotentialPreset::Cosine3d { amplitude: 3.0 }, 30.0, XcModel::None);
        let z = Cplx::new(1.0, 0.05);
        let opts = ResponseOptions::default();
        let v = PotentialOperator::new(&m.basis, &XcModel::None, None, true).unwrap().matrix().unwrap();
        let chi = chi_matrix(&tr, z, opts);
        let f = f_hat(&tr, z, opts);
        let left = conj_reflect(f_hat(&tr, z.conj(), opts));
        let (lf, cond) = local_field_solve(1.0, &left, &f, &v, &chi, m.lattice.cell_volume).unwrap();
        assert!(cond >= 1.0);
        let n = v.nrows();
        let inv = (DMatrix::identity(n, n) - &chi * &v).try_inverse().unwrap();
        let w = &v * inv;
        let oracle = Matrix3::from_fn(|a, b| (left[a].transpose() * &w * &f[b])[0]);
        let rel = (lf - oracle).camax() / oracle.camax();
        assert!(rel < 1e-10, "{rel}");
        let zero_v = PotentialOperator::new(&m.basis, &XcModel::None, None, false).unwrap();
        assert!(zero_v.is_zero());
        let (lf0, _) =
            local_field_solve(1.0, &left, &f, &zero_v.matrix().unwrap(), &chi, m.lattice.cell_volume).unwrap();
        assert_eq!(lf0.camax(), 0.0);
    }

    #[test]
    fn frequency_validation() {
        let (_, _, tr) = model(PotentialPreset::Cosine3d { amplitude: 3.0 }, 30.0, XcModel::None);
        assert!(Frequency::new(1.0, -0.1).is_err());
        assert!(Frequency::new(1e-4, 0.1).is_err());
        let w0 = tr.items[0].omega;
        let f = Frequency::new(w0 + 1e-9, 0.0).unwrap();
        match f.check_resonance(&tr, 1e-6) {
            Err(Error::Resonance { nearest, .. }) => assert!((nearest - w0).abs() < 1e-6),
            other => panic!("expected resonance, got {other:?}"),
        }
        assert!(Frequency::new(w0, 0.05).unwrap().check_resonance(&tr, 1e-6).is_ok());
    }
}
