//! Independent reference computations for the response pipeline.

use dielectric_core::bloch::{gap_check, solve_bands, solve_bands_at, BlochSpectrum};
use dielectric_core::crystal::{build_kgrid, CrystalModel, LatticeSpec, PotentialPreset, XcModel};
use dielectric_core::matrix_elements::{interband_elements, Transitions};
use dielectric_core::permittivity::coefficient_tensors;
use dielectric_core::response::{chi_matrix, coulomb_solve, f_hat, synthesize, Frequency, ResponseOptions};
use dielectric_core::Complex64 as C;
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};

const TAU: f64 = std::f64::consts::TAU;

struct Setup {
    model: CrystalModel<f64>,
    spec: BlochSpectrum<f64>,
    tr: Transitions<f64>,
}

fn setup(preset: PotentialPreset<f64>, ecut: f64, n: usize) -> Setup {
    let model = CrystalModel::new(LatticeSpec::cubic(1.0), ecut, &preset, 1, XcModel::None).unwrap();
    let grid = build_kgrid(&model.lattice, [n; 3], true).unwrap();
    let spec = solve_bands(&model, &grid, model.basis.len()).unwrap();
    let gap = gap_check(&spec, 1, 1e-8, true).unwrap().gap;
    let el = interband_elements(&spec, &model.basis, 1, gap).unwrap();
    let tr = Transitions::build(&spec, &el, &model.basis, model.lattice.cell_volume);
    Setup { model, spec, tr }
}

/// Plane-wave Hamiltonian assembled directly from the potential coefficients.
fn hamiltonian(model: &CrystalModel<f64>, k: &Vector3<f64>) -> DMatrix<C> {
    let b = &model.basis;
    DMatrix::from_fn(b.len(), b.len(), |i, j| {
        let d = [
            b.millers[i][0] - b.millers[j][0],
            b.millers[i][1] - b.millers[j][1],
            b.millers[i][2] - b.millers[j][2],
        ];
        let v = model.potential.coefficient(&d);
        if i == j {
            v + C::new(0.5 * (b.gvecs[i] + k).norm_squared(), 0.0)
        } else {
            v
        }
    })
}

/// Eigenpairs sorted by energy.
fn eigen(h: DMatrix<C>) -> (Vec<f64>, DMatrix<C>) {
    let e = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..e.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(e.eigenvectors.nrows(), order.len(), |r, c| e.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

#[test]
fn berry_connection_matches_projector_derivative() {
    // X^a_nm = i <n| d_a P_m |m> with P_m = |m><m|; the projector is gauge
    // free, so the central difference needs no phase alignment. Compared
    // through the gauge-invariant products X^a conj(X^b).
    let mut s = setup(PotentialPreset::Cosine3d { amplitude: 3.0 }, 60.0, 1);
    let lat = &s.model.lattice;
    let kpoints: Vec<Vector3<f64>> = [[0.1, 0.23, 0.37], [-0.31, 0.07, 0.19], [0.44, -0.12, 0.02]]
        .iter()
        .map(|f| lat.b[0] * f[0] + lat.b[1] * f[1] + lat.b[2] * f[2])
        .collect();
    s.spec = solve_bands_at(&s.model, &kpoints, &[1.0 / 3.0; 3], s.model.basis.len()).unwrap();
    let el = interband_elements(&s.spec, &s.model.basis, 1, 0.0).unwrap();
    s.tr = Transitions::build(&s.spec, &el, &s.model.basis, lat.cell_volume);
    let step = 1e-4;
    let scale = s
        .tr
        .items
        .iter()
        .flat_map(|t| t.x.iter().map(|v| v.norm_sqr()))
        .fold(0.0, f64::max);
    let mut worst = 0.0f64;
    let mut tested = 0;
    for ik in 0..s.spec.nk() {
        let k = s.spec.kpoints[ik];
        let (e, c) = eigen(hamiltonian(&s.model, &k));
        let projector = |k: Vector3<f64>, m: usize| {
            let (_, c) = eigen(hamiltonian(&s.model, &k));
            let v = c.column(m).into_owned();
            &v * v.adjoint()
        };
        for t in s.tr.items.iter().filter(|t| t.k == ik) {
            let m = t.m;
            let isolated = (0..e.len()).all(|j| j == m || (e[j] - e[m]).abs() > 0.5);
            if !isolated || (e[0] - e[1]).abs() < 0.5 {
                continue;
            }
            let mut fd = [C::new(0.0, 0.0); 3];
            for (a, slot) in fd.iter_mut().enumerate() {
                let mut dk = Vector3::zeros();
                dk[a] = step;
                let dp = (projector(k + dk, m) - projector(k - dk, m)) / C::new(2.0 * step, 0.0);
                *slot = C::i() * (c.column(t.n).adjoint() * dp * c.column(m))[(0, 0)];
            }
            for a in 0..3 {
                for b in 0..3 {
                    let lib = t.x[a] * t.x[b].conj();
                    let ora = fd[a] * fd[b].conj();
                    worst = worst.max((lib - ora).norm() / scale);
                }
            }
            tested += 1;
        }
    }
    assert!(tested > 20, "only {tested} transitions tested");
    assert!(worst < 1e-6, "worst relative deviation {worst:e}");
}

/// Fourier coefficients of `u_n u_m^*` by direct summation on a real-space grid.
fn pair_density_on_grid(s: &Setup, ik: usize, n: usize, m: usize) -> DVector<C> {
    let b = &s.model.basis;
    let c = &s.spec.coeffs[ik];
    let grid = 4 * b.max_index() as usize + 2;
    let pts = grid * grid * grid;
    let vol = s.model.lattice.cell_volume;
    let mut prod = Vec::with_capacity(pts);
    for i in 0..pts {
        let r = Vector3::new((i / (grid * grid)) as f64, ((i / grid) % grid) as f64, (i % grid) as f64) / grid as f64;
        let (mut un, mut um) = (C::new(0.0, 0.0), C::new(0.0, 0.0));
        for (g, gv) in b.gvecs.iter().enumerate() {
            let phase = C::from_polar(1.0, gv.dot(&r));
            un += c[(g, n)] * phase;
            um += c[(g, m)] * phase;
        }
        prod.push((un * um.conj(), r));
    }
    DVector::from_fn(b.len(), |q, _| {
        prod.iter().map(|(v, r)| v * C::from_polar(1.0, -b.gvecs[q].dot(r))).sum::<C>() / (pts as f64 * vol)
    })
}

#[test]
fn susceptibility_matches_real_space_pair_densities() {
    let s = setup(PotentialPreset::Cosine3d { amplitude: 3.0 }, 30.0, 2);
    let z = C::new(1.3, 0.05);
    let nq = s.model.basis.len();
    let mut oracle = DMatrix::from_element(nq, nq, C::new(0.0, 0.0));
    for t in &s.tr.items {
        let nm = pair_density_on_grid(&s, t.k, t.n, t.m);
        let mn = pair_density_on_grid(&s, t.k, t.m, t.n);
        let a = C::new(t.weight, 0.0) / (z + t.omega);
        let b = C::new(t.weight, 0.0) / (z - t.omega);
        for q in 0..nq {
            for p in 0..nq {
                oracle[(q, p)] += (-a * nm[q] * nm[p].conj() + b * mn[q] * mn[p].conj()) * s.tr.volume;
            }
        }
    }
    let chi = chi_matrix(&s.tr, z, ResponseOptions::default());
    let dev = (&chi - &oracle).camax() / oracle.camax();
    assert!(dev < 1e-12, "relative deviation {dev:e}");
}

#[test]
fn empty_lattice_susceptibility_in_closed_form() {
    // Occupied state: the k + 0 plane wave; every transition moves one
    // electron to k + G with omega = (|k + G|^2 - |k|^2) / 2.
    let s = setup(PotentialPreset::Empty, 45.0, 2);
    let z = C::new(2.0, 0.1);
    let chi = chi_matrix(&s.tr, z, ResponseOptions::default());
    let b = &s.model.basis;
    let w = 1.0 / s.spec.nk() as f64;
    let vol = s.model.lattice.cell_volume;
    for q in 0..b.len() {
        for p in 0..b.len() {
            let expected = if q != p || q == b.zero_index() {
                C::new(0.0, 0.0)
            } else {
                s.spec
                    .kpoints
                    .iter()
                    .map(|k| {
                        let up = 0.5 * ((k + b.gvecs[q]).norm_squared() - k.norm_squared());
                        let down = 0.5 * ((k - b.gvecs[q]).norm_squared() - k.norm_squared());
                        (-(z + down).inv() + (z - up).inv()) * w / vol
                    })
                    .sum()
            };
            assert!((chi[(q, p)] - expected).norm() < 1e-13, "({q}, {p}): {} vs {expected}", chi[(q, p)]);
        }
    }
    for v in f_hat(&s.tr, z, ResponseOptions::default()) {
        assert!(v.camax() < 1e-13);
    }
}

#[test]
fn coulomb_solution_satisfies_poisson_in_real_space() {
    // -lap(phi) = f, checked with a sixth-order finite-difference Laplacian
    let model = CrystalModel::new(LatticeSpec::cubic(1.0), 60.0, &PotentialPreset::Empty, 1, XcModel::None).unwrap();
    let b = &model.basis;
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let mut f = DVector::from_fn(b.len(), |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    f[b.zero_index()] = C::new(0.0, 0.0);
    let phi = coulomb_solve(&f, b).unwrap();
    let n = 96;
    let pg = synthesize(&phi, b, n).unwrap();
    let fg = synthesize(&f, b, n).unwrap();
    let h = 1.0 / n as f64;
    let stencil = [(-49.0 / 18.0, 0), (1.5, 1), (-0.15, 2), (1.0 / 90.0, 3)];
    let idx = |i: usize, j: usize, k: usize| (i % n * n + j % n) * n + k % n;
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut lap = C::new(0.0, 0.0);
                for &(wgt, o) in &stencil {
                    let terms = if o == 0 {
                        3.0 * pg.values[idx(i, j, k)]
                    } else {
                        pg.values[idx(i + o, j, k)]
                            + pg.values[idx(i + n - o, j, k)]
                            + pg.values[idx(i, j + o, k)]
                            + pg.values[idx(i, j + n - o, k)]
                            + pg.values[idx(i, j, k + o)]
                            + pg.values[idx(i, j, k + n - o)]
                    };
                    lap += terms * wgt;
                }
                lap /= h * h;
                worst = worst.max((-lap - fg.values[idx(i, j, k)]).norm());
            }
        }
    }
    let scale = fg.max_abs();
    assert!(worst / scale < 1e-5, "{}", worst / scale);
    let mut nonneutral = f.clone();
    nonneutral[b.zero_index()] = C::new(0.1, 0.0);
    assert!(coulomb_solve(&nonneutral, b).is_err());
}

#[test]
fn permittivity_is_gauge_invariant() {
    let s = setup(PotentialPreset::Cosine3d { amplitude: 3.0 }, 45.0, 2);
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let mut spec = s.spec.clone();
    for c in spec.coeffs.iter_mut() {
        for mut col in c.column_iter_mut() {
            col *= C::from_polar(1.0, rng.gen_range(0.0..TAU));
        }
    }
    let el = interband_elements(&spec, &s.model.basis, 1, 0.0).unwrap();
    let rotated = Transitions::build(&spec, &el, &s.model.basis, s.tr.volume);
    for w in [0.4, 2.0, 7.5] {
        let z = Frequency::new(w, 0.05).unwrap().complex();
        let a = coefficient_tensors(&s.tr, z);
        let b = coefficient_tensors(&rotated, z);
        assert!((a.p_hat - b.p_hat).camax() < 1e-13);
        assert!((a.n_hat - b.n_hat).camax() < 1e-12);
        let chi_a = chi_matrix(&s.tr, z, ResponseOptions::default());
        let chi_b = chi_matrix(&rotated, z, ResponseOptions::default());
        assert!((chi_a - chi_b).camax() < 1e-13);
        let fa = f_hat(&s.tr, z, ResponseOptions::default());
        let fb = f_hat(&rotated, z, ResponseOptions::default());
        for i in 0..3 {
            assert!((&fa[i] - &fb[i]).camax() < 1e-13);
        }
    }
}

mod linearity {
    use super::{setup, PotentialPreset, Setup, C};
    use dielectric_core::response::{chi_apply, chi_matrix, f_hat, ResponseOptions};
    use nalgebra::DVector;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use std::sync::OnceLock;

    fn shared() -> &'static Setup {
        static S: OnceLock<Setup> = OnceLock::new();
        S.get_or_init(|| setup(PotentialPreset::Cosine3d { amplitude: 2.0 }, 30.0, 2))
    }

    fn cvec(seed: u64, n: usize) -> DVector<C> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn chi_is_complex_linear(
            s1 in 0u64..1000, s2 in 0u64..1000,
            ar in -3.0f64..3.0, ai in -3.0f64..3.0,
            w in 0.1f64..20.0, g in 0.0f64..0.5,
        ) {
            let s = shared();
            let n = s.model.basis.len();
            let (u, v) = (cvec(s1, n), cvec(s2, n));
            let alpha = C::new(ar, ai);
            let z = C::new(w, g.max(1e-3));
            let opts = ResponseOptions::default();
            let lhs = chi_apply(&s.tr, z, &(&u * alpha + &v), opts);
            let rhs = chi_apply(&s.tr, z, &u, opts) * alpha + chi_apply(&s.tr, z, &v, opts);
            let scale = lhs.camax().max(1e-300);
            prop_assert!((&lhs - &rhs).camax() / scale < 1e-12);
            let dense = chi_matrix(&s.tr, z, opts) * &u;
            prop_assert!((dense - chi_apply(&s.tr, z, &u, opts)).camax() < 1e-12 * scale.max(1.0));
        }

        #[test]
        fn retarded_symmetry_of_f(w in 0.1f64..20.0, g in 0.001f64..0.5) {
            // f(-conj z) is the coefficient-wise conjugate of f(z) reflected Q -> -Q
            let s = shared();
            let opts = ResponseOptions::default();
            let neg = s.model.basis.negation_map();
            let a = f_hat(&s.tr, C::new(w, g), opts);
            let b = f_hat(&s.tr, C::new(-w, g), opts);
            for c in 0..3 {
                for q in 0..a[c].len() {
                    prop_assert!((b[c][q] - a[c][neg[q]].conj()).norm() < 1e-12);
                }
            }
        }
    }
}
