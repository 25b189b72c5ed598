//! Time-domain memory kernels
//! `f(s) = -2 Im sum avg_k e^{i omega_mn s} u_n u_m^* X_nm` and `g(s)` (same with
//! `<u_n|i d_zeta|u_m>`), and the check that their damped one-sided Fourier
//! transforms reproduce the frequency-domain `f(omega + i gamma)`, `g(omega + i gamma)`.
//!
//! With `h(s)(Q) = sum avg_k e^{i omega_mn s} X_nm rho_nm(Q)`, the imaginary part
//! of a cell function gives `f(s)(Q) = i (h(Q) - conj(h(-Q)))`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix_elements::Transitions;
use crate::response::{f_hat, g_hat, CellFunction, ResponseOptions};
use crate::scalar::{cabs2, cexp, cis, cre, czero, format_number, lit, to_f64, Cplx, Real};

/// Samples `s_j = j ds`, `j = 0..=n`, of both kernels. Column `j` of each
/// matrix holds the Fourier coefficients at `s_j`.
#[derive(Debug, Clone)]
pub struct KernelTrace<T: Real> {
    pub ds: T,
    pub times: Vec<T>,
    pub f: [DMatrix<Cplx<T>>; 3],
    pub g: [DMatrix<Cplx<T>>; 3],
    /// largest transition frequency contributing to the trace
    pub max_omega: T,
}

impl<T: Real> KernelTrace<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> T {
        *self.times.last().unwrap_or(&T::zero())
    }

    pub fn f_at(&self, j: usize) -> [CellFunction<T>; 3] {
        std::array::from_fn(|a| self.f[a].column(j).into_owned())
    }

    pub fn g_at(&self, j: usize) -> [CellFunction<T>; 3] {
        std::array::from_fn(|a| self.g[a].column(j).into_owned())
    }
}

/// Evaluates the kernels from a set of transitions.
pub struct KernelEvaluator<'a, T: Real> {
    tr: &'a Transitions<T>,
    negation: Vec<usize>,
    /// real form `[[Re, -Im], [Im, Re]]` of `rho_nm`
    block: DMatrix<T>,
}

impl<'a, T: Real> KernelEvaluator<'a, T> {
    pub fn new(tr: &'a Transitions<T>) -> Self {
        let index: std::collections::HashMap<_, _> =
            tr.millers.iter().enumerate().map(|(i, h)| (*h, i)).collect();
        let negation = tr
            .millers
            .iter()
            .map(|h| index[&[-h[0], -h[1], -h[2]]])
            .collect();
        let (nq, nt) = (tr.rho_nm.nrows(), tr.rho_nm.ncols());
        let block = DMatrix::from_fn(2 * nq, 2 * nt, |i, j| {
            let v = tr.rho_nm[(i % nq, j % nt)];
            match (i < nq, j < nt) {
                (true, true) | (false, false) => v.re,
                (true, false) => -v.im,
                (false, true) => v.im,
            }
        });
        KernelEvaluator { tr, negation, block }
    }

    fn fold(&self, h: &DVector<Cplx<T>>) -> CellFunction<T> {
        DVector::from_fn(h.len(), |q, _| {
            let d = h[q] - h[self.negation[q]].conj();
            Cplx::new(-d.im, d.re)
        })
    }

    fn single(&self, s: T, elem: impl Fn(usize) -> [Cplx<T>; 3]) -> [CellFunction<T>; 3] {
        std::array::from_fn(|a| {
            let phases = DVector::from_fn(self.tr.len(), |t, _| {
                let item = &self.tr.items[t];
                cis(item.omega * s) * elem(t)[a] * item.weight
            });
            self.fold(&(&self.tr.rho_nm * phases))
        })
    }

    pub fn kernel_f(&self, s: T) -> [CellFunction<T>; 3] {
        self.single(s, |t| self.tr.items[t].x)
    }

    pub fn kernel_g(&self, s: T) -> [CellFunction<T>; 3] {
        self.single(s, |t| self.tr.items[t].y)
    }

    /// Evaluates both kernels at `s_j = j ds`, `j = 0..=n`, in blocks of
    /// consecutive samples. `sink` receives the first index of the block and
    /// the `f`, `g` coefficients (one column per sample).
    pub fn for_each_block(
        &self,
        ds: T,
        n: usize,
        mut sink: impl FnMut(usize, &[DMatrix<Cplx<T>>; 3], &[DMatrix<Cplx<T>>; 3]),
    ) {
        const CHUNK: usize = 256;
        let tr = self.tr;
        let (nq, nt) = (tr.rho_nm.nrows(), tr.len());
        for start in (0..=n).step_by(CHUNK) {
            let cols = CHUNK.min(n + 1 - start);
            // six right-hand sides per time: f and g for each component
            let mut rhs = DMatrix::<T>::zeros(2 * nt, 6 * cols);
            for (t, item) in tr.items.iter().enumerate() {
                let elems = [item.x, item.y];
                for c in 0..cols {
                    let s = ds * lit((start + c) as f64);
                    let phase = cis(item.omega * s) * item.weight;
                    for (kind, e) in elems.iter().enumerate() {
                        for (a, &ea) in e.iter().enumerate() {
                            let v = phase * ea;
                            let col = (kind * 3 + a) * cols + c;
                            rhs[(t, col)] = v.re;
                            rhs[(nt + t, col)] = v.im;
                        }
                    }
                }
            }
            let out = &self.block * rhs;
            let mut f: [DMatrix<Cplx<T>>; 3] = std::array::from_fn(|_| DMatrix::from_element(nq, cols, czero()));
            let mut g = f.clone();
            for kind in 0..2 {
                for a in 0..3 {
                    for c in 0..cols {
                        let col = (kind * 3 + a) * cols + c;
                        let h = DVector::from_fn(nq, |q, _| Cplx::new(out[(q, col)], out[(nq + q, col)]));
                        let target = if kind == 0 { &mut f[a] } else { &mut g[a] };
                        target.set_column(c, &self.fold(&h));
                    }
                }
            }
            sink(start, &f, &g);
        }
    }

    /// Samples both kernels on `s_j = j ds`, `j = 0..=n`.
    pub fn trace(&self, ds: T, n: usize) -> KernelTrace<T> {
        let nq = self.tr.rho_nm.nrows();
        let times: Vec<T> = (0..=n).map(|j| ds * lit(j as f64)).collect();
        let mut f: [DMatrix<Cplx<T>>; 3] = std::array::from_fn(|_| DMatrix::from_element(nq, n + 1, czero()));
        let mut g = f.clone();
        self.for_each_block(ds, n, |start, bf, bg| {
            for a in 0..3 {
                f[a].columns_mut(start, bf[a].ncols()).copy_from(&bf[a]);
                g[a].columns_mut(start, bg[a].ncols()).copy_from(&bg[a]);
            }
        });
        KernelTrace {
            ds,
            times,
            f,
            g,
            max_omega: self.tr.max_omega(),
        }
    }

    /// Damped trapezoidal transforms of both kernels over `s_j = j ds`,
    /// `j = 0..=n`, accumulated block by block without storing the trace.
    pub fn damped_transforms(&self, ds: T, n: usize, omegas: &[T], gamma: T) -> Vec<[[CellFunction<T>; 3]; 2]> {
        let nq = self.tr.rho_nm.nrows();
        let mut acc: Vec<[[CellFunction<T>; 3]; 2]> = omegas
            .iter()
            .map(|_| std::array::from_fn(|_| std::array::from_fn(|_| DVector::from_element(nq, czero()))))
            .collect();
        self.for_each_block(ds, n, |start, bf, bg| {
            let cols = bf[0].ncols();
            for (w, out) in omegas.iter().zip(acc.iter_mut()) {
                let rate = Cplx::new(-gamma, *w);
                let weights = DVector::from_fn(cols, |c, _| {
                    let j = start + c;
                    let end = if j == 0 || j == n { lit(0.5) } else { T::one() };
                    cexp(rate * ds * lit::<T>(j as f64)) * ds * end
                });
                for a in 0..3 {
                    out[0][a] += &bf[a] * &weights;
                    out[1][a] += &bg[a] * &weights;
                }
            }
        });
        acc
    }

    /// Per-sample norms `s, |f_x|, |f_y|, |f_z|, |g_x|, |g_y|, |g_z|`.
    pub fn norm_rows(&self, ds: T, n: usize) -> Vec<[f64; 7]> {
        let volume = self.tr.volume;
        let mut rows = Vec::with_capacity(n + 1);
        self.for_each_block(ds, n, |start, bf, bg| {
            for c in 0..bf[0].ncols() {
                let mut row = [to_f64(ds) * (start + c) as f64, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
                for a in 0..3 {
                    row[1 + a] = cell_norm(&bf[a].column(c).into_owned(), volume);
                    row[4 + a] = cell_norm(&bg[a].column(c).into_owned(), volume);
                }
                rows.push(row);
            }
        });
        rows
    }

    pub fn max_omega(&self) -> T {
        self.tr.max_omega()
    }

    pub fn transitions(&self) -> &'a Transitions<T> {
        self.tr
    }
}

/// Trapezoidal `sum_j c_j e^{(i omega - gamma) s_j} x(s_j) ds` applied to
/// every row of `values` (one column per sample).
pub fn damped_trapezoid<T: Real>(values: &DMatrix<Cplx<T>>, ds: T, omega: T, gamma: T) -> DVector<Cplx<T>> {
    let n = values.ncols();
    let rate = Cplx::new(-gamma, omega);
    let w = DVector::from_fn(n, |j, _| {
        let end = if j == 0 || j + 1 == n { lit(0.5) } else { T::one() };
        cexp(rate * ds * lit::<T>(j as f64)) * ds * end
    });
    values * w
}

/// `int_0^T e^{(i omega - gamma) s} e^{i omega0 s} ds`.
pub fn single_mode_transform<T: Real>(omega0: T, omega: T, gamma: T, span: T) -> Cplx<T> {
    let rate = Cplx::new(-gamma, omega + omega0);
    (cexp(rate * span) - cre(T::one())) / rate
}

/// Trapezoidal sum of the same integrand, summed exactly as a geometric series.
pub fn single_mode_trapezoid<T: Real>(omega0: T, omega: T, gamma: T, ds: T, n: usize) -> Cplx<T> {
    let r = cexp(Cplx::new(-gamma, omega + omega0) * ds);
    let one = cre(T::one());
    let rn = cexp(Cplx::new(-gamma, omega + omega0) * ds * lit::<T>(n as f64));
    let total = (one - rn * r) / (one - r);
    (total - (one + rn) * lit::<T>(0.5)) * ds
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourierResidual {
    pub omega: f64,
    pub gamma: f64,
    pub f: f64,
    pub g: f64,
}

/// Relative distance between the damped transforms of the kernels sampled on
/// `s_j = j ds`, `j = 0..=n`, and the frequency-domain functions at
/// `omega + i gamma`.
pub fn kernel_fourier_check<T: Real>(
    evaluator: &KernelEvaluator<'_, T>,
    ds: T,
    n: usize,
    omegas: &[T],
    gamma: T,
    opts: ResponseOptions,
) -> Result<Vec<FourierResidual>> {
    let g64 = to_f64(gamma);
    let ds64 = to_f64(ds);
    if g64 <= 0.0 {
        return Err(Error::UnderResolvedTrace(format!("broadening must be positive, got {g64}")));
    }
    let span = ds64 * n as f64;
    if span < 8.0 / g64 {
        return Err(Error::UnderResolvedTrace(format!(
            "trace span {span} below 8/gamma = {}; need N >= {}",
            8.0 / g64,
            (8.0 / g64 / ds64).ceil()
        )));
    }
    let wmax = to_f64(evaluator.max_omega());
    if ds64 * wmax >= std::f64::consts::PI {
        return Err(Error::UnderResolvedTrace(format!(
            "ds = {ds64} does not resolve omega_max = {wmax}; need ds < {}",
            std::f64::consts::PI / wmax
        )));
    }
    let rel = |num: &[CellFunction<T>; 3], reference: &[CellFunction<T>; 3]| {
        let mut d = 0.0;
        let mut r = 0.0;
        for a in 0..3 {
            d += num[a].iter().zip(reference[a].iter()).map(|(x, y)| to_f64(cabs2(*x - *y))).sum::<f64>();
            r += reference[a].iter().map(|y| to_f64(cabs2(*y))).sum::<f64>();
        }
        (d / r).sqrt()
    };
    let transforms = evaluator.damped_transforms(ds, n, omegas, gamma);
    let tr = evaluator.transitions();
    Ok(omegas
        .iter()
        .zip(&transforms)
        .map(|(&w, [fq, gq])| {
            let z = Cplx::new(w, gamma);
            FourierResidual {
                omega: to_f64(w),
                gamma: g64,
                f: rel(fq, &f_hat(tr, z, opts)),
                g: rel(gq, &g_hat(tr, z, opts)),
            }
        })
        .collect())
}

/// `sqrt(int_Gamma |x|^2)` of a cell function.
pub fn cell_norm<T: Real>(x: &CellFunction<T>, volume: T) -> f64 {
    (to_f64(volume) * x.iter().map(|v| to_f64(cabs2(*v))).sum::<f64>()).sqrt()
}

/// CSV of kernel norms: `s, f_x, f_y, f_z, g_x, g_y, g_z`.
pub fn write_norms_csv<W: Write>(out: W, rows: &[[f64; 7]]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["s", "f_x", "f_y", "f_z", "g_x", "g_y", "g_z"]).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_number(*v))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
