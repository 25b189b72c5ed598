//! Orchestration: bands, elements, response, permittivity, Maxwell modes and
//! kernel traces, with every output carrying a reproducibility header.
//!
//! Outputs are produced in memory and written afterwards, in a fixed order.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::bloch::{band_records, gap_check, ground_density, solve_bands, BlochSpectrum, GapReport, GroundDensity};
use crate::config::{RunConfig, SourceConfig};
use crate::crystal::{build_kgrid, reciprocal_lattice, CrystalModel, KGrid};
use crate::error::{Error, Result};
use crate::kernels::{kernel_fourier_check, write_norms_csv, FourierResidual, KernelEvaluator};
use crate::matrix_elements::{constraint_residuals, interband_elements, InterbandElements, Transitions};
use crate::maxwell::{external_sources, project_transverse, solve_mode, ModeCoefficients, ModeRecord};
use crate::permittivity::{write_epsilon_csv, CoefficientSet, PermittivityTensor, RelationResiduals, ResponseModel};
use crate::response::{Frequency, PotentialOperator, ResponseOptions};
use crate::scalar::Cplx;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const UNITS: &str = "nondimensional: hbar = m_e = e = 1; lengths in cell units, frequencies in units of the cell energy scale";

/// Provenance block attached to every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Header {
    pub config_sha256: String,
    pub version: String,
    pub units: String,
    pub ecut: f64,
    pub kgrid: [usize; 3],
    pub kgrid_shifted: bool,
    pub gamma: f64,
    #[serde(rename = "Z")]
    pub occupied: usize,
}

impl Header {
    pub fn new(cfg: &RunConfig) -> Self {
        Header {
            config_sha256: cfg.hash(),
            version: VERSION.to_string(),
            units: UNITS.to_string(),
            ecut: cfg.ecut,
            kgrid: cfg.kgrid.dims,
            kgrid_shifted: cfg.kgrid.shifted,
            gamma: cfg.gamma(),
            occupied: cfg.occupied,
        }
    }

    /// `# key: value` lines preceding CSV tables.
    pub fn csv_preamble(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# config_sha256: {}\n", self.config_sha256));
        s.push_str(&format!("# version: {}\n", self.version));
        s.push_str(&format!("# units: {}\n", self.units));
        s.push_str(&format!("# ecut: {}\n", self.ecut));
        s.push_str(&format!(
            "# kgrid: {}x{}x{} {}\n",
            self.kgrid[0],
            self.kgrid[1],
            self.kgrid[2],
            if self.kgrid_shifted { "shifted" } else { "unshifted" }
        ));
        s.push_str(&format!("# gamma: {}\n", self.gamma));
        s.push_str(&format!("# Z: {}\n", self.occupied));
        s
    }
}

#[derive(Serialize)]
struct Document<'a, D: Serialize> {
    header: &'a Header,
    data: D,
}

/// A named output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub fn json_output<D: Serialize>(name: &str, header: &Header, data: D) -> Result<Output> {
    let mut bytes = serde_json::to_vec_pretty(&Document { header, data })?;
    bytes.push(b'\n');
    Ok(Output {
        name: name.to_string(),
        bytes,
    })
}

pub fn write_outputs(dir: &Path, outputs: &[Output]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for o in outputs {
        std::fs::write(dir.join(&o.name), &o.bytes)?;
    }
    Ok(())
}

/// Model, spectrum and interband data for one configuration.
pub struct Prepared {
    pub config: RunConfig,
    pub model: CrystalModel<f64>,
    pub kgrid: KGrid<f64>,
    pub spectrum: BlochSpectrum<f64>,
    pub gap: GapReport,
    pub density: GroundDensity<f64>,
    pub elements: InterbandElements<f64>,
    pub transitions: Transitions<f64>,
}

pub fn build_model(cfg: &RunConfig) -> Result<CrystalModel<f64>> {
    let a = cfg.lattice.map(|r| Vector3::new(r[0], r[1], r[2]));
    let lattice = reciprocal_lattice(a[0], a[1], a[2])?;
    CrystalModel::new(lattice, cfg.ecut, &cfg.preset()?, cfg.occupied, cfg.xc_model())
}

/// Bands and gap only.
pub fn solve_spectrum(cfg: &RunConfig) -> Result<(CrystalModel<f64>, KGrid<f64>, BlochSpectrum<f64>)> {
    let model = build_model(cfg)?;
    let kgrid = build_kgrid(&model.lattice, cfg.kgrid.dims, cfg.kgrid.shifted)?;
    let nbands = cfg.nbands.unwrap_or(model.basis.len());
    let spectrum = solve_bands(&model, &kgrid, nbands)?;
    Ok((model, kgrid, spectrum))
}

pub fn prepare(cfg: &RunConfig, override_gap: bool) -> Result<Prepared> {
    let (model, kgrid, spectrum) = solve_spectrum(cfg)?;
    let gap = gap_check(&spectrum, cfg.occupied, cfg.tolerances.gap, override_gap)?;
    log::info!(
        "bands: {} plane waves, {} k-points, gap {:.6}",
        model.basis.len(),
        kgrid.len(),
        gap.gap
    );
    let density = ground_density(&spectrum, &model, cfg.occupied, None)?;
    let elements = interband_elements(&spectrum, &model.basis, cfg.occupied, gap.gap)?;
    let transitions = Transitions::build(&spectrum, &elements, &model.basis, model.lattice.cell_volume);
    Ok(Prepared {
        config: cfg.clone(),
        model,
        kgrid,
        spectrum,
        gap,
        density,
        elements,
        transitions,
    })
}

impl Prepared {
    pub fn options(&self) -> ResponseOptions {
        ResponseOptions {
            flip_second_term: self.config.test_hooks.flip_chi_second_term,
        }
    }

    pub fn response_model(&self) -> Result<ResponseModel<f64>> {
        let v = PotentialOperator::new(
            &self.model.basis,
            &self.model.xc,
            Some(&self.density),
            self.config.coulomb,
        )?
        .matrix()?;
        let mut rm = ResponseModel::new(self.transitions.clone(), v, self.config.occupied);
        rm.options = self.options();
        rm.resonance_tol = self.config.tolerances.resonance;
        Ok(rm)
    }
}

pub fn frequencies(cfg: &RunConfig) -> Result<Vec<Frequency<f64>>> {
    let f = cfg
        .frequencies
        .as_ref()
        .ok_or_else(|| Error::Config("no frequencies configured".into()))?;
    let gamma = f.gamma();
    let list = f.omegas();
    if list.is_empty() {
        return Err(Error::Config("frequency list is empty".into()));
    }
    list.into_iter().map(|w| Frequency::new(w, gamma)).collect()
}

pub fn evaluate_all(rm: &ResponseModel<f64>, freqs: &[Frequency<f64>]) -> Result<Vec<CoefficientSet<f64>>> {
    use rayon::prelude::*;
    freqs.par_iter().map(|f| rm.evaluate(*f)).collect()
}

#[derive(Serialize)]
struct BandsData {
    gap: Option<GapReport>,
    nbands: usize,
    basis_size: usize,
    bands: Vec<crate::bloch::BandRecord>,
}

pub fn run_bands(cfg: &RunConfig, override_gap: bool) -> Result<Vec<Output>> {
    let (model, _, spectrum) = solve_spectrum(cfg)?;
    let gap = if spectrum.nbands > cfg.occupied {
        Some(gap_check(&spectrum, cfg.occupied, cfg.tolerances.gap, override_gap)?)
    } else {
        None
    };
    let data = BandsData {
        gap,
        nbands: spectrum.nbands,
        basis_size: model.basis.len(),
        bands: band_records(&spectrum),
    };
    Ok(vec![json_output("bands.json", &Header::new(cfg), data)?])
}

fn pairs3(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn cpairs3(m: &Matrix3<Cplx<f64>>) -> [[[f64; 2]; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| [m[(i, j)].re, m[(i, j)].im]))
}

fn frob(m: &Matrix3<Cplx<f64>>) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct SumRuleReport {
    #[serde(rename = "S")]
    pub s: [[f64; 3]; 3],
    pub residual: [[f64; 3]; 3],
    pub constraint_one: f64,
    pub total_charge: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyReport {
    pub omega: f64,
    pub gamma: f64,
    pub condition: f64,
    pub relations: RelationResiduals,
    pub p_r_norm: f64,
    pub p_hat_norm: f64,
    #[serde(rename = "A")]
    pub a: [[[f64; 2]; 3]; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonReport {
    pub gap: GapReport,
    pub basis_size: usize,
    pub transitions: usize,
    pub sum_rule: SumRuleReport,
    pub frequencies: Vec<FrequencyReport>,
}

pub fn sum_rule_report(p: &Prepared) -> Result<SumRuleReport> {
    let n = crate::bloch::default_grid_size(p.model.basis.max_index());
    let res = constraint_residuals(&p.transitions, p.config.occupied, n)?;
    Ok(SumRuleReport {
        s: pairs3(&res.sum_rule),
        residual: pairs3(&res.r2),
        constraint_one: res.r1,
        total_charge: p.density.total_charge,
    })
}

/// Result of an `epsilon` run, kept for callers that need more than the files.
pub struct EpsilonRun {
    pub prepared: Prepared,
    pub sets: Vec<CoefficientSet<f64>>,
    pub report: EpsilonReport,
}

pub fn epsilon_run(cfg: &RunConfig, override_gap: bool) -> Result<EpsilonRun> {
    let freqs = frequencies(cfg)?;
    let prepared = prepare(cfg, override_gap)?;
    let rm = prepared.response_model()?;
    let sets = evaluate_all(&rm, &freqs)?;
    let report = EpsilonReport {
        gap: prepared.gap,
        basis_size: prepared.model.basis.len(),
        transitions: prepared.transitions.len(),
        sum_rule: sum_rule_report(&prepared)?,
        frequencies: sets
            .iter()
            .map(|s| FrequencyReport {
                omega: s.frequency.omega,
                gamma: s.frequency.gamma,
                condition: s.condition,
                relations: s.residuals,
                p_r_norm: frob(&s.tensors.p_r),
                p_hat_norm: frob(&s.tensors.p_hat),
                a: cpairs3(&s.a),
            })
            .collect(),
    };
    Ok(EpsilonRun {
        prepared,
        sets,
        report,
    })
}

pub fn run_epsilon(cfg: &RunConfig, override_gap: bool) -> Result<Vec<Output>> {
    let run = epsilon_run(cfg, override_gap)?;
    let header = Header::new(cfg);
    let rows: Vec<PermittivityTensor<f64>> = run.sets.iter().map(|s| s.permittivity()).collect();
    let mut csv = header.csv_preamble().into_bytes();
    write_epsilon_csv(&mut csv, &rows)?;
    Ok(vec![
        Output {
            name: "epsilon.csv".into(),
            bytes: csv,
        },
        json_output("report.json", &header, &run.report)?,
    ])
}

fn source_vectors(s: &SourceConfig, z: Cplx<f64>) -> (Vector3<f64>, Cplx<f64>, Cplx<f64>, Vector3<Cplx<f64>>) {
    let q = Vector3::new(s.q[0] as f64, s.q[1] as f64, s.q[2] as f64) * std::f64::consts::TAU;
    let v = Cplx::new(s.v_ext[0], s.v_ext[1]);
    let mut a = Vector3::new(
        Cplx::new(s.a_ext[0][0], s.a_ext[0][1]),
        Cplx::new(s.a_ext[1][0], s.a_ext[1][1]),
        Cplx::new(s.a_ext[2][0], s.a_ext[2][1]),
    );
    if s.transverse {
        a = project_transverse(&q, &a);
    }
    let (rho, j) = external_sources(z, &q, v, &a);
    (q, v, rho, j)
}

pub fn maxwell_modes(cfg: &RunConfig, override_gap: bool) -> Result<Vec<ModeRecord>> {
    let sources = cfg
        .maxwell
        .as_ref()
        .map(|m| m.sources.clone())
        .ok_or_else(|| Error::Config("no maxwell sources configured".into()))?;
    let gamma = cfg.gamma();
    let prepared = prepare(cfg, override_gap)?;
    let rm = prepared.response_model()?;
    let mut records = Vec::with_capacity(sources.len());
    for s in &sources {
        let freq = Frequency::new(s.omega, gamma)?;
        let set = rm.evaluate(freq)?;
        let z = freq.complex();
        let (q, _, rho, j) = source_vectors(s, z);
        let sol = solve_mode(z, &q, &ModeCoefficients::from_set(&set), rho, &j)?;
        records.push(ModeRecord::from(&sol));
    }
    Ok(records)
}

pub fn run_maxwell(cfg: &RunConfig, override_gap: bool) -> Result<Vec<Output>> {
    let records = maxwell_modes(cfg, override_gap)?;
    Ok(vec![json_output("fields.json", &Header::new(cfg), records)?])
}

/// Kernel trace parameters used when the configuration has none.
pub const DEFAULT_KERNEL_DS: f64 = 0.01;
pub const DEFAULT_KERNEL_SPAN: f64 = 300.0;
pub const DEFAULT_KERNEL_GAMMA: f64 = 0.2;
pub const DEFAULT_KERNEL_OMEGAS: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Serialize)]
struct KernelData {
    ds: f64,
    samples: usize,
    max_omega: f64,
    residuals: Vec<FourierResidual>,
}

pub fn run_kernels(cfg: &RunConfig, override_gap: bool) -> Result<Vec<Output>> {
    let (ds, span, gamma, omegas) = match &cfg.kernels {
        Some(k) => (k.ds, k.span, k.gamma, k.omegas.clone()),
        None => (
            DEFAULT_KERNEL_DS,
            DEFAULT_KERNEL_SPAN,
            DEFAULT_KERNEL_GAMMA,
            DEFAULT_KERNEL_OMEGAS.to_vec(),
        ),
    };
    let prepared = prepare(cfg, override_gap)?;
    let n = (span / ds).round() as usize;
    let ev = KernelEvaluator::new(&prepared.transitions);
    let residuals = kernel_fourier_check(&ev, ds, n, &omegas, gamma, prepared.options())?;
    let header = Header::new(cfg);
    let mut csv = header.csv_preamble().into_bytes();
    write_norms_csv(&mut csv, &ev.norm_rows(ds, n))?;
    let data = KernelData {
        ds,
        samples: n + 1,
        max_omega: ev.max_omega(),
        residuals,
    };
    Ok(vec![
        Output {
            name: "kernels.csv".into(),
            bytes: csv,
        },
        json_output("kernels.json", &header, data)?,
    ])
}
