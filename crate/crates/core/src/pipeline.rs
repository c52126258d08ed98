// SPDX-License-Identifier: Apache-2.0

//! End-to-end imaging runs and SNR sweeps.
//!
//! The front end streams over virtual elements twice. The first pass
//! regenerates each element, divides out the frame, builds its RDM and
//! accumulates power. After OSCA-CFAR the second pass regenerates the elements
//! again and gathers their complex RDM values at the detected cells. Memory
//! therefore scales with one element grid per worker, not with the full
//! `n_c × n_sym × P × Q` tensor.
//!
//! Both algorithms consume the same front-end output for a given seed and SNR.
//! Element accumulation uses a fixed chunking, so results do not depend on the
//! thread count.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cfar::{local_maxima, matrix_to_csv, osca_cfar_2d, CfarConfig, DetectionMask};
use crate::channel::{ChannelSimulator, SnrSpec};
use crate::fft4d::{estimate_doas_fft, fft_angle_spectrum, FftSearch};
use crate::geometry::{build_virtual_array, ArrayRole, PhaseConvention, SteeringAngles, UpaLayout};
use crate::metrics::DeviationReport;
use crate::music::{analyze_cell, CellManifold, DoaEstimate, DoaSearch, SmoothingConfig};
use crate::pointcloud::{reconstruct, Detection, PointCloud4D};
use crate::rdm::{divide_element, map_to_csv, IntegratedRdm, RdmAxes, RdmProcessor, RdmWindow};
use crate::scene::{generate_demo_scene, load_scene, scatterer_truth, Scene, ScattererTruth};
use crate::waveform::{build_resource_grid, OfdmConfig, SymbolGrid};
use crate::{Error, Result};

/// Elements summed sequentially per parallel task.
const ELEMENT_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Full,
    /// 256 subcarriers, 4 slots; same array and code path
    Test,
}

impl Profile {
    pub fn ofdm(self) -> OfdmConfig {
        match self {
            Profile::Full => OfdmConfig::full(),
            Profile::Test => OfdmConfig::test_profile(),
        }
    }

    /// Default match radius for velocity NMSE, about one range bin.
    pub fn match_radius(self) -> f64 {
        match self {
            Profile::Full => 1.0,
            Profile::Test => 2.5,
        }
    }
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Profile::Full),
            "test" => Ok(Profile::Test),
            _ => Err(Error::Config(format!("unknown profile `{s}` (full|test)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    // declared in name order so sorted tables list algorithms alphabetically
    Fft4d,
    Music,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Music => "music",
            Algorithm::Fft4d => "fft4d",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmChoice {
    #[default]
    Music,
    Fft4d,
    Both,
}

impl AlgorithmChoice {
    pub fn algorithms(self) -> Vec<Algorithm> {
        match self {
            AlgorithmChoice::Music => vec![Algorithm::Music],
            AlgorithmChoice::Fft4d => vec![Algorithm::Fft4d],
            AlgorithmChoice::Both => vec![Algorithm::Music, Algorithm::Fft4d],
        }
    }
}

impl FromStr for AlgorithmChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "music" => Ok(AlgorithmChoice::Music),
            "fft4d" => Ok(AlgorithmChoice::Fft4d),
            "both" => Ok(AlgorithmChoice::Both),
            _ => Err(Error::Config(format!(
                "unknown algorithm `{s}` (music|fft4d|both)"
            ))),
        }
    }
}

/// Everything a run needs. Loadable from TOML; unset fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// scene file; the built-in demo scene when unset
    pub scene: Option<PathBuf>,
    pub profile: Profile,
    /// replaces the profile's waveform when set
    pub ofdm: Option<OfdmConfig>,
    pub tx: UpaLayout,
    pub rx: UpaLayout,
    /// range/Doppler taper
    pub rdm_window: RdmWindow,
    pub rdm_cfar: CfarConfig,
    pub spectrum_cfar: CfarConfig,
    pub eigen_cfar: CfarConfig,
    pub smoothing: SmoothingConfig,
    pub angle_step_deg: f64,
    pub fft_pad: usize,
    pub algorithm: AlgorithmChoice,
    pub snr_db: Vec<f64>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub dump_intermediates: bool,
    /// profile default when unset
    pub match_radius: Option<f64>,
    pub phase_convention: PhaseConvention,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: None,
            profile: Profile::Full,
            ofdm: None,
            tx: UpaLayout {
                rows: 2,
                cols: 2,
                spacing: 8.0,
                role: ArrayRole::Transmit,
            },
            rx: UpaLayout {
                rows: 8,
                cols: 8,
                spacing: 1.0,
                role: ArrayRole::Receive,
            },
            rdm_window: RdmWindow::Hann,
            rdm_cfar: CfarConfig::rdm_default(),
            spectrum_cfar: CfarConfig::spectrum_default(),
            eigen_cfar: CfarConfig::eigen_default(),
            smoothing: SmoothingConfig::default(),
            angle_step_deg: 0.5,
            fft_pad: 4,
            algorithm: AlgorithmChoice::Music,
            snr_db: vec![10.0],
            seed: 0,
            out_dir: None,
            dump_intermediates: false,
            match_radius: None,
            phase_convention: PhaseConvention::default(),
        }
    }
}

impl RunConfig {
    pub fn test_profile() -> Self {
        RunConfig {
            profile: Profile::Test,
            ..RunConfig::default()
        }
    }

    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: path.into(),
            line: e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0),
            msg: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn load_scene(&self) -> Result<Scene> {
        match &self.scene {
            Some(p) => load_scene(p),
            None => Ok(generate_demo_scene()),
        }
    }
}

/// A [`RunConfig`] checked and expanded into stage settings.
#[derive(Debug, Clone)]
pub struct Setup {
    pub ofdm: OfdmConfig,
    pub virtual_array: UpaLayout,
    pub rdm_window: RdmWindow,
    pub rdm_cfar: CfarConfig,
    pub doa: DoaSearch,
    pub fft: FftSearch,
    pub match_radius: f64,
}

impl Setup {
    pub fn resolve(cfg: &RunConfig) -> Result<Self> {
        let ofdm = cfg.ofdm.clone().unwrap_or_else(|| cfg.profile.ofdm());
        ofdm.validate()?;
        let virtual_array = build_virtual_array(&cfg.tx, &cfg.rx)?;
        cfg.rdm_cfar.validate_2d()?;
        cfg.spectrum_cfar.validate_2d()?;
        cfg.eigen_cfar.validate()?;
        cfg.smoothing
            .validate(virtual_array.rows.min(virtual_array.cols))?;
        if cfg.smoothing.subarray_len < 2 {
            return Err(Error::Config("subarray length must be at least 2".into()));
        }
        if cfg.fft_pad == 0 {
            return Err(Error::Config("fft_pad must be ≥ 1".into()));
        }
        let match_radius = cfg.match_radius.unwrap_or(cfg.profile.match_radius());
        if !(match_radius >= 0.0) {
            return Err(Error::Config(format!("match radius {match_radius} < 0")));
        }
        let mut doa = DoaSearch::new(cfg.angle_step_deg)?;
        doa.smoothing = cfg.smoothing;
        doa.spectrum_cfar = cfg.spectrum_cfar;
        doa.eigen_cfar = cfg.eigen_cfar;
        doa.spacing = virtual_array.spacing;
        doa.convention = cfg.phase_convention;
        let mut fft = FftSearch::new(cfg.fft_pad);
        fft.spacing = virtual_array.spacing;
        Ok(Setup {
            ofdm,
            virtual_array,
            rdm_window: cfg.rdm_window,
            rdm_cfar: cfg.rdm_cfar,
            doa,
            fft,
            match_radius,
        })
    }
}

/// Front-end products shared by both imagers.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    pub integrated: IntegratedRdm,
    pub mask: DetectionMask,
    /// local maxima of the detections, raster order
    pub cells: Vec<(usize, usize)>,
    /// one manifold per cell
    pub manifolds: Vec<CellManifold>,
}

/// Simulate the echoes and run the RDM, OSCA-CFAR and manifold stages.
pub fn run_front_end(
    setup: &Setup,
    truths: &[ScattererTruth],
    snr: SnrSpec,
    seed: u64,
    convention: PhaseConvention,
) -> Result<FrontEnd> {
    let grid = build_resource_grid(&setup.ofdm, seed).map_err(|e| e.in_stage("waveform"))?;
    let sim = ChannelSimulator::new(
        &grid,
        truths,
        setup.virtual_array,
        &setup.ofdm,
        snr,
        seed,
        convention,
    )
    .map_err(|e| e.in_stage("channel"))?;
    let processor = RdmProcessor::with_window(&setup.ofdm, setup.rdm_window);
    let integrated = integrate_streaming(&sim, &grid, &processor);
    let mask = osca_cfar_2d(integrated.power.view(), &setup.rdm_cfar)
        .map_err(|e| e.in_stage("rdm-cfar"))?;
    let cells = local_maxima(integrated.power.view(), &mask.detected);
    let manifolds = gather_manifolds(&sim, &grid, &processor, &cells);
    Ok(FrontEnd {
        integrated,
        mask,
        cells,
        manifolds,
    })
}

fn element_rdm(
    sim: &ChannelSimulator,
    grid: &SymbolGrid,
    processor: &RdmProcessor,
    index: usize,
) -> crate::rdm::Rdm {
    let cols = sim.layout().cols;
    let rx = sim.element(index / cols, index % cols);
    processor.process(divide_element(rx.view(), grid).view())
}

fn integrate_streaming(
    sim: &ChannelSimulator,
    grid: &SymbolGrid,
    processor: &RdmProcessor,
) -> IntegratedRdm {
    let n = sim.layout().len();
    let axes = processor.axes();
    let partials: Vec<IntegratedRdm> = (0..n.div_ceil(ELEMENT_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = IntegratedRdm::empty(axes);
            for e in c * ELEMENT_CHUNK..((c + 1) * ELEMENT_CHUNK).min(n) {
                acc.accumulate(&element_rdm(sim, grid, processor, e));
            }
            acc
        })
        .collect();
    let mut total = IntegratedRdm::empty(axes);
    for p in partials {
        total.power += &p.power;
        total.elements += p.elements;
    }
    total.finish()
}

fn gather_manifolds(
    sim: &ChannelSimulator,
    grid: &SymbolGrid,
    processor: &RdmProcessor,
    cells: &[(usize, usize)],
) -> Vec<CellManifold> {
    if cells.is_empty() {
        return Vec::new();
    }
    let layout = *sim.layout();
    let per_element: Vec<Vec<Complex64>> = (0..layout.len())
        .into_par_iter()
        .map(|e| {
            let rdm = element_rdm(sim, grid, processor, e);
            cells.iter().map(|&c| rdm.complex_map[c]).collect()
        })
        .collect();
    (0..cells.len())
        .map(|k| {
            CellManifold::new(Array2::from_shape_fn((layout.rows, layout.cols), |(p, q)| {
                per_element[p * layout.cols + q][k]
            }))
        })
        .collect()
}

/// Point cloud of one imager plus optional per-cell spectrum dumps.
#[derive(Debug, Clone)]
pub struct Imaging {
    pub algorithm: Algorithm,
    pub cloud: PointCloud4D,
    /// `(alpha, beta, csv)` per cell, filled only on request
    pub spectra: Vec<(usize, usize, String)>,
}

fn cell_estimates(
    setup: &Setup,
    algorithm: Algorithm,
    manifold: &CellManifold,
    keep_spectrum: bool,
) -> Result<(Vec<DoaEstimate>, Option<String>)> {
    match algorithm {
        Algorithm::Music => {
            let an = analyze_cell(manifold, &setup.doa)?;
            let csv = keep_spectrum.then(|| an.spectrum.to_csv());
            Ok((an.estimates, csv))
        }
        Algorithm::Fft4d => {
            let est = estimate_doas_fft(manifold, &setup.fft)?;
            let csv = if keep_spectrum {
                let s = fft_angle_spectrum(manifold, setup.fft.pad, setup.fft.spacing)?;
                Some(fft_spectrum_csv(&s))
            } else {
                None
            };
            Ok((est, csv))
        }
    }
}

fn fft_spectrum_csv(s: &crate::fft4d::AngleSpectrumFft) -> String {
    let mut out = String::from("u\\w");
    for w in &s.w_axis {
        out.push_str(&format!(",{w}"));
    }
    out.push('\n');
    for (u, row) in s.u_axis.iter().zip(s.values.rows()) {
        out.push_str(&u.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Angle estimation and reconstruction for every front-end cell.
pub fn image(
    setup: &Setup,
    front: &FrontEnd,
    algorithm: Algorithm,
    bs_position: [f64; 3],
    keep_spectra: bool,
) -> Result<Imaging> {
    let axes = front.integrated.axes;
    let per_cell: Vec<(Vec<Detection>, Option<String>)> = front
        .cells
        .par_iter()
        .zip(front.manifolds.par_iter())
        .map(|(&(alpha, beta), m)| {
            let (est, csv) = cell_estimates(setup, algorithm, m, keep_spectra)?;
            let dets = est
                .into_iter()
                .map(|e| Detection {
                    range: axes.range(alpha),
                    velocity: axes.velocity(beta),
                    angles: SteeringAngles {
                        theta: e.theta,
                        phi: e.phi,
                    },
                    alpha,
                    beta,
                    peak: e.peak,
                })
                .collect();
            Ok((dets, csv))
        })
        .collect::<Result<_>>()
        .map_err(|e: Error| e.in_stage("doa"))?;
    let mut dets = Vec::new();
    let mut spectra = Vec::new();
    for (&(a, b), (d, csv)) in front.cells.iter().zip(per_cell) {
        dets.extend(d);
        if let Some(csv) = csv {
            spectra.push((a, b, csv));
        }
    }
    let mut cloud = reconstruct(&dets, bs_position);
    cloud.sort_by_provenance();
    Ok(Imaging {
        algorithm,
        cloud,
        spectra,
    })
}

/// Result of one (algorithm, SNR) point.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub algorithm: Algorithm,
    pub snr_db: f64,
    pub rdm_cells: usize,
    pub cloud: PointCloud4D,
    pub report: DeviationReport,
}

/// Directory-safe SNR label, e.g. `snr_m20db`, `snr_2p5db`.
pub fn snr_tag(snr_db: f64) -> String {
    format!("snr_{}db", snr_db.to_string().replace('-', "m").replace('.', "p"))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    match_radius: f64,
    waveform: &'a OfdmConfig,
    virtual_array: &'a UpaLayout,
    config: &'a RunConfig,
}

/// A run in progress: resolved settings, scene and truth.
pub struct Run {
    pub config: RunConfig,
    pub setup: Setup,
    pub scene: Scene,
    pub truths: Vec<ScattererTruth>,
}

impl Run {
    pub fn prepare(cfg: &RunConfig) -> Result<Self> {
        let setup = Setup::resolve(cfg).map_err(|e| e.in_stage("config"))?;
        let scene = cfg.load_scene().map_err(|e| e.in_stage("scene"))?;
        let max_range = RdmAxes::new(&setup.ofdm).max_range();
        scene
            .check_max_range(max_range)
            .map_err(|e| e.in_stage("scene"))?;
        let truths = scatterer_truth(&scene).map_err(|e| e.in_stage("scene"))?;
        Ok(Run {
            config: cfg.clone(),
            setup,
            scene,
            truths,
        })
    }

    /// Manifest and ground truth; no-op without an output directory.
    pub fn write_header(&self) -> Result<()> {
        let Some(dir) = &self.config.out_dir else {
            return Ok(());
        };
        let manifest = Manifest {
            tool: "isac4d",
            version: env!("CARGO_PKG_VERSION"),
            seed: self.config.seed,
            match_radius: self.setup.match_radius,
            waveform: &self.setup.ofdm,
            virtual_array: &self.setup.virtual_array,
            config: &self.config,
        };
        let text = toml::to_string(&manifest)
            .map_err(|e| Error::Config(format!("manifest serialisation: {e}")))?;
        write(&dir.join("manifest.toml"), &text)?;
        write(&dir.join("truth_scene.csv"), &self.scene.to_csv())?;
        let truth_cloud = PointCloud4D {
            points: self
                .scene
                .scatterers
                .iter()
                .map(|s| crate::pointcloud::CloudPoint {
                    x: s.position[0],
                    y: s.position[1],
                    z: s.position[2],
                    v: s.velocity,
                })
                .collect(),
            provenance: vec![],
        };
        write(&dir.join("truth_cloud.csv"), &truth_cloud.to_csv())
    }

    /// Run every requested algorithm at one SNR, writing its artifacts.
    pub fn run_point(&self, snr_db: f64) -> Result<Vec<RunOutcome>> {
        let cfg = &self.config;
        let front = run_front_end(
            &self.setup,
            &self.truths,
            SnrSpec::db(snr_db),
            cfg.seed,
            cfg.phase_convention,
        )?;
        let point_dir = cfg.out_dir.as_ref().map(|d| d.join(snr_tag(snr_db)));
        if let (Some(dir), true) = (&point_dir, cfg.dump_intermediates) {
            let axes = front.integrated.axes;
            write(
                &dir.join("rdm.csv"),
                &map_to_csv(front.integrated.power.mapv(f64::sqrt).view(), &axes),
            )?;
            write(
                &dir.join("rdm_threshold.csv"),
                &map_to_csv(front.mask.threshold.mapv(f64::sqrt).view(), &axes),
            )?;
            write(
                &dir.join("rdm_detections.csv"),
                &matrix_to_csv(front.mask.detected.mapv(|d| d as u8 as f64).view()),
            )?;
        }
        if let Some(dir) = &point_dir {
            let mut cells = String::from("alpha,beta,range_m,velocity_mps\n");
            for &(a, b) in &front.cells {
                let axes = front.integrated.axes;
                cells.push_str(&format!("{a},{b},{},{}\n", axes.range(a), axes.velocity(b)));
            }
            write(&dir.join("rdm_cells.csv"), &cells)?;
        }
        let mut out = Vec::new();
        for alg in cfg.algorithm.algorithms() {
            let im = image(
                &self.setup,
                &front,
                alg,
                self.scene.bs_position,
                cfg.dump_intermediates,
            )?;
            let report = DeviationReport::evaluate(&im.cloud, &self.scene, self.setup.match_radius)
                .map_err(|e| e.in_stage("metrics"))?;
            if let Some(dir) = &point_dir {
                let d = dir.join(alg.name());
                write(&d.join("cloud.csv"), &im.cloud.to_csv())?;
                write(&d.join("cloud.ply"), &im.cloud.to_ply())?;
                write(&d.join("provenance.csv"), &im.cloud.provenance_csv())?;
                write(&d.join("metrics.txt"), &report.to_key_value())?;
                for (a, b, csv) in &im.spectra {
                    write(&d.join("spectra").join(format!("cell_{a}_{b}.csv")), csv)?;
                }
            }
            out.push(RunOutcome {
                algorithm: alg,
                snr_db,
                rdm_cells: front.cells.len(),
                cloud: im.cloud,
                report,
            });
        }
        Ok(out)
    }
}

fn metrics_csv(rows: &[(Algorithm, f64, usize, Option<DeviationReport>, Option<String>)]) -> String {
    let mut sorted: Vec<_> = rows.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n_fields = DeviationReport::csv_header().split(',').count();
    let mut out = format!(
        "algorithm,snr_db,status,rdm_cells,{},error\n",
        DeviationReport::csv_header()
    );
    for (alg, snr, cells, report, err) in sorted {
        let (status, fields) = match report {
            Some(r) => ("ok", r.csv_row()),
            None => ("failed", vec![""; n_fields].join(",")),
        };
        let err = err.as_deref().unwrap_or("").replace([',', '\n'], ";");
        out.push_str(&format!("{alg},{snr},{status},{cells},{fields},{err}\n"));
    }
    out
}

/// Run every SNR point; the first failure aborts. Writes `metrics.csv`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Vec<RunOutcome>> {
    if cfg.snr_db.is_empty() {
        return Err(Error::Config("no SNR points".into()));
    }
    let run = Run::prepare(cfg)?;
    run.write_header().map_err(|e| e.in_stage("output"))?;
    let mut outcomes = Vec::new();
    for &snr in &cfg.snr_db {
        outcomes.extend(run.run_point(snr)?);
    }
    if let Some(dir) = &cfg.out_dir {
        let rows: Vec<_> = outcomes
            .iter()
            .map(|o| (o.algorithm, o.snr_db, o.rdm_cells, Some(o.report), None))
            .collect();
        write(&dir.join("metrics.csv"), &metrics_csv(&rows)).map_err(|e| e.in_stage("output"))?;
    }
    Ok(outcomes)
}

/// One sweep row; failed points keep their error text.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub algorithm: Algorithm,
    pub snr_db: f64,
    pub rdm_cells: usize,
    pub report: Option<DeviationReport>,
    pub error: Option<String>,
}

/// Deviation versus SNR for each algorithm. Needs at least two SNR points.
/// A failing point is recorded and the sweep continues. Rows are sorted by
/// `(algorithm, snr)`; `sweep.csv` is written when an output directory is set.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    if cfg.snr_db.len() < 2 {
        return Err(Error::Config(format!(
            "a sweep needs at least two SNR points, got {}",
            cfg.snr_db.len()
        )));
    }
    let run = Run::prepare(cfg)?;
    run.write_header().map_err(|e| e.in_stage("output"))?;
    let mut rows = Vec::new();
    for &snr in &cfg.snr_db {
        match run.run_point(snr) {
            Ok(outcomes) => rows.extend(outcomes.into_iter().map(|o| SweepRow {
                algorithm: o.algorithm,
                snr_db: o.snr_db,
                rdm_cells: o.rdm_cells,
                report: Some(o.report),
                error: None,
            })),
            Err(e) => {
                log::error!("SNR {snr} dB failed: {e}");
                rows.extend(cfg.algorithm.algorithms().into_iter().map(|alg| SweepRow {
                    algorithm: alg,
                    snr_db: snr,
                    rdm_cells: 0,
                    report: None,
                    error: Some(e.to_string()),
                }));
            }
        }
    }
    rows.sort_by(|a, b| a.algorithm.cmp(&b.algorithm).then(a.snr_db.total_cmp(&b.snr_db)));
    if let Some(dir) = &cfg.out_dir {
        let table: Vec<_> = rows
            .iter()
            .map(|r| (r.algorithm, r.snr_db, r.rdm_cells, r.report, r.error.clone()))
            .collect();
        write(&dir.join("sweep.csv"), &metrics_csv(&table)).map_err(|e| e.in_stage("output"))?;
    }
    Ok(rows)
}
