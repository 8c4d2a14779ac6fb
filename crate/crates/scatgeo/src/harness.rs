//! Experiment configurations, runners and report emission.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use scatgeo_core::eikonal::{
    phase_estimates, EstimateSettings, LongRangePotential, PhaseFunction, PhaseParams,
};
use scatgeo_core::partition::{sample_cones, verify_partition, PartitionOfUnity, VerifySettings};
use scatgeo_core::{ClusterDecomposition, MassSpec, PairIndex, PartitionConstants};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    channel_decomposition, energy_filter, orthogonalize, EnergyWindow, FilterSettings, RegionParams,
};
use crate::eigen::{pair_bound_states, thresholds};
use crate::error::{param_err, Result};
use crate::grid::{gaussian, GridState};
use crate::hamiltonian::{Hamiltonian, PotentialPart};
use crate::model::ModelSpec;
use crate::modifier::{wave_operator_probe, Packet, ProbeSettings};
use crate::snapshot;

fn default_nu() -> usize {
    1
}

fn default_outer() -> f64 {
    100.0
}

fn masses_or_unit(masses: &Option<Vec<f64>>, n: usize) -> Result<MassSpec> {
    let m = masses.clone().unwrap_or_else(|| vec![1.0; n]);
    if m.len() != n {
        return Err(param_err!("expected {n} masses, got {}", m.len()));
    }
    Ok(MassSpec::with_unit_hbar(m)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionVerifyConfig {
    pub n: usize,
    #[serde(default = "default_nu")]
    pub nu: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locality_probes: Option<usize>,
    /// Explicit constants instead of the automatic selection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<PartitionConstants>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma31Config {
    pub n: usize,
    #[serde(default = "default_nu")]
    pub nu: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    pub samples: usize,
    /// Samples have `1 <= |x|^2 <= outer`.
    #[serde(default = "default_outer")]
    pub outer: f64,
}

/// Initial wavefunction of a dynamics experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Separable Gaussian in the frame coordinates.
    Gaussian {
        center: Vec<f64>,
        width: Vec<f64>,
        momentum: Vec<f64>,
    },
    /// A pair bound state; for `N = 3` tensored with a packet in the
    /// intercluster coordinate of `{pair, rest}`.
    BoundPair {
        pair: PairIndex,
        #[serde(default)]
        level: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        packet: Option<Packet>,
    },
}

impl InitialState {
    /// Decomposition whose frame the state is expressed in.
    pub fn frame_decomposition(&self, model: &ModelSpec) -> Result<ClusterDecomposition> {
        let n = model.n();
        Ok(match self {
            InitialState::BoundPair { pair, .. } if n == 3 => {
                ClusterDecomposition::from_pair(*pair, n)?
            }
            _ => ClusterDecomposition::singletons(n),
        })
    }

    pub fn build(&self, model: &ModelSpec) -> Result<GridState> {
        model.validate()?;
        let b = self.frame_decomposition(model)?;
        let frame = scatgeo_core::JacobiFrame::build(&model.mass_spec()?, &b, 1)?;
        let grid = model.grid_spec()?;
        match self {
            InitialState::Gaussian {
                center,
                width,
                momentum,
            } => gaussian(grid, frame, center, width, momentum),
            InitialState::BoundPair {
                pair,
                level,
                packet,
            } => {
                let states = pair_bound_states(model, *pair, level + 1)?;
                let bound = states
                    .get(*level)
                    .ok_or_else(|| param_err!("pair {pair} has no bound level {level}"))?;
                if model.n() == 2 {
                    let mut st = GridState::new(grid, frame, bound.state.values.clone())?;
                    st.normalize();
                    return Ok(st);
                }
                let p = packet.ok_or_else(|| param_err!("N = 3 bound pair needs a packet"))?;
                // Frame of {pair, rest}: intercluster coordinate first, then r_j - r_i.
                let m = grid.points;
                let packet1 = gaussian(
                    crate::grid::GridSpec::new(1, grid.extent, m)?,
                    scatgeo_core::JacobiFrame::build(
                        &MassSpec::with_unit_hbar(vec![1.0, 1.0])?,
                        &ClusterDecomposition::singletons(2),
                        1,
                    )?,
                    &[p.center],
                    &[p.width],
                    &[p.momentum],
                )?;
                let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
                for i in 0..m {
                    for j in 0..m {
                        values[i * m + j] = packet1.values[i] * bound.state.values[j];
                    }
                }
                let mut st = GridState::new(grid, frame, values)?;
                st.normalize();
                Ok(st)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelSpec,
    pub initial: InitialState,
    pub dt: f64,
    pub steps: usize,
    /// Row interval of the time series.
    pub record_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub window: EnergyWindow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<FilterSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelsConfig {
    pub model: ModelSpec,
    pub initial: InitialState,
    pub regions: Vec<RegionParams>,
    pub schedule: Vec<f64>,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfig>,
    /// Estimate the full three-body ground state and project it out.
    #[serde(default)]
    pub three_body: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EikonalConfig {
    pub c: f64,
    pub epsilon: f64,
    #[serde(default = "default_nu")]
    pub nu: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_shell: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_min_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<scatgeo_core::eikonal::Branch>,
}

/// One experiment, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    PartitionVerify(PartitionVerifyConfig),
    Lemma31Sample(Lemma31Config),
    Simulate(SimulateConfig),
    Channels(ChannelsConfig),
    EikonalResidual(EikonalConfig),
    WaveProbe(ProbeSettings),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::PartitionVerify(_) => "partition-verify",
            Experiment::Lemma31Sample(_) => "lemma31-sample",
            Experiment::Simulate(_) => "simulate",
            Experiment::Channels(_) => "channels",
            Experiment::EikonalResidual(_) => "eikonal-residual",
            Experiment::WaveProbe(_) => "wave-probe",
        }
    }
}

/// A complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory, overridden by the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// SHA-256 of the canonical serialization, excluding the output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// A plot-ready table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: &[f64]) {
        self.rows
            .push(row.iter().map(|v| format!("{v:e}")).collect());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Column by name, parsed back to numbers.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[i].parse().ok()).collect()
    }
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::other(e.to_string()))
}

/// The outputs of one run.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub report: Value,
    pub tables: Vec<Table>,
    pub snapshots: Vec<(f64, GridState)>,
}

/// Output selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `report.json` only.
    Json,
    /// `report.json` plus one CSV per table and any snapshots.
    Csv,
}

/// Runs the experiment and assembles the report envelope.
pub fn run(config: &ExperimentConfig) -> Result<Artifacts> {
    let (result, constants, tables, snapshots) = match &config.experiment {
        Experiment::PartitionVerify(c) => partition_verify(c, config.seed)?,
        Experiment::Lemma31Sample(c) => lemma31(c, config.seed)?,
        Experiment::Simulate(c) => simulate(c)?,
        Experiment::Channels(c) => channels(c)?,
        Experiment::EikonalResidual(c) => eikonal(c, config.seed)?,
        Experiment::WaveProbe(c) => probe(c)?,
    };
    let report = json!({
        "kind": config.experiment.kind(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": config.hash(),
        "seed": config.seed,
        "config": config.experiment,
        "constants": constants,
        "result": result,
    });
    Ok(Artifacts {
        report,
        tables,
        snapshots,
    })
}

/// Writes `report.json`, and with [`Format::Csv`] the tables and snapshots.
pub fn emit(artifacts: &Artifacts, out: &Path, format: Format) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut text = serde_json::to_string_pretty(&artifacts.report)?;
    text.push('\n');
    std::fs::write(out.join("report.json"), text)?;
    if format == Format::Csv {
        for t in &artifacts.tables {
            t.write(&out.join(format!("{}.csv", t.name)))?;
        }
        if !artifacts.snapshots.is_empty() {
            let dir = out.join("snapshots");
            std::fs::create_dir_all(&dir)?;
            for (i, (t, s)) in artifacts.snapshots.iter().enumerate() {
                snapshot::write(&dir.join(format!("state_{i:05}.bin")), s, *t)?;
            }
        }
    }
    Ok(())
}

type Outcome = (Value, Value, Vec<Table>, Vec<(f64, GridState)>);

fn partition_verify(c: &PartitionVerifyConfig, seed: u64) -> Result<Outcome> {
    let mass = masses_or_unit(&c.masses, c.n)?;
    let constants = match &c.constants {
        Some(k) => k.clone(),
        None => PartitionConstants::select(c.n)?,
    };
    let check = constants.verify();
    let pou = PartitionOfUnity::new(constants.clone(), mass, c.nu)?;
    let mut settings = VerifySettings::new(c.samples, seed);
    if let Some(f) = c.transition_fraction {
        if !(0.0..=1.0).contains(&f) {
            return Err(param_err!("transition_fraction must lie in [0, 1]"));
        }
        settings.transition_fraction = f;
    }
    if let Some(p) = c.locality_probes {
        settings.locality_probes = p;
    }
    let report = verify_partition(&pou, &settings)?;
    let mut table = Table::new(
        "samples",
        &[
            "index",
            "transition",
            "norm_sq",
            "identity_deviation",
            "restricted_deviation",
            "support_margin",
            "covered",
            "disjointness_violations",
            "max_gradient",
        ],
    );
    for r in &report.records {
        let transition = matches!(r.kind, scatgeo_core::partition::SampleKind::Transition);
        table.push(&[
            r.index as f64,
            f64::from(u8::from(transition)),
            r.norm_sq,
            r.identity_deviation,
            r.restricted_deviation,
            r.support_margin,
            f64::from(u8::from(r.covered)),
            r.disjointness_violations as f64,
            r.max_gradient.unwrap_or(f64::NAN),
        ]);
    }
    let result = json!({
        "report": report,
        "passes_1e-10": report.passes(1e-10),
    });
    let constants = json!({"selected": constants, "checks": check});
    Ok((result, constants, vec![table], Vec::new()))
}

fn lemma31(c: &Lemma31Config, seed: u64) -> Result<Outcome> {
    let mass = masses_or_unit(&c.masses, c.n)?;
    if !(c.outer > 1.0) {
        return Err(param_err!("outer radius must exceed 1"));
    }
    let constants = PartitionConstants::select(c.n)?;
    let pou = PartitionOfUnity::new(constants.clone(), mass, c.nu)?;
    let (uncovered, overlaps) = sample_cones(&pou, c.samples, seed, c.outer)?;
    let result = json!({
        "samples": c.samples,
        "uncovered": uncovered,
        "disjointness_violations": overlaps,
    });
    Ok((
        result,
        json!({"selected": constants}),
        Vec::new(),
        Vec::new(),
    ))
}

fn moments_row(st: &GridState) -> Vec<f64> {
    let (mean, cov) = st.position_moments();
    let mut row = mean;
    if st.grid.dim == 1 {
        row.push(cov[0]);
    } else {
        row.extend([cov[0], cov[3], cov[1]]);
    }
    row
}

fn simulate(c: &SimulateConfig) -> Result<Outcome> {
    if !(c.dt > 0.0) || c.record_every == 0 {
        return Err(param_err!(
            "dt must be positive and record_every at least 1"
        ));
    }
    let mut psi = c.initial.build(&c.model)?;
    let b = c.initial.frame_decomposition(&c.model)?;
    let h = Hamiltonian::new(&c.model, &b, PotentialPart::Full)?;
    let header: Vec<&str> = if psi.grid.dim == 1 {
        vec!["t", "norm", "energy", "boundary", "mean", "variance"]
    } else {
        vec![
            "t", "norm", "energy", "boundary", "mean_0", "mean_1", "var_0", "var_1", "cov_01",
        ]
    };
    let mut table = Table::new("series", &header);
    let mut snaps = Vec::new();
    let e0 = h.energy(&psi)?;
    let n0 = psi.norm();
    let mut max_norm_drift: f64 = 0.0;
    let mut max_energy_drift: f64 = 0.0;
    let mut record = |psi: &GridState, step: usize, table: &mut Table| -> Result<()> {
        let t = step as f64 * c.dt;
        let e = h.energy(psi)?;
        let n = psi.norm();
        max_norm_drift = max_norm_drift.max((n - n0).abs());
        max_energy_drift = max_energy_drift.max((e - e0).abs() / e0.abs().max(1e-300));
        let mut row = vec![t, n, e, psi.boundary_mass(0.1)];
        row.extend(moments_row(psi));
        table.push(&row);
        Ok(())
    };
    record(&psi, 0, &mut table)?;
    if c.snapshot_every.is_some() {
        snaps.push((0.0, psi.clone()));
    }
    let mut step = 0;
    while step < c.steps {
        let chunk = c.record_every.min(c.steps - step);
        h.propagate(&mut psi, c.dt, chunk)?;
        step += chunk;
        record(&psi, step, &mut table)?;
        if let Some(every) = c.snapshot_every {
            if every > 0 && step % every == 0 {
                snaps.push((step as f64 * c.dt, psi.clone()));
            }
        }
    }
    let result = json!({
        "steps": c.steps,
        "final_time": c.steps as f64 * c.dt,
        "initial_energy": e0,
        "max_norm_drift": max_norm_drift,
        "max_relative_energy_drift": max_energy_drift,
        "final_boundary_mass": psi.boundary_mass(0.1),
    });
    let constants = json!({
        "hbar": c.model.hbar,
        "grid": psi.grid,
        "frame": psi.frame.export(),
    });
    Ok((result, constants, vec![table], snaps))
}

fn channels(c: &ChannelsConfig) -> Result<Outcome> {
    let mut psi = c.initial.build(&c.model)?;
    let b = c.initial.frame_decomposition(&c.model)?;
    let h = Hamiltonian::new(&c.model, &b, PotentialPart::Full)?;
    let thr = thresholds(&c.model, c.three_body)?;
    let mut filter_info = Value::Null;
    if let Some(f) = &c.filter {
        let out = energy_filter(
            &psi,
            &h,
            &f.window,
            &thr.values,
            f.settings.unwrap_or_default(),
        )?;
        filter_info = json!({
            "degree": out.degree,
            "tail": out.tail,
            "retained_norm_sq": out.state.norm_sq() / psi.norm_sq(),
        });
        psi = out.state;
    }
    if thr.full_ground.is_some() {
        let (_, ground, _) = h.imaginary_time(&psi, 0.01, 2_000_000, 1e-12)?;
        orthogonalize(&mut psi, &[ground]);
    }
    let report = channel_decomposition(&psi, &h, &c.regions, &c.schedule, c.dt)?;
    let mut header = vec!["t".to_string()];
    header.extend(report.decompositions.iter().map(|d| format!("occ {d}")));
    header.extend(["sum", "overlap", "residual", "norm_sq", "boundary"].map(String::from));
    let mut table = Table {
        name: "channels".into(),
        header,
        rows: Vec::new(),
    };
    for r in &report.rows {
        let mut row = vec![r.t];
        row.extend(&r.occupations);
        row.extend([r.sum, r.overlap, r.residual, r.norm_sq, r.boundary]);
        table.push(&row);
    }
    let last = report.last();
    let fractions: Vec<Value> = report
        .decompositions
        .iter()
        .zip(&last.occupations)
        .map(|(d, o)| json!({"b": d, "fraction": o / last.norm_sq}))
        .collect();
    let result = json!({
        "final": last,
        "fractions": fractions,
        "filter": filter_info,
        "rows": report.rows.len(),
    });
    let constants = json!({"thresholds": thr, "grid": psi.grid, "hbar": c.model.hbar});
    Ok((result, constants, vec![table], Vec::new()))
}

fn eikonal(c: &EikonalConfig, seed: u64) -> Result<Outcome> {
    let pot = LongRangePotential::new(c.c, c.epsilon)?;
    let params = c.phase.unwrap_or_else(|| PhaseParams::calibrated(&pot));
    let pf = PhaseFunction::build(pot, params, c.nu)?;
    let mut s = EstimateSettings {
        seed,
        ..EstimateSettings::default()
    };
    if let Some(v) = c.samples_per_shell {
        s.samples_per_shell = v;
    }
    if let Some(v) = c.z_min_factor {
        s.z_min_factor = v;
    }
    if let Some(v) = c.z_max_factor {
        s.z_max_factor = v;
    }
    if let Some(v) = c.xi_max {
        s.xi_max = v;
    }
    if let Some(v) = c.branch {
        s.branch = v;
    }
    let report = phase_estimates(&pf, &s)?;
    let mut table = Table::new(
        "shells",
        &[
            "lo",
            "hi",
            "center",
            "sup_correction",
            "sup_correction_grad",
            "sup_residual",
            "sup_eikonal",
            "sup_transport",
        ],
    );
    for sh in &report.shells {
        table.push(&[
            sh.lo,
            sh.hi,
            sh.center,
            sh.sup_correction,
            sh.sup_correction_grad,
            sh.sup_residual,
            sh.sup_eikonal,
            sh.sup_transport,
        ]);
    }
    let constants = json!({"phase": params, "potential": pot});
    Ok((json!(report), constants, vec![table], Vec::new()))
}

fn probe(c: &ProbeSettings) -> Result<Outcome> {
    let report = wave_operator_probe(c)?;
    let mut table = Table::new("increments", &["t_from", "t_to", "modified", "unmodified"]);
    for (k, (a, b)) in report
        .modified
        .increments
        .iter()
        .zip(&report.unmodified.increments)
        .enumerate()
    {
        table.push(&[report.schedule[k], report.schedule[k + 1], *a, *b]);
    }
    let constants = json!({"phase": report.phase, "sigma": report.sigma});
    Ok((json!(report), constants, vec![table], Vec::new()))
}
