//! Configuration-driven experiment runs.
//!
//! [`run`] validates an [`ExperimentConfig`], writes `manifest.json` into the
//! output directory and only then computes and writes the result tables.
//! Grid points run in parallel on the global rayon pool; tables follow grid
//! order and every Monte Carlo job draws from its own seed, so outputs do not
//! depend on the worker count.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{apply_channels, decohered_state, symmetry_table, ChannelSpec, ErrorKind, Support};
use crate::classical::{
    critical_rate_decoupled, critical_rate_n2, cut_bond_model, ising_model, single_copy_model,
};
use crate::cluster::PauliExpansion;
use crate::dense::{dense_symmetry_table, DenseMatrix, MAX_DENSE_QUBITS};
use crate::diagnostics::{
    diagnose, ln_replica_trace_classical, ln_replica_trace_spectral, relative_entropy, renyi_negativity,
    strange_correlator, DiagnoseOptions, DiagnosticsReport, Mode, Value,
};
use crate::error::{Error, Result};
use crate::lattice::{BoundaryKind, EdgeKind, LiebLattice};
use crate::mc::{locate_critical_point, CriticalEstimate, FreeEnergyMethod, LambdaNode, Schedule};

/// Largest periodic lattice accepted by the Monte Carlo runs.
pub const MAX_MC_SIZE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    OracleSuite,
    Figure3,
    CriticalScan,
    DiagnosticsScan,
    SymmetryTable,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::OracleSuite => "oracle-suite",
            Self::Figure3 => "figure3",
            Self::CriticalScan => "critical-scan",
            Self::DiagnosticsScan => "diagnostics-scan",
            Self::SymmetryTable => "symmetry-table",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Second Rényi moment, coupling `J`.
    Replica2,
    /// Flavor-decoupled limit, coupling `J/2`.
    Decoupled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    Exact,
    Classical,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub size: usize,
    #[serde(default = "periodic")]
    pub boundary: BoundaryKind,
}

impl LatticeSpec {
    pub fn build(&self) -> Result<LiebLattice> {
        LiebLattice::new(self.size, self.boundary)
    }
}

/// A channel placement; the rate comes from the p-grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub kind: ErrorKind,
    #[serde(default = "all_support")]
    pub support: Support,
}

impl Placement {
    pub fn spec(&self, rate: f64) -> Result<ChannelSpec> {
        ChannelSpec::new(self.kind, rate, self.support.clone())
    }

    pub fn label(&self) -> String {
        let kind = match self.kind {
            ErrorKind::BitFlip => "bit-flip",
            ErrorKind::Phase => "phase",
        };
        let support = match &self.support {
            Support::All => "all",
            Support::SublatticeA => "sublattice-a",
            Support::SublatticeB => "sublattice-b",
            Support::Qubits(_) => "qubits",
        };
        format!("{kind}:{support}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "oracle_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "oracle_replicas")]
    pub replica_indices: Vec<usize>,
    #[serde(default = "oracle_tolerance")]
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            sizes: oracle_sizes(),
            replica_indices: oracle_replicas(),
            tolerance: oracle_tolerance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure3Config {
    /// Side lengths of the square loops.
    #[serde(default = "figure3_loops")]
    pub loops: Vec<usize>,
    #[serde(default)]
    pub method: FreeEnergyMethod,
}

impl Default for Figure3Config {
    fn default() -> Self {
        Self {
            loops: figure3_loops(),
            method: FreeEnergyMethod::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalConfig {
    #[serde(default = "critical_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "replica2")]
    pub family: Family,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        Self {
            sizes: critical_sizes(),
            family: Family::Replica2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default = "exact_mode")]
    pub mode: ModeKind,
    #[serde(default = "negativity_index")]
    pub negativity_index: usize,
    #[serde(default = "loop_sides")]
    pub loop_sides: Vec<usize>,
    /// First column of `M` and of `R`.
    #[serde(default = "cuts")]
    pub cuts: (usize, usize),
    #[serde(default = "critical_rate_n2")]
    pub p_c: f64,
    #[serde(default = "critical_band")]
    pub critical_band: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self {
            mode: ModeKind::Exact,
            negativity_index: negativity_index(),
            loop_sides: loop_sides(),
            cuts: cuts(),
            p_c: critical_rate_n2(),
            critical_band: critical_band(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `results/<kind>` when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub lattice: Option<LatticeSpec>,
    /// Bit-flip rates.
    #[serde(default)]
    pub p_grid: Vec<f64>,
    /// Phase-error rates.
    #[serde(default = "zero_grid")]
    pub p_z_grid: Vec<f64>,
    #[serde(default = "replica_index")]
    pub replica_index: usize,
    #[serde(default)]
    pub schedule: Option<Schedule>,
    /// Channel placements of the symmetry table.
    #[serde(default = "placements")]
    pub placements: Vec<Placement>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub figure3: Figure3Config,
    #[serde(default)]
    pub critical: CriticalConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
}

fn periodic() -> BoundaryKind {
    BoundaryKind::Periodic
}
fn all_support() -> Support {
    Support::All
}
fn oracle_sizes() -> Vec<usize> {
    vec![2]
}
fn oracle_replicas() -> Vec<usize> {
    vec![2, 3, 4]
}
fn oracle_tolerance() -> f64 {
    1e-10
}
fn figure3_loops() -> Vec<usize> {
    vec![6, 10]
}
fn critical_sizes() -> Vec<usize> {
    vec![16, 24, 32]
}
fn replica2() -> Family {
    Family::Replica2
}
fn exact_mode() -> ModeKind {
    ModeKind::Exact
}
fn negativity_index() -> usize {
    4
}
fn loop_sides() -> Vec<usize> {
    vec![1, 2]
}
fn cuts() -> (usize, usize) {
    (1, 2)
}
fn critical_band() -> f64 {
    0.03
}
fn zero_grid() -> Vec<f64> {
    vec![0.0]
}
fn replica_index() -> usize {
    2
}
fn placements() -> Vec<Placement> {
    vec![
        Placement {
            kind: ErrorKind::BitFlip,
            support: Support::All,
        },
        Placement {
            kind: ErrorKind::Phase,
            support: Support::SublatticeA,
        },
        Placement {
            kind: ErrorKind::Phase,
            support: Support::SublatticeB,
        },
    ]
}

impl ExperimentConfig {
    /// Built-in configuration of each kind.
    pub fn preset(kind: ExperimentKind) -> Self {
        let mut c = Self {
            kind,
            seed: 1,
            output: None,
            lattice: None,
            p_grid: Vec::new(),
            p_z_grid: zero_grid(),
            replica_index: replica_index(),
            schedule: None,
            placements: placements(),
            oracle: OracleConfig::default(),
            figure3: Figure3Config::default(),
            critical: CriticalConfig::default(),
            diagnose: DiagnoseConfig::default(),
        };
        match kind {
            ExperimentKind::OracleSuite => {
                c.p_grid = vec![0.0, 0.05, 0.1782, 0.28, 0.45];
                c.p_z_grid = vec![0.0, 0.1];
            }
            ExperimentKind::Figure3 => {
                c.lattice = Some(LatticeSpec {
                    size: 20,
                    boundary: BoundaryKind::Periodic,
                });
                c.p_grid = vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];
                c.schedule = Some(Schedule::new(2_000, 100_000, crate::mc::Method::Hybrid));
            }
            ExperimentKind::CriticalScan => {
                c.p_grid = vec![0.16, 0.165, 0.17, 0.175, 0.18, 0.185, 0.19, 0.195, 0.2];
                c.schedule = Some(Schedule::new(1_000, 20_000, crate::mc::Method::Wolff));
            }
            ExperimentKind::DiagnosticsScan => {
                c.lattice = Some(LatticeSpec {
                    size: 3,
                    boundary: BoundaryKind::Open,
                });
                c.p_grid = vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4];
            }
            ExperimentKind::SymmetryTable => {
                c.lattice = Some(LatticeSpec {
                    size: 2,
                    boundary: BoundaryKind::Periodic,
                });
                c.p_grid = vec![0.1];
            }
        }
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| Path::new("results").join(self.kind.name()))
    }

    fn lattice_spec(&self) -> Result<&LatticeSpec> {
        self.lattice
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} needs a [lattice] table", self.kind.name())))
    }

    fn schedule(&self) -> Result<&Schedule> {
        self.schedule
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{} needs a [schedule] table", self.kind.name())))
    }

    /// Everything [`run`] checks before touching the file system.
    pub fn validate(&self) -> Result<()> {
        if self.p_grid.is_empty() {
            return Err(Error::Config("empty p_grid".into()));
        }
        if self.p_z_grid.is_empty() {
            return Err(Error::Config("empty p_z_grid".into()));
        }
        for &p in self.p_grid.iter().chain(&self.p_z_grid) {
            if !(0.0..0.5).contains(&p) {
                return Err(Error::Rate(p));
            }
        }
        if self.replica_index < 2 {
            return Err(Error::Config(format!("replica_index {} < 2", self.replica_index)));
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        match self.kind {
            ExperimentKind::OracleSuite => {
                let o = &self.oracle;
                if o.sizes.is_empty() || o.replica_indices.is_empty() {
                    return Err(Error::Config("oracle sizes and replica indices must be non-empty".into()));
                }
                if let Some(&s) = o.sizes.iter().find(|&&s| !(2..=3).contains(&s)) {
                    return Err(Error::Budget {
                        what: "oracle lattice size",
                        needed: s,
                        limit: 3,
                    });
                }
                if let Some(&n) = o.replica_indices.iter().find(|&&n| !(2..=4).contains(&n)) {
                    return Err(Error::Config(format!("oracle replica index {n} outside 2..=4")));
                }
                if !(o.tolerance > 0.0) {
                    return Err(Error::Config("oracle tolerance must be positive".into()));
                }
            }
            ExperimentKind::Figure3 => {
                self.schedule()?;
                let l = self.lattice_spec()?;
                if l.boundary != BoundaryKind::Periodic {
                    return Err(Error::Config("figure3 needs a periodic lattice".into()));
                }
                check_mc_size(l.size)?;
                if self.figure3.loops.is_empty() {
                    return Err(Error::Config("figure3 needs at least one loop".into()));
                }
                if let Some(&s) = self.figure3.loops.iter().find(|&&s| s == 0 || s >= l.size) {
                    return Err(Error::Config(format!("loop side {s} does not fit on {}x{}", l.size, l.size)));
                }
                if let FreeEnergyMethod::LambdaIntegration { nodes } = self.figure3.method {
                    if nodes == 0 {
                        return Err(Error::Config("zero integration nodes".into()));
                    }
                }
            }
            ExperimentKind::CriticalScan => {
                self.schedule()?;
                let c = &self.critical;
                if c.sizes.len() < 3 {
                    return Err(Error::Config("critical scan needs at least three sizes".into()));
                }
                for &s in &c.sizes {
                    check_mc_size(s)?;
                }
                if self.p_grid.len() < 2 || self.p_grid.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("critical scan needs an increasing p_grid".into()));
                }
            }
            ExperimentKind::DiagnosticsScan => {
                let l = self.lattice_spec()?;
                let d = &self.diagnose;
                if d.mode == ModeKind::MonteCarlo {
                    self.schedule()?;
                    check_mc_size(l.size)?;
                } else if l.size > 3 {
                    return Err(Error::Budget {
                        what: "oracle diagnostics lattice size",
                        needed: l.size,
                        limit: 3,
                    });
                }
                if l.size < 3 {
                    return Err(Error::Config("diagnostics need a lattice of size 3 or more".into()));
                }
                if d.negativity_index < 2 || d.negativity_index % 2 == 1 {
                    return Err(Error::Config("negativity index must be even and at least 2".into()));
                }
                if let Some(&s) = d.loop_sides.iter().find(|&&s| s == 0 || s >= l.size) {
                    return Err(Error::Config(format!("loop side {s} does not fit on {}x{}", l.size, l.size)));
                }
                let (a, b) = d.cuts;
                if a == 0 || b <= a || b >= l.size {
                    return Err(Error::Config(format!("cuts ({a}, {b}) do not split size {}", l.size)));
                }
            }
            ExperimentKind::SymmetryTable => {
                let l = self.lattice_spec()?.build()?;
                if self.placements.is_empty() {
                    return Err(Error::Config("no channel placements".into()));
                }
                for p in &self.placements {
                    p.spec(self.p_grid[0])?.qubits(&l)?;
                }
            }
        }
        Ok(())
    }
}

fn check_mc_size(size: usize) -> Result<()> {
    if !(3..=MAX_MC_SIZE).contains(&size) {
        return Err(Error::Budget {
            what: "Monte Carlo lattice size",
            needed: size,
            limit: MAX_MC_SIZE,
        });
    }
    Ok(())
}

/// Seed of job `j`; distinct jobs get unrelated seeds.
pub fn job_seed(seed: u64, j: u64) -> u64 {
    seed.wrapping_add((j + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn fx(v: f64) -> String {
    format!("{v:.10}")
}

// ---------------------------------------------------------------- manifest

#[derive(Serialize)]
struct Manifest<'a> {
    package: &'static str,
    version: &'static str,
    kind: &'static str,
    seeds: Seeds,
    outputs: Vec<String>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct Seeds {
    base: u64,
    /// How job seeds derive from the base seed.
    derivation: &'static str,
}

fn planned_outputs(c: &ExperimentConfig) -> Vec<String> {
    match c.kind {
        ExperimentKind::OracleSuite => vec!["oracle.csv".into()],
        ExperimentKind::Figure3 => {
            let mut v: Vec<String> = c.figure3.loops.iter().map(|s| format!("figure3_loop{s}.csv")).collect();
            v.push("figure3_lambda.csv".into());
            v
        }
        ExperimentKind::CriticalScan => vec!["binder.csv".into(), "critical.csv".into(), "critical.json".into()],
        ExperimentKind::DiagnosticsScan => vec!["diagnostics.csv".into(), "diagnostics.json".into()],
        ExperimentKind::SymmetryTable => vec!["symmetry.csv".into()],
    }
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub kind: ExperimentKind,
    pub output: PathBuf,
    pub files: Vec<PathBuf>,
    /// Gate failures (oracle suite and symmetry table).
    pub failures: Vec<String>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Validates `config`, writes the manifest, then runs the experiment.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let out = config.output_dir();
    fs::create_dir_all(&out)?;
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind: config.kind.name(),
        seeds: Seeds {
            base: config.seed,
            derivation: "job j uses base + (j + 1) * 0x9e3779b97f4a7c15 (wrapping); chains within a job use ChaCha8 streams",
        },
        outputs: planned_outputs(config),
        config,
    };
    fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let mut summary = RunSummary {
        kind: config.kind,
        output: out.clone(),
        files: vec![out.join(MANIFEST)],
        failures: Vec::new(),
    };
    match config.kind {
        ExperimentKind::OracleSuite => run_oracle(config, &out, &mut summary)?,
        ExperimentKind::Figure3 => run_figure3(config, &out, &mut summary)?,
        ExperimentKind::CriticalScan => run_critical(config, &out, &mut summary)?,
        ExperimentKind::DiagnosticsScan => run_diagnostics(config, &out, &mut summary)?,
        ExperimentKind::SymmetryTable => run_symmetry(config, &out, &mut summary)?,
    }
    Ok(summary)
}

fn write_table(summary: &mut RunSummary, path: PathBuf, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(&path, text)?;
    summary.files.push(path);
    Ok(())
}

// ---------------------------------------------------------------- oracle suite

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleRow {
    pub identity: &'static str,
    pub key: String,
    pub lattice: String,
    pub p_x: f64,
    pub p_z: f64,
    pub quantum: f64,
    pub classical: f64,
    pub rel_err: f64,
    pub pass: bool,
}

impl OracleRow {
    pub const CSV_HEADER: &'static str = "identity,key,lattice,p_x,p_z,quantum,classical,rel_err,pass";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3e},{}",
            self.identity,
            self.key,
            self.lattice,
            fx(self.p_x),
            fx(self.p_z),
            fx(self.quantum),
            fx(self.classical),
            self.rel_err,
            self.pass
        )
    }
}

/// How two sides of an identity are compared.
#[derive(Clone, Copy)]
enum Scale {
    /// Positive quantities: `|a - b| / max(|a|, |b|)`.
    Relative,
    /// Logarithms, which can vanish: `|a - b| / max(|a|, |b|, 1)`.
    Log,
}

fn compare(a: f64, b: f64, scale: Scale) -> f64 {
    if a == b {
        return 0.0;
    }
    let floor = match scale {
        Scale::Relative => 0.0,
        Scale::Log => 1.0,
    };
    let d = (a - b).abs() / a.abs().max(b.abs()).max(floor);
    if d.is_nan() {
        f64::INFINITY
    } else {
        d
    }
}

fn lattice_label(l: &LiebLattice) -> String {
    let b = match l.boundary_kind() {
        BoundaryKind::Periodic => "periodic",
        BoundaryKind::Open => "open",
    };
    format!("{b}{}", l.size())
}

struct Point<'a> {
    lattice: &'a LiebLattice,
    p_x: f64,
    p_z: f64,
    tol: f64,
}

impl Point<'_> {
    fn row(&self, identity: &'static str, key: String, q: f64, c: f64, scale: Scale) -> OracleRow {
        let rel_err = compare(q, c, scale);
        OracleRow {
            identity,
            key,
            lattice: lattice_label(self.lattice),
            p_x: self.p_x,
            p_z: self.p_z,
            quantum: q,
            classical: c,
            rel_err,
            pass: rel_err <= self.tol,
        }
    }

    fn value_row(&self, identity: &'static str, key: String, q: Value<f64>, c: Value<f64>) -> OracleRow {
        match (q.divergent, c.divergent) {
            (true, true) => self.row(identity, key, f64::INFINITY, f64::INFINITY, Scale::Log),
            (true, false) => self.row(identity, key, f64::INFINITY, c.value, Scale::Log),
            (false, true) => self.row(identity, key, q.value, f64::INFINITY, Scale::Log),
            _ => self.row(identity, key, q.value, c.value, Scale::Log),
        }
    }
}

/// Largest classical model the oracle suite enumerates.
pub const ORACLE_SPIN_LIMIT: usize = 25;

/// Whether an `n`-replica model over `sites` fits [`ORACLE_SPIN_LIMIT`].
fn fits(sites: usize, n: usize) -> bool {
    (n - 1) * sites <= ORACLE_SPIN_LIMIT
}

/// Qubits before column (or row) `cut` of an open lattice. An edge goes with
/// its left (upper) endpoint, a leg with its corner.
fn split_mask(l: &LiebLattice, cut: usize, columns: bool) -> Vec<bool> {
    let n = l.size();
    let pick = |(r, c): (usize, usize)| if columns { c } else { r };
    let mut mask = vec![false; l.num_qubits()];
    for v in 0..l.num_vertices() {
        mask[l.vertex_qubit(v)] = pick(l.coords(v)) < cut;
    }
    for (e, edge) in l.edges().iter().enumerate() {
        let at = match edge.kind {
            EdgeKind::Horizontal { row, col } | EdgeKind::Vertical { row, col } => (row, col),
            EdgeKind::Leg { corner } => (corner / n, corner % n),
        };
        mask[l.edge_qubit(e)] = pick(at) < cut;
    }
    mask
}

/// The top-left vertex qubit alone.
fn corner_mask(l: &LiebLattice) -> Vec<bool> {
    let mut mask = vec![false; l.num_qubits()];
    mask[l.vertex_qubit(l.vertex(0, 0))] = true;
    mask
}

fn oracle_point(
    lattice: &LiebLattice,
    p_x: f64,
    p_z: f64,
    replicas: &[usize],
    tol: f64,
) -> Result<Vec<OracleRow>> {
    let pt = Point {
        lattice,
        p_x,
        p_z,
        tol,
    };
    let state = decohered_state::<f64>(lattice, p_x, p_z)?;
    let mut rows = Vec::new();
    rows.push(pt.row(
        "purity",
        "expansion".into(),
        state.purity()?,
        ln_replica_trace_classical(&state, 2)?.exp(),
        Scale::Relative,
    ));
    let widest = lattice.num_vertices().max(lattice.num_edges());
    for &n in replicas.iter().filter(|&&n| fits(widest, n)) {
        rows.push(pt.row(
            "replica-trace",
            format!("n={n}"),
            ln_replica_trace_spectral(&state, n)?.exp(),
            ln_replica_trace_classical(&state, n)?.exp(),
            Scale::Relative,
        ));
    }
    if lattice.is_periodic() {
        let n = lattice.size();
        for side in 1..n {
            let path = lattice.rectangular_loop((0, 0), side, side)?;
            let q = strange_correlator(&state, &path, Mode::Exact)?;
            let c = strange_correlator(&state, &path, Mode::Classical)?;
            rows.push(pt.value_row("strange-correlator", format!("loop={side}x{side}"), q.ln_c, c.ln_c));
        }
        return Ok(rows);
    }
    let u = lattice.vertex(0, 0);
    for &n in replicas.iter().filter(|&&n| fits(lattice.num_vertices(), n)) {
        for &u2 in lattice.boundary_vertices().iter().filter(|&&v| v != u) {
            let q = relative_entropy(&state, u, u2, n, Mode::Exact)?;
            let c = relative_entropy(&state, u, u2, n, Mode::Classical)?;
            rows.push(pt.value_row("relative-entropy", format!("n={n};u={u};u2={u2}"), q, c));
        }
    }
    // bit flips on edges and phase errors on vertices keep the gauge sector
    // error free
    let clean = apply_channels(
        &PauliExpansion::<f64>::pure(lattice),
        &[
            ChannelSpec::new(ErrorKind::BitFlip, p_x, Support::SublatticeB)?,
            ChannelSpec::new(ErrorKind::Phase, p_z, Support::SublatticeA)?,
        ],
    )?;
    let masks = [
        ("cols<1", split_mask(lattice, 1, true)),
        ("rows<1", split_mask(lattice, 1, false)),
        ("corner", corner_mask(lattice)),
    ];
    for m in [4, 6].into_iter().filter(|&m| fits(lattice.num_vertices(), m)) {
        for (name, mask) in &masks {
            let q = renyi_negativity(&clean, mask, m, Mode::Exact)?;
            let c = renyi_negativity(&clean, mask, m, Mode::Classical)?;
            rows.push(pt.value_row("negativity", format!("m={m};region={name}"), q, c));
        }
    }
    Ok(rows)
}

/// Dense-matrix purity against the classical replica sum.
fn dense_purity_rows(lattice: &LiebLattice, grid: &[(f64, f64)], tol: f64) -> Result<Vec<OracleRow>> {
    let pure = DenseMatrix::<f64>::stabilizer_projector(lattice)?;
    grid.iter()
        .map(|&(p_x, p_z)| {
            let rho = pure
                .apply_kraus(&ChannelSpec::bit_flip(p_x)?, lattice)?
                .apply_kraus(&ChannelSpec::phase(p_z)?, lattice)?;
            let state = decohered_state::<f64>(lattice, p_x, p_z)?;
            let pt = Point {
                lattice,
                p_x,
                p_z,
                tol,
            };
            Ok(pt.row(
                "purity",
                "dense".into(),
                rho.purity().re,
                ln_replica_trace_classical(&state, 2)?.exp(),
                Scale::Relative,
            ))
        })
        .collect()
}

/// Every identity on every lattice of `sizes` (open and periodic) over the
/// grid, in grid order.
pub fn oracle_suite(
    sizes: &[usize],
    p_grid: &[f64],
    p_z_grid: &[f64],
    replicas: &[usize],
    tol: f64,
) -> Result<Vec<OracleRow>> {
    let grid: Vec<(f64, f64)> = p_grid
        .iter()
        .flat_map(|&x| p_z_grid.iter().map(move |&z| (x, z)))
        .collect();
    let mut lattices = Vec::new();
    for &s in sizes {
        lattices.push(LiebLattice::open(s)?);
        lattices.push(LiebLattice::periodic(s)?);
    }
    let mut rows = Vec::new();
    for l in &lattices {
        if l.num_qubits() <= MAX_DENSE_QUBITS {
            rows.extend(dense_purity_rows(l, &grid, tol)?);
        }
        let per_point = grid
            .par_iter()
            .map(|&(x, z)| oracle_point(l, x, z, replicas, tol))
            .collect::<Result<Vec<_>>>()?;
        rows.extend(per_point.into_iter().flatten());
    }
    Ok(rows)
}

fn run_oracle(c: &ExperimentConfig, out: &Path, summary: &mut RunSummary) -> Result<()> {
    let o = &c.oracle;
    let rows = oracle_suite(&o.sizes, &c.p_grid, &c.p_z_grid, &o.replica_indices, o.tolerance)?;
    summary.failures.extend(rows.iter().filter(|r| !r.pass).map(|r| {
        format!(
            "{} [{}] on {} at p_x={} p_z={}: rel_err {:.3e}",
            r.identity, r.key, r.lattice, r.p_x, r.p_z, r.rel_err
        )
    }));
    let text: Vec<String> = rows.iter().map(OracleRow::csv).collect();
    write_table(summary, out.join("oracle.csv"), OracleRow::CSV_HEADER, &text)
}

// ---------------------------------------------------------------- figure 3

#[derive(Clone, Debug, Serialize)]
pub struct Figure3Point {
    pub size: usize,
    pub side: usize,
    pub p_x: f64,
    /// `F_cut - F` of the single-copy model with symmetric bond weights.
    pub delta_f: f64,
    pub sigma: f64,
    pub nodes: Vec<LambdaNode<f64>>,
}

/// Free-energy excess of cutting the bonds crossed by a `side x side` loop
/// on the `size x size` torus with bit flips at rate `p_x`.
pub fn figure3_point(
    size: usize,
    side: usize,
    p_x: f64,
    method: FreeEnergyMethod,
    schedule: &Schedule,
    seed: u64,
) -> Result<Figure3Point> {
    let l = LiebLattice::periodic(size)?;
    let state = decohered_state::<f64>(&l, p_x, 0.0)?;
    let model = single_copy_model(&state)?.symmetric_offsets()?;
    let path = l.rectangular_loop((0, 0), side, side)?;
    let cut = cut_bond_model(&model, &path);
    let r = crate::mc::free_energy_difference(&model, &cut, method, schedule, seed)?;
    Ok(Figure3Point {
        size,
        side,
        p_x,
        delta_f: r.estimate.value,
        sigma: r.estimate.standard_error,
        nodes: r.nodes,
    })
}

fn run_figure3(c: &ExperimentConfig, out: &Path, summary: &mut RunSummary) -> Result<()> {
    let size = c.lattice_spec()?.size;
    let schedule = *c.schedule()?;
    let jobs: Vec<(usize, f64)> = c
        .figure3
        .loops
        .iter()
        .flat_map(|&s| c.p_grid.iter().map(move |&p| (s, p)))
        .collect();
    let points = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(side, p))| figure3_point(size, side, p, c.figure3.method, &schedule, job_seed(c.seed, j as u64)))
        .collect::<Result<Vec<_>>>()?;
    for &side in &c.figure3.loops {
        let rows: Vec<String> = points
            .iter()
            .filter(|p| p.side == side)
            .map(|p| format!("{},{},{}", fx(p.p_x), fx(p.delta_f), fx(p.sigma)))
            .collect();
        write_table(summary, out.join(format!("figure3_loop{side}.csv")), "p_x,delta_f,sigma", &rows)?;
    }
    let audit: Vec<String> = points
        .iter()
        .flat_map(|p| {
            p.nodes.iter().map(move |n| {
                format!(
                    "{},{},{},{},{},{},{}",
                    p.side,
                    fx(p.p_x),
                    fx(n.lambda),
                    fx(n.weight),
                    fx(n.mean),
                    fx(n.standard_error),
                    n.stream
                )
            })
        })
        .collect();
    write_table(
        summary,
        out.join("figure3_lambda.csv"),
        "side,p_x,lambda,weight,mean,standard_error,stream",
        &audit,
    )
}

// ---------------------------------------------------------------- critical scan

/// Vertex model of `family` on the `size x size` torus with bit flips at
/// rate `p` and no field.
pub fn family_model(family: Family, size: usize, p: f64) -> Result<crate::classical::SpinModel<f64>> {
    let l = LiebLattice::periodic(size)?;
    let state = decohered_state::<f64>(&l, p, 0.0)?;
    match family {
        Family::Replica2 => ising_model(&state, 2),
        Family::Decoupled => single_copy_model(&state),
    }
}

pub fn expected_critical_rate(family: Family) -> f64 {
    match family {
        Family::Replica2 => critical_rate_n2(),
        Family::Decoupled => critical_rate_decoupled(),
    }
}

pub fn critical_scan(
    family: Family,
    sizes: &[usize],
    p_grid: &[f64],
    schedule: &Schedule,
    seed: u64,
) -> Result<CriticalEstimate> {
    locate_critical_point(|s, p| family_model(family, s, p), sizes, p_grid, schedule, seed)
}

fn run_critical(c: &ExperimentConfig, out: &Path, summary: &mut RunSummary) -> Result<()> {
    let cr = &c.critical;
    let est = critical_scan(cr.family, &cr.sizes, &c.p_grid, c.schedule()?, c.seed)?;
    let binder: Vec<String> = est
        .points
        .iter()
        .map(|b| {
            format!(
                "{},{},{},{},{},{}",
                b.size,
                fx(b.p),
                fx(b.binder),
                fx(b.standard_error),
                fx(b.m2),
                b.stream
            )
        })
        .collect();
    write_table(summary, out.join("binder.csv"), "size,p,binder,standard_error,m2,stream", &binder)?;
    let mut crossings: Vec<String> = est
        .pair_crossings
        .iter()
        .map(|&(a, b, p)| format!("{a},{b},{},", fx(p)))
        .collect();
    crossings.push(format!("all,all,{},{}", fx(est.p_c), fx(est.standard_error)));
    write_table(summary, out.join("critical.csv"), "size_a,size_b,p_c,standard_error", &crossings)?;
    #[derive(Serialize)]
    struct Report<'a> {
        family: Family,
        expected: f64,
        estimate: &'a CriticalEstimate,
    }
    let report = Report {
        family: cr.family,
        expected: expected_critical_rate(cr.family),
        estimate: &est,
    };
    let path = out.join("critical.json");
    fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
    summary.files.push(path);
    Ok(())
}

// ---------------------------------------------------------------- diagnostics scan

fn run_diagnostics(c: &ExperimentConfig, out: &Path, summary: &mut RunSummary) -> Result<()> {
    let d = &c.diagnose;
    let opts = DiagnoseOptions {
        size: c.lattice_spec()?.size,
        replica_index: c.replica_index,
        negativity_index: d.negativity_index,
        loop_sides: d.loop_sides.clone(),
        cuts: d.cuts,
        p_c: d.p_c,
        critical_band: d.critical_band,
    };
    let jobs: Vec<(f64, f64)> = c
        .p_grid
        .iter()
        .flat_map(|&x| c.p_z_grid.iter().map(move |&z| (x, z)))
        .collect();
    let schedule = c.schedule;
    let reports = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(x, z))| {
            let mode = match d.mode {
                ModeKind::Exact => Mode::Exact,
                ModeKind::Classical => Mode::Classical,
                ModeKind::MonteCarlo => Mode::MonteCarlo {
                    schedule: schedule.expect("validated"),
                    seed: job_seed(c.seed, j as u64),
                },
            };
            diagnose(x, z, &opts, mode)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<String> = reports.iter().flat_map(DiagnosticsReport::csv_rows).collect();
    write_table(summary, out.join("diagnostics.csv"), DiagnosticsReport::<f64>::CSV_HEADER, &rows)?;
    let path = out.join("diagnostics.json");
    fs::write(&path, serde_json::to_string_pretty(&reports)? + "\n")?;
    summary.files.push(path);
    Ok(())
}

// ---------------------------------------------------------------- symmetry table

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryRow {
    pub placement: String,
    pub p: f64,
    pub kraus: crate::channels::SymmetryVerdict,
    /// Dense-matrix verdict when the lattice is small enough.
    pub dense: Option<crate::channels::SymmetryVerdict>,
}

impl SymmetryRow {
    pub fn agrees(&self) -> bool {
        self.dense.is_none_or(|d| d == self.kraus)
    }
}

pub fn symmetry_rows(lattice: &LiebLattice, placements: &[Placement], p_grid: &[f64]) -> Result<Vec<SymmetryRow>> {
    let dense = lattice.num_qubits() <= MAX_DENSE_QUBITS;
    let mut rows = Vec::new();
    for &p in p_grid {
        for pl in placements {
            let specs = [pl.spec(p)?];
            rows.push(SymmetryRow {
                placement: pl.label(),
                p,
                kraus: symmetry_table(&specs, lattice)?,
                dense: if dense {
                    Some(dense_symmetry_table(&specs, lattice)?)
                } else {
                    None
                },
            });
        }
    }
    Ok(rows)
}

fn verdict_name(v: crate::channels::Verdict) -> &'static str {
    match v {
        crate::channels::Verdict::Exact => "exact",
        crate::channels::Verdict::Average => "average",
        crate::channels::Verdict::Broken => "broken",
    }
}

fn run_symmetry(c: &ExperimentConfig, out: &Path, summary: &mut RunSummary) -> Result<()> {
    let l = c.lattice_spec()?.build()?;
    let rows = symmetry_rows(&l, &c.placements, &c.p_grid)?;
    summary.failures.extend(
        rows.iter()
            .filter(|r| !r.agrees())
            .map(|r| format!("{} at p={}: Kraus and dense verdicts differ", r.placement, r.p)),
    );
    let text: Vec<String> = rows
        .iter()
        .map(|r| {
            let (dz, d1) = r.dense.map_or(("n/a", "n/a"), |d| (verdict_name(d.zero_form), verdict_name(d.one_form)));
            format!(
                "{},{},{},{},{},{},{}",
                r.placement,
                fx(r.p),
                verdict_name(r.kraus.zero_form),
                verdict_name(r.kraus.one_form),
                dz,
                d1,
                r.agrees()
            )
        })
        .collect();
    write_table(
        summary,
        out.join("symmetry.csv"),
        "placement,p,zero_form,one_form,dense_zero_form,dense_one_form,agree",
        &text,
    )
}
