//! Command-line front end.
//!
//! Exit codes: 0 when the run completed with every internal invariant
//! intact, 1 when an invariant was violated, 2 on bad input. Findings such
//! as "not Markov" are report content and never change the exit code.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::linalg::{real_diag, CMatrix, Factor, SpaceLayout};
use crate::markov::{is_markov, recover_structure, CMI_TOL};
use crate::random::{random_density, random_probabilities, random_unitary_channel, rng_from_seed};
use crate::scenarios::{
    example1_factorized, example2_cq, example3_build, example4_swap, sweep_forward_reduction,
    sweep_markov_roundtrip, sweep_mi_monotonicity, witness_search, Example3Shape, Example3Variant,
    ScenarioReport,
};
use crate::states::{validate_density, DensityMatrix};

pub const SEED_ENV: &str = "QMARKOV_SEED";

#[derive(Debug, Parser)]
#[command(name = "qmarkov", version, about = "Quantum Markov states and localized reduced dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one of the worked examples: example1, example2, example3, example4.
    Demo {
        scenario: String,
        /// Initial AE state for example4: bell, classical or product.
        #[arg(long, default_value = "bell")]
        rho_ae: String,
        /// Family for example3: eq28, eq29_factorized or eq29_unfactorized.
        #[arg(long, default_value = "eq28")]
        variant: String,
        /// Basis for example2: bell or product.
        #[arg(long, default_value = "bell")]
        basis: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Test a state for the Markov property across a partition.
    Check {
        #[arg(long, default_value = "A,B,E")]
        partition: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Randomized sweeps: markov-roundtrip, forward-reduction, mi-monotonicity.
    Sweep {
        name: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Search for a localized channel that increases I(A:B).
    Witness {
        #[arg(long, default_value = "A,B,E")]
        partition: String,
        /// Keep the output system dimension equal to dim B.
        #[arg(long)]
        equal_dims_only: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Seed; falls back to $QMARKOV_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Subsystem dimensions, e.g. A=2,B=2,E=2.
    #[arg(long)]
    pub dims: Option<String>,
    /// State file (JSON).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Demo,
    Check,
    Sweep,
    Witness,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    /// Scenario or sweep name; empty for `check` and `witness`.
    pub scenario: String,
    pub dims: BTreeMap<String, usize>,
    pub trials: Option<usize>,
    pub seed: u64,
    pub tolerance: f64,
    pub input_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub partition: Vec<Vec<String>>,
    pub equal_dims_only: bool,
    pub rho_ae: String,
    pub variant: String,
    pub basis: String,
}

pub fn parse_dims(s: &str) -> Result<BTreeMap<String, usize>> {
    let mut out = BTreeMap::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (label, dim) = item
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected LABEL=DIM in --dims, got `{item}`")))?;
        let dim: usize = dim
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad dimension in `{item}`")))?;
        if dim == 0 {
            return Err(Error::InvalidArgument(format!("dimension of `{label}` must be at least 1")));
        }
        if out.insert(label.trim().to_string(), dim).is_some() {
            return Err(Error::DuplicateLabel(label.trim().to_string()));
        }
    }
    Ok(out)
}

/// `A,B,E` or grouped `A1+A2,B,E`.
pub fn parse_partition(s: &str) -> Result<Vec<Vec<String>>> {
    let groups: Vec<Vec<String>> = s
        .split(',')
        .map(|g| g.split('+').map(|l| l.trim().to_string()).collect::<Vec<_>>())
        .collect();
    if groups.len() != 3 || groups.iter().flatten().any(|l| l.is_empty()) {
        return Err(Error::InvalidPartition(format!("expected three groups A,B,E, got `{s}`")));
    }
    Ok(groups)
}

impl RunConfig {
    /// Resolves flags against the environment's seed fallback.
    pub fn from_cli(cli: Cli, env_seed: Option<String>) -> Result<Self> {
        let (command, scenario, common, partition, equal, rho_ae, variant, basis) = match cli.command {
            Command::Demo { scenario, rho_ae, variant, basis, common } => {
                (CommandKind::Demo, scenario, common, None, false, rho_ae, variant, basis)
            }
            Command::Check { partition, common } => {
                (CommandKind::Check, String::new(), common, Some(partition), false, String::new(), String::new(), String::new())
            }
            Command::Sweep { name, common } => {
                (CommandKind::Sweep, name, common, None, false, String::new(), String::new(), String::new())
            }
            Command::Witness { partition, equal_dims_only, common } => (
                CommandKind::Witness,
                String::new(),
                common,
                Some(partition),
                equal_dims_only,
                String::new(),
                String::new(),
                String::new(),
            ),
        };
        let seed = match (common.seed, env_seed) {
            (Some(s), _) => s,
            (None, Some(v)) => v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("{SEED_ENV}=`{v}` is not a 64-bit unsigned integer")))?,
            (None, None) => 0,
        };
        if common.trials == Some(0) {
            return Err(Error::InvalidArgument("--trials must be at least 1".into()));
        }
        let tolerance = common.tolerance.unwrap_or(CMI_TOL);
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(Error::InvalidArgument("--tolerance must be positive".into()));
        }
        let dims = match &common.dims {
            Some(s) => parse_dims(s)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            command,
            scenario,
            dims,
            trials: common.trials,
            seed,
            tolerance,
            input_path: common.input,
            output_path: common.output,
            partition: match partition {
                Some(p) => parse_partition(&p)?,
                None => Vec::new(),
            },
            equal_dims_only: equal,
            rho_ae,
            variant,
            basis,
        })
    }

    fn dim(&self, label: &str, default: usize) -> usize {
        self.dims.get(label).copied().unwrap_or(default)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorEntry {
    label: String,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    layout: Vec<FactorEntry>,
    re: Vec<Vec<f64>>,
    #[serde(default)]
    im: Option<Vec<Vec<f64>>>,
}

/// Pretty JSON with every float written as `{:.16e}` (17 significant digits).
struct ReportFormatter {
    inner: PrettyFormatter<'static>,
}

impl ReportFormatter {
    fn new() -> Self {
        Self { inner: PrettyFormatter::with_indent(b"  ") }
    }
}

impl Formatter for ReportFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ReportFormatter::new());
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io(e.to_string())),
    }
}

/// Writes the report as JSON with sorted keys; `None` means stdout.
pub fn write_report(path: Option<&Path>, report: &ScenarioReport) -> Result<()> {
    write_text(path, &to_json(report)?)
}

pub fn write_state(path: &Path, rho: &DensityMatrix) -> Result<()> {
    let m = rho.matrix();
    let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
    };
    let file = StateFile {
        layout: rho
            .layout()
            .factors()
            .iter()
            .map(|f| FactorEntry { label: f.label.clone(), dim: f.dim })
            .collect(),
        re: rows(|z| z.re),
        im: Some(rows(|z| z.im)),
    };
    write_text(Some(path), &to_json(&file)?)
}

/// Parses a state file and validates it as a density matrix.
pub fn parse_state(text: &str, origin: &str) -> Result<DensityMatrix> {
    let file: StateFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("{origin}: {e}")))?;
    let layout = SpaceLayout::from_factors(
        file.layout
            .into_iter()
            .map(|f| Factor { label: f.label, dim: f.dim })
            .collect(),
    )?;
    let n = layout.total_dim();
    let check = |name: &str, rows: &[Vec<f64>]| -> Result<()> {
        if rows.len() != n {
            return Err(Error::LayoutMismatch(format!(
                "{origin}: `{name}` has {} rows but layout {layout} needs {n}",
                rows.len()
            )));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::LayoutMismatch(format!(
                "{origin}: row {i} of `{name}` has {} entries, expected {n}",
                r.len()
            )));
        }
        Ok(())
    };
    check("re", &file.re)?;
    if let Some(im) = &file.im {
        check("im", im)?;
    }
    let m = CMatrix::from_fn(n, n, |i, j| {
        Complex64::new(file.re[i][j], file.im.as_ref().map_or(0.0, |im| im[i][j]))
    });
    validate_density(m, layout)
}

pub fn read_state(path: &Path) -> Result<DensityMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_state(&text, &path.display().to_string())
}

/// Permutes `rho` to the partition order and merges each group into one
/// factor named after it (`A1+A2`).
pub fn arrange(rho: &DensityMatrix, partition: &[Vec<String>]) -> Result<DensityMatrix> {
    let order: Vec<&str> = partition.iter().flatten().map(String::as_str).collect();
    if order.len() != rho.layout().len() {
        return Err(Error::InvalidPartition(format!(
            "partition must cover every factor of {}",
            rho.layout()
        )));
    }
    let permuted = rho.permuted(&order)?;
    let mut factors = Vec::new();
    for g in partition {
        let dim = g
            .iter()
            .map(|l| rho.layout().dim_of(l))
            .product::<Result<usize>>()?;
        factors.push(Factor { label: g.join("+"), dim });
    }
    permuted.with_layout(SpaceLayout::from_factors(factors)?)
}

fn input_state(config: &RunConfig) -> Result<DensityMatrix> {
    match &config.input_path {
        Some(p) => read_state(p),
        None => {
            let labels: Vec<&str> = config.partition.iter().flatten().map(String::as_str).collect();
            let layout = SpaceLayout::new(labels.iter().map(|l| (*l, config.dim(l, 2))))?;
            let mut rng = rng_from_seed(config.seed);
            random_density(&layout, layout.total_dim(), &mut rng)
        }
    }
}

fn bell_pair(a: &str, e: &str, d: usize) -> Result<DensityMatrix> {
    let mut psi = CMatrix::zeros(d * d, 1);
    for i in 0..d {
        psi[(i * d + i, 0)] = Complex64::new(1.0, 0.0);
    }
    DensityMatrix::pure(&psi, SpaceLayout::new([(a, d), (e, d)])?)
}

fn demo(config: &RunConfig) -> Result<ScenarioReport> {
    let seed = config.seed;
    let mut rng = rng_from_seed(seed);
    let mut report = match config.scenario.as_str() {
        "example1" => {
            let (d_a, d_b, d_e) = (config.dim("A", 2), config.dim("B", 2), config.dim("E", 2));
            let rho_ab = if d_a == d_b {
                bell_pair("A", "B", d_a)?
            } else {
                let l = SpaceLayout::new([("A", d_a), ("B", d_b)])?;
                random_density(&l, l.total_dim(), &mut rng)?
            };
            let omega = DensityMatrix::basis_state(SpaceLayout::new([("E", d_e)])?, 0)?;
            let be = SpaceLayout::new([("B", d_b), ("E", d_e)])?;
            let u = random_unitary_channel(&be, &mut rng)?;
            example1_factorized(&rho_ab, &omega, &u, &["E"], seed)?
        }
        "example2" => {
            let ab = SpaceLayout::new([("A", 2), ("B", 2)])?;
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let kets: Vec<CMatrix> = match config.basis.as_str() {
                "product" => (0..4).map(|i| crate::linalg::ket(4, i)).collect(),
                "bell" => [(0, 3, h), (0, 3, -h), (1, 2, h), (1, 2, -h)]
                    .iter()
                    .map(|&(i, j, s)| {
                        let mut v = CMatrix::zeros(4, 1);
                        v[(i, 0)] = Complex64::new(h, 0.0);
                        v[(j, 0)] = Complex64::new(s, 0.0);
                        v
                    })
                    .collect(),
                other => return Err(Error::InvalidArgument(format!("unknown basis `{other}`"))),
            };
            let omegas = (0..4)
                .map(|i| DensityMatrix::basis_state(SpaceLayout::new([("E", 4)])?, i))
                .collect::<Result<Vec<_>>>()?;
            let p = random_probabilities(4, &mut rng);
            let mut r = example2_cq(&p, &kets, &ab, &omegas)?;
            r.input("basis", config.basis.clone());
            r
        }
        "example3" => {
            let variant: Example3Variant = config.variant.parse()?;
            example3_build(variant, &Example3Shape::default(), seed)?
        }
        "example4" => {
            let d = config.dim("B", 2);
            let rho_b = DensityMatrix::maximally_mixed(SpaceLayout::new([("B", d)])?);
            let ae = SpaceLayout::new([("A", config.dim("A", d)), ("E", d)])?;
            let rho_ae = match config.rho_ae.as_str() {
                "bell" if ae.dims()[0] == d => bell_pair("A", "E", d)?,
                "classical" if ae.dims()[0] == d => {
                    let diag: Vec<f64> = (0..d * d)
                        .map(|k| if k / d == k % d { 1.0 / d as f64 } else { 0.0 })
                        .collect();
                    DensityMatrix::new(real_diag(&diag), ae)?
                }
                "product" => {
                    let a = SpaceLayout::new([("A", ae.dims()[0])])?;
                    let e = SpaceLayout::new([("E", d)])?;
                    random_density(&a, a.total_dim(), &mut rng)?.tensor(&random_density(&e, d, &mut rng)?)?
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "--rho-ae `{other}` needs dim A = dim E (bell, classical) or is unknown"
                    )))
                }
            };
            let mut r = example4_swap(&rho_b, &rho_ae)?;
            r.input("rhoAEKind", config.rho_ae.clone());
            r
        }
        other => return Err(Error::InvalidArgument(format!("unknown scenario `{other}`"))),
    };
    report.seed = seed;
    Ok(report)
}

fn check(config: &RunConfig) -> Result<ScenarioReport> {
    let rho = arrange(&input_state(config)?, &config.partition)?;
    let labels: Vec<String> = rho.layout().labels().iter().map(|s| s.to_string()).collect();
    let (a, b, e) = (labels[0].as_str(), labels[1].as_str(), labels[2].as_str());
    let v = is_markov(&rho, &[a], &[b], &[e], config.tolerance)?;
    let mut r = ScenarioReport::new("check", config.seed);
    r.input("layout", rho.layout().to_string());
    r.input("tolerance", config.tolerance);
    if let Some(p) = &config.input_path {
        r.input("input", p.display().to_string());
    }
    r.quantity("cmi", v.cmi);
    r.quantity("petzDistance", v.petz_distance);
    r.verdict("markov", v.markov);
    if v.markov {
        match recover_structure(&rho, &[a], &[b], &[e]) {
            Ok(d) => {
                let live = d.blocks().iter().filter(|k| !k.placeholder).count();
                r.quantity("blocks", live as f64);
                r.quantity("reassemblyDistance", d.assemble()?.trace_distance(&rho)?);
                r.verdict("structureRecovered", true);
            }
            Err(_) => {
                r.quantity("blocks", 0.0);
                r.verdict("structureRecovered", false);
            }
        }
    }
    Ok(r)
}

fn sweep(config: &RunConfig) -> Result<ScenarioReport> {
    let (d_a, d_e) = (config.dim("A", 2), config.dim("E", 2));
    match config.scenario.as_str() {
        "markov-roundtrip" => sweep_markov_roundtrip(config.trials.unwrap_or(200), config.seed, d_a, d_e),
        "forward-reduction" => sweep_forward_reduction(config.trials.unwrap_or(20), config.seed, d_a, d_e),
        "mi-monotonicity" => {
            sweep_mi_monotonicity(config.trials.unwrap_or(500), config.seed, d_a, config.dim("B", 2))
        }
        other => Err(Error::InvalidArgument(format!("unknown sweep `{other}`"))),
    }
}

fn witness(config: &RunConfig) -> Result<ScenarioReport> {
    let rho = arrange(&input_state(config)?, &config.partition)?;
    witness_search(&rho, config.trials.unwrap_or(100), config.seed, config.equal_dims_only)
}

/// Executes the command and returns its report.
pub fn execute(config: &RunConfig) -> Result<ScenarioReport> {
    match config.command {
        CommandKind::Demo => demo(config),
        CommandKind::Check => check(config),
        CommandKind::Sweep => sweep(config),
        CommandKind::Witness => witness(config),
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        2
    } else {
        1
    }
}

/// Runs the command, writes the report and returns the process exit code.
pub fn run(config: &RunConfig) -> i32 {
    let report = match execute(config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = write_report(config.output_path.as_deref(), &report) {
        eprintln!("error: {e}");
        return 2;
    }
    if report.invariants_hold() {
        0
    } else {
        eprintln!("invariant violated: {}", report.violated_invariants().join(", "));
        1
    }
}

/// Parses arguments, reads the seed fallback and runs.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match RunConfig::from_cli(cli, std::env::var(SEED_ENV).ok()) {
        Ok(config) => run(&config),
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
