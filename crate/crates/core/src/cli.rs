//! Command-line front end.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 resource limit, 4 verification
//! or validation failure. Reports go to `--out` when given, stdout otherwise;
//! diagnostics go to stderr.
//!
//! Random inputs and measurement outcomes come from two streams of a
//! `ChaCha8Rng` seeded with `--seed`: stream 0 draws inputs, stream 1 draws
//! measurement outcomes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corrections::{derive_table, validate_table, CorrectionTable, CORRECTION_TOL, VALIDATION_SEED};
use crate::error::Error;
use crate::inputs::{haar_qubit, parse_input_file, random_entangled, random_product};
use crate::protocol::{
    build_schedule, difference_classes, enumerate_protocol_branches, run_trial, EndLink, Family, ProtocolSpec, SimMode,
    SpinInput, FULL_MODE_MAX_N,
};
use crate::report::*;
use crate::verify::{
    check_branch_kraus, check_no_signaling, check_outcome_support, cross_check_modes, difference_key,
    outcome_statistics, resolve_difference_pairing, TOLERANCE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_INTERNAL: i32 = 1;

/// Largest n at which `verify` runs the eigenvalue-history pairing check.
const PAIRING_MAX_N: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputSource {
    RandomProduct,
    RandomEntangled,
    File,
}

impl fmt::Display for InputSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputSource::RandomProduct => "random-product",
            InputSource::RandomEntangled => "random-entangled",
            InputSource::File => "file",
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "chainport", version, about = "Two-way and chain teleportation via crossed modular measurements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run sampled trials and report outcomes and fidelities.
    Run(RunArgs),
    /// Enumerate branches and check outcome support, no-signaling and mode agreement.
    Verify(RunArgs),
    /// Derive, validate and write the Pauli correction table.
    DeriveCorrections(RunArgs),
    /// Sample a histogram of difference vectors and compare with enumeration.
    Stats(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, default_value = "chain")]
    pub family: Family,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long = "end-link", default_value = "z")]
    pub end_link: EndLink,
    #[arg(long, default_value = "full")]
    pub mode: SimMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = InputSource::RandomProduct)]
    pub inputs: InputSource,
    #[arg(long = "input-path")]
    pub input_path: Option<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Validated configuration shared by all subcommands.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ProtocolSpec,
    pub seed: u64,
    pub trials: u64,
    pub input_source: InputSource,
    pub input_path: Option<PathBuf>,
    pub correction_table_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
}

/// Result of a subcommand: exit status plus what to write where.
#[derive(Debug)]
pub struct CmdOutcome {
    pub exit_code: i32,
    pub payload: Option<String>,
    /// Extra files (path, content) written next to the report.
    pub side_files: Vec<(PathBuf, String)>,
    pub messages: Vec<String>,
}

impl CmdOutcome {
    fn fail(exit_code: i32, message: impl Into<String>) -> Self {
        Self { exit_code, payload: None, side_files: Vec::new(), messages: vec![message.into()] }
    }
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidSpec(_)
        | Error::Parse(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::DimensionMismatch { .. }
        | Error::FingerprintMismatch { .. }
        | Error::MissingCorrectionTable => EXIT_CONFIG,
        Error::SizeLimit { .. } => EXIT_LIMIT,
        Error::NoPauliCorrection { .. } | Error::ValidationFailure { .. } | Error::OddDifference(_) => EXIT_VALIDATION,
        _ => EXIT_INTERNAL,
    }
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self, Error> {
        let spec = ProtocolSpec::new(args.n, args.family, args.end_link, args.mode)?;
        if args.trials == 0 {
            return Err(Error::InvalidSpec("--trials must be at least 1".into()));
        }
        if args.inputs == InputSource::File && args.input_path.is_none() {
            return Err(Error::InvalidSpec("--inputs file requires --input-path".into()));
        }
        Ok(Self {
            spec,
            seed: args.seed,
            trials: args.trials,
            input_source: args.inputs,
            input_path: args.input_path.clone(),
            correction_table_path: args.table.clone(),
            output_path: args.out.clone(),
        })
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            n: self.spec.n,
            family: self.spec.family.to_string(),
            end_link: self.spec.end_link.to_string(),
            mode: self.spec.sim_mode.to_string(),
            seed: self.seed,
            trials: self.trials,
            inputs: self.input_source.to_string(),
            input_path: self.input_path.as_ref().map(|p| p.display().to_string()),
            table: self.correction_table_path.as_ref().map(|p| p.display().to_string()),
        }
    }

    fn input_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(0);
        rng
    }

    fn measurement_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        rng
    }

    fn file_input(&self, messages: &mut Vec<String>) -> Result<SpinInput, Error> {
        let path = self.input_path.as_ref().ok_or(Error::MissingCorrectionTable)?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read input file {}: {e}", path.display())))?;
        let loaded = parse_input_file(&text)?;
        messages.extend(loaded.warnings.into_iter().map(|w| format!("warning: {w}")));
        if loaded.input.n() != self.spec.n {
            return Err(Error::InvalidSpec(format!(
                "input file lists {} sites but --n is {}",
                loaded.input.n(),
                self.spec.n
            )));
        }
        Ok(loaded.input)
    }

    /// A single input for commands that analyse one fixed input.
    fn fixed_input(&self, messages: &mut Vec<String>) -> Result<SpinInput, Error> {
        let mut rng = self.input_rng();
        match self.input_source {
            InputSource::RandomProduct => Ok(random_product(self.spec.n, &mut rng)),
            InputSource::RandomEntangled => Ok(random_entangled(self.spec.n, &mut rng)),
            InputSource::File => self.file_input(messages),
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_table(cfg: &RunConfig) -> Result<Option<CorrectionTable>, Error> {
    match &cfg.correction_table_path {
        Some(path) => {
            let table = CorrectionTable::read(path)?;
            table.check_fingerprint(&cfg.spec)?;
            Ok(Some(table))
        }
        None => Ok(None),
    }
}

pub fn cmd_run(cfg: &RunConfig) -> Result<CmdOutcome, Error> {
    let spec = cfg.spec;
    spec.check_size()?;
    let mut messages = Vec::new();
    let (table, corrections) = match load_table(cfg)? {
        Some(t) => (Some(t), CorrectionSource { source: "file", detail: None }),
        None => match derive_table(&spec) {
            Ok(t) => (Some(t), CorrectionSource { source: "derived", detail: None }),
            Err(e @ Error::NoPauliCorrection { .. }) => {
                messages.push(format!("corrections unavailable: {e}"));
                (None, CorrectionSource { source: "unavailable", detail: Some(e.to_string()) })
            }
            Err(e) => return Err(e),
        },
    };
    let fixed = match cfg.input_source {
        InputSource::File => Some(cfg.file_input(&mut messages)?),
        _ => None,
    };
    let mut input_rng = cfg.input_rng();
    let mut rng = cfg.measurement_rng();
    let mut trials = Vec::with_capacity(cfg.trials as usize);
    let mut class_counts: BTreeMap<String, u64> = BTreeMap::new();
    let (mut min_before, mut sum_before) = (f64::INFINITY, 0.0);
    let mut min_after: Option<f64> = None;
    for index in 0..cfg.trials {
        let input = match (&fixed, cfg.input_source) {
            (Some(i), _) => i.clone(),
            (None, InputSource::RandomEntangled) => random_entangled(spec.n, &mut input_rng),
            (None, _) => random_product(spec.n, &mut input_rng),
        };
        let t = run_trial(&spec, &input, &mut rng, table.as_ref())?;
        let d = t.outcome.difference_values();
        *class_counts.entry(difference_key(&d)).or_default() += 1;
        min_before = min_before.min(t.fidelity_before);
        sum_before += t.fidelity_before;
        if let Some(f) = t.fidelity_after {
            min_after = Some(min_after.map_or(f, |m: f64| m.min(f)));
        }
        let raw = |v: &Option<Vec<crate::devices::Z4>>| v.as_ref().map(|v| v.iter().map(|z| z.value()).collect());
        trials.push(TrialRecord {
            index,
            readout_q: raw(&t.outcome.raw_q),
            readout_q_prime: raw(&t.outcome.raw_q_prime),
            d,
            prob: sig12(t.prob),
            fidelity_before: sig12(t.fidelity_before),
            fidelity_after: sig12_opt(t.fidelity_after),
        });
    }
    let passed = min_after.is_some_and(|f| f >= 1.0 - CORRECTION_TOL);
    if !passed {
        messages.push(match min_after {
            Some(f) => format!("corrected fidelity {f:.12} below 1 - {CORRECTION_TOL:e}"),
            None => "no correction table applied; teleportation not completed".into(),
        });
    }
    let report = RunReport {
        header: Header::new("run", spec.fingerprint()),
        config: cfg.echo(),
        corrections,
        trials,
        summary: RunSummary {
            trials: cfg.trials,
            class_counts,
            min_fidelity_before: sig12(min_before),
            mean_fidelity_before: sig12(sum_before / cfg.trials as f64),
            min_fidelity_after: sig12_opt(min_after),
            passed,
        },
    };
    Ok(CmdOutcome {
        exit_code: if passed { EXIT_OK } else { EXIT_VALIDATION },
        payload: Some(to_json(&report)?),
        side_files: Vec::new(),
        messages,
    })
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<CmdOutcome, Error> {
    let spec = cfg.spec;
    spec.check_size()?;
    let mut messages = Vec::new();
    let input = cfg.fixed_input(&mut messages)?;
    let mut checks = Vec::new();

    let repeated = build_schedule(&spec)?.repeated_axis_sites();
    checks.push(CheckRecord::flag(
        "distinct_axes_per_site",
        repeated.is_empty(),
        (!repeated.is_empty()).then(|| format!("same axis at t1 and t2 on sites {repeated:?}")),
    ));

    let branches = enumerate_protocol_branches(&spec, &input, None)?;
    let total: f64 = branches.iter().map(|b| b.prob).sum();
    checks.push(CheckRecord::measured(
        "enumeration_probability_sum",
        (total - 1.0).abs() < 1e-9,
        total,
        Some(format!("{} readout combinations", branches.len())),
    ));
    let classes = difference_classes(&branches)?;
    checks.push(CheckRecord::flag(
        "outcome_support",
        check_outcome_support(&spec, &input)?,
        Some(format!("{} difference classes", classes.len())),
    ));

    if spec.n <= FULL_MODE_MAX_N {
        // no-signaling is defined on product inputs: vary site 1 of a product state
        let mut rng = cfg.input_rng();
        let base = match &input {
            SpinInput::Product(_) => input.clone(),
            SpinInput::Entangled(_) => random_product(spec.n, &mut rng),
        };
        let SpinInput::Product(mut qs) = base.clone() else { unreachable!() };
        qs[0] = haar_qubit(&mut rng);
        let ns = check_no_signaling(&spec, &base, &SpinInput::Product(qs))?;
        checks.push(CheckRecord::measured(
            "pointer_marginal_uniformity",
            ns.max_pointer_marginal_deviation < TOLERANCE,
            ns.max_pointer_marginal_deviation,
            None,
        ));
        checks.push(CheckRecord::measured(
            "remote_input_independence",
            ns.max_remote_trace_distance < TOLERANCE,
            ns.max_remote_trace_distance,
            Some("site 1 input varied".into()),
        ));
        let disc = cross_check_modes(&spec, &input)?;
        checks.push(CheckRecord::measured("mode_equivalence", disc < TOLERANCE, disc, None));
    } else {
        let why = format!("requires full mode, n <= {FULL_MODE_MAX_N}");
        checks.push(CheckRecord::skipped("pointer_marginal_uniformity", &why));
        checks.push(CheckRecord::skipped("remote_input_independence", &why));
        checks.push(CheckRecord::skipped("mode_equivalence", &why));
    }

    let pairing = if spec.n <= PAIRING_MAX_N {
        let report = resolve_difference_pairing(&spec, &input)?;
        let ok = report.paired.iter().all(|c| c.deterministic && c.matches_spin_difference);
        checks.push(CheckRecord::flag(
            "paired_differences_deterministic",
            ok,
            Some(format!("{} eigenvalue histories", report.histories_checked)),
        ));
        Some(report)
    } else {
        checks.push(CheckRecord::skipped("paired_differences_deterministic", "n > 3"));
        None
    };

    let branch_operators = check_branch_kraus(&spec)?
        .into_iter()
        .map(|k| KrausRecord {
            d: k.differences,
            weight: sig12(k.weight),
            unitarity_deviation: sig12(k.unitarity_deviation),
            cyclic_fidelity: sig12(k.cyclic_fidelity),
        })
        .collect::<Vec<_>>();
    if let Some(zero) = branch_operators.iter().find(|k| k.d.iter().all(|&v| v == 0)) {
        messages
            .push(format!("all-zero branch channel fidelity with cyclic permutation: {:.12}", zero.cyclic_fidelity));
    }

    let passed = !checks.iter().any(|c| c.failed());
    for c in checks.iter().filter(|c| c.failed()) {
        messages.push(format!("check failed: {}", c.name));
    }
    let report = VerifyReport {
        header: Header::new("verify", spec.fingerprint()),
        config: cfg.echo(),
        checks,
        branch_operators: Some(branch_operators),
        pairing,
        passed,
    };
    Ok(CmdOutcome {
        exit_code: if passed { EXIT_OK } else { EXIT_VALIDATION },
        payload: Some(to_json(&report)?),
        side_files: Vec::new(),
        messages,
    })
}

pub fn cmd_derive_corrections(cfg: &RunConfig) -> Result<CmdOutcome, Error> {
    let spec = cfg.spec;
    spec.check_size()?;
    let table = derive_table(&spec)?;
    let report = validate_table(&spec, &table, VALIDATION_SEED)?;
    Ok(CmdOutcome {
        exit_code: EXIT_OK,
        payload: Some(table.to_json()?),
        side_files: Vec::new(),
        messages: vec![format!(
            "{} entries; worst corrected infidelity {:.3e} (d = {:?}, input {}) over {} inputs",
            table.len(),
            report.worst_infidelity,
            report.worst_d,
            report.worst_input,
            report.inputs_checked
        )],
    })
}

/// Path of the flat histogram table written next to a stats report.
pub fn flat_table_path(out: &Path) -> PathBuf {
    if out.extension().is_some_and(|e| e == "csv") {
        out.with_extension("flat.csv")
    } else {
        out.with_extension("csv")
    }
}

pub fn cmd_stats(cfg: &RunConfig) -> Result<CmdOutcome, Error> {
    let spec = cfg.spec;
    spec.check_size()?;
    let mut messages = Vec::new();
    let input = cfg.fixed_input(&mut messages)?;
    let hist = outcome_statistics(&spec, &input, cfg.trials, cfg.seed)?;
    let mut flat = String::from("d,count,frequency,expected\n");
    let keys: std::collections::BTreeSet<&String> =
        hist.counts.keys().chain(hist.expected.iter().flat_map(|e| e.keys())).collect();
    for key in keys {
        let count = hist.counts.get(key).copied().unwrap_or(0);
        let expected = hist.expected.as_ref().and_then(|e| e.get(key)).copied();
        flat.push_str(&format!(
            "\"{key}\",{count},{},{}\n",
            sig12(count as f64 / hist.trials as f64),
            expected.map(|p| sig12(p).to_string()).unwrap_or_default()
        ));
    }
    let within = hist.max_sigma.map(|s| s <= 5.0);
    let mut rounded = hist.clone();
    rounded.chi_square = sig12_opt(rounded.chi_square);
    rounded.max_sigma = sig12_opt(rounded.max_sigma);
    if let Some(e) = rounded.expected.as_mut() {
        e.values_mut().for_each(|p| *p = sig12(*p));
    }
    let report = StatsReport {
        header: Header::new("stats", spec.fingerprint()),
        config: cfg.echo(),
        histogram: rounded,
        within_5_sigma: within,
    };
    let side_files = match &cfg.output_path {
        Some(out) => vec![(flat_table_path(out), flat)],
        None => Vec::new(),
    };
    Ok(CmdOutcome { exit_code: EXIT_OK, payload: Some(to_json(&report)?), side_files, messages })
}

/// Executes a parsed command and returns the outcome without touching the
/// filesystem for the report.
pub fn execute(command: &Command) -> CmdOutcome {
    type Handler = fn(&RunConfig) -> Result<CmdOutcome, Error>;
    let (args, f): (&RunArgs, Handler) = match command {
        Command::Run(a) => (a, cmd_run),
        Command::Verify(a) => (a, cmd_verify),
        Command::DeriveCorrections(a) => (a, cmd_derive_corrections),
        Command::Stats(a) => (a, cmd_stats),
    };
    let result = RunConfig::from_args(args).and_then(|cfg| f(&cfg));
    match result {
        Ok(outcome) => outcome,
        Err(e) => CmdOutcome::fail(exit_code_for(&e), format!("error: {e}")),
    }
}

fn output_path(command: &Command) -> Option<&Path> {
    match command {
        Command::Run(a) | Command::Verify(a) | Command::DeriveCorrections(a) | Command::Stats(a) => a.out.as_deref(),
    }
}

/// Parses arguments, runs the command, writes its outputs and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = execute(&cli.command);
    for m in &outcome.messages {
        eprintln!("{m}");
    }
    if let Some(payload) = &outcome.payload {
        let written = match output_path(&cli.command) {
            Some(path) => std::fs::write(path, payload),
            None => {
                print!("{payload}");
                Ok(())
            }
        };
        if let Err(e) = written {
            eprintln!("error: cannot write report: {e}");
            return EXIT_CONFIG;
        }
    }
    for (path, content) in &outcome.side_files {
        if let Err(e) = std::fs::write(path, content) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    }
    outcome.exit_code
}
