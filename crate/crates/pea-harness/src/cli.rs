//! Command-line front end. Exit codes are part of the contract:
//! `0` — everything ran and every assertion held;
//! `1` — a run completed but an assertion, verification, or resolution
//!        failed (the first failure is named on stderr);
//! `2` — the invocation itself was unusable (bad flags, missing files,
//!        malformed config).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use pea_core::crypto::SigningKey;

use crate::corpus::{corpus_digest, generate, AttackClass};
use crate::experiments::{
    run_ablation, run_divergence, run_enforcement, run_manipulation, run_policy_variation,
    run_stress, ExperimentRun,
};
use crate::fixtures::Deployment;
use crate::formats::{
    load_policy, load_queue, load_run_config, parse_resolution, resolve_drift_preset,
    resolve_policy_arg, save_queue, verify_audit_file, write_audit_jsonl, PolicyChoice,
    RunConfigFile,
};
use crate::keys::{dev_key, key_tag, resolve_key};
use crate::report::RunReport;
use crate::scenario::{run_corpus, Layer, Toggles};

#[derive(Parser)]
#[command(
    name = "pea",
    version,
    about = "Adversarial harness for the capability-token authorization kernel"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment suite and write its reports.
    Run(RunArgs),
    /// Inspect or resolve entries in an approval queue file.
    Approvals(ApprovalsArgs),
    /// Verify the hash chain of a stored audit log.
    AuditVerify {
        /// Path to a .jsonl audit file.
        log: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// enforcement | divergence | manipulation | ablation | policy |
    /// stress | custom | all
    experiment: String,
    /// TOML run configuration; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated layers to disable (custom runs only):
    /// ivl,drift,hard_auth,osg,provenance
    #[arg(long)]
    ablate: Option<String>,
    /// Policy for custom runs: strict, permissive, or a policy TOML path.
    #[arg(long)]
    policy: Option<String>,
    /// Similarity threshold preset for custom runs: mechanism | eval.
    #[arg(long)]
    drift_preset: Option<String>,
    /// Where reports land (default ./reports).
    #[arg(long)]
    report_dir: Option<PathBuf>,
    /// File holding the signing key as hex (overrides the env variable).
    #[arg(long)]
    key_file: Option<PathBuf>,
    /// Scale knob: per-class case count for experiments that take one.
    #[arg(long)]
    cases: Option<usize>,
}

#[derive(Args)]
struct ApprovalsArgs {
    /// Queue file to operate on.
    #[arg(long)]
    queue: PathBuf,
    #[command(subcommand)]
    action: ApprovalAction,
}

#[derive(Subcommand)]
enum ApprovalAction {
    /// Print every entry with its state.
    List,
    /// Record a decision for one pending entry.
    Resolve {
        entry_id: u64,
        /// approve | deny | timeout
        resolution: String,
    },
}

/// Parse and execute; returns the process exit code. Split from `main` so
/// tests can drive the CLI in-process.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outcomes; usage errors are
            // configuration errors.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.cmd {
        Cmd::Run(args) => match cmd_run(&args) {
            Ok(failures) if failures.is_empty() => 0,
            Ok(failures) => {
                for f in &failures {
                    eprintln!("FAILED: {f}");
                }
                1
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                2
            }
        },
        Cmd::Approvals(args) => match cmd_approvals(&args) {
            Ok(()) => 0,
            Err(CliFailure::Assertion(msg)) => {
                eprintln!("FAILED: {msg}");
                1
            }
            Err(CliFailure::Config(e)) => {
                eprintln!("error: {e:#}");
                2
            }
        },
        Cmd::AuditVerify { log } => match cmd_audit_verify(&log) {
            Ok(n) => {
                println!("OK: {n} records, chain intact");
                0
            }
            Err(CliFailure::Assertion(msg)) => {
                eprintln!("FAILED: {msg}");
                1
            }
            Err(CliFailure::Config(e)) => {
                eprintln!("error: {e:#}");
                2
            }
        },
    }
}

/// Operational failures split by exit-code class.
enum CliFailure {
    /// The artifact was readable but did not verify / could not be
    /// resolved — exit 1.
    Assertion(String),
    /// The invocation or its inputs were unusable — exit 2.
    Config(anyhow::Error),
}

fn cmd_run(args: &RunArgs) -> Result<Vec<String>> {
    let file_cfg = match &args.config {
        Some(path) => load_run_config(path)?,
        None => RunConfigFile::default(),
    };
    let seed = args.seed.or(file_cfg.seed).unwrap_or(42);
    let cases = args.cases.or(file_cfg.cases);
    let report_dir = args
        .report_dir
        .clone()
        .or(file_cfg.report_dir.clone())
        .unwrap_or_else(|| PathBuf::from("reports"));
    let key = resolve_signing_key(args, &file_cfg)?;

    fs::create_dir_all(&report_dir)
        .with_context(|| format!("creating report dir {}", report_dir.display()))?;

    let experiments: Vec<ExperimentRun> = match args.experiment.as_str() {
        "enforcement" => vec![run_enforcement(&key, seed, cases)],
        "divergence" => vec![run_divergence(&key, seed, cases)],
        "manipulation" => vec![run_manipulation(&key, seed, cases)],
        "ablation" => vec![run_ablation(&key, seed)],
        "policy" => vec![run_policy_variation(&key, seed, cases)],
        "stress" => vec![run_stress(&key, seed)],
        "all" => vec![
            run_enforcement(&key, seed, cases),
            run_divergence(&key, seed, cases),
            run_manipulation(&key, seed, cases),
            run_ablation(&key, seed),
            run_policy_variation(&key, seed, cases),
            run_stress(&key, seed),
        ],
        "custom" => vec![run_custom(args, &file_cfg, &key, seed, cases, &report_dir)?],
        other => {
            return Err(anyhow!(
                "unknown experiment `{other}` (enforcement|divergence|manipulation|ablation|policy|stress|custom|all)"
            ))
        }
    };

    let mut failures = Vec::new();
    for exp in &experiments {
        for report in &exp.reports {
            write_report(report, &report_dir)?;
            print!("{}", report.render_text());
            println!();
        }
        for note in &exp.notes {
            println!("note: {note}");
        }
        println!(
            "{}: {}",
            exp.name,
            if exp.passed() { "all assertions held" } else { "ASSERTIONS FAILED" }
        );
        println!();
        failures.extend(exp.failures.iter().cloned());
    }
    println!("reports written to {}", report_dir.display());
    Ok(failures)
}

fn resolve_signing_key(args: &RunArgs, cfg: &RunConfigFile) -> Result<SigningKey> {
    if args.key_file.is_some() {
        return resolve_key(args.key_file.as_deref());
    }
    match &cfg.key {
        None => resolve_key(None),
        Some(section) => match section.source.as_deref() {
            None | Some("dev") => Ok(dev_key()),
            Some("env") => resolve_key(None),
            Some("file") => {
                let path = section
                    .path
                    .as_deref()
                    .ok_or_else(|| anyhow!("key.source = \"file\" needs key.path"))?;
                resolve_key(Some(path))
            }
            Some(other) => Err(anyhow!("unknown key.source `{other}` (dev|env|file)")),
        },
    }
}

/// A custom run: caller-chosen policy, preset, and disabled layers over
/// the full twelve-class corpus. No assertions — this is the exploration
/// mode, and it also produces the audit/queue artifacts the other
/// subcommands operate on.
fn run_custom(
    args: &RunArgs,
    cfg: &RunConfigFile,
    key: &SigningKey,
    seed: u64,
    cases: Option<usize>,
    report_dir: &Path,
) -> Result<ExperimentRun> {
    let policy_arg = args
        .policy
        .clone()
        .or(cfg.policy.clone())
        .unwrap_or_else(|| "permissive".into());
    let preset_arg = args
        .drift_preset
        .clone()
        .or(cfg.drift_preset.clone())
        .unwrap_or_else(|| "mechanism".into());
    let preset = resolve_drift_preset(&preset_arg)?;
    let dep = match resolve_policy_arg(&policy_arg)? {
        PolicyChoice::Builtin(kind) => Deployment::standard(kind, key.clone(), preset),
        PolicyChoice::File(path) => {
            let names: Vec<&str> = crate::fixtures::INTENT_NAMES.to_vec();
            let policy = load_policy(&path, &names)?;
            Deployment::with_policy(policy, key.clone(), preset)
        }
    };

    let mut toggles = Toggles::full();
    if let Some(list) = &args.ablate {
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let layer = Layer::parse(name)
                .ok_or_else(|| anyhow!("unknown layer `{name}` (ivl|drift|hard_auth|osg|provenance)"))?;
            toggles.disable(layer);
        }
    }

    let per_class = cases.unwrap_or(50);
    let mut corpus = Vec::new();
    for class in AttackClass::ALL {
        corpus.extend(generate(class, per_class, seed, &dep));
    }
    let run = run_corpus(&corpus, &dep, toggles);
    let report = RunReport::build(
        "custom",
        seed,
        &dep,
        toggles,
        corpus_digest(&corpus),
        &run,
        &key_tag(key),
    );

    // Custom runs leave behind the live artifacts: the audit chain and
    // whatever landed in the review queue.
    let audit_path = report_dir.join("custom.audit.jsonl");
    write_audit_jsonl(&run.audit, &audit_path)?;
    let queue_path = report_dir.join("custom.queue.json");
    save_queue(&run.approvals, &queue_path)?;

    let mut exp = ExperimentRun {
        name: "custom".into(),
        reports: vec![report],
        notes: vec![
            format!("audit log: {}", audit_path.display()),
            format!("approval queue: {}", queue_path.display()),
        ],
        failures: Vec::new(),
    };
    exp.notes.push(format!(
        "policy {} preset {} layers-off [{}]",
        dep.policy.name,
        preset.name(),
        toggles.disabled().join(",")
    ));
    Ok(exp)
}

fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    let json = dir.join(format!("{}.json", report.experiment));
    fs::write(&json, report.to_json())
        .with_context(|| format!("writing {}", json.display()))?;
    let txt = dir.join(format!("{}.txt", report.experiment));
    fs::write(&txt, report.render_text())
        .with_context(|| format!("writing {}", txt.display()))?;
    Ok(())
}

fn cmd_approvals(args: &ApprovalsArgs) -> std::result::Result<(), CliFailure> {
    let mut queue = load_queue(&args.queue).map_err(CliFailure::Config)?;
    match &args.action {
        ApprovalAction::List => {
            println!("{:<6} {:<16} {:<14} {:<10} digest", "id", "role", "created_ms", "state");
            for e in queue.entries() {
                let state = match e.resolution {
                    None => "pending".to_string(),
                    Some(r) => format!("{r:?}").to_lowercase(),
                };
                println!(
                    "{:<6} {:<16} {:<14} {:<10} {}",
                    e.entry_id,
                    e.approver_role,
                    e.created_at_ms,
                    state,
                    &e.ir_digest.to_hex()[..16],
                );
            }
            Ok(())
        }
        ApprovalAction::Resolve { entry_id, resolution } => {
            let r = parse_resolution(resolution).map_err(CliFailure::Config)?;
            queue
                .resolve(*entry_id, r)
                .map_err(|e| CliFailure::Assertion(e.to_string()))?;
            save_queue(&queue, &args.queue).map_err(CliFailure::Config)?;
            println!("entry {entry_id} resolved: {resolution}");
            Ok(())
        }
    }
}

fn cmd_audit_verify(log: &Path) -> std::result::Result<usize, CliFailure> {
    if !log.exists() {
        return Err(CliFailure::Config(anyhow!(
            "audit log {} does not exist",
            log.display()
        )));
    }
    verify_audit_file(log).map_err(|e| CliFailure::Assertion(format!("{e:#}")))
}
