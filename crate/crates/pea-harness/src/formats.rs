//! On-disk formats: the run configuration, loadable policy tables, the
//! audit log as JSON-lines, and the approval queue file the `approvals`
//! subcommand operates on. Formats are deliberately boring — TOML for
//! things a person edits, JSON for things a program writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use pea_core::audit::{verify_chain, AuditLog, AuditRecord, Principal};
use pea_core::crypto::{sha256, Digest32};
use pea_core::pipeline::{ApprovalQueue, Resolution};
use pea_core::policy::{IntentPolicy, NumericBounds, PolicyContext};
use pea_core::taxonomy::{CapabilityTriple, ResourceClass, Scope, Verb};

use crate::fixtures::{DriftPreset, PolicyKind};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// `pea run --config <file>` — everything a run needs, reviewable in one
/// place. Command-line flags override file values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub seed: Option<u64>,
    /// `strict`, `permissive`, or a path to a policy TOML.
    pub policy: Option<String>,
    /// `mechanism` or `eval`.
    pub drift_preset: Option<String>,
    pub report_dir: Option<PathBuf>,
    /// Scale knob for experiments that take one.
    pub cases: Option<usize>,
    pub key: Option<KeySection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeySection {
    /// `dev`, `env`, or `file`.
    pub source: Option<String>,
    pub path: Option<PathBuf>,
}

pub fn load_run_config(path: &Path) -> Result<RunConfigFile> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading run config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing run config {}", path.display()))
}

// ---------------------------------------------------------------------------
// Policy files
// ---------------------------------------------------------------------------

/// One intent's table entry on disk. Triples are written dotted
/// (`file.read.own_data`) because that is how people talk about them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentEntryDoc {
    pub triples: Vec<String>,
    pub max_scope: String,
    #[serde(default)]
    pub approval_required: bool,
    pub ttl_seconds: u32,
    #[serde(default)]
    pub bounds: BTreeMap<String, BoundsDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFileDoc {
    pub name: String,
    pub intents: BTreeMap<String, IntentEntryDoc>,
}

fn parse_resource_class(s: &str) -> Result<ResourceClass> {
    ResourceClass::ALL
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| anyhow!("unknown resource class `{s}`"))
}

fn parse_verb(s: &str) -> Result<Verb> {
    Verb::ALL
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| anyhow!("unknown verb `{s}`"))
}

fn parse_scope(s: &str) -> Result<Scope> {
    Scope::ALL
        .into_iter()
        .find(|v| v.as_str() == s)
        .ok_or_else(|| anyhow!("unknown scope `{s}`"))
}

/// `file.read.own_data` -> typed triple. Segment names are dot-free by
/// construction, so a plain three-way split is unambiguous.
pub fn parse_triple(s: &str) -> Result<CapabilityTriple> {
    let parts: Vec<&str> = s.split('.').collect();
    if parts.len() != 3 {
        bail!("capability triple `{s}` must have exactly three dotted segments");
    }
    Ok(CapabilityTriple::new(
        parse_resource_class(parts[0])?,
        parse_verb(parts[1])?,
        parse_scope(parts[2])?,
    ))
}

pub fn render_triple(t: &CapabilityTriple) -> String {
    format!("{}.{}.{}", t.l1.as_str(), t.l2.as_str(), t.l3.as_str())
}

/// Load a policy table from TOML. The policy version is the digest of the
/// exact file bytes, so any edit — even whitespace — is a new version, and
/// stale tokens die with the old one.
pub fn load_policy(path: &Path, vocab_names: &[&str]) -> Result<PolicyContext> {
    let bytes = fs::read(path).with_context(|| format!("reading policy {}", path.display()))?;
    let doc: PolicyFileDoc = toml::from_str(
        std::str::from_utf8(&bytes).context("policy file is not UTF-8")?,
    )
    .with_context(|| format!("parsing policy {}", path.display()))?;
    policy_from_doc(&doc, sha256(&bytes), vocab_names)
}

pub fn policy_from_doc(
    doc: &PolicyFileDoc,
    version: Digest32,
    vocab_names: &[&str],
) -> Result<PolicyContext> {
    let vocab = pea_core::intent::IntentVocabulary::from_names(vocab_names.iter().copied());
    let mut intents = BTreeMap::new();
    for (name, entry) in &doc.intents {
        let intent = vocab
            .intern(name)
            .ok_or_else(|| anyhow!("policy names `{name}`, which is not in the vocabulary"))?;
        let mut triples = std::collections::BTreeSet::new();
        for t in &entry.triples {
            triples.insert(parse_triple(t)?);
        }
        let mut param_bounds = BTreeMap::new();
        for (param, b) in &entry.bounds {
            param_bounds.insert(param.clone(), NumericBounds { min: b.min, max: b.max });
        }
        intents.insert(
            intent,
            IntentPolicy {
                triples,
                max_scope: parse_scope(&entry.max_scope)?,
                param_bounds,
                approval_required: entry.approval_required,
                token_ttl_seconds: entry.ttl_seconds,
            },
        );
    }
    Ok(PolicyContext {
        name: doc.name.clone(),
        version,
        intents,
    })
}

/// Render a built-in policy to its on-disk form — the round-trip partner
/// of [`load_policy`], and how example files are produced.
pub fn render_policy(ctx: &PolicyContext) -> String {
    let doc = PolicyFileDoc {
        name: ctx.name.clone(),
        intents: ctx
            .intents
            .iter()
            .map(|(intent, pol)| {
                (
                    intent.as_str().to_string(),
                    IntentEntryDoc {
                        triples: pol.triples.iter().map(render_triple).collect(),
                        max_scope: pol.max_scope.as_str().to_string(),
                        approval_required: pol.approval_required,
                        ttl_seconds: pol.token_ttl_seconds,
                        bounds: pol
                            .param_bounds
                            .iter()
                            .map(|(k, b)| (k.clone(), BoundsDoc { min: b.min, max: b.max }))
                            .collect(),
                    },
                )
            })
            .collect(),
    };
    toml::to_string_pretty(&doc).expect("policy doc serializes")
}

/// Write example policy files for both built-in tables into `dir`;
/// returns the paths.
pub fn write_policy_fixtures(dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for kind in [PolicyKind::Strict, PolicyKind::Permissive] {
        let ctx = crate::fixtures::policy(kind);
        let path = dir.join(format!("policy-{}.toml", kind.name()));
        fs::write(&path, render_policy(&ctx))?;
        out.push(path);
    }
    Ok(out)
}

/// Resolve the `--policy` argument: a builtin name or a file path.
pub fn resolve_policy_arg(arg: &str) -> Result<PolicyChoice> {
    if let Some(kind) = PolicyKind::parse(arg) {
        return Ok(PolicyChoice::Builtin(kind));
    }
    let path = PathBuf::from(arg);
    if path.exists() {
        return Ok(PolicyChoice::File(path));
    }
    bail!("`{arg}` is neither a built-in policy (strict|permissive) nor an existing file")
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyChoice {
    Builtin(PolicyKind),
    File(PathBuf),
}

pub fn resolve_drift_preset(arg: &str) -> Result<DriftPreset> {
    DriftPreset::parse(arg)
        .ok_or_else(|| anyhow!("`{arg}` is not a drift preset (mechanism|eval)"))
}

// ---------------------------------------------------------------------------
// Audit log files
// ---------------------------------------------------------------------------

/// Persist the chained records as JSON-lines, one record per line. The
/// payload digests and link hashes travel with each record, so a reader
/// can verify the chain without the log object.
pub fn write_audit_jsonl(log: &AuditLog, path: &Path) -> Result<usize> {
    let records = log
        .read(Principal::Auditor)
        .map_err(|e| anyhow!("audit read denied: {e}"))?;
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing audit log {}", path.display()))?;
    Ok(records.len())
}

pub fn load_audit_jsonl(path: &Path) -> Result<Vec<AuditRecord>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading audit log {}", path.display()))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AuditRecord = serde_json::from_str(line)
            .with_context(|| format!("audit log {} line {}", path.display(), i + 1))?;
        records.push(record);
    }
    Ok(records)
}

/// Verify a stored chain; the error carries the first broken sequence
/// number.
pub fn verify_audit_file(path: &Path) -> Result<usize> {
    let records = load_audit_jsonl(path)?;
    verify_chain(&records).map_err(|e| anyhow!("{e}"))?;
    Ok(records.len())
}

// ---------------------------------------------------------------------------
// Approval queue files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueFileEntry {
    pub entry_id: u64,
    pub ir_digest: String,
    pub approver_role: String,
    pub created_at_ms: i64,
    pub resolution: Option<String>,
}

fn resolution_str(r: Resolution) -> &'static str {
    match r {
        Resolution::Approve => "approve",
        Resolution::Deny => "deny",
        Resolution::Timeout => "timeout",
    }
}

pub fn parse_resolution(s: &str) -> Result<Resolution> {
    match s {
        "approve" => Ok(Resolution::Approve),
        "deny" => Ok(Resolution::Deny),
        "timeout" => Ok(Resolution::Timeout),
        other => bail!("unknown resolution `{other}` (approve|deny|timeout)"),
    }
}

pub fn save_queue(queue: &ApprovalQueue, path: &Path) -> Result<()> {
    let rows: Vec<QueueFileEntry> = queue
        .entries()
        .iter()
        .map(|e| QueueFileEntry {
            entry_id: e.entry_id,
            ir_digest: e.ir_digest.to_hex(),
            approver_role: e.approver_role.clone(),
            created_at_ms: e.created_at_ms,
            resolution: e.resolution.map(|r| resolution_str(r).to_string()),
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&rows)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing queue {}", path.display()))
}

/// Rebuild a queue from its file. Entry ids are queue-assigned and dense,
/// so the file must list them in order — an edited or reordered file is
/// rejected rather than silently renumbered.
pub fn load_queue(path: &Path) -> Result<ApprovalQueue> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading queue {}", path.display()))?;
    let rows: Vec<QueueFileEntry> = serde_json::from_str(&text)
        .with_context(|| format!("parsing queue {}", path.display()))?;
    let mut queue = ApprovalQueue::new();
    for row in &rows {
        let digest = Digest32::from_hex(&row.ir_digest)
            .map_err(|e| anyhow!("queue entry {}: {e}", row.entry_id))?;
        let assigned = queue.enqueue(digest, &row.approver_role, row.created_at_ms);
        if assigned != row.entry_id {
            bail!(
                "queue file ids are not dense/ordered: expected {assigned}, found {}",
                row.entry_id
            );
        }
        if let Some(r) = &row.resolution {
            queue
                .resolve(assigned, parse_resolution(r)?)
                .map_err(|e| anyhow!("queue entry {assigned}: {e}"))?;
        }
    }
    Ok(queue)
}
