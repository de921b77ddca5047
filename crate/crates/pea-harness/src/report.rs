//! Run reports. A report is a pure function of the run's inputs and
//! results: same corpus, same deployment, same toggles — same bytes out.
//! Nothing in this module consults a wall clock or an environment
//! variable, which is what makes the determinism tests meaningful.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use pea_core::crypto::{sha256, Digest32};

use crate::fixtures::Deployment;
use crate::metrics::Metrics;
use crate::scenario::{CaseResult, RunOutput, Toggles};

/// Per-class rollup: how many ran, how many won, and where the rest
/// stopped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStat {
    pub cases: usize,
    pub succeeded: usize,
    /// Block location label -> count.
    pub blocked: BTreeMap<String, usize>,
}

/// One line per case, for replaying a run's judgment without the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub class: String,
    pub index: usize,
    pub label: String,
    pub block: String,
    pub effects: usize,
    pub succeeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    /// Digest over everything that determines the run: name, policy
    /// identity, corpus seed, live layers, thresholds, key identity.
    pub fingerprint: String,
    pub seed: u64,
    pub policy: String,
    pub policy_version: String,
    pub drift_threshold: f64,
    pub disabled_layers: Vec<String>,
    pub corpus_digest: String,
    pub metrics: Metrics,
    pub classes: BTreeMap<String, ClassStat>,
    pub verdicts: Vec<VerdictRow>,
    pub audit_records: usize,
    pub audit_chain_ok: bool,
    pub review_queue_depth: usize,
}

impl RunReport {
    pub fn build(
        experiment: &str,
        seed: u64,
        dep: &Deployment,
        toggles: Toggles,
        corpus_digest: Digest32,
        run: &RunOutput,
        key_tag: &str,
    ) -> RunReport {
        let disabled: Vec<String> = toggles.disabled().iter().map(|s| s.to_string()).collect();
        let fingerprint = sha256(
            format!(
                "{experiment}|{}|{}|{seed}|{}|{:.4}|{}|{key_tag}",
                dep.policy.name,
                dep.policy.version.to_hex(),
                disabled.join(","),
                dep.drift_threshold,
                corpus_digest.to_hex(),
            )
            .as_bytes(),
        )
        .to_hex();

        let mut classes: BTreeMap<String, ClassStat> = BTreeMap::new();
        for r in &run.results {
            let stat = classes.entry(r.class.name().to_string()).or_default();
            stat.cases += 1;
            if r.attack_succeeded {
                stat.succeeded += 1;
            }
            *stat.blocked.entry(r.block.label().to_string()).or_insert(0) += 1;
        }

        RunReport {
            experiment: experiment.into(),
            fingerprint,
            seed,
            policy: dep.policy.name.clone(),
            policy_version: dep.policy.version.to_hex(),
            drift_threshold: dep.drift_threshold,
            disabled_layers: disabled,
            corpus_digest: corpus_digest.to_hex(),
            metrics: Metrics::compute(&run.results),
            classes,
            verdicts: run.results.iter().map(verdict_row).collect(),
            audit_records: run.audit.len(),
            audit_chain_ok: run.audit_chain_ok,
            review_queue_depth: run.review_queue_depth,
        }
    }

    /// Canonical JSON form: pretty, key-sorted (maps are ordered), one
    /// trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Human-readable summary.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let m = &self.metrics;
        let line = |out: &mut String, k: &str, v: String| {
            out.push_str(&format!("{k:<28} {v}\n"));
        };
        let opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.4}"),
            None => "n/a".into(),
        };
        out.push_str(&format!("== {} ==\n", self.experiment));
        line(&mut out, "fingerprint", self.fingerprint[..16].to_string());
        line(&mut out, "policy", format!("{} ({})", self.policy, &self.policy_version[..12]));
        line(&mut out, "seed", self.seed.to_string());
        line(
            &mut out,
            "layers disabled",
            if self.disabled_layers.is_empty() {
                "none".into()
            } else {
                self.disabled_layers.join(",")
            },
        );
        line(&mut out, "cases / attacks", format!("{} / {}", m.cases, m.attacks));
        line(&mut out, "attack success rate", opt(m.attack_success_rate));
        line(
            &mut out,
            "bypass rate",
            format!("{} ({} cases)", opt(m.bypass_rate), m.bypass_cases),
        );
        line(&mut out, "token enforcement", format!("{:.4}", m.token_enforcement_rate));
        line(&mut out, "unauthorized uses", m.unauthorized_capability_uses.to_string());
        line(&mut out, "injection vetoed", opt(m.injection_vetoed_rate));
        line(&mut out, "drift fnr / fpr", format!("{} / {}", opt(m.drift_false_negative_rate), opt(m.drift_false_positive_rate)));
        line(
            &mut out,
            "screen prec / rec",
            format!("{} / {}", opt(m.screen_precision), opt(m.screen_recall)),
        );
        line(&mut out, "implicit detection", opt(m.implicit_detection_rate));
        line(&mut out, "screen auc", opt(m.screen_auc));
        line(
            &mut out,
            "keyword prec / rec",
            format!("{} / {}", opt(m.baseline_precision), opt(m.baseline_recall)),
        );
        line(&mut out, "keyword implicit", opt(m.baseline_implicit_rate));
        line(&mut out, "keyword auc", opt(m.baseline_auc));
        line(&mut out, "review parked", m.review_parked.to_string());
        line(
            &mut out,
            "audit",
            format!(
                "{} records, chain {}",
                self.audit_records,
                if self.audit_chain_ok { "OK" } else { "BROKEN" }
            ),
        );
        out.push_str("-- classes --\n");
        for (name, stat) in &self.classes {
            let blocked: Vec<String> = stat
                .blocked
                .iter()
                .map(|(at, n)| format!("{at}:{n}"))
                .collect();
            out.push_str(&format!(
                "{name:<26} {:>5} cases  {:>4} succeeded  [{}]\n",
                stat.cases,
                stat.succeeded,
                blocked.join(" ")
            ));
        }
        out
    }
}

fn verdict_row(r: &CaseResult) -> VerdictRow {
    VerdictRow {
        class: r.class.name().into(),
        index: r.index,
        label: r.label.clone(),
        block: r.block.label().into(),
        effects: r.effects,
        succeeded: r.attack_succeeded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{corpus_digest, generate, AttackClass};
    use crate::fixtures::{DriftPreset, PolicyKind};
    use crate::keys::{dev_key, key_tag};
    use crate::scenario::run_corpus;

    #[test]
    fn reports_are_byte_stable() {
        let dep = Deployment::standard(PolicyKind::Strict, dev_key(), DriftPreset::Mechanism);
        let cases = generate(AttackClass::Benign, 10, 42, &dep);
        let digest = corpus_digest(&cases);
        let tag = key_tag(&dep.key);
        let a = RunReport::build(
            "unit",
            42,
            &dep,
            Toggles::full(),
            digest,
            &run_corpus(&cases, &dep, Toggles::full()),
            &tag,
        );
        let b = RunReport::build(
            "unit",
            42,
            &dep,
            Toggles::full(),
            digest,
            &run_corpus(&cases, &dep, Toggles::full()),
            &tag,
        );
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.render_text(), b.render_text());
    }

    #[test]
    fn fingerprint_tracks_every_input() {
        let dep = Deployment::standard(PolicyKind::Strict, dev_key(), DriftPreset::Mechanism);
        let cases = generate(AttackClass::Benign, 4, 42, &dep);
        let digest = corpus_digest(&cases);
        let run = run_corpus(&cases, &dep, Toggles::full());
        let tag = key_tag(&dep.key);
        let base = RunReport::build("unit", 42, &dep, Toggles::full(), digest, &run, &tag);
        let other_seed = RunReport::build("unit", 43, &dep, Toggles::full(), digest, &run, &tag);
        assert_ne!(base.fingerprint, other_seed.fingerprint);
        let other_toggles = RunReport::build(
            "unit",
            42,
            &dep,
            Toggles::without(crate::scenario::Layer::Osg),
            digest,
            &run,
            &tag,
        );
        assert_ne!(base.fingerprint, other_toggles.fingerprint);
        let other_exp = RunReport::build("unit2", 42, &dep, Toggles::full(), digest, &run, &tag);
        assert_ne!(base.fingerprint, other_exp.fingerprint);
    }

    #[test]
    fn json_round_trips() {
        let dep = Deployment::standard(PolicyKind::Permissive, dev_key(), DriftPreset::Mechanism);
        let cases = generate(AttackClass::TokenReplay, 6, 9, &dep);
        let run = run_corpus(&cases, &dep, Toggles::full());
        let report = RunReport::build(
            "unit",
            9,
            &dep,
            Toggles::full(),
            corpus_digest(&cases),
            &run,
            &key_tag(&dep.key),
        );
        let parsed: RunReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(parsed, report);
    }
}
