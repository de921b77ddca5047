//! Reproducibility guarantees: a fixed seed yields byte-identical corpora,
//! re-running a corpus yields byte-identical results and audit chains, and
//! aggregate metrics do not depend on case order. Downstream, these are
//! what make report fingerprints meaningful across machines.

use pea_core::audit::Principal;
use pea_harness::corpus::{self, corpus_digest, AttackCase, AttackClass};
use pea_harness::fixtures::{Deployment, DriftPreset, PolicyKind};
use pea_harness::keys::{dev_key, key_tag};
use pea_harness::metrics::Metrics;
use pea_harness::report::RunReport;
use pea_harness::scenario::{run_corpus, Toggles};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn deployment() -> Deployment {
    Deployment::standard(PolicyKind::Permissive, dev_key(), DriftPreset::Mechanism)
}

/// A small corpus that exercises every stage: issuance, dispatch, token
/// derivation, provenance, and output screening.
fn mixed_corpus(seed: u64, dep: &Deployment) -> Vec<AttackCase> {
    let mut cases = Vec::new();
    cases.extend(corpus::generate(AttackClass::Benign, 30, seed, dep));
    cases.extend(corpus::generate(AttackClass::PromptInjection, 10, seed, dep));
    cases.extend(corpus::generate(AttackClass::TokenReplay, 6, seed, dep));
    cases.extend(corpus::generate(AttackClass::DelegationEscalation, 8, seed, dep));
    cases.extend(corpus::generate(AttackClass::DriftExfiltration, 6, seed, dep));
    cases.extend(corpus::generate(AttackClass::CoercionImplicit, 6, seed, dep));
    cases
}

#[test]
fn corpus_is_byte_identical_for_a_fixed_seed() {
    let dep = deployment();
    for class in AttackClass::ALL {
        let a = corpus::generate(class, 40, 7, &dep);
        let b = corpus::generate(class, 40, 7, &dep);
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap(),
            "{} corpus differs between generations",
            class.name()
        );
        assert_eq!(corpus_digest(&a), corpus_digest(&b));
    }
}

#[test]
fn seed_changes_randomized_content() {
    let dep = deployment();
    let a = corpus::generate(AttackClass::PromptInjection, 40, 1, &dep);
    let b = corpus::generate(AttackClass::PromptInjection, 40, 2, &dep);
    assert_ne!(
        corpus_digest(&a),
        corpus_digest(&b),
        "injection payload amounts are seeded, so distinct seeds must differ"
    );
}

#[test]
fn scenario_rerun_is_byte_identical() {
    let dep = deployment();
    let cases = mixed_corpus(11, &dep);
    let one = run_corpus(&cases, &dep, Toggles::full());
    let two = run_corpus(&cases, &dep, Toggles::full());

    assert_eq!(
        serde_json::to_vec(&one.results).unwrap(),
        serde_json::to_vec(&two.results).unwrap(),
        "case results differ between identical runs"
    );
    let head = |run: &pea_harness::scenario::RunOutput| {
        run.audit
            .read(Principal::Auditor)
            .expect("auditor may read")
            .last()
            .expect("runs append audit records")
            .this_hash
    };
    assert_eq!(
        head(&one),
        head(&two),
        "audit chains diverge between identical runs"
    );
    assert_eq!(one.review_queue_depth, two.review_queue_depth);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dep = deployment();
    let cases = mixed_corpus(23, &dep);
    let digest = corpus_digest(&cases);
    let tag = key_tag(&dep.key);

    let build = || {
        let run = run_corpus(&cases, &dep, Toggles::full());
        RunReport::build("determinism", 23, &dep, Toggles::full(), digest, &run, &tag)
    };
    let a = build();
    let b = build();
    assert_eq!(a.to_json(), b.to_json(), "report JSON differs across runs");
    assert_eq!(
        a.render_text(),
        b.render_text(),
        "report text differs across runs"
    );
    assert_eq!(a.fingerprint, b.fingerprint);
}

#[test]
fn metrics_do_not_depend_on_case_order() {
    let dep = deployment();
    let cases = mixed_corpus(31, &dep);
    let run = run_corpus(&cases, &dep, Toggles::full());

    let baseline = Metrics::compute(&run.results);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let mut shuffled = run.results.clone();
        shuffled.shuffle(&mut rng);
        let m = Metrics::compute(&shuffled);
        assert_eq!(
            serde_json::to_value(&m).unwrap(),
            serde_json::to_value(&baseline).unwrap(),
            "metrics changed under case reordering"
        );
    }
}
