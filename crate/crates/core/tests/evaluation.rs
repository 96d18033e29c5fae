mod common;

use std::collections::BTreeSet;
use std::io::Write;

use common::{fixture_posts, post, replay_backends, FIXTURE_MODEL};
use mmfc_core::domain::{Label, MisinfoType, ReasoningMethod, StrategyId};
use mmfc_core::evaluation::{
    compute_metrics, emit_report, evaluate, load_dataset, ErrorPolicy, EvalError, PredictionRecord, ReportFormat,
};
use mmfc_core::pipeline::{Pipeline, PipelineConfig};
use mmfc_core::postprocess::DomainPolicy;
use mmfc_core::reasoning::ReasoningConfig;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rec(id: usize, truth: Label, predicted: Option<Label>, conf: u8, types: &[MisinfoType]) -> PredictionRecord {
    PredictionRecord {
        post_id: format!("p{id}"),
        truth,
        truth_types: types.iter().copied().collect(),
        predicted,
        confidence: predicted.map(|_| conf),
        verdict: None,
        error: predicted.is_none().then(|| "BackendUnavailable".to_string()),
    }
}

fn balanced(real_correct: usize, fake_correct: usize) -> Vec<PredictionRecord> {
    let mut out = Vec::new();
    for i in 0..120 {
        let p = if i < real_correct { Label::Real } else { Label::Fake };
        out.push(rec(i, Label::Real, Some(p), 80, &[]));
    }
    for i in 0..120 {
        let p = if i < fake_correct { Label::Fake } else { Label::Real };
        out.push(rec(120 + i, Label::Fake, Some(p), 80, &[MisinfoType::ImageOOC]));
    }
    out
}

#[test]
fn no_evidence_row_arithmetic() {
    let m = compute_metrics(&balanced(61, 109), ErrorPolicy::CountAsWrong).unwrap();
    assert_eq!((m.acc, m.r_acc, m.f_acc), (Some(70.8), Some(50.8), Some(90.8)));
    assert!((m.acc.unwrap() - (m.r_acc.unwrap() + m.f_acc.unwrap()) / 2.0).abs() <= 0.05);
}

#[test]
fn small_hand_counts() {
    let r = vec![
        rec(0, Label::Real, Some(Label::Real), 90, &[]),
        rec(1, Label::Real, Some(Label::Fake), 60, &[]),
        rec(2, Label::Fake, Some(Label::Fake), 80, &[MisinfoType::Deepfake]),
        rec(3, Label::Fake, Some(Label::Fake), 70, &[MisinfoType::Deepfake, MisinfoType::TextMisleading]),
    ];
    let m = compute_metrics(&r, ErrorPolicy::CountAsWrong).unwrap();
    assert_eq!((m.acc, m.r_acc, m.f_acc, m.avg_conf), (Some(75.0), Some(50.0), Some(100.0), Some(75.0)));
    assert_eq!(m.by_type[&MisinfoType::Deepfake].n, 2);
    assert_eq!(m.by_type[&MisinfoType::TextMisleading].avg_conf, Some(70.0));
    assert_eq!(m.by_type[&MisinfoType::ImageOOC].acc, None);
    assert!(m.undefined.contains(&"by_type.image_ooc".to_string()));

    let all = compute_metrics(&balanced(120, 120), ErrorPolicy::CountAsWrong).unwrap();
    assert_eq!((all.acc, all.r_acc, all.f_acc), (Some(100.0), Some(100.0), Some(100.0)));
}

#[test]
fn empty_class_is_undefined_not_zero() {
    let m = compute_metrics(&[rec(0, Label::Real, Some(Label::Real), 50, &[])], ErrorPolicy::CountAsWrong).unwrap();
    assert_eq!(m.f_acc, None);
    assert!(m.undefined.contains(&"f_acc".to_string()));
    assert!(matches!(compute_metrics(&[], ErrorPolicy::CountAsWrong), Err(EvalError::NoRecords)));
}

#[test]
fn error_policies() {
    let mut r = balanced(100, 100);
    let clean_a = compute_metrics(&r, ErrorPolicy::CountAsWrong).unwrap();
    let clean_b = compute_metrics(&r, ErrorPolicy::Exclude).unwrap();
    assert_eq!((clean_a.acc, clean_a.r_acc, clean_a.f_acc), (clean_b.acc, clean_b.r_acc, clean_b.f_acc));

    // Turn 20 correct real predictions into errors.
    for x in r.iter_mut().take(20) {
        *x = rec(0, Label::Real, None, 0, &[]);
    }
    let wrong = compute_metrics(&r, ErrorPolicy::CountAsWrong).unwrap();
    let excl = compute_metrics(&r, ErrorPolicy::Exclude).unwrap();
    assert_eq!(wrong.n_errors, 20);
    assert_eq!(excl.n_errors, 20);
    assert_eq!(wrong.r_acc, Some(66.7)); // 80/120
    assert_eq!(excl.r_acc, Some(80.0)); // 80/100
    assert_eq!(wrong.f_acc, excl.f_acc);
}

/// Direct filtering and counting, independent of the library.
fn recount(records: &[PredictionRecord], t: MisinfoType) -> (usize, Option<f64>) {
    let members: Vec<_> = records.iter().filter(|r| r.truth == Label::Fake && r.truth_types.contains(&t)).collect();
    let correct = members.iter().filter(|r| r.predicted == Some(Label::Fake)).count();
    let acc = (!members.is_empty()).then(|| (1000.0 * correct as f64 / members.len() as f64).round() / 10.0);
    (members.len(), acc)
}

#[test]
fn by_type_matches_brute_force_and_is_order_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.gen_range(1..30);
        let mut records: Vec<PredictionRecord> = (0..n)
            .map(|i| {
                let truth = if rng.gen_bool(0.5) { Label::Real } else { Label::Fake };
                let types: Vec<MisinfoType> = if truth == Label::Fake {
                    MisinfoType::ALL.iter().copied().filter(|_| rng.gen_bool(0.5)).collect()
                } else {
                    vec![]
                };
                let pred = match rng.gen_range(0..5) {
                    0 => None,
                    1 | 2 => Some(Label::Real),
                    _ => Some(Label::Fake),
                };
                rec(i, truth, pred, rng.gen_range(0..=100), &types)
            })
            .collect();
        let m = compute_metrics(&records, ErrorPolicy::CountAsWrong).unwrap();
        for t in MisinfoType::ALL {
            let (n, acc) = recount(&records, t);
            assert_eq!((m.by_type[&t].n, m.by_type[&t].acc), (n, acc));
        }
        for v in [m.acc, m.r_acc, m.f_acc].into_iter().flatten() {
            assert!((0.0..=100.0).contains(&v));
        }
        records.shuffle(&mut rng);
        assert_eq!(compute_metrics(&records, ErrorPolicy::CountAsWrong).unwrap(), m);
    }
}

#[test]
fn load_dataset_splits_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("posts.jsonl");
    let line = |id: &str| {
        format!(
            "{{\"id\":\"{id}\",\"text\":\"t {id}\",\"date\":\"2024-01-01\",\"label\":\"real\",\"images\":[{{\"sha256\":\"{}\"}}]}}\n",
            "b".repeat(64)
        )
    };
    std::fs::write(&data, ["a", "b", "c", "d"].map(line).concat()).unwrap();
    let split = dir.path().join("dev.txt");
    std::fs::write(&split, "# dev ids\nb\nd\n").unwrap();
    let ds = load_dataset(&data, Some(&split)).unwrap();
    let ids = |v: &[mmfc_core::domain::Post]| v.iter().map(|p| p.id.clone()).collect::<Vec<_>>();
    assert_eq!((ids(&ds.dev), ids(&ds.test)), (vec!["b".to_string(), "d".into()], vec!["a".to_string(), "c".into()]));

    std::fs::write(&split, "{\"dev\": [\"a\", \"zz\"]}").unwrap();
    assert!(matches!(load_dataset(&data, Some(&split)), Err(EvalError::SplitMismatch(id)) if id == "zz"));

    let mut f = std::fs::OpenOptions::new().append(true).open(&data).unwrap();
    f.write_all(line("a").as_bytes()).unwrap();
    assert!(matches!(load_dataset(&data, None), Err(EvalError::DuplicateId { line: 5, .. })));

    std::fs::write(&data, "{\"id\":\"x\"}\n").unwrap();
    assert!(matches!(load_dataset(&data, None), Err(EvalError::Parse { line: 1, .. })));
}

fn fixture_config(method: ReasoningMethod, strategies: &[StrategyId]) -> PipelineConfig {
    PipelineConfig::new(ReasoningConfig::new(method, FIXTURE_MODEL)).with_strategies(strategies.iter().copied())
}

fn report_bytes(cfg: PipelineConfig) -> (Vec<u8>, usize) {
    let (backends, transport) = replay_backends();
    let pipeline = Pipeline::new(&backends, cfg, DomainPolicy::starter()).unwrap();
    let (records, report) = evaluate(&fixture_posts(), &pipeline, ErrorPolicy::CountAsWrong).unwrap();
    let mut out = Vec::new();
    emit_report(&report, &records, ReportFormat::Jsonl, &mut out).unwrap();
    emit_report(&report, &records, ReportFormat::Table, &mut out).unwrap();
    (out, transport.calls())
}

#[test]
fn replay_is_byte_identical_and_offline() {
    let cfg = fixture_config(ReasoningMethod::MultiStep, &[StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT]);
    let (a, calls_a) = report_bytes(cfg.clone());
    let (b, calls_b) = report_bytes(cfg);
    assert_eq!(a, b);
    assert_eq!((calls_a, calls_b), (0, 0));
    let text = String::from_utf8(a).unwrap();
    assert!(!text.contains("\"error\":\"CacheMiss\""), "{text}");
}

#[test]
fn fixture_scores_as_scripted() {
    let (backends, _) = replay_backends();
    let cfg = fixture_config(ReasoningMethod::MultiStep, &[StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT]);
    let pipeline = Pipeline::new(&backends, cfg, DomainPolicy::starter()).unwrap();
    let (records, report) = evaluate(&fixture_posts(), &pipeline, ErrorPolicy::CountAsWrong).unwrap();
    assert_eq!(report.n_errors, 0);
    // p16's only giveaway is on a blocked domain and p20 has none: 8 of 10 fakes caught.
    assert_eq!((report.r_acc, report.f_acc, report.acc), (Some(100.0), Some(80.0), Some(90.0)));
    let missed: BTreeSet<_> = records.iter().filter(|r| !r.is_correct()).map(|r| r.post_id.as_str()).collect();
    assert_eq!(missed, BTreeSet::from(["p16", "p20"]));
    assert!(records.iter().all(|r| r.verdict.as_ref().unwrap().intermediates.as_ref().unwrap().len() == 2));
}

#[test]
fn no_evidence_baseline_sees_empty_bundle() {
    let (backends, transport) = replay_backends();
    let pipeline =
        Pipeline::new(&backends, fixture_config(ReasoningMethod::CoT, &[]), DomainPolicy::starter()).unwrap();
    let (records, report) = evaluate(&fixture_posts(), &pipeline, ErrorPolicy::CountAsWrong).unwrap();
    assert_eq!(transport.calls(), 0);
    assert!(records.iter().all(|r| r.predicted == Some(Label::Real)));
    assert_eq!((report.r_acc, report.f_acc), (Some(100.0), Some(0.0)));
    assert!(Pipeline::new(&backends, fixture_config(ReasoningMethod::MultiStep, &[]), DomainPolicy::starter()).is_err());
}

#[test]
fn missing_recording_isolated_to_its_post() {
    let (backends, _) = replay_backends();
    let cfg = fixture_config(ReasoningMethod::MultiStep, &[StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT]);
    let pipeline = Pipeline::new(&backends, cfg, DomainPolicy::starter()).unwrap();
    let mut posts = fixture_posts();
    let mut stray = post("unrecorded", "A post nobody recorded.");
    stray.label = Some(Label::Fake);
    posts.insert(3, stray);
    let (records, report) = evaluate(&posts, &pipeline, ErrorPolicy::CountAsWrong).unwrap();
    assert_eq!(
        records.iter().map(|r| r.post_id.as_str()).collect::<Vec<_>>()[..5],
        ["p01", "p02", "p03", "unrecorded", "p04"]
    );
    assert_eq!(records[3].error.as_deref(), Some("CacheMiss"));
    assert_eq!(records.iter().filter(|r| r.error.is_some()).count(), 1);
    assert_eq!(report.n_errors, 1);
}

#[test]
fn unlabeled_posts_rejected() {
    let (backends, _) = replay_backends();
    let pipeline =
        Pipeline::new(&backends, fixture_config(ReasoningMethod::CoT, &[]), DomainPolicy::starter()).unwrap();
    assert!(matches!(evaluate(&[post("x", "t")], &pipeline, ErrorPolicy::CountAsWrong), Err(EvalError::Unlabeled(_))));
}

#[test]
fn table_report_format() {
    let mut m = compute_metrics(&balanced(61, 109), ErrorPolicy::CountAsWrong).unwrap();
    m.config = Some(fixture_config(ReasoningMethod::CoT, &[]).fingerprint());
    let mut a = Vec::new();
    emit_report(&m, &[], ReportFormat::Table, &mut a).unwrap();
    let mut b = Vec::new();
    emit_report(&m, &[], ReportFormat::Table, &mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    for needle in [
        "Acc.",
        "R.Acc.",
        "F.Acc.",
        "70.8",
        "50.8",
        "90.8",
        "Deepfakes",
        "Image OOC",
        "Text Misleading",
        "strategies=none",
    ] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
}
