//! Acceptance checks: one PASS/FAIL line per criterion, with its runtime
//! against the allowed limit. Every expected value comes from an oracle in
//! this file or from published figures.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mmfc_core::backends::{BackendConfig, BackendMode, Backends, CountingLlm, CountingTransport, ScriptedLlm};
use mmfc_core::curation::{greedy_assignment, ot_select, sinkhorn, topic_quota, Embedded, Matrix, SinkhornParams};
use mmfc_core::domain::{
    ContentHash, EvidenceBundle, EvidenceItem, EvidenceKind, IngestContext, Label, MisinfoType, Post, ReasoningMethod,
    StrategyId, TokenUsage, Topic, Verdict,
};
use mmfc_core::evaluation::{
    compute_metrics, emit_report, evaluate, load_posts, ErrorPolicy, PredictionRecord, ReportFormat,
};
use mmfc_core::pipeline::{Pipeline, PipelineConfig};
use mmfc_core::postprocess::{domain_filter, DomainPolicy};
use mmfc_core::reasoning::{Reasoner, ReasoningConfig};
use mmfc_core::testkit::{gateway, RuleJudge, SearchIndex};
use mmfc_loop::service::{export_records, render_export};
use mmfc_loop::{
    Action, DecisionInput, DetectFailure, EvidenceDigest, ExportFilter, FnDetector, LoopService, State, Status,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn post(id: &str, text: &str) -> Post {
    let line = serde_json::json!({
        "id": id,
        "text": text,
        "date": "2024-06-01",
        "images": [{ "sha256": ContentHash::of_bytes(format!("{id}/{text}").as_bytes()).to_string() }],
    });
    Post::from_json_line(&line.to_string(), &IngestContext::default()).unwrap()
}

fn item(sid: u8, rank: u32, url: &str, body: &str) -> EvidenceItem {
    EvidenceItem::new(EvidenceKind::Text, StrategyId::new(sid).unwrap(), rank, url, format!("title {rank}"), body)
        .unwrap()
}

// 1. Per-class and overall accuracy on a balanced set.

fn record(i: usize, truth: Label, predicted: Label) -> PredictionRecord {
    PredictionRecord {
        post_id: format!("r{i}"),
        truth,
        truth_types: if truth == Label::Fake { BTreeSet::from([MisinfoType::ImageOOC]) } else { BTreeSet::new() },
        predicted: Some(predicted),
        confidence: Some(75),
        verdict: None,
        error: None,
    }
}

fn metrics() -> Check {
    let mut recs = Vec::new();
    for i in 0..120 {
        recs.push(record(i, Label::Real, if i < 61 { Label::Real } else { Label::Fake }));
        recs.push(record(120 + i, Label::Fake, if i < 109 { Label::Fake } else { Label::Real }));
    }
    let m = compute_metrics(&recs, ErrorPolicy::CountAsWrong).map_err(|e| e.to_string())?;
    let got = [m.r_acc, m.f_acc, m.acc];
    for (g, want) in got.iter().zip([50.8, 90.8, 70.8]) {
        let g = g.ok_or("undefined metric")?;
        ensure!((g - want).abs() <= 0.05, "got {got:?}");
    }
    Ok(format!("R.Acc {:.1} F.Acc {:.1} Acc {:.1}", got[0].unwrap(), got[1].unwrap(), got[2].unwrap()))
}

// 2. Replay determinism.

fn replay_report() -> Result<(Vec<u8>, usize), String> {
    let dir = manifest().join("../core/tests/fixtures/replay20");
    let transport = Arc::new(CountingTransport::offline());
    let cfg: BackendConfig = toml::from_str("[llm]\nid = \"stub-llm\"\n").unwrap();
    let backends = Backends::from_config(&cfg, BackendMode::Replay, Some(&dir.join("cache")), transport.clone())
        .map_err(|e| e.to_string())?;
    let mut config = PipelineConfig::new(ReasoningConfig::new(ReasoningMethod::MultiStep, "stub-judge"))
        .with_strategies([StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT]);
    config.domain_filter = true;
    let pipeline = Pipeline::new(&backends, config, DomainPolicy::starter()).map_err(|e| e.to_string())?;
    let posts = load_posts(&dir.join("posts.jsonl")).map_err(|e| e.to_string())?;
    let (records, report) = evaluate(&posts, &pipeline, ErrorPolicy::CountAsWrong).map_err(|e| e.to_string())?;
    ensure!(report.n_errors == 0, "{} posts failed", report.n_errors);
    let mut out = Vec::new();
    emit_report(&report, &records, ReportFormat::Jsonl, &mut out).unwrap();
    emit_report(&report, &records, ReportFormat::Table, &mut out).unwrap();
    Ok((out, transport.calls()))
}

fn determinism() -> Check {
    let (a, calls_a) = replay_report()?;
    let (b, calls_b) = replay_report()?;
    ensure!(a == b, "reports differ");
    ensure!(calls_a + calls_b == 0, "{} network calls", calls_a + calls_b);
    Ok(format!("{} report bytes identical, 0 network calls", a.len()))
}

// 3. Self-consistency majority vote against enumeration.

fn vote_oracle(votes: &[(Label, u8)]) -> (Label, u8) {
    let of = |l: Label| votes.iter().filter(|v| v.0 == l).map(|v| f64::from(v.1)).collect::<Vec<_>>();
    let (r, f) = (of(Label::Real), of(Label::Fake));
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let real_wins = r.len() > f.len() || (r.len() == f.len() && mean(&r) > mean(&f));
    let w = if real_wins { r } else { f };
    (if real_wins { Label::Real } else { Label::Fake }, (mean(&w) + 0.5).floor() as u8)
}

fn sc_vote(votes: &[(Label, u8)]) -> Result<(Label, u8), String> {
    let replies =
        votes.iter().map(|(l, c)| format!("{{\"label\": \"{l}\", \"confidence\": {c}, \"rationale\": \"r\"}}"));
    let mut cfg = ReasoningConfig::new(ReasoningMethod::SelfConsistency, "m");
    cfg.sc_k = votes.len();
    let v = Reasoner::new(Arc::new(ScriptedLlm::new(replies)), cfg)
        .reason(&post("p", "claim"), &EvidenceBundle::empty("p"))
        .map_err(|e| e.to_string())?;
    Ok((v.label, v.confidence))
}

fn vote_patterns(k: usize, conf: impl Fn(usize, usize) -> u8) -> Vec<Vec<(Label, u8)>> {
    (0..1usize << k)
        .map(|mask| {
            (0..k).map(|i| (if mask >> i & 1 == 1 { Label::Fake } else { Label::Real }, conf(mask, i))).collect()
        })
        .collect()
}

fn majority_vote() -> Check {
    let mut n = 0;
    let mut ties = 0;
    let mut cases = vote_patterns(5, |m, i| (45 + (m * 7 + i * 13) % 55) as u8);
    for k in [2, 4] {
        cases.extend(vote_patterns(k, |m, i| (40 + (m * 11 + i * 17) % 60) as u8));
        cases.extend(vote_patterns(k, |_, _| 70));
    }
    for votes in cases {
        let want = vote_oracle(&votes);
        let got = sc_vote(&votes)?;
        ensure!(got == want, "{votes:?}: got {got:?}, oracle {want:?}");
        if 2 * votes.iter().filter(|v| v.0 == Label::Fake).count() == votes.len() {
            ties += 1;
        }
        n += 1;
    }
    Ok(format!("{n} patterns (32 at k=5), {ties} count ties"))
}

// 4. Sinkhorn against brute-force assignment.

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    permutations(n - 1)
        .into_iter()
        .flat_map(|p| {
            (0..=p.len()).map(move |pos| {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                q
            })
        })
        .collect()
}

fn sinkhorn_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut agree, mut counted, mut converged) = (0, 0, 0);
    for trial in 0..200 {
        let n = 3 + trial % 2;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let c = Matrix::from_rows(&rows).unwrap();
        let u = vec![1.0 / n as f64; n];
        let plan = sinkhorn(&c, &u, &u, SinkhornParams { eps: 1e-3, ..SinkhornParams::default() })
            .map_err(|e| e.to_string())?;
        if plan.converged {
            converged += 1;
            let (r, col) = plan.marginal_violation();
            ensure!(r.max(col) <= 1e-6, "trial {trial}: marginal violation {r:e}/{col:e}");
        }
        let mut costs: Vec<(f64, Vec<usize>)> =
            permutations(n).into_iter().map(|p| (p.iter().enumerate().map(|(i, &j)| rows[i][j]).sum(), p)).collect();
        costs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if costs[1].0 - costs[0].0 < 1e-2 {
            continue;
        }
        counted += 1;
        if greedy_assignment(&plan.plan, &c) == costs[0].1 {
            agree += 1;
        }
    }
    let rate = agree as f64 / counted as f64;
    ensure!(rate >= 0.95, "agreement {agree}/{counted}");
    for eps in [1e-3, 5e-4, 2e-4, 1e-4] {
        for _ in 0..25 {
            let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| rng.gen_range(0.0..2.0)).collect()).collect();
            let u = vec![0.25; 4];
            let plan = sinkhorn(
                &Matrix::from_rows(&rows).unwrap(),
                &u,
                &u,
                SinkhornParams { eps, ..SinkhornParams::default() },
            )
            .map_err(|e| e.to_string())?;
            ensure!(plan.plan.data.iter().all(|x| x.is_finite()), "non-finite plan at eps {eps:e}");
        }
    }
    Ok(format!(
        "{agree}/{counted} non-degenerate trials agree ({:.1}%), {converged}/200 converged, finite to eps 1e-4",
        100.0 * rate
    ))
}

// 5. Topic-aligned selection.

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn topic_alignment() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let topics = [Topic::Politics, Topic::Entertainment, Topic::History, Topic::Nature, Topic::Sports];
    let mut fake_posts = Vec::new();
    let mut fakes: BTreeMap<Topic, Vec<Embedded>> = BTreeMap::new();
    let mut cands: BTreeMap<Topic, Vec<Embedded>> = BTreeMap::new();
    for (t, n) in topics.iter().zip([9, 7, 6, 5, 3]) {
        for i in 0..n {
            let mut p = post(&format!("{t}-f{i}"), "fake");
            p.topic = Some(*t);
            p.label = Some(Label::Fake);
            fakes.entry(*t).or_default().push(Embedded { id: p.id.clone(), vector: unit_vector(&mut rng, 24) });
            fake_posts.push(p);
        }
        for i in 0..5 * n {
            cands.entry(*t).or_default().push(Embedded { id: format!("{t}-c{i}"), vector: unit_vector(&mut rng, 24) });
        }
    }
    let n_cands: usize = cands.values().map(Vec::len).sum();
    ensure!(fake_posts.len() == 30 && n_cands == 150, "corpus shape");
    // Oracle quota: fakes counted per topic by hand.
    let mut want: BTreeMap<Topic, usize> = BTreeMap::new();
    for p in &fake_posts {
        *want.entry(p.topic.unwrap()).or_default() += 1;
    }
    let quota = topic_quota(&fake_posts).map_err(|e| e.to_string())?;
    ensure!(quota == want, "quota {quota:?} vs {want:?}");
    let sel = ot_select(&fakes, &cands, &quota, SinkhornParams::default()).map_err(|e| e.to_string())?;
    ensure!(sel.counts() == want, "counts {:?}", sel.counts());
    let chosen = sel.chosen();
    let distinct: BTreeSet<_> = chosen.iter().collect();
    ensure!(distinct.len() == chosen.len(), "a candidate was selected twice");
    for (t, s) in &sel.topics {
        ensure!(s.matches.iter().all(|m| m.candidate_id.starts_with(&format!("{t}-c"))), "cross-topic match in {t}");
    }
    Ok(format!("30 fakes / 150 candidates, {} selected, per-topic counts equal quota", chosen.len()))
}

// 6. Domain filter.

fn domain_filter_check() -> Check {
    let mut b = EvidenceBundle::empty("p");
    b.groups.insert(
        StrategyId::TEXT_TO_TEXT,
        vec![
            item(1, 1, "https://www.infowars.com/a", "blocked"),
            item(1, 2, "https://apnews.com/b", "clean"),
            item(1, 3, "https://shop.infowars.com/c", "sub-blocked"),
            item(1, 4, "https://twitter.com/u/status/9", "source platform"),
            item(1, 5, "https://www.reuters.com/d", "clean"),
        ],
    );
    b.groups.insert(
        StrategyId::IMAGE_TO_TEXT,
        vec![item(3, 1, "https://mobile.x.com/e", "source platform"), item(3, 2, "https://bbc.co.uk/f", "clean")],
    );
    let policy = DomainPolicy::starter();
    let once = domain_filter(&b, &policy);
    let survivors: Vec<&str> = once.groups.values().flatten().map(|i| i.body.as_str()).collect();
    ensure!(survivors == ["clean"; 3], "survivors {survivors:?}");
    ensure!(domain_filter(&once, &policy) == once, "second application changed the bundle");
    Ok(format!("{} of 7 items kept, second pass is a no-op", survivors.len()))
}

// 7. LLM call counts per reasoning method.

fn call_counts() -> Check {
    let mut b = EvidenceBundle::empty("p");
    b.groups.insert(StrategyId::TEXT_TO_TEXT, vec![item(1, 1, "https://a.org/1", "report")]);
    b.groups.insert(StrategyId::IMAGE_TO_TEXT, vec![item(3, 1, "https://b.org/1", "same photo")]);
    let mut got = Vec::new();
    for (method, want) in [
        (ReasoningMethod::CoT, 1),
        (ReasoningMethod::Ensemble, 3 + 1),
        (ReasoningMethod::SelfConsistency, 5),
        (ReasoningMethod::MultiStep, b.groups.len() + 1),
    ] {
        let mut cfg = ReasoningConfig::new(method, "m");
        cfg.ensemble_n = 3;
        cfg.sc_k = 5;
        let llm = Arc::new(CountingLlm::new(Arc::new(RuleJudge)));
        Reasoner::new(llm.clone(), cfg).reason(&post("p", "claim"), &b).map_err(|e| e.to_string())?;
        ensure!(llm.calls() == want, "{method}: {} calls, expected {want}", llm.calls());
        got.push(format!("{method}={want}"));
    }
    Ok(got.join(" "))
}

// 8. Evidence changes the verdict end to end.

fn evidence_plumbing() -> Check {
    let dir = manifest().join("../core/tests/fixtures/replay20");
    let cfg: BackendConfig = toml::from_str("[llm]\nid = \"stub-llm\"\n").unwrap();
    let backends = Backends::from_config(
        &cfg,
        BackendMode::Replay,
        Some(&dir.join("cache")),
        Arc::new(CountingTransport::offline()),
    )
    .map_err(|e| e.to_string())?;
    let posts = load_posts(&dir.join("posts.jsonl")).map_err(|e| e.to_string())?;
    let p = posts.iter().find(|p| p.id == "p02").ok_or("p02 missing")?;
    let run = |method, strategies: &[StrategyId]| {
        let config =
            PipelineConfig::new(ReasoningConfig::new(method, "stub-judge")).with_strategies(strategies.iter().copied());
        Pipeline::new(&backends, config, DomainPolicy::starter()).and_then(|pl| pl.detect(p)).map_err(|e| e.to_string())
    };
    let with = run(ReasoningMethod::MultiStep, &[StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT])?;
    let group = with.bundle.groups.get(&StrategyId::IMAGE_TO_TEXT).ok_or("no image-to-text group")?;
    ensure!(
        group.iter().any(|i| i.body.to_lowercase().contains("different event")),
        "fixture evidence lacks the marker"
    );
    let without = run(ReasoningMethod::CoT, &[])?;
    ensure!(with.verdict.label == Label::Fake, "with evidence: {}", with.verdict.label);
    ensure!(without.verdict.label == Label::Real, "without evidence: {}", without.verdict.label);
    Ok(format!(
        "with evidence {} ({}), without evidence {} ({})",
        with.verdict.label, with.verdict.confidence, without.verdict.label, without.verdict.confidence
    ))
}

// 9. Journal fold equals live state; export round-trips.

fn scripted_verdict(label: Label, confidence: u8) -> Verdict {
    Verdict {
        label,
        confidence,
        rationale: "scripted".into(),
        intermediates: None,
        reasoning_method: ReasoningMethod::CoT,
        model_id: "scripted".into(),
        token_usage: TokenUsage::default(),
        retries: 0,
        warnings: vec![],
    }
}

type AssessFn = Box<dyn Fn(&Post) -> Result<(Verdict, EvidenceDigest), DetectFailure> + Send + Sync>;

fn detector(fp: &str) -> FnDetector<AssessFn> {
    FnDetector::new(
        fp,
        Box::new(|p: &Post| match p.text.as_str() {
            t if t.starts_with("err") => {
                Err(DetectFailure { tag: "BackendUnavailable".into(), message: "down".into() })
            }
            t => Ok((
                scripted_verdict(
                    if t.starts_with("fake") { Label::Fake } else { Label::Real },
                    (t.len() * 7 % 101) as u8,
                ),
                EvidenceDigest::default(),
            )),
        }) as AssessFn,
    )
}

const TEXTS: [&str; 8] =
    ["fake one", "real two", "fake three!", "real four!!", "err five", "fake six", "real seven", "fake eight"];

fn random_ops(s: &LoopService, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..20 {
        match rng.gen_range(0..9) {
            0..=2 => {
                let i = rng.gen_range(0..TEXTS.len());
                let _ = s.ingest_post(post(&format!("q{i}"), TEXTS[i]));
            }
            3 | 4 => {
                let _ = s.run_detection(None, &detector(["v1", "v2"][rng.gen_range(0..2)]));
            }
            _ => {
                let id = format!("item-{:06}", rng.gen_range(1..=TEXTS.len()));
                let fake = rng.gen_bool(0.5);
                let decision = if rng.gen_bool(0.8) {
                    DecisionInput {
                        action: Action::Accept,
                        final_label: Some(if fake { Label::Fake } else { Label::Real }),
                        types: if fake { BTreeSet::from([MisinfoType::Deepfake]) } else { BTreeSet::new() },
                        reviewer_id: "r1".into(),
                        note: None,
                    }
                } else {
                    DecisionInput {
                        action: Action::Reject,
                        final_label: None,
                        types: BTreeSet::new(),
                        reviewer_id: "r2".into(),
                        note: None,
                    }
                };
                let _ = s.submit_decision(&id, decision);
            }
        }
    }
}

fn journal_fold() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut accepted_total = 0;
    for trial in 0..1000u64 {
        let s = Arc::new(LoopService::in_memory());
        std::thread::scope(|scope| {
            for w in 0..3 {
                let s = s.clone();
                scope.spawn(move || random_ops(&s, trial * 3 + w));
            }
        });
        let entries = s.journal_entries().map_err(|e| e.to_string())?;
        let live = s.state();
        let folded = State::fold(&entries).map_err(|e| e.to_string())?;
        ensure!(folded == *live, "trial {trial}: fold differs from live state");

        let path = tmp.path().join("export.jsonl");
        let mut bytes = Vec::new();
        s.export(&ExportFilter::default(), &mut bytes).map_err(|e| e.to_string())?;
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        let loaded: BTreeMap<String, (Option<Label>, BTreeSet<MisinfoType>)> = load_posts(&path)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|p| (p.id, (p.label, p.misinfo_types)))
            .collect();
        // Oracle: accepted items with the reviewer's label, types only on fakes.
        let want: BTreeMap<String, (Option<Label>, BTreeSet<MisinfoType>)> = live
            .items()
            .filter(|i| i.status == Status::Accepted)
            .map(|i| {
                let d = i.decision.as_ref().unwrap();
                let types = if d.final_label == Some(Label::Fake) { d.types.clone() } else { BTreeSet::new() };
                (i.post.id.clone(), (d.final_label, types))
            })
            .collect();
        ensure!(loaded == want, "trial {trial}: export round-trip differs");
        ensure!(
            render_export(&export_records(&folded, &ExportFilter::default())) == bytes,
            "trial {trial}: export bytes differ"
        );
        accepted_total += want.len();
    }
    ensure!(accepted_total >= 1000, "too few accepted items ({accepted_total}) to exercise export");
    Ok(format!("1000 interleavings, {accepted_total} accepted items round-tripped"))
}

// 10. Case-study split.

fn case_study() -> Check {
    let dir = manifest().join("../loop/tests/fixtures/case500");
    let mut index = SearchIndex::new();
    for line in std::fs::read_to_string(dir.join("evidence.jsonl")).map_err(|e| e.to_string())?.lines() {
        let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        index.insert(
            (v["op"].as_str().unwrap().into(), v["q"].as_str().unwrap().into()),
            v["results"].as_array().unwrap().clone(),
        );
    }
    let cfg: BackendConfig = toml::from_str(
        "[engines.a]\nendpoint = \"http://gateway.invalid\"\n[llm]\nid = \"stub-llm\"\nendpoint = \"http://gateway.invalid\"\n",
    )
    .unwrap();
    let backends = Backends::from_config(&cfg, BackendMode::Live, None, gateway(index)).map_err(|e| e.to_string())?;
    let config = PipelineConfig::new(ReasoningConfig::new(ReasoningMethod::CoT, "stub-judge"))
        .with_strategies([StrategyId::TEXT_TO_TEXT]);
    let pipeline = Pipeline::new(&backends, config, DomainPolicy::starter())
        .map_err(|e| e.to_string())?
        .with_image_dir(Some(&dir));

    let s = LoopService::in_memory();
    for p in load_posts(&dir.join("posts.jsonl")).map_err(|e| e.to_string())? {
        s.ingest_post(p).map_err(|e| e.to_string())?;
    }
    let run = s.run_detection(None, &pipeline).map_err(|e| e.to_string())?;
    ensure!(run.assessed == 500 && run.failed == 0, "assessed {}, failed {}", run.assessed, run.failed);
    let state = s.state();
    let fake = state.items().filter(|i| i.predicted() == Some(Label::Fake)).count();
    let real = state.items().filter(|i| i.predicted() == Some(Label::Real)).count();
    ensure!((fake, real) == (265, 235), "split {fake}/{real}");
    Ok(format!("{fake} fake / {real} real of {}", run.assessed))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("metrics arithmetic", 1, metrics),
        ("replay determinism", 10, determinism),
        ("majority-vote oracle", 1, majority_vote),
        ("sinkhorn correctness", 30, sinkhorn_check),
        ("topic alignment", 5, topic_alignment),
        ("domain filter", 1, domain_filter_check),
        ("reasoning call counts", 1, call_counts),
        ("evidence plumbing", 5, evidence_plumbing),
        ("journal fold and export", 30, journal_fold),
        ("case-study split", 10, case_study),
    ];
    let mut failed = 0;
    for (n, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let limit = Duration::from_secs(limit);
        let (ok, detail) = match result {
            Ok(d) if took < limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} {:>2} {:<24} {:>8.3}s < {:>2}s  {}",
            if ok { "PASS" } else { "FAIL" },
            n + 1,
            name,
            took.as_secs_f64(),
            limit.as_secs(),
            detail
        );
    }
    if failed > 0 {
        println!("{failed} of 10 criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
