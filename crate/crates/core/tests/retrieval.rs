mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use common::{fixture_posts, post, replay_backends, FIXTURE_MODEL};
use mmfc_core::backends::{
    BackendError, EngineSlot, FnSearchEngine, ImageStore, Recorder, ScriptedLlm, SearchHit, SearchOp, SearchQuery,
    SearchRequest, SearchService,
};
use mmfc_core::domain::{EvidenceKind, StrategyId};
use mmfc_core::retrieval::{queries_from_reply, RetrievalError, RetrievalPlan, Retriever};
use mmfc_core::testkit::RuleJudge;

fn hit(url: &str) -> SearchHit {
    SearchHit { url: url.into(), title: "t".into(), snippet: format!("about {url}"), image: None, published: None }
}

type Handler = dyn Fn(&SearchRequest) -> Result<Vec<SearchHit>, BackendError> + Send + Sync;

fn service(handler: Arc<Handler>) -> SearchService {
    let h = handler.clone();
    let a = EngineSlot::new("engine_a", Some(Arc::new(FnSearchEngine(move |r: &SearchRequest| h(r)))));
    let b = EngineSlot::new("engine_b", Some(Arc::new(FnSearchEngine(move |r: &SearchRequest| handler(r)))));
    let images = ImageStore::new();
    let img = image_dir().join("p.img");
    std::fs::write(&img, b"p").unwrap();
    let mut image = post("p", "x").images[0].clone();
    image.location = Some(img.to_string_lossy().into_owned());
    images.register(&image, None);
    SearchService::new(a, b, Arc::new(images), Recorder::live())
}

fn image_dir() -> &'static std::path::Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().unwrap()).path()
}

#[test]
fn replayed_bundle_groups_by_strategy() {
    let (backends, transport) = replay_backends();
    let posts = fixture_posts();
    let p02 = posts.iter().find(|p| p.id == "p02").unwrap();
    let r = Retriever::new(backends.search.clone(), backends.llm.clone(), FIXTURE_MODEL);
    let b = r.retrieve(p02, &RetrievalPlan::default()).unwrap();
    assert_eq!(b.groups.keys().copied().collect::<Vec<_>>(), [StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT]);
    assert_eq!(b.groups[&StrategyId::IMAGE_TO_TEXT][0].domain, "afp.com");
    assert!(b.groups[&StrategyId::IMAGE_TO_TEXT][0].body.contains("different event"));
    assert_eq!(b.provenance.len(), 2);
    b.check().unwrap();
    assert_eq!(transport.calls(), 0);
}

#[test]
fn strategies_map_to_engine_and_op() {
    let seen = Arc::new(std::sync::Mutex::new(Vec::new()));
    let s = seen.clone();
    let svc = service(Arc::new(move |r: &SearchRequest| {
        s.lock().unwrap().push((r.engine, r.op));
        Ok(vec![hit("https://a.com/1")])
    }));
    let r = Retriever::new(svc, Arc::new(RuleJudge), "m");
    let p = post("p", "Claim text here");
    for sid in StrategyId::all() {
        seen.lock().unwrap().clear();
        let out = r.run_strategy(&p, sid, 3, 2).unwrap();
        assert!(out.items.iter().all(|i| i.strategy_id == sid));
        let ops: Vec<SearchOp> = seen.lock().unwrap().iter().map(|x| x.1).collect();
        let expected = match sid.get() {
            1 | 5 | 6 => SearchOp::TextSearch,
            2 | 4 | 7 => SearchOp::ImageSearch,
            3 => SearchOp::ReverseImageSearch,
            _ => SearchOp::NewsSearch,
        };
        assert!(ops.iter().all(|o| *o == expected), "{sid}: {ops:?}");
    }
}

#[test]
fn query_strategies_union_and_dedup() {
    let svc = service(Arc::new(|r: &SearchRequest| {
        let SearchQuery::Text(q) = &r.query else { unreachable!() };
        // Every query finds the shared page plus one of its own.
        Ok(vec![hit("https://shared.com/x"), hit(&format!("https://own.com/{}", q.len()))])
    }));
    let llm = Arc::new(ScriptedLlm::new(["first query\nsecond longer query\nthird"]));
    let r = Retriever::new(svc, llm, "m");
    let out = r.run_strategy(&post("p", "claim"), StrategyId::QUERY_TO_TEXT, 5, 3).unwrap();
    let urls: Vec<_> = out.items.iter().map(|i| i.source_url.as_str()).collect();
    assert_eq!(urls, ["https://shared.com/x", "https://own.com/11", "https://own.com/19", "https://own.com/5"]);
    assert_eq!(out.items.iter().map(|i| i.rank).collect::<Vec<_>>(), [1, 2, 3, 4]);
    assert!(out.items.iter().all(|i| i.kind == EvidenceKind::Text));
}

#[test]
fn partial_failure_is_a_warning_total_failure_an_error() {
    let svc = service(Arc::new(|r: &SearchRequest| match r.op {
        SearchOp::ReverseImageSearch => Err(BackendError::QuotaExceeded),
        _ => Ok(vec![hit("https://a.com/1")]),
    }));
    let r = Retriever::new(svc, Arc::new(RuleJudge), "m");
    let b = r.retrieve(&post("p", "c"), &RetrievalPlan::default()).unwrap();
    assert!(b.groups[&StrategyId::IMAGE_TO_TEXT].is_empty());
    assert_eq!(b.groups[&StrategyId::TEXT_TO_TEXT].len(), 1);
    assert!(b.warnings.iter().any(|w| w.contains("quota")));

    let svc = service(Arc::new(|_: &SearchRequest| Err(BackendError::BackendUnavailable("down".into()))));
    let r = Retriever::new(svc, Arc::new(RuleJudge), "m");
    let e = r.retrieve(&post("p", "c"), &RetrievalPlan::default()).unwrap_err();
    assert!(matches!(e, RetrievalError::AllStrategiesFailed { ref failures } if failures.len() == 2));
    assert!(matches!(e.root_cause(), Some(BackendError::BackendUnavailable(_))));
}

#[test]
fn strategies_run_concurrently_under_deadline() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let svc = service(Arc::new(move |r: &SearchRequest| {
        c.fetch_add(1, Ordering::SeqCst);
        if r.op == SearchOp::ReverseImageSearch {
            std::thread::sleep(Duration::from_millis(400));
        }
        Ok(vec![hit("https://a.com/1")])
    }));
    let r = Retriever::new(svc, Arc::new(RuleJudge), "m").with_deadline(Some(Duration::from_millis(100)));
    let started = std::time::Instant::now();
    let b = r.retrieve(&post("p", "c"), &RetrievalPlan::default()).unwrap();
    assert!(started.elapsed() < Duration::from_millis(350));
    assert!(b.groups[&StrategyId::IMAGE_TO_TEXT].is_empty());
    assert!(b.warnings.iter().any(|w| w.contains("deadline")));
}

#[test]
fn plan_validation() {
    assert!(RetrievalPlan::new([], 5, 3).is_err());
    assert!(RetrievalPlan::new([StrategyId::TEXT_TO_TEXT], 0, 3).is_err());
    let p = RetrievalPlan::new([StrategyId::IMAGE_TO_TEXT, StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT], 5, 3)
        .unwrap();
    assert_eq!(p.strategies(), [StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT]);
}

#[test]
fn query_cleanup() {
    let q = queries_from_reply("1. \"Flood photo origin\"\n2) Flood photo origin\n- river city date\n", "the claim", 3);
    assert_eq!(q, ["Flood photo origin", "river city date"]);
    assert_eq!(queries_from_reply("", "the claim", 2), ["the claim"]);
}
