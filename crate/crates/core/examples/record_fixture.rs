//! Records the 20-post replay fixture used by the tests.
//!
//! ```text
//! cargo run -p mmfc-core --features testkit --example record_fixture -- crates/core/tests/fixtures/replay20
//! ```
//!
//! Search results are scripted below and the model is the rule-based judge,
//! both served through the emulated gateway, so the recording exercises the
//! same HTTP clients a live run would.

use std::fs;
use std::path::{Path, PathBuf};

use mmfc_core::backends::{BackendConfig, BackendMode, Backends};
use mmfc_core::domain::{ContentHash, ReasoningMethod, StrategyId};
use mmfc_core::evaluation::load_posts;
use mmfc_core::pipeline::{Pipeline, PipelineConfig};
use mmfc_core::postprocess::DomainPolicy;
use mmfc_core::reasoning::ReasoningConfig;
use mmfc_core::testkit::{gateway, hit, SearchIndex};
use serde_json::{json, Value};

pub const MODEL: &str = "stub-judge";

struct Spec {
    id: &'static str,
    label: &'static str,
    topic: &'static str,
    types: &'static [&'static str],
    date: &'static str,
    text: &'static str,
    text_hits: Vec<Value>,
    image_hits: Vec<Value>,
}

fn spec(
    id: &'static str,
    label: &'static str,
    topic: &'static str,
    types: &'static [&'static str],
    date: &'static str,
    text: &'static str,
) -> Spec {
    Spec { id, label, topic, types, date, text, text_hits: vec![], image_hits: vec![] }
}

fn news(domain: &str, slug: &str, title: &str, snippet: &str) -> Value {
    hit(&format!("https://{domain}/{slug}"), title, snippet)
}

fn corpus() -> Vec<Spec> {
    let mut s = Vec::new();

    let mut p = spec(
        "p01",
        "real",
        "politics",
        &[],
        "2024-03-02",
        "Parliament passes the new water protection bill after a late-night vote.",
    );
    p.text_hits = vec![
        news(
            "reuters.com",
            "water-bill",
            "Lawmakers approve water protection bill",
            "The bill passed 212 to 190 shortly after midnight.",
        ),
        news(
            "apnews.com",
            "water-vote",
            "Water bill clears parliament",
            "A late-night session ended with approval of the measure.",
        ),
    ];
    p.image_hits = vec![news(
        "reuters.com",
        "photo-chamber",
        "Chamber during the vote",
        "Photo shows members voting on the water protection bill.",
    )];
    s.push(p);

    let mut p = spec(
        "p02",
        "fake",
        "politics",
        &["image_ooc"],
        "2024-03-05",
        "Huge crowds storm the capital today demanding the minister resign.",
    );
    p.text_hits = vec![news(
        "bbc.com",
        "capital-protest",
        "Small protest outside ministry",
        "Around two hundred people gathered peacefully.",
    )];
    p.image_hits = vec![news(
        "afp.com",
        "factcheck-crowd",
        "Crowd photo from 2019",
        "The photograph originates from a different event: a 2019 football celebration.",
    )];
    s.push(p);

    let mut p = spec(
        "p03",
        "real",
        "society",
        &[],
        "2024-04-11",
        "City opens its first free public library in the eastern district.",
    );
    p.text_hits = vec![
        news(
            "citynews.example.org",
            "library",
            "New library opens",
            "The eastern district library opened on Thursday.",
        ),
        news(
            "theonion.com",
            "library-satire",
            "Library opens, nobody reads",
            "In a fabricated twist, books refuse to be read.",
        ),
    ];
    p.image_hits =
        vec![news("citynews.example.org", "library-photo", "Library entrance", "Ribbon cutting at the new library.")];
    s.push(p);

    let mut p = spec(
        "p04",
        "fake",
        "society",
        &["deepfake"],
        "2024-04-20",
        "Photo shows the mayor sleeping during the budget meeting.",
    );
    p.text_hits = vec![news(
        "localpaper.example.com",
        "budget",
        "Budget meeting ends",
        "The mayor presented the budget in person.",
    )];
    p.image_hits = vec![news(
        "factcheck.example.net",
        "mayor-photo",
        "Mayor photo manipulated",
        "Analysis shows the image was digitally altered from a press photo.",
    )];
    s.push(p);

    let mut p = spec(
        "p05",
        "real",
        "entertainment",
        &[],
        "2024-05-01",
        "The band announced a reunion tour starting in September.",
    );
    p.text_hits =
        vec![news("variety.com", "reunion", "Band confirms reunion tour", "Dates begin in September across Europe.")];
    p.image_hits =
        vec![news("variety.com", "reunion-photo", "Band at press event", "Members posed at the announcement.")];
    s.push(p);

    let mut p = spec(
        "p06",
        "fake",
        "entertainment",
        &["text_misleading"],
        "2024-05-09",
        "The famous actor said he will quit movies to become a farmer.",
    );
    p.text_hits = vec![
        news(
            "snopes.com",
            "actor-farmer",
            "Actor never said he would quit",
            "The quote is fabricated; his agent denied it.",
        ),
        news("x.com", "status-1", "Viral post", "He is quitting to farm, says a fan account."),
    ];
    p.image_hits = vec![news("imdb.com", "actor", "Actor profile photo", "Publicity still of the actor.")];
    s.push(p);

    let mut p = spec(
        "p07",
        "real",
        "science",
        &[],
        "2024-06-03",
        "Astronomers publish the first image of a newly found comet.",
    );
    p.text_hits = vec![news("nasa.gov", "comet", "New comet imaged", "The comet was imaged by a ground telescope.")];
    p.image_hits = vec![news("nasa.gov", "comet-image", "Comet image release", "Official image of the comet.")];
    s.push(p);

    let mut p = spec(
        "p08",
        "fake",
        "science",
        &["deepfake"],
        "2024-06-10",
        "Scientists capture a photo of a living dinosaur in the rainforest.",
    );
    p.text_hits = vec![news(
        "nationalgeographic.com",
        "rainforest",
        "Rainforest survey results",
        "The survey recorded new frog species.",
    )];
    p.image_hits = vec![news(
        "factcheck.example.net",
        "dino",
        "Dinosaur photo is AI-generated",
        "The image is AI-generated according to detection tools.",
    )];
    s.push(p);

    let mut p = spec(
        "p09",
        "real",
        "history",
        &[],
        "2024-07-14",
        "Museum displays the restored 18th-century ship recovered from the harbor.",
    );
    p.text_hits =
        vec![news("museum.example.org", "ship", "Ship goes on display", "The restored ship is now open to visitors.")];
    p.image_hits = vec![news("museum.example.org", "ship-photo", "Restored ship", "The hull after restoration.")];
    s.push(p);

    let mut p =
        spec("p10", "fake", "history", &["image_ooc"], "2024-07-20", "Rare photo shows the city flood of last week.");
    p.text_hits =
        vec![news("weather.example.com", "flood", "Heavy rain last week", "Streets were flooded for two days.")];
    p.image_hits = vec![news(
        "archive.example.org",
        "flood-1953",
        "Flood archive",
        "This picture was taken in 1953 and shows a different event.",
    )];
    s.push(p);

    let mut p = spec(
        "p11",
        "real",
        "nature",
        &[],
        "2024-08-02",
        "Wildfire near the national park is now fully contained, officials say.",
    );
    p.text_hits =
        vec![news("apnews.com", "wildfire", "Wildfire contained", "Firefighters reached full containment on Friday.")];
    p.image_hits = vec![news("apnews.com", "wildfire-photo", "Burned hillside", "Aftermath near the park boundary.")];
    s.push(p);

    let mut p = spec(
        "p12",
        "fake",
        "nature",
        &["image_ooc", "text_misleading"],
        "2024-08-08",
        "A shark was seen swimming on the highway after the storm.",
    );
    p.text_hits =
        vec![news("snopes.com", "shark-highway", "Highway shark debunked", "The claim has been debunked many times.")];
    p.image_hits = vec![news(
        "snopes.com",
        "shark-photo",
        "Recycled shark photo",
        "The image comes from a different event and has circulated since 2011.",
    )];
    s.push(p);

    let mut p =
        spec("p13", "real", "sports", &[], "2024-09-01", "The home team won the championship final in extra time.");
    p.text_hits = vec![news("espn.com", "final", "Home team wins in extra time", "A late goal decided the final.")];
    p.image_hits = vec![news("espn.com", "final-photo", "Celebration on the pitch", "Players celebrate the title.")];
    s.push(p);

    let mut p = spec(
        "p14",
        "fake",
        "sports",
        &["text_misleading"],
        "2024-09-04",
        "The league banned the star striker for life yesterday.",
    );
    p.text_hits = vec![
        news("beforeitsnews.com", "ban", "Striker banned for life", "Insiders confirm the lifetime ban."),
        news(
            "league.example.org",
            "statement",
            "League statement",
            "No disciplinary action has been taken. The report is fabricated.",
        ),
    ];
    s.push(p);

    let mut p = spec(
        "p15",
        "real",
        "politics",
        &[],
        "2024-10-10",
        "The president met farmers to discuss drought relief funds.",
    );
    p.text_hits = vec![news("reuters.com", "drought", "President meets farmers", "Talks focused on drought relief.")];
    p.image_hits = vec![news("reuters.com", "drought-photo", "Meeting with farmers", "The president in the field.")];
    s.push(p);

    let mut p = spec(
        "p16",
        "fake",
        "politics",
        &["image_ooc"],
        "2024-10-12",
        "Soldiers were deployed to the border this morning, photo shows.",
    );
    p.text_hits = vec![news("bbc.com", "border", "No deployment reported", "Officials denied any new deployment.")];
    // Only a blocked site points out the reuse, so filtering hides it.
    p.image_hits = vec![news(
        "news.infowars.com",
        "border-photo",
        "Old border photo",
        "This photo is from a different event years ago.",
    )];
    s.push(p);

    let mut p = spec(
        "p17",
        "real",
        "society",
        &[],
        "2024-11-03",
        "Volunteers cleaned ten tons of plastic from the river banks.",
    );
    p.text_hits = vec![
        news("citynews.example.org", "cleanup", "River cleanup record", "Volunteers collected ten tons of plastic."),
        news("twitter.com", "status-2", "Cleanup thread", "A thread calling the cleanup fabricated."),
    ];
    p.image_hits =
        vec![news("citynews.example.org", "cleanup-photo", "Volunteers at the river", "Bags of collected plastic.")];
    s.push(p);

    let mut p = spec(
        "p18",
        "fake",
        "science",
        &["deepfake"],
        "2024-11-15",
        "New photo proves the moon base is already under construction.",
    );
    p.text_hits = vec![news("esa.int", "moon", "Lunar plans", "No construction has begun on any lunar base.")];
    p.image_hits = vec![news("factcheck.example.net", "moon-photo", "Moon base image", "The picture is AI-generated.")];
    s.push(p);

    let mut p = spec(
        "p19",
        "real",
        "nature",
        &[],
        "2024-12-01",
        "Rare snow leopard spotted on a camera trap in the mountains.",
    );
    p.text_hits = vec![news("wwf.org", "leopard", "Snow leopard on camera", "Camera traps recorded the animal twice.")];
    p.image_hits = vec![news("wwf.org", "leopard-photo", "Camera trap image", "Night image of the leopard.")];
    s.push(p);

    // Evidence looks clean, so the judge gets this one wrong.
    let mut p = spec(
        "p20",
        "fake",
        "entertainment",
        &["text_misleading"],
        "2024-12-12",
        "The singer donated all concert profits to the animal shelter.",
    );
    p.text_hits =
        vec![news("musicnews.example.com", "concert", "Sold-out concert", "The singer played to a full arena.")];
    p.image_hits =
        vec![news("musicnews.example.com", "concert-photo", "Concert stage", "Stage lights during the show.")];
    s.push(p);

    s
}

fn main() {
    let out = PathBuf::from(std::env::args().nth(1).expect("usage: record_fixture <dir>"));
    let img_dir = out.join("images");
    fs::create_dir_all(&img_dir).expect("create fixture dir");
    let cache = out.join("cache");
    if cache.exists() {
        fs::remove_dir_all(&cache).expect("clear old cache");
    }

    let mut index = SearchIndex::new();
    let mut lines = Vec::new();
    for s in corpus() {
        let name = format!("{}.img", s.id);
        let bytes = format!("fixture image {}\n", s.id).into_bytes();
        fs::write(img_dir.join(&name), &bytes).expect("write image");
        let sha = ContentHash::of_bytes(&bytes);
        index.insert(("text".into(), s.text.to_string()), s.text_hits.clone());
        index.insert(("reverse_image".into(), sha.to_string()), s.image_hits.clone());
        lines.push(
            json!({
                "id": s.id,
                "text": s.text,
                "images": [{ "sha256": sha.to_string(), "path": format!("images/{name}") }],
                "author_id": format!("user_{}", s.id),
                "source_url": format!("https://x.com/user_{}/status/{}", s.id, &s.id[1..]),
                "date": s.date,
                "topic": s.topic,
                "label": s.label,
                "misinfo_types": s.types,
            })
            .to_string(),
        );
    }
    fs::write(out.join("posts.jsonl"), lines.join("\n") + "\n").expect("write posts");

    let cfg: BackendConfig = toml::from_str(
        r#"
        [engines.a]
        endpoint = "http://gateway.invalid"
        [engines.b]
        endpoint = "http://gateway.invalid"
        [llm]
        id = "stub-llm"
        endpoint = "http://gateway.invalid"
        "#,
    )
    .expect("config");
    let backends = Backends::from_config(&cfg, BackendMode::Record, Some(&cache), gateway(index)).expect("backends");
    let posts = load_posts(&out.join("posts.jsonl")).expect("load posts");

    let with_evidence = [StrategyId::TEXT_TO_TEXT, StrategyId::IMAGE_TO_TEXT];
    let configs = [
        (ReasoningMethod::MultiStep, &with_evidence[..]),
        (ReasoningMethod::CoT, &with_evidence[..]),
        (ReasoningMethod::CoT, &[][..]),
    ];
    for (method, strategies) in configs {
        let config =
            PipelineConfig::new(ReasoningConfig::new(method, MODEL)).with_strategies(strategies.iter().copied());
        let pipeline = Pipeline::new(&backends, config, DomainPolicy::starter())
            .expect("pipeline")
            .with_image_dir(Some(Path::new(&out)));
        for post in &posts {
            let mut blind = post.clone();
            blind.label = None;
            blind.misinfo_types.clear();
            pipeline.detect(&blind).expect("record");
        }
    }
    println!("recorded {} posts into {}", posts.len(), out.display());
}
