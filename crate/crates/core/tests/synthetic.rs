use xlb_core::corpus::load_corpus;
use xlb_core::retrieval::retrieve_all;
use xlb_core::scenario::build_scenario;
use xlb_core::synth::{embed_synthetic, gen_synthetic_corpus};
use xlb_core::*;

fn en_zh() -> (LanguageTag, LanguageTag) {
    (
        LanguageTag::new("en").unwrap(),
        LanguageTag::new("zh").unwrap(),
    )
}

/// Multi-scenario report for queries in `q`.
fn multi_report(cfg: &SynthConfig, q: &LanguageTag, o: &LanguageTag) -> MetricReport {
    let corpus = gen_synthetic_corpus(cfg).unwrap();
    let emb = embed_synthetic(&corpus, cfg)
        .unwrap()
        .l2_normalize()
        .unwrap();
    let spec = ScenarioSpec::multi(ScenarioKind::Multi, q, o);
    let inst = build_scenario(&corpus, &spec).unwrap();
    let rankings = retrieve_all(&inst, &emb).unwrap();
    MetricReport::build(&spec, &inst, &rankings, &[1, 5, 10], true).unwrap()
}

#[test]
fn perfect_alignment_puts_golds_on_top() {
    let cfg = SynthConfig {
        alpha: 1.0,
        bias_strength: 0.0,
        noise_sigma: 0.0,
        ..SynthConfig::default()
    };
    let (en, zh) = en_zh();
    for (q, o) in [(&en, &zh), (&zh, &en)] {
        let rep = multi_report(&cfg, q, o);
        for pq in rep.per_query.as_ref().unwrap() {
            assert_eq!(pq.max_at_r, 2, "{}", pq.query_id);
        }
        assert_eq!(rep.max_at_r, 2.0);
        assert_eq!(rep.max_at_r_norm, 100.0);
    }
}

#[test]
fn default_config_regression() {
    let (en, zh) = en_zh();
    let cfg = SynthConfig::default();
    let en_rep = multi_report(&cfg, &en, &zh);
    let zh_rep = multi_report(&cfg, &zh, &en);
    assert_eq!(en_rep.n_queries, 500);
    assert_eq!(en_rep.pool_size, 1000);
    // frozen from the first run
    assert!(
        (en_rep.max_at_r - 4.162).abs() < 1e-9,
        "{}",
        en_rep.max_at_r
    );
    assert!(
        (zh_rep.max_at_r - 4.822).abs() < 1e-9,
        "{}",
        zh_rep.max_at_r
    );
    assert!(zh_rep.max_at_r > en_rep.max_at_r);
}

#[test]
fn stronger_bias_never_helps_non_english_queries() {
    let (en, zh) = en_zh();
    let means: Vec<f64> = [0.25, 0.5, 1.0]
        .iter()
        .map(|&b| {
            let cfg = SynthConfig {
                bias_strength: b,
                ..SynthConfig::default()
            };
            multi_report(&cfg, &zh, &en).max_at_r
        })
        .collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
}

#[test]
fn generation_is_deterministic() {
    let cfg = SynthConfig {
        n_groups: 50,
        ..SynthConfig::default()
    };
    let c1 = gen_synthetic_corpus(&cfg).unwrap();
    let c2 = gen_synthetic_corpus(&cfg).unwrap();
    assert_eq!(c1.to_jsonl(), c2.to_jsonl());
    let e1 = embed_synthetic(&c1, &cfg).unwrap();
    let e2 = embed_synthetic(&c2, &cfg).unwrap();
    assert_eq!(e1.to_bytes(), e2.to_bytes());

    let other = SynthConfig {
        seed: 7,
        ..cfg.clone()
    };
    let e3 = embed_synthetic(&gen_synthetic_corpus(&other).unwrap(), &other).unwrap();
    assert_ne!(e1.to_bytes(), e3.to_bytes());
}

#[test]
fn saved_artifacts_reload_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        n_groups: 100,
        ..SynthConfig::default()
    };
    let corpus = gen_synthetic_corpus(&cfg).unwrap();
    let cpath = dir.path().join("corpus.jsonl");
    corpus.save(&cpath).unwrap();
    let first = std::fs::read(&cpath).unwrap();
    let reloaded = load_corpus(&cpath).unwrap();
    reloaded.save(&cpath).unwrap();
    assert_eq!(std::fs::read(&cpath).unwrap(), first);
    assert_eq!(reloaded.items().len(), 400);

    let emb = embed_synthetic(&corpus, &cfg).unwrap();
    let epath = dir.path().join("emb.xleb");
    emb.save(&epath).unwrap();
    let back = EmbeddingMatrix::load(&epath).unwrap();
    assert_eq!(back.to_bytes(), emb.to_bytes());
    assert_eq!(back, emb);
}
