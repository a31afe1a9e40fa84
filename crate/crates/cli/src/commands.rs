//! Subcommand implementations. Every command writes into the configured
//! output directory under fixed file names and returns a small summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use xlb_core::align::gradcheck::{check_gradients, random_case};
use xlb_core::align::train::parallel_triplet_ids;
use xlb_core::align::train::{loss_log_csv, parse_triplets, resolve_triplets, triplets_jsonl};
use xlb_core::align::{alignment_stats, train, AlignmentStats, TripletIds};
use xlb_core::corpus::load_corpus;
use xlb_core::metrics::{attach_language_gaps, language_gap, render_table};
use xlb_core::retrieval::{retrieve_all, write_rankings};
use xlb_core::scenario::build_scenario;
use xlb_core::synth::{embed_synthetic, gen_synthetic_corpus};
use xlb_core::*;

use crate::config::{ReportFormat, RunConfig, Source};
use crate::error::CliError;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.xleb";
pub const ADAPTER_FILE: &str = "adapter.xlad";
pub const LOSSES_FILE: &str = "losses.csv";
pub const COMPARE_FILE: &str = "compare.csv";

/// One evaluated scenario for one query language.
#[derive(Debug, Clone)]
pub struct Evaluated {
    /// File-name label, e.g. `multi` or `mono-cross-zh`.
    pub label: String,
    pub report: MetricReport,
    pub rankings: Vec<Ranking>,
}

impl Evaluated {
    pub fn report_file(&self) -> String {
        format!(
            "report.{}.{}.json",
            self.label, self.report.scenario.query_lang
        )
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Caps rayon's global pool at `XLB_THREADS` (unset or 0 = one per core).
pub fn init_threads() -> Result<(), CliError> {
    let n = match std::env::var("XLB_THREADS") {
        Ok(v) if !v.trim().is_empty() => v.trim().parse::<usize>().map_err(|_| {
            CliError::Config(format!(
                "XLB_THREADS must be a non-negative integer, got {v:?}"
            ))
        })?,
        _ => 0,
    };
    // a second initialisation in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn load_inputs(cfg: &RunConfig) -> Result<(ParallelCorpus, EmbeddingMatrix), CliError> {
    let corpus = match cfg.corpus.source {
        Source::Synth => gen_synthetic_corpus(&cfg.corpus.synth)?,
        Source::File => load_corpus(cfg.corpus.path.as_deref().expect("validated"))?,
    };
    let emb = match cfg.embeddings.source {
        Source::Synth => embed_synthetic(&corpus, &cfg.corpus.synth)?,
        Source::File => EmbeddingMatrix::load(cfg.embeddings.path.as_deref().expect("validated"))?,
    };
    Ok((corpus, emb))
}

/// Expands the configured scenario entries into concrete specs with labels.
pub fn expand_scenarios(
    cfg: &RunConfig,
    corpus: &ParallelCorpus,
) -> Result<Vec<(String, ScenarioSpec)>, CliError> {
    let mut out = Vec::new();
    for entry in &cfg.scenarios {
        let langs: Vec<LanguageTag> = match &entry.langs {
            Some(l) => {
                let mut l = l.clone();
                l.sort();
                l.dedup();
                l
            }
            None => corpus.languages().to_vec(),
        };
        let pairs = || {
            langs
                .iter()
                .flat_map(|q| langs.iter().filter(move |o| *o != q).map(move |o| (q, o)))
        };
        match entry.kind {
            ScenarioKind::Multi | ScenarioKind::Multi1 => {
                if langs.len() < 2 {
                    return Err(CliError::Config(format!(
                        "{} needs at least two languages",
                        entry.kind
                    )));
                }
                for (q, o) in pairs() {
                    let spec = ScenarioSpec::multi(entry.kind, q, o);
                    // with more than two languages the partner must be in the name
                    let label = if langs.len() > 2 {
                        format!("{}-{o}", spec.label())
                    } else {
                        spec.label()
                    };
                    out.push((label, spec));
                }
            }
            ScenarioKind::MonoSame => {
                for q in &langs {
                    let spec = ScenarioSpec::mono(q, q);
                    out.push((spec.label(), spec));
                }
            }
            ScenarioKind::MonoCross => {
                for (q, d) in pairs() {
                    let spec = ScenarioSpec::mono(q, d);
                    out.push((spec.label(), spec));
                }
            }
        }
    }
    Ok(out)
}

/// Key under which reports are compared for language gaps: the same scenario
/// kind over the same set of languages.
fn gap_group(spec: &ScenarioSpec) -> (ScenarioKind, Vec<LanguageTag>) {
    let mut langs = match spec.kind {
        ScenarioKind::MonoSame => vec![],
        _ => {
            let mut l = spec.doc_langs.clone();
            l.push(spec.query_lang.clone());
            l
        }
    };
    langs.sort();
    langs.dedup();
    (spec.kind, langs)
}

/// Applies `adapter` (if any), normalizes, and scores every scenario.
pub fn evaluate(
    cfg: &RunConfig,
    corpus: &ParallelCorpus,
    base: &EmbeddingMatrix,
    adapter: Option<&AdapterParams>,
) -> Result<Vec<Evaluated>, CliError> {
    let emb = match adapter {
        Some(a) => a.apply_matrix(base)?.l2_normalize()?,
        None => base.l2_normalize()?,
    };
    let mut evaluated = Vec::new();
    for (label, spec) in expand_scenarios(cfg, corpus)? {
        let instances = build_scenario(corpus, &spec)?;
        let rankings = retrieve_all(&instances, &emb)?;
        let report =
            MetricReport::build(&spec, &instances, &rankings, &cfg.k_values, cfg.per_query)?;
        evaluated.push(Evaluated {
            label,
            report,
            rankings,
        });
    }

    let mut groups: BTreeMap<_, Vec<usize>> = BTreeMap::new();
    for (i, e) in evaluated.iter().enumerate() {
        groups
            .entry(gap_group(&e.report.scenario))
            .or_default()
            .push(i);
    }
    for ix in groups.values() {
        let mut reports: Vec<MetricReport> =
            ix.iter().map(|&i| evaluated[i].report.clone()).collect();
        attach_language_gaps(&mut reports);
        for (&i, r) in ix.iter().zip(reports) {
            evaluated[i].report = r;
        }
    }
    Ok(evaluated)
}

/// Writes reports (and optional ranking dumps) into `dir`.
pub fn write_reports(
    dir: &Path,
    cfg: &RunConfig,
    evaluated: &[Evaluated],
) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    if cfg.report_formats.contains(&ReportFormat::Json) {
        for e in evaluated {
            let p = dir.join(e.report_file());
            write(&p, e.report.to_json())?;
            written.push(p);
        }
    }
    if cfg.report_formats.contains(&ReportFormat::Csv) {
        let mut csv = MetricReport::csv_header().to_string();
        for e in evaluated {
            csv.push_str(&e.report.to_csv_rows());
        }
        let p = dir.join("report.csv");
        write(&p, csv)?;
        written.push(p);
    }
    if cfg.report_formats.contains(&ReportFormat::Txt) {
        let reports: Vec<MetricReport> = evaluated.iter().map(|e| e.report.clone()).collect();
        let p = dir.join("report.txt");
        write(&p, render_table(&reports))?;
        written.push(p);
    }
    if cfg.dump_rankings {
        for e in evaluated {
            let p = dir.join(format!(
                "rankings.{}.{}.jsonl",
                e.label, e.report.scenario.query_lang
            ));
            let mut buf = Vec::new();
            write_rankings(&mut buf, &e.rankings).map_err(|err| CliError::io(&p, err))?;
            write(&p, buf)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Stores the effective config next to the outputs. The output directory is
/// recorded as `.` so that reruns elsewhere produce the same bytes.
fn archive_config(cfg: &RunConfig) -> Result<(), CliError> {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::from(".");
    let mut s = serde_json::to_string_pretty(&c).expect("config serializes");
    s.push('\n');
    write(&cfg.output_dir.join("run_config.json"), s)
}

pub fn cmd_gen_synth(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let synth = &cfg.corpus.synth;
    let corpus = gen_synthetic_corpus(synth)?;
    let emb = embed_synthetic(&corpus, synth)?;
    ensure_dir(&cfg.output_dir)?;
    let cpath = cfg.output_dir.join(CORPUS_FILE);
    let epath = cfg.output_dir.join(EMBEDDINGS_FILE);
    let spath = cfg.output_dir.join("synth_config.json");
    corpus.save(&cpath)?;
    emb.save(&epath)?;
    let mut s = serde_json::to_string_pretty(synth).expect("config serializes");
    s.push('\n');
    write(&spath, s)?;
    Ok(vec![cpath, epath, spath])
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<Evaluated>, CliError> {
    cfg.validate()?;
    let (corpus, base) = load_inputs(cfg)?;
    let adapter = cfg
        .embeddings
        .adapter
        .as_deref()
        .map(AdapterParams::load)
        .transpose()?;
    let evaluated = evaluate(cfg, &corpus, &base, adapter.as_ref())?;
    write_reports(&cfg.output_dir, cfg, &evaluated)?;
    archive_config(cfg)?;
    Ok(evaluated)
}

/// Training triplets as ids and resolved vectors over the base embeddings.
pub fn load_triplets(
    cfg: &RunConfig,
    corpus: &ParallelCorpus,
    base: &EmbeddingMatrix,
) -> Result<(Vec<TripletIds>, Vec<TrainTriplet>), CliError> {
    let t = &cfg.train.triplets;
    let ids = match t.source {
        Source::File => {
            let path = t.path.as_deref().expect("validated");
            let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
            parse_triplets(std::io::BufReader::new(f))?
        }
        Source::Synth => {
            let targets: Vec<LanguageTag> = match &t.target_langs {
                Some(l) => l.clone(),
                None => corpus
                    .languages()
                    .iter()
                    .filter(|l| !l.is_english())
                    .cloned()
                    .collect(),
            };
            parallel_triplet_ids(corpus, &targets, t.n, cfg.train.config.seed)?
        }
    };
    let vectors = resolve_triplets(&ids, base)?;
    Ok((ids, vectors))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub n_triplets: usize,
    pub steps: usize,
    pub first_loss: f64,
    pub last_loss: f64,
    pub before: AlignmentStats,
    pub after: AlignmentStats,
}

fn train_arm(
    cfg: &RunConfig,
    triplets: &[TrainTriplet],
    mode: LossMode,
    dir: &Path,
) -> Result<(AdapterParams, TrainSummary), CliError> {
    let tc = TrainConfig {
        loss_mode: mode,
        ..cfg.train.config.clone()
    };
    let outcome = train(triplets, &tc)?;
    let dim = triplets[0].q_en.len();
    let summary = TrainSummary {
        n_triplets: triplets.len(),
        steps: outcome.log.len(),
        first_loss: outcome.log.first().map_or(f64::NAN, |s| s.total),
        last_loss: outcome.log.last().map_or(f64::NAN, |s| s.total),
        before: alignment_stats(triplets, &AdapterParams::identity(dim))?,
        after: alignment_stats(triplets, &outcome.adapter)?,
    };
    ensure_dir(dir)?;
    outcome.adapter.save(&dir.join(ADAPTER_FILE))?;
    write(&dir.join(LOSSES_FILE), loss_log_csv(&outcome.log))?;
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    write(&dir.join("train_summary.json"), s)?;
    Ok((outcome.adapter, summary))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let (corpus, base) = load_inputs(cfg)?;
    let (ids, triplets) = load_triplets(cfg, &corpus, &base)?;
    let (_, summary) = train_arm(cfg, &triplets, cfg.train.config.loss_mode, &cfg.output_dir)?;
    write(&cfg.output_dir.join("triplets.jsonl"), triplets_jsonl(&ids))?;
    archive_config(cfg)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: String,
    pub stats: AlignmentStats,
    pub evaluated: Vec<Evaluated>,
}

impl ArmResult {
    /// The report for `label` and query language `qlang`, if evaluated.
    pub fn report(&self, label: &str, qlang: &str) -> Option<&MetricReport> {
        self.evaluated
            .iter()
            .find(|e| e.label == label && e.report.scenario.query_lang.as_str() == qlang)
            .map(|e| &e.report)
    }
}

/// Base (identity adapter) plus one trained adapter per loss mode, all over
/// the same frozen base embeddings and triplets.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<ArmResult>, CliError> {
    cfg.validate()?;
    let (corpus, base) = load_inputs(cfg)?;
    let (ids, triplets) = load_triplets(cfg, &corpus, &base)?;
    let root = cfg.output_dir.join("ablation");
    ensure_dir(&root)?;

    let arms = [
        None,
        Some(LossMode::JsdOnly),
        Some(LossMode::NceOnly),
        Some(LossMode::NcePsg),
        Some(LossMode::Combined),
    ];
    let mut results = Vec::new();
    for mode in arms {
        let arm = mode.map_or("base", LossMode::slug).to_string();
        let dir = root.join(&arm);
        let adapter = match mode {
            None => AdapterParams::identity(base.dim()),
            Some(m) => train_arm(cfg, &triplets, m, &dir)?.0,
        };
        let evaluated = evaluate(cfg, &corpus, &base, Some(&adapter))?;
        write_reports(&dir, cfg, &evaluated)?;
        results.push(ArmResult {
            stats: alignment_stats(&triplets, &adapter)?,
            arm,
            evaluated,
        });
    }

    let mut csv = format!("arm,{}", MetricReport::csv_header());
    let mut stats = String::from("arm,mean_jsd,mean_cos_q_en_p_tgt,mean_cos_p_en_p_tgt\n");
    let mut txt = String::new();
    for r in &results {
        for e in &r.evaluated {
            for line in e.report.to_csv_rows().lines() {
                let _ = writeln!(csv, "{},{line}", r.arm);
            }
        }
        let s = r.stats;
        let _ = writeln!(
            stats,
            "{},{:.9},{:.6},{:.6}",
            r.arm, s.mean_jsd, s.mean_cos_q_en_p_tgt, s.mean_cos_p_en_p_tgt
        );
        let reports: Vec<MetricReport> = r.evaluated.iter().map(|e| e.report.clone()).collect();
        let _ = writeln!(txt, "[{}]\n{}", r.arm, render_table(&reports));
    }
    write(&cfg.output_dir.join("ablation.csv"), csv)?;
    write(&cfg.output_dir.join("ablation_stats.csv"), stats)?;
    write(&cfg.output_dir.join("ablation.txt"), txt)?;
    write(&cfg.output_dir.join("triplets.jsonl"), triplets_jsonl(&ids))?;
    archive_config(cfg)?;
    Ok(results)
}

/// One row of `compare.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub scenario: String,
    pub lang_a: String,
    pub lang_b: String,
    pub metric: String,
    pub value_a: f64,
    pub value_b: f64,
    pub delta: f64,
}

fn read_report(path: &Path) -> Result<MetricReport, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    MetricReport::from_json(&text).map_err(|e| CliError::BadReport {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn report_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("report.") && n.ends_with(".json"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Gap table `a - b`. Two report files give one block of rows; two
/// directories are matched report-by-report on file name.
pub fn cmd_compare(a: &Path, b: &Path, out_dir: &Path) -> Result<Vec<CompareRow>, CliError> {
    let pairs: Vec<(PathBuf, PathBuf)> = if a.is_dir() && b.is_dir() {
        let pairs: Vec<_> = report_files(a)?
            .into_iter()
            .filter_map(|pa| {
                let pb = b.join(pa.file_name()?);
                pb.exists().then_some((pa, pb))
            })
            .collect();
        if pairs.is_empty() {
            return Err(CliError::Config(format!(
                "no report files in common between {} and {}",
                a.display(),
                b.display()
            )));
        }
        pairs
    } else {
        vec![(a.to_path_buf(), b.to_path_buf())]
    };

    let mut rows = Vec::new();
    for (pa, pb) in pairs {
        let ra = read_report(&pa)?;
        let rb = read_report(&pb)?;
        let mb = rb.metrics();
        for m in ra.metrics().into_iter().filter(|m| mb.contains(m)) {
            rows.push(CompareRow {
                scenario: ra.scenario.label(),
                lang_a: ra.scenario.query_lang.to_string(),
                lang_b: rb.scenario.query_lang.to_string(),
                metric: m.to_string(),
                value_a: ra.value(m).expect("listed metric"),
                value_b: rb.value(m).expect("listed metric"),
                delta: language_gap(&ra, &rb, m)?,
            });
        }
    }

    let mut csv = String::from("scenario,lang_a,lang_b,metric,value_a,value_b,delta\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.6},{:.6},{:.6}",
            r.scenario, r.lang_a, r.lang_b, r.metric, r.value_a, r.value_b, r.delta
        );
    }
    ensure_dir(out_dir)?;
    write(&out_dir.join(COMPARE_FILE), csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeCheck {
    pub mode: LossMode,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_batch: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckSummary {
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    pub modes: Vec<ModeCheck>,
}

pub fn cmd_grad_check(cfg: &RunConfig) -> Result<GradCheckSummary, CliError> {
    cfg.validate()?;
    let g = &cfg.grad_check;
    let mut modes = Vec::new();
    for mode in LossMode::ALL {
        let tc = TrainConfig {
            loss_mode: mode,
            ..cfg.train.config.clone()
        };
        let mut check = ModeCheck {
            mode,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_batch: 0,
        };
        for case in 0..g.batches {
            let (batch, adapter) = random_case(g.seed, case, g.batch_size, g.dim);
            let r = check_gradients(&batch, &adapter, &tc, g.h)?;
            check.max_abs_error = check.max_abs_error.max(r.max_abs_error);
            if r.max_rel_error > check.max_rel_error {
                check.max_rel_error = r.max_rel_error;
                check.worst_batch = case;
            }
        }
        modes.push(check);
    }
    let max_rel_error = modes.iter().map(|m| m.max_rel_error).fold(0.0, f64::max);
    let summary = GradCheckSummary {
        tolerance: g.tolerance,
        max_rel_error,
        passed: max_rel_error < g.tolerance,
        modes,
    };
    ensure_dir(&cfg.output_dir)?;
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    write(&cfg.output_dir.join("grad_check.json"), s)?;
    Ok(summary)
}

/// Renders every `report.*.json` in `dir` as one text table.
pub fn cmd_report(dir: &Path) -> Result<String, CliError> {
    let files = report_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Config(format!(
            "no report files in {}",
            dir.display()
        )));
    }
    let reports = files
        .iter()
        .map(|p| read_report(p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(render_table(&reports))
}
