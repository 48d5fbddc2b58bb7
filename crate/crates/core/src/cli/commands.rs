use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use super::exit::UsageError;
use super::{Command, QueryArgs};
use crate::config::{ProviderKind, RunConfig};
use crate::embedding::{EmbeddingProvider, EmbeddingStore, PoolingProvider, ServiceEncoder, Side};
use crate::eval::{
    load_corpus, load_negconstraint_items, load_qrels, load_queries, mean_average_precision, ndcg_at_k,
    summarize_by_formulation, write_negconstraint_items, Corpus, DataError, MetricOptions, NegConstraintItem,
    Query, Run, RUN_TAG,
};
use crate::pipeline::{run_first_stage, run_query_set, CorpusIndex, Reranker, SideAnalysis};
use crate::translate::{
    OpenAiChat, TextKind, TranslationCache, Translator, TranslatorConfig,
};

pub(super) fn dispatch(cfg: &RunConfig, out: Option<&Path>, command: Command) -> anyhow::Result<()> {
    match command {
        Command::Embed { corpus, queries } => embed(cfg, out, &corpus, &queries),
        Command::WarmCache {
            corpus,
            queries,
            concurrency,
        } => warm_cache(cfg, out, corpus.as_deref(), &queries, concurrency),
        Command::Retrieve { corpus, queries } => retrieve(cfg, out, &corpus, &queries),
        Command::Rerank {
            corpus,
            queries,
            details,
        } => rerank(cfg, out, &corpus, &queries, details.as_deref()),
        Command::Eval {
            run,
            qrels,
            negconstraint,
            cutoff,
            exclude_unjudged,
        } => eval(cfg, out, &run, qrels.as_deref(), negconstraint.as_deref(), cutoff, exclude_unjudged),
        Command::Generate { corpus, items } => generate(cfg, out, &corpus, &items),
        Command::DumpAlignment { corpus, query, doc_id } => dump_alignment(cfg, out, &corpus, &query, &doc_id),
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn require_out(out: Option<&Path>) -> anyhow::Result<&Path> {
    out.ok_or_else(|| UsageError("this command needs --out".into()).into())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_meta(out: &Path, command: &str, cfg: &RunConfig, summary: serde_json::Value) -> anyhow::Result<()> {
    write_json(
        &sidecar(out, ".meta.json"),
        &json!({ "command": command, "config": cfg.to_json(), "summary": summary }),
    )
}

fn timeout(cfg: &RunConfig) -> Duration {
    Duration::from_secs(cfg.timeout_secs)
}

fn build_provider(cfg: &RunConfig) -> anyhow::Result<Box<dyn EmbeddingProvider>> {
    match cfg.provider {
        ProviderKind::File => {
            let path = cfg
                .store
                .as_deref()
                .ok_or_else(|| UsageError("the file provider needs --store".into()))?;
            let store =
                EmbeddingStore::load(path).with_context(|| format!("loading store {}", path.display()))?;
            Ok(Box::new(store))
        }
        ProviderKind::Service => Ok(Box::new(service_provider(cfg)?)),
    }
}

fn service_provider(cfg: &RunConfig) -> anyhow::Result<PoolingProvider<ServiceEncoder>> {
    let url = cfg
        .embed_url
        .as_deref()
        .ok_or_else(|| UsageError("the service provider needs --embed-url".into()))?;
    Ok(PoolingProvider::new(
        ServiceEncoder::new(url, timeout(cfg)),
        cfg.embed_batch_size,
        cfg.embed_concurrency,
    ))
}

fn open_cache(cfg: &RunConfig) -> anyhow::Result<TranslationCache> {
    match &cfg.cache {
        Some(p) => TranslationCache::open(p).with_context(|| format!("opening cache {}", p.display())),
        None => Ok(TranslationCache::in_memory()),
    }
}

fn chat_model(cfg: &RunConfig) -> Option<OpenAiChat> {
    cfg.llm_base.as_deref().map(|base| {
        let key = std::env::var(&cfg.llm_api_key_env).ok();
        OpenAiChat::new(base, &cfg.llm_model, key, timeout(cfg))
    })
}

fn build_translator(cfg: &RunConfig) -> anyhow::Result<Translator> {
    let config = TranslatorConfig {
        model_id: cfg.llm_model.clone(),
        temperature: cfg.temperature,
        doc_char_limit: cfg.doc_char_limit,
        ..TranslatorConfig::default()
    };
    let chat = chat_model(cfg).map(|c| Box::new(c) as Box<dyn crate::translate::ChatModel>);
    Ok(Translator::new(chat, open_cache(cfg)?, config))
}

fn read_queries(args: &QueryArgs) -> anyhow::Result<(Vec<Query>, Option<Vec<NegConstraintItem>>)> {
    match (&args.queries, &args.negconstraint) {
        (Some(q), _) => Ok((load_queries(q)?, None)),
        (None, Some(items)) => {
            let items = load_negconstraint_items(items)?;
            let queries = items
                .iter()
                .map(|it| Query {
                    id: it.query_id.clone(),
                    text: it.query.clone(),
                })
                .collect();
            Ok((queries, Some(items)))
        }
        (None, None) => Err(UsageError("give --queries or --negconstraint".into()).into()),
    }
}

fn read_optional_queries(args: &QueryArgs) -> anyhow::Result<Vec<Query>> {
    if args.queries.is_none() && args.negconstraint.is_none() {
        return Ok(Vec::new());
    }
    Ok(read_queries(args)?.0)
}

fn embed(cfg: &RunConfig, out: Option<&Path>, corpus: &Path, queries: &QueryArgs) -> anyhow::Result<()> {
    let out = require_out(out)?;
    if cfg.provider != ProviderKind::Service {
        return Err(UsageError("embed needs --provider service".into()).into());
    }
    let provider = service_provider(cfg)?;
    let corpus = load_corpus(corpus)?;
    let queries = read_optional_queries(queries)?;

    let mut nl: Vec<&str> = corpus.iter().map(|d| d.text.as_str()).collect();
    nl.extend(queries.iter().map(|q| q.text.as_str()));
    nl.sort_unstable();
    nl.dedup();
    let cache = open_cache(cfg)?;
    let records = cache.records();
    let mut fol: Vec<&str> = records.iter().map(|r| r.fol_text.as_str()).collect();
    fol.sort_unstable();
    fol.dedup();

    let mut store = EmbeddingStore::new();
    if !nl.is_empty() {
        for enc in provider.batch_encode(&nl, Side::Nl)? {
            store.insert(enc)?;
        }
    }
    let mut fol_skipped = 0usize;
    if !fol.is_empty() {
        match provider.batch_encode(&fol, Side::Fol) {
            Ok(all) => {
                for enc in all {
                    store.insert(enc)?;
                }
            }
            Err(_) => {
                for text in &fol {
                    match provider.encode(text, Side::Fol) {
                        Ok(enc) => store.insert(enc)?,
                        Err(e) => {
                            log::warn!("skipping FOL text {text:?}: {e}");
                            fol_skipped += 1;
                        }
                    }
                }
            }
        }
    }
    store.save(out).with_context(|| format!("writing store {}", out.display()))?;
    let summary = json!({
        "nl_texts": nl.len(),
        "fol_texts": fol.len(),
        "fol_skipped": fol_skipped,
        "records": store.len(),
    });
    eprintln!("embed: {summary}");
    write_meta(out, "embed", cfg, summary)
}

fn warm_cache(
    cfg: &RunConfig,
    out: Option<&Path>,
    corpus: Option<&Path>,
    queries: &QueryArgs,
    concurrency: Option<usize>,
) -> anyhow::Result<()> {
    let translator = build_translator(cfg)?;
    let concurrency = concurrency.unwrap_or(cfg.llm_concurrency);
    let queries = read_optional_queries(queries)?;
    let corpus = match corpus {
        Some(p) => load_corpus(p)?,
        None => Corpus::new(),
    };
    let query_texts: Vec<&str> = queries.iter().map(|q| q.text.as_str()).collect();
    let doc_texts: Vec<&str> = corpus.iter().map(|d| d.text.as_str()).collect();
    let summary = json!({
        "queries": translator.warm_cache(&query_texts, TextKind::Query, concurrency),
        "documents": translator.warm_cache(&doc_texts, TextKind::Document, concurrency),
    });
    println!("{summary}");
    if let Some(out) = out {
        write_json(out, &json!({ "config": cfg.to_json(), "summary": summary }))?;
    }
    Ok(())
}

fn write_run(out: &Path, run: &Run, queries: &[Query]) -> anyhow::Result<()> {
    let order: Vec<&str> = queries.iter().map(|q| q.id.as_str()).collect();
    fs::write(out, run.to_trec_ordered(&order, RUN_TAG)).with_context(|| format!("writing run {}", out.display()))
}

fn retrieve(cfg: &RunConfig, out: Option<&Path>, corpus: &Path, queries: &QueryArgs) -> anyhow::Result<()> {
    let out = require_out(out)?;
    let provider = build_provider(cfg)?;
    let corpus = load_corpus(corpus)?;
    let (queries, _) = read_queries(queries)?;
    let index = CorpusIndex::build(&corpus, provider.as_ref())?;
    let run = if queries.is_empty() {
        Run::new()
    } else {
        run_first_stage(&queries, &index, cfg.k, provider.as_ref())?
    };
    write_run(out, &run, &queries)?;
    write_meta(out, "retrieve", cfg, json!({ "queries": queries.len() }))
}

fn rerank(
    cfg: &RunConfig,
    out: Option<&Path>,
    corpus: &Path,
    queries: &QueryArgs,
    details: Option<&Path>,
) -> anyhow::Result<()> {
    let out = require_out(out)?;
    let provider = build_provider(cfg)?;
    let translator = build_translator(cfg)?;
    let corpus = load_corpus(corpus)?;
    let (queries, _) = read_queries(queries)?;
    let index = CorpusIndex::build(&corpus, provider.as_ref())?;
    let reranker = Reranker::new(&translator, provider.as_ref(), &corpus, cfg.scoring(), cfg.threads);
    let (run, outcomes) = if queries.is_empty() {
        (Run::new(), Vec::new())
    } else {
        run_query_set(&queries, &index, cfg.k, &reranker)?
    };
    write_run(out, &run, &queries)?;

    let doc_fallbacks: usize = outcomes
        .iter()
        .map(|o| o.reranked.rows.iter().filter(|r| r.fallback_used).count())
        .sum();
    let query_fallbacks = outcomes.iter().filter(|o| o.reranked.query_fallback.is_some()).count();
    let summary = json!({
        "queries": queries.len(),
        "rows": outcomes.iter().map(|o| o.reranked.rows.len()).sum::<usize>(),
        "document_fallbacks": doc_fallbacks,
        "query_fallbacks": query_fallbacks,
    });
    eprintln!("rerank: {summary}");
    if let Some(path) = details {
        write_json(path, &json!({ "config": cfg.to_json(), "queries": outcomes }))?;
    }
    write_meta(out, "rerank", cfg, summary)
}

fn eval(
    cfg: &RunConfig,
    out: Option<&Path>,
    run_path: &Path,
    qrels: Option<&Path>,
    negconstraint: Option<&Path>,
    cutoff: usize,
    exclude_unjudged: bool,
) -> anyhow::Result<()> {
    if cutoff == 0 {
        return Err(UsageError("--cutoff must be at least 1".into()).into());
    }
    let run = Run::load(run_path)?;
    let (qrels, items) = match (qrels, negconstraint) {
        (Some(q), _) => (load_qrels(q)?, None),
        (None, Some(n)) => {
            let items = load_negconstraint_items(n)?;
            (crate::eval::derived_qrels(&items), Some(items))
        }
        (None, None) => return Err(UsageError("give --qrels or --negconstraint".into()).into()),
    };
    let opts = MetricOptions { exclude_unjudged };
    let ndcg = ndcg_at_k(&run, &qrels, cutoff, opts);
    let map = mean_average_precision(&run, &qrels, opts);

    println!("{:<24} {:>10} {:>10}", "query", format!("nDCG@{cutoff}"), "AP");
    for (qid, n) in &ndcg.per_query {
        println!("{qid:<24} {n:>10.4} {:>10.4}", map.per_query.get(qid).copied().unwrap_or(0.0));
    }
    println!("{:<24} {:>10.4} {:>10.4}", "mean", ndcg.mean, map.mean);

    let mut report = json!({
        "config": cfg.to_json(),
        "run": run_path,
        "cutoff": cutoff,
        "exclude_unjudged": exclude_unjudged,
        "queries": ndcg.per_query.len(),
        "ndcg": ndcg,
        "map": map,
    });
    if let Some(items) = &items {
        let by_f_ndcg = summarize_by_formulation(items, &ndcg);
        let by_f_map = summarize_by_formulation(items, &map);
        for (name, s) in [("nDCG", &by_f_ndcg), ("MAP", &by_f_map)] {
            for (f, v) in &s.per_formulation {
                println!("{name} {f:<28} {v:.4}");
            }
            println!("{name} total (micro) {:.4}  total (macro) {:.4}", s.micro_total, s.macro_total);
        }
        report["formulations"] = json!({ "ndcg": by_f_ndcg, "map": by_f_map });
    }
    let report_path = out.map(Path::to_path_buf).unwrap_or_else(|| sidecar(run_path, ".eval.json"));
    write_json(&report_path, &report)
}

fn generate(cfg: &RunConfig, out: Option<&Path>, corpus: &Path, items: &Path) -> anyhow::Result<()> {
    let out = require_out(out)?;
    let chat = chat_model(cfg).ok_or_else(|| UsageError("generate needs --llm-base".into()))?;
    let corpus = load_corpus(corpus)?;
    let mut items = load_negconstraint_items(items)?;
    for item in &mut items {
        let text = |id: &String| {
            corpus.get(id).ok_or_else(|| DataError::SchemaViolation {
                query_id: item.query_id.clone(),
                reason: format!("document {id} is not in the corpus"),
            })
        };
        let positive = text(&item.positive_ids[0])?;
        let negatives: Vec<&str> = item.negative_ids.iter().map(text).collect::<Result<_, _>>()?;
        let query = crate::eval::generate_negconstraint(
            positive,
            &negatives,
            item.formulation,
            &chat,
            cfg.temperature,
            Default::default(),
        )
        .with_context(|| format!("generating query {}", item.query_id))?;
        item.query = query;
    }
    write_negconstraint_items(&items, out)?;
    write_meta(out, "generate", cfg, json!({ "items": items.len() }))
}

#[derive(Serialize)]
struct MatrixDump<'a, T: Serialize> {
    rows: &'a [String],
    cols: &'a [String],
    values: Vec<Vec<T>>,
}

fn nested<T: Copy>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn dump_side(dir: &Path, prefix: &str, side: &SideAnalysis) -> anyhow::Result<()> {
    let (nl, fol) = (&side.nl_tokens, &side.fol_tokens);
    write_json(
        &dir.join(format!("{prefix}_cost.json")),
        &MatrixDump { rows: nl, cols: fol, values: nested(&side.cost) },
    )?;
    write_json(
        &dir.join(format!("{prefix}_plan.json")),
        &MatrixDump { rows: nl, cols: fol, values: nested(&side.plan.plan) },
    )?;
    write_json(
        &dir.join(format!("{prefix}_sigma.json")),
        &MatrixDump { rows: fol, cols: nl, values: nested(side.sigma.as_array()) },
    )?;
    write_json(
        &dir.join(format!("{prefix}_attention.json")),
        &MatrixDump { rows: fol, cols: nl, values: nested(&side.attention.weights) },
    )
}

fn dump_alignment(
    cfg: &RunConfig,
    out: Option<&Path>,
    corpus: &Path,
    query: &str,
    doc_id: &str,
) -> anyhow::Result<()> {
    let dir = require_out(out)?;
    let provider = build_provider(cfg)?;
    let translator = build_translator(cfg)?;
    let corpus = load_corpus(corpus)?;
    let reranker = Reranker::new(&translator, provider.as_ref(), &corpus, cfg.scoring(), cfg.threads);
    let pair = reranker.analyze_pair(query, doc_id)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    dump_side(dir, "query", &pair.query)?;
    dump_side(dir, "doc", &pair.doc)?;
    write_json(
        &dir.join("scores.json"),
        &json!({
            "config": cfg.to_json(),
            "query": query,
            "doc_id": doc_id,
            "query_fol": pair.query.fol_text,
            "doc_fol": pair.doc.fol_text,
            "score1": pair.score1,
            "score2": pair.score2,
            "combined": pair.combined,
        }),
    )
}
