//! Shared test support: brute-force oracles, fixtures and a mock HTTP server.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use nsir_core::embedding::{text_digest, EmbeddingStore, EncodedText, Side, TokenMatrix};
use nsir_core::translate::{text_hash, TextKind, TranslationRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

// ---------------------------------------------------------------------------
// Transport oracle: enumerate spanning trees of the bipartite support graph,
// peel flows from the leaves and keep the cheapest feasible vertex.

pub struct OracleSolution {
    pub objective: f64,
    pub vertices: usize,
}

struct Dsu {
    parent: Vec<usize>,
    rank: Vec<u8>,
    log: Vec<(usize, usize, bool)>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
            rank: vec![0; n],
            log: Vec::new(),
        }
    }
    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.rank[ra] < self.rank[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        let bumped = self.rank[ra] == self.rank[rb];
        self.parent[rb] = ra;
        if bumped {
            self.rank[ra] += 1;
        }
        self.log.push((ra, rb, bumped));
        true
    }
    fn undo(&mut self) {
        let (ra, rb, bumped) = self.log.pop().unwrap();
        self.parent[rb] = rb;
        if bumped {
            self.rank[ra] -= 1;
        }
    }
}

/// Flows on a spanning tree of K(m,n), found by repeatedly removing leaves.
pub fn peel_tree_flows(m: usize, n: usize, edges: &[(usize, usize)], a: &[f64], b: &[f64]) -> Vec<f64> {
    let v = m + n;
    let mut supply: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let mut degree = vec![0usize; v];
    for &(i, j) in edges {
        degree[i] += 1;
        degree[m + j] += 1;
    }
    let mut done = vec![false; edges.len()];
    let mut flows = vec![0.0; edges.len()];
    for _ in 0..edges.len() {
        let (e, leaf) = edges
            .iter()
            .enumerate()
            .filter(|(e, _)| !done[*e])
            .find_map(|(e, &(i, j))| {
                if degree[i] == 1 {
                    Some((e, i))
                } else if degree[m + j] == 1 {
                    Some((e, m + j))
                } else {
                    None
                }
            })
            .expect("a tree always has a leaf");
        let (i, j) = edges[e];
        let other = if leaf == i { m + j } else { i };
        flows[e] = supply[leaf];
        supply[other] -= supply[leaf];
        supply[leaf] = 0.0;
        degree[i] -= 1;
        degree[m + j] -= 1;
        done[e] = true;
    }
    flows
}

pub fn oracle_transport(cost: &Array2<f64>, a: &[f64], b: &[f64]) -> OracleSolution {
    let (m, n) = cost.dim();
    let all: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let need = m + n - 1;
    let mut best = OracleSolution {
        objective: f64::INFINITY,
        vertices: 0,
    };
    let mut dsu = Dsu::new(m + n);
    let mut chosen = Vec::with_capacity(need);

    fn rec(
        start: usize,
        all: &[(usize, usize)],
        need: usize,
        m: usize,
        n: usize,
        dsu: &mut Dsu,
        chosen: &mut Vec<(usize, usize)>,
        cost: &Array2<f64>,
        a: &[f64],
        b: &[f64],
        best: &mut OracleSolution,
    ) {
        if chosen.len() == need {
            let flows = peel_tree_flows(m, n, chosen, a, b);
            if flows.iter().all(|&f| f >= -1e-12) {
                best.vertices += 1;
                let obj: f64 = chosen.iter().zip(&flows).map(|(&(i, j), f)| cost[[i, j]] * f).sum();
                if obj < best.objective {
                    best.objective = obj;
                }
            }
            return;
        }
        for e in start..all.len() {
            if all.len() - e < need - chosen.len() {
                break;
            }
            let (i, j) = all[e];
            if dsu.union(i, m + j) {
                chosen.push(all[e]);
                rec(e + 1, all, need, m, n, dsu, chosen, cost, a, b, best);
                chosen.pop();
                dsu.undo();
            }
        }
    }
    rec(0, &all, need, m, n, &mut dsu, &mut chosen, cost, a, b, &mut best);
    best
}

/// Uniform-marginal transport as an `L × L` assignment problem with
/// `L = lcm(m, n)`: row `i` is copied `L/m` times and column `j` `L/n`
/// times. Solved with the O(L³) Hungarian method; returns the optimal
/// transport objective.
pub fn oracle_uniform_assignment(cost: &Array2<f64>) -> f64 {
    let (m, n) = cost.dim();
    let gcd = |mut a: usize, mut b: usize| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    let l = m / gcd(m, n) * n;
    let (rm, rn) = (l / m, l / n);
    let c = |r: usize, k: usize| cost[[r / rm, k / rn]];

    // 1-indexed potentials formulation.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; l + 1];
    let mut v = vec![0.0; l + 1];
    let mut p = vec![0usize; l + 1];
    let mut way = vec![0usize; l + 1];
    for i in 1..=l {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; l + 1];
        let mut used = vec![false; l + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=l {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=l {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let total: f64 = (1..=l).map(|j| c(p[j] - 1, j - 1)).sum();
    total / l as f64
}

// ---------------------------------------------------------------------------
// Naive dense products and attention.

pub fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            assert_eq!(row.len(), inner);
            (0..cols)
                .map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum())
                .collect()
        })
        .collect()
}

pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|c| a.iter().map(|r| r[c]).collect()).collect()
}

pub fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// `Hᵀ · P · Z · cls` built left to right as full matrices.
pub fn oracle_fuse(h: &[Vec<f64>], p: &[Vec<f64>], z: &[Vec<f64>], cls: &[f64]) -> Vec<f64> {
    let ht_p = naive_matmul(&transpose(h), p);
    let ht_p_z = naive_matmul(&ht_p, z);
    let col: Vec<Vec<f64>> = cls.iter().map(|&x| vec![x]).collect();
    naive_matmul(&ht_p_z, &col).into_iter().map(|r| r[0]).collect()
}

pub struct OracleAttention {
    pub weights: Vec<Vec<f64>>,
    pub contextual: Vec<Vec<f64>>,
    pub pooled: Vec<f64>,
}

/// Plain cross attention with FOL rows as queries and NL rows as keys and
/// values, plus the signed value offset.
pub fn oracle_attention(h: &[Vec<f64>], z: &[Vec<f64>], sigma: &[Vec<i8>], d_k: usize) -> OracleAttention {
    let d = h[0].len();
    let mut weights = Vec::new();
    let mut contextual = Vec::new();
    for (j, zj) in z.iter().enumerate() {
        let values: Vec<Vec<f64>> = h
            .iter()
            .enumerate()
            .map(|(i, hi)| {
                let s = f64::from(sigma[j][i]);
                hi.iter().zip(zj).map(|(x, y)| x + s * y).collect()
            })
            .collect();
        let logits: Vec<f64> = values
            .iter()
            .map(|v| v.iter().zip(zj).map(|(x, y)| x * y).sum::<f64>() / (d_k as f64).sqrt())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let alpha: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let mut ctx = vec![0.0; d];
        for (a, v) in alpha.iter().zip(&values) {
            for k in 0..d {
                ctx[k] += a * v[k];
            }
        }
        weights.push(alpha);
        contextual.push(ctx);
    }
    let n = z.len() as f64;
    let pooled = (0..d).map(|k| contextual.iter().map(|c| c[k]).sum::<f64>() / n).collect();
    OracleAttention {
        weights,
        contextual,
        pooled,
    }
}

pub fn cosine_cost(h: &[Vec<f64>], z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    h.iter()
        .map(|hi| {
            z.iter()
                .map(|zj| {
                    let c = hi.iter().zip(zj).map(|(a, b)| a * b).sum::<f64>() / (norm(hi) * norm(zj));
                    (1.0 - c).clamp(0.0, 2.0)
                })
                .collect()
        })
        .collect()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Brute-force ranking metrics.

pub fn brute_ndcg(ranked: &[&str], rels: &BTreeMap<&str, u32>, k: usize) -> f64 {
    let g = |r: u32| 2f64.powf(r as f64) - 1.0;
    let mut dcg = 0.0;
    for pos in 1..=k.min(ranked.len()) {
        dcg += g(*rels.get(ranked[pos - 1]).unwrap_or(&0)) / (pos as f64 + 1.0).log2();
    }
    // Ideal: try every ordering of the judged documents is too costly, so
    // sort grades by repeated maximum extraction instead.
    let mut grades: Vec<u32> = rels.values().copied().collect();
    let mut idcg = 0.0;
    for pos in 1..=k {
        let Some((idx, _)) = grades.iter().enumerate().max_by_key(|(_, &r)| r) else { break };
        let r = grades.remove(idx);
        idcg += g(r) / (pos as f64 + 1.0).log2();
    }
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn brute_ap(ranked: &[&str], rels: &BTreeMap<&str, u32>) -> f64 {
    let relevant: Vec<&str> = rels.iter().filter(|(_, &r)| r > 0).map(|(d, _)| *d).collect();
    if relevant.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for d in &relevant {
        if let Some(pos) = ranked.iter().position(|x| x == d) {
            let above = ranked[..=pos].iter().filter(|x| relevant.contains(x)).count();
            total += above as f64 / (pos + 1) as f64;
        }
    }
    total / relevant.len() as f64
}

// ---------------------------------------------------------------------------
// The negation-flip fixture.

#[derive(Debug, Clone, Deserialize)]
pub struct FixtureText {
    pub nl: String,
    pub fol: String,
    pub nl_tokens: Vec<String>,
    pub fol_tokens: Vec<String>,
    pub cls: Vec<f64>,
    pub nl_rows: Vec<Vec<f64>>,
    pub fol_rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExpectedScores {
    pub first_stage: f64,
    pub score1: f64,
    pub score2: f64,
    pub combined: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Expected {
    pub positive: ExpectedScores,
    pub negative: ExpectedScores,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FlipFixture {
    pub query: FixtureText,
    pub positive: FixtureText,
    pub negative: FixtureText,
    pub expected: Expected,
}

pub fn flip_fixture() -> FlipFixture {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/negation_flip.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn f32_round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

pub fn f32_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| f32_round(r)).collect()
}

pub fn encoded(text: &str, side: Side, tokens: &[String], rows: &[Vec<f64>], cls: &[f64]) -> EncodedText {
    EncodedText::new(
        text_digest(text, side),
        tokens.to_vec(),
        TokenMatrix::from_rows(rows).unwrap(),
        cls.to_vec(),
    )
    .unwrap()
}

pub fn insert_text(store: &mut EmbeddingStore, t: &FixtureText) {
    store
        .insert(encoded(&t.nl, Side::Nl, &t.nl_tokens, &t.nl_rows, &t.cls))
        .unwrap();
    store
        .insert(encoded(&t.fol, Side::Fol, &t.fol_tokens, &t.fol_rows, &t.cls))
        .unwrap();
}

pub fn record(text: &str, kind: TextKind, fol: &str) -> TranslationRecord {
    TranslationRecord {
        text_hash: text_hash(text),
        kind,
        fol_text: fol.to_string(),
        raw_response: format!("Conclusion:\n{fol} ::: fixture"),
        model_id: "gpt-4o".to_string(),
        temperature: 0.5,
        truncated: false,
    }
}

pub fn random_text(rng: &mut ChaCha8Rng, nl: &str, fol: &str, d: usize) -> FixtureText {
    let nl_tokens: Vec<String> = nsir_core::embedding::nl_words(nl).into_iter().map(|w| w.surface).collect();
    let fol_tokens: Vec<String> = nsir_core::fol::tokenize_fol(fol)
        .unwrap()
        .tokens
        .into_iter()
        .map(|t| t.surface)
        .collect();
    let mut row = |_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let nl_rows = (0..nl_tokens.len()).map(&mut row).collect();
    let fol_rows = (0..fol_tokens.len()).map(&mut row).collect();
    let cls = row(0);
    FixtureText {
        nl: nl.to_string(),
        fol: fol.to_string(),
        nl_tokens,
        fol_tokens,
        cls,
        nl_rows,
        fol_rows,
    }
}

pub struct FixtureFiles {
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub qrels: PathBuf,
    pub store: PathBuf,
    pub cache: PathBuf,
}

/// The flip fixture plus random distractors: three queries over eight
/// documents, one of which has no cached translation.
pub fn write_fixture_set(dir: &Path) -> FixtureFiles {
    let fx = flip_fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = fx.query.cls.len();
    let distractors = [
        ("d3", "Poe wrote The Raven", "Wrote(poe, raven)"),
        ("d4", "Kerouac traveled on the road", "Traveled(kerouac, road)"),
        ("d5", "Burroughs lived in Tangier", "Lived(burroughs, tangier)"),
        ("d6", "Howl was seized by customs", "Seized(customs, howl)"),
        ("d7", "Ginsberg read poems in San Francisco", "Read(ginsberg, poems) ∧ In(sanFrancisco)"),
        ("d8", "The trial ended in 1957", "Ended(trial, y1957)"),
    ];
    let extra_queries = [
        ("q2", "Which poets lived abroad", "∃x (Poet(x) ∧ LivedAbroad(x))"),
        ("q3", "Poe but not The Raven", "Works(poe) ∧ ¬Mentions(raven)"),
    ];

    let mut store = EmbeddingStore::new();
    let mut cache = Vec::new();
    insert_text(&mut store, &fx.query);
    insert_text(&mut store, &fx.positive);
    insert_text(&mut store, &fx.negative);
    cache.push(record(&fx.query.nl, TextKind::Query, &fx.query.fol));
    cache.push(record(&fx.positive.nl, TextKind::Document, &fx.positive.fol));
    cache.push(record(&fx.negative.nl, TextKind::Document, &fx.negative.fol));

    let mut corpus = vec![
        ("d1".to_string(), fx.positive.nl.clone()),
        ("d2".to_string(), fx.negative.nl.clone()),
    ];
    for (i, (id, nl, fol)) in distractors.iter().enumerate() {
        let t = random_text(&mut rng, nl, fol, d);
        insert_text(&mut store, &t);
        // d8's translation is deliberately missing.
        if i + 1 < distractors.len() {
            cache.push(record(nl, TextKind::Document, fol));
        }
        corpus.push((id.to_string(), nl.to_string()));
    }
    let mut queries = vec![("q1".to_string(), fx.query.nl.clone())];
    for (id, nl, fol) in extra_queries {
        let t = random_text(&mut rng, nl, fol, d);
        insert_text(&mut store, &t);
        cache.push(record(nl, TextKind::Query, fol));
        queries.push((id.to_string(), nl.to_string()));
    }

    let files = FixtureFiles {
        corpus: dir.join("corpus.jsonl"),
        queries: dir.join("queries.jsonl"),
        qrels: dir.join("qrels.tsv"),
        store: dir.join("embeddings.bin"),
        cache: dir.join("translations.jsonl"),
    };
    let corpus_text: String = corpus
        .iter()
        .map(|(id, t)| serde_json::json!({"_id": id, "title": "", "text": t}).to_string() + "\n")
        .collect();
    std::fs::write(&files.corpus, corpus_text).unwrap();
    let query_text: String = queries
        .iter()
        .map(|(id, t)| serde_json::json!({"_id": id, "text": t}).to_string() + "\n")
        .collect();
    std::fs::write(&files.queries, query_text).unwrap();
    std::fs::write(&files.qrels, "query-id\tcorpus-id\tscore\nq1\td1\t1\nq1\td2\t0\nq3\td3\t0\n").unwrap();
    store.save(&files.store).unwrap();
    let cache_text: String = cache
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    std::fs::write(&files.cache, cache_text).unwrap();
    files
}

// ---------------------------------------------------------------------------
// Minimal HTTP/1.1 server for mocking the embedding and chat endpoints.

pub struct MockResponse {
    pub status: u16,
    pub body: String,
}

impl MockResponse {
    pub fn json(status: u16, body: impl Into<String>) -> Self {
        MockResponse {
            status,
            body: body.into(),
        }
    }
}

type Handler = dyn Fn(&str, &str) -> MockResponse + Send + Sync;

/// Serves until the process exits; returns the base URL.
pub fn spawn_server<F>(handler: F) -> String
where
    F: Fn(&str, &str) -> MockResponse + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handler: Arc<Handler> = Arc::new(handler);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let handler = handler.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    return;
                }
                let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0u8; length];
                reader.read_exact(&mut body).unwrap();
                let resp = handler(&path, &String::from_utf8_lossy(&body));
                let reply = format!(
                    "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    resp.status,
                    resp.body.len(),
                    resp.body
                );
                let _ = stream.write_all(reply.as_bytes());
            });
        }
    });
    format!("http://{addr}")
}

// ---------------------------------------------------------------------------
// Metric fixture: five queries, each ranking the same twenty documents.

pub struct MetricFixture {
    pub run: nsir_core::eval::Run,
    pub qrels: nsir_core::eval::Qrels,
    pub rankings: BTreeMap<String, Vec<String>>,
    pub judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

pub fn metric_fixture() -> MetricFixture {
    let docs: Vec<String> = (1..=20).map(|i| format!("d{i:02}")).collect();
    let rotate = |k: usize| -> Vec<String> { docs.iter().cycle().skip(k).take(20).cloned().collect() };
    let mut rankings = BTreeMap::new();
    let mut judgments: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    let mut judge = |q: &str, pairs: &[(&str, u32)]| {
        judgments.insert(q.to_string(), pairs.iter().map(|(d, r)| (d.to_string(), *r)).collect());
    };

    // One relevant document, ranked second.
    rankings.insert("m1".to_string(), docs.clone());
    judge("m1", &[("d02", 1), ("d05", 0)]);
    // Two relevant documents at ranks one and three.
    rankings.insert("m2".to_string(), rotate(4));
    judge("m2", &[("d05", 1), ("d07", 1)]);
    // Graded judgments scattered through the list.
    let mut rev = docs.clone();
    rev.reverse();
    rankings.insert("m3".to_string(), rev);
    judge("m3", &[("d01", 2), ("d18", 1), ("d10", 2), ("d03", 0)]);
    // The only relevant document sits below the cutoff.
    rankings.insert("m4".to_string(), rotate(9));
    judge("m4", &[("d04", 1)]);
    // Judged, but nothing relevant.
    rankings.insert("m5".to_string(), rotate(13));
    judge("m5", &[("d01", 0), ("d02", 0)]);

    let mut run = nsir_core::eval::Run::new();
    for (q, ranked) in &rankings {
        run.set(q, ranked.iter().enumerate().map(|(i, d)| (d.clone(), 20.0 - i as f64)).collect());
    }
    let mut qrels = nsir_core::eval::Qrels::new();
    for (q, judged) in &judgments {
        for (d, r) in judged {
            qrels.insert(q, d, *r);
        }
    }
    MetricFixture {
        run,
        qrels,
        rankings,
        judgments,
    }
}

// ---------------------------------------------------------------------------
// Mock backends.

fn seeded(key: &str) -> ChaCha8Rng {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    key.hash(&mut h);
    ChaCha8Rng::seed_from_u64(h.finish())
}

pub const MOCK_DIM: usize = 8;

fn mock_vector(key: &str) -> Vec<f32> {
    let mut rng = seeded(key);
    (0..MOCK_DIM).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

/// Answers `POST /embed` with deterministic vectors. NL words longer than
/// four characters are split into two subword pieces.
pub fn mock_embed_body(body: &str) -> MockResponse {
    let req: serde_json::Value = serde_json::from_str(body).unwrap();
    let side = req["side"].as_str().unwrap();
    let items: Vec<serde_json::Value> = req["texts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| {
            let text = t.as_str().unwrap();
            let mut pieces = vec!["[CLS]".to_string()];
            if side == "nl" {
                for w in nsir_core::embedding::nl_words(text) {
                    let s = w.surface.to_lowercase();
                    match s.char_indices().nth(4) {
                        Some((cut, _)) => {
                            pieces.push(s[..cut].to_string());
                            pieces.push(format!("##{}", &s[cut..]));
                        }
                        None => pieces.push(s),
                    }
                }
            } else {
                let seq = nsir_core::fol::tokenize_fol(text).unwrap();
                pieces.extend(seq.tokens.into_iter().map(|t| t.surface));
            }
            pieces.push("[SEP]".to_string());
            let vectors: Vec<Vec<f32>> = pieces.iter().map(|p| mock_vector(p)).collect();
            serde_json::json!({
                "cls": mock_vector(&format!("{side}:{text}")),
                "tokens": pieces,
                "vectors": vectors,
            })
        })
        .collect();
    MockResponse::json(200, serde_json::json!({"dim": MOCK_DIM, "items": items}).to_string())
}

pub fn chat_reply(content: &str) -> MockResponse {
    MockResponse::json(
        200,
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string(),
    )
}

/// The user message of a chat-completions request body.
pub fn prompt_of(body: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    v["messages"][0]["content"].as_str().unwrap().to_string()
}
