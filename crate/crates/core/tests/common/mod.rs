//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod retrieval_oracle {
    use std::collections::BTreeSet;

    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    pub const VOCAB: [&str; 12] = [
        "blob", "disk", "error", "latency", "quota", "node", "restart", "cert", "dns", "timeout", "tenant", "sync",
    ];

    fn words(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect()
    }

    /// Literal BM25 with the Lucene idf, summing over distinct query terms.
    pub fn bm25_scores(docs: &[(String, String)], query: &str, k1: f64, b: f64) -> Vec<(String, f64)> {
        let toks: Vec<Vec<String>> = docs.iter().map(|(_, t)| words(t)).collect();
        let n = docs.len() as f64;
        let avgdl = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
        let terms: BTreeSet<String> = words(query).into_iter().collect();
        let mut out = Vec::new();
        for (d, (id, _)) in docs.iter().enumerate() {
            let mut score = 0.0;
            let mut matched = false;
            for term in &terms {
                let tf = toks[d].iter().filter(|w| *w == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                matched = true;
                let df = toks.iter().filter(|ws| ws.contains(term)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let dl = toks[d].len() as f64;
                score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
            if matched {
                out.push((id.clone(), score));
            }
        }
        out.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        out
    }

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    /// Greedy MMR evaluated from scratch at every step.
    pub fn mmr(query: &[f64], docs: &[(String, Vec<f64>)], k: usize, lambda: f64) -> Vec<String> {
        let mut selected: Vec<usize> = Vec::new();
        while selected.len() < k.min(docs.len()) {
            let values: Vec<(usize, f64)> = (0..docs.len())
                .filter(|i| !selected.contains(i))
                .map(|i| {
                    let rel = cos(query, &docs[i].1);
                    if selected.is_empty() {
                        return (i, rel);
                    }
                    let red = selected.iter().map(|&s| cos(&docs[i].1, &docs[s].1)).fold(f64::MIN, f64::max);
                    (i, lambda * rel - (1.0 - lambda) * red)
                })
                .collect();
            let top = values.iter().map(|v| v.1).fold(f64::MIN, f64::max);
            let pick = values
                .iter()
                .filter(|v| top - v.1 <= 1e-12)
                .min_by(|x, y| docs[x.0].0.cmp(&docs[y.0].0))
                .unwrap()
                .0;
            selected.push(pick);
        }
        selected.into_iter().map(|i| docs[i].0.clone()).collect()
    }

    pub fn random_corpus(rng: &mut StdRng, max_docs: usize) -> Vec<(String, String)> {
        let n = rng.random_range(0..=max_docs);
        (0..n)
            .map(|i| {
                let len = rng.random_range(0..=8);
                let text: Vec<&str> = (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
                (format!("d{i:02}"), text.join(" "))
            })
            .collect()
    }

    pub fn random_query(rng: &mut StdRng) -> String {
        let len = rng.random_range(1..=5);
        (0..len)
            .map(|_| if rng.random_bool(0.1) { "zebra" } else { VOCAB[rng.random_range(0..VOCAB.len())] })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn random_vectors(rng: &mut StdRng, n: usize, dim: usize) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = Vec::new();
        for i in 0..n {
            let v = if i > 0 && rng.random_bool(0.2) {
                out[rng.random_range(0..i)].1.clone()
            } else {
                (0..dim).map(|_| rng.random_range(0..4) as f64).collect()
            };
            out.push((format!("v{i}"), v));
        }
        out
    }

    pub fn rng(seed: u64) -> StdRng {
        StdRng::seed_from_u64(seed)
    }
}

pub mod fixtures {
    use std::collections::BTreeMap;

    use rca_core::corpus::{Corpus, IncidentRecord, Timestamp};

    pub fn incident(id: &str, title: &str, description: &str, root_cause: Option<&str>) -> IncidentRecord {
        IncidentRecord {
            id: id.into(),
            title: title.into(),
            description: description.into(),
            root_cause: root_cause.map(String::from),
            comments: Vec::new(),
            created_at: Timestamp::parse("2022-03-01T00:00:00Z").unwrap(),
            metadata: BTreeMap::new(),
        }
    }

    /// Fifteen historical incidents over a few recurring themes.
    pub fn history() -> Corpus {
        let themes = [
            ("Blob storage errors in region", "Clients see blob write error spikes", "storage quota exceeded on account"),
            ("Setting drift detected", "Monitor reports setting drift on cluster", "false positive: cluster has no tenants"),
            ("Certificate expiry alert", "TLS handshake failures for gateway", "certificate rotation job failed"),
            ("DNS resolution timeout", "Intermittent DNS timeout from nodes", "resolver node restart loop"),
            ("Disk latency high", "Disk latency above threshold on node pool", "noisy neighbour saturating disk"),
        ];
        let mut records = Vec::new();
        for i in 0..15 {
            let (t, d, rc) = themes[i % themes.len()];
            records.push(incident(&format!("H{i:02}"), &format!("{t} #{i}"), &format!("{d} (case {i})"), Some(rc)));
        }
        Corpus::from_records(records).unwrap()
    }
}

/// Slow, list-based metric references.
pub mod metric_oracle {
    fn toks(s: &str) -> Vec<String> {
        s.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase()).collect()
    }

    fn grams(t: &[String], n: usize) -> Vec<Vec<String>> {
        if t.len() < n { Vec::new() } else { (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect() }
    }

    /// Pooled clipped counts for orders 1..=max_n, unsmoothed.
    pub fn bleu(pairs: &[(&str, &str)], max_n: usize) -> f64 {
        let (mut plen, mut rlen) = (0usize, 0usize);
        let mut m = vec![0usize; max_n];
        let mut tot = vec![0usize; max_n];
        for (p, r) in pairs {
            let (p, r) = (toks(p), toks(r));
            plen += p.len();
            rlen += r.len();
            for n in 1..=max_n {
                let mut rg = grams(&r, n);
                for g in grams(&p, n) {
                    tot[n - 1] += 1;
                    if let Some(pos) = rg.iter().position(|x| *x == g) {
                        rg.remove(pos);
                        m[n - 1] += 1;
                    }
                }
            }
        }
        if plen == 0 {
            return 0.0;
        }
        let used: Vec<f64> = (0..max_n).filter(|&i| tot[i] > 0).map(|i| m[i] as f64 / tot[i] as f64).collect();
        if used.contains(&0.0) {
            return 0.0;
        }
        let gm = used.iter().product::<f64>().powf(1.0 / used.len() as f64);
        let bp = if plen < rlen { (1.0 - rlen as f64 / plen as f64).exp() } else { 1.0 };
        bp * gm
    }
}

/// Published result rows used as rendering fixtures.
pub mod published {
    use rca_core::eval::ModelRow;

    pub fn rb_k10_row() -> ModelRow {
        ModelRow {
            model: "RB (k=10)".into(),
            n: 97,
            c_bleu: 0.0597,
            s_bleu: 0.0574,
            rouge_l: 0.2030,
            meteor: 0.2411,
            semantic: 0.866,
        }
    }

    /// Counts in label-table order: correct imprecise, hallucination, precise;
    /// incorrect hallucination, insufficient evidence, other, reasoning, retrieval.
    pub fn label_counts() -> Vec<(&'static str, [usize; 8])> {
        vec![
            ("RB (k=10)", [2, 10, 26, 29, 11, 19, 0, 0]),
            ("CoT", [7, 1, 30, 11, 19, 27, 2, 0]),
            ("ReAct-BM25", [5, 0, 29, 4, 39, 8, 10, 2]),
        ]
    }
}
