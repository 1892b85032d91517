//! Synthetic inputs shared by the benchmarks.

const WORDS: &[&str] = &[
    "disk", "latency", "storage", "node", "cluster", "certificate", "expired", "gateway", "timeout", "dns",
    "resolver", "quota", "blob", "write", "error", "spike", "tenant", "setting", "drift", "rotation", "job",
    "failed", "pool", "exhausted", "connection", "deploy", "rollback", "config", "push", "memory",
];

/// Deterministic pseudo-random text; `seed` picks the word sequence.
pub fn text(seed: u64, len: usize) -> String {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        x ^= x >> 33;
        x = x.wrapping_mul(0xff51afd7ed558ccd);
        x ^= x >> 29;
        out.push(WORDS[(x % WORDS.len() as u64) as usize]);
    }
    out.join(" ")
}

/// `n` documents of about 40 words each.
pub fn documents(n: usize) -> Vec<(String, String)> {
    (0..n).map(|i| (format!("D{i:05}"), text(i as u64, 40))).collect()
}
