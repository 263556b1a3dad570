//! Shared oracles for the integration suites. Everything here is
//! deliberately brute-force and independent of the library's computation
//! paths: AUC by exhaustive pair counting, p-values by full labeling
//! enumeration, BH by threshold enumeration.

#![allow(dead_code)]

use std::sync::Mutex;

use diffaudit_core::llmclient::{Backend, ChatRequest, EmbedRequest, Role, RoleConfig, TokenUsage};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

/// Transport double that records exactly the bytes a provider would see
/// (message content only; the store nonce never goes over the wire).
pub struct CapturingBackend {
    pub chats: Mutex<Vec<(Role, String)>>,
    pub embeds: Mutex<Vec<String>>,
    pub reply: String,
}

impl CapturingBackend {
    pub fn new(reply: &str) -> Self {
        CapturingBackend {
            chats: Mutex::new(Vec::new()),
            embeds: Mutex::new(Vec::new()),
            reply: reply.to_string(),
        }
    }
}

impl Backend for CapturingBackend {
    fn chat(
        &self,
        role: Role,
        _cfg: &RoleConfig,
        req: &ChatRequest,
    ) -> diffaudit_core::Result<(String, TokenUsage)> {
        let mut wire = String::new();
        if let Some(system) = &req.system {
            wire.push_str(system);
        }
        wire.push_str(&req.user);
        self.chats.lock().unwrap().push((role, wire));
        Ok((self.reply.clone(), TokenUsage::new(1, 1)))
    }

    fn embed(
        &self,
        _role: Role,
        _cfg: &RoleConfig,
        req: &EmbedRequest,
    ) -> diffaudit_core::Result<(Vec<f64>, TokenUsage)> {
        self.embeds.lock().unwrap().push(req.text.clone());
        Ok((vec![req.text.len() as f64, 1.0, 2.0], TokenUsage::new(1, 0)))
    }

    fn operations(&self) -> u64 {
        (self.chats.lock().unwrap().len() + self.embeds.lock().unwrap().len()) as u64
    }
}

/// Exhaustive pairwise AUC: wins plus half-ties over all m*n pairs.
pub fn pairwise_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut total = 0.0;
    for &p in pos {
        for &q in neg {
            if p > q {
                total += 1.0;
            } else if p == q {
                total += 0.5;
            }
        }
    }
    total / (pos.len() * neg.len()) as f64
}

/// Pairwise U statistic (not rank-based).
pub fn pairwise_u(pos: &[f64], neg: &[f64]) -> f64 {
    pairwise_auc(pos, neg) * (pos.len() * neg.len()) as f64
}

/// Visit every size-k subset of {0..n}; calls `visit` with the index set.
pub fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut indices: Vec<usize> = (0..k).collect();
    loop {
        visit(&indices);
        // lexicographic successor
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if indices[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        indices[i] += 1;
        for j in (i + 1)..k {
            indices[j] = indices[j - 1] + 1;
        }
    }
}

/// Exact one-sided permutation p-value: share of labelings whose U is at
/// least the observed one.
pub fn exact_permutation_p(pos: &[f64], neg: &[f64]) -> f64 {
    let pooled: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    let m = pos.len();
    let u_observed = pairwise_u(pos, neg);
    let mut at_least = 0u64;
    let mut total = 0u64;
    for_each_combination(pooled.len(), m, |chosen| {
        let mut as_pos = Vec::with_capacity(m);
        let mut as_neg = Vec::with_capacity(pooled.len() - m);
        let mut next = 0usize;
        for (i, &v) in pooled.iter().enumerate() {
            if next < chosen.len() && chosen[next] == i {
                as_pos.push(v);
                next += 1;
            } else {
                as_neg.push(v);
            }
        }
        total += 1;
        if pairwise_u(&as_pos, &as_neg) >= u_observed - 1e-9 {
            at_least += 1;
        }
    });
    at_least as f64 / total as f64
}

/// Naive BH: try every observed p-value as the rejection threshold and keep
/// the largest admissible one (a threshold t is admissible when
/// `t <= |{p <= t}| * q / M`).
pub fn naive_bh(pvalues: &[f64], q: f64) -> Vec<bool> {
    let m = pvalues.len();
    let mut best: Option<f64> = None;
    for &candidate in pvalues {
        let rejected = pvalues.iter().filter(|&&p| p <= candidate).count();
        if candidate <= rejected as f64 * q / m as f64 {
            best = Some(match best {
                None => candidate,
                Some(b) => b.max(candidate),
            });
        }
    }
    match best {
        Some(threshold) => pvalues.iter().map(|&p| p <= threshold).collect(),
        None => vec![false; m],
    }
}

/// Scores with occasional duplicates ("light ties").
pub fn random_scores(rng: &mut ChaCha8Rng, len: usize, shift: f64) -> Vec<f64> {
    let mut scores: Vec<f64> = (0..len)
        .map(|_| 50.0 + shift + 12.0 * rng.gen::<f64>())
        .collect();
    // every so often copy a value to create a tie
    if len >= 2 && rng.gen::<f64>() < 0.2 {
        let from = rng.gen_range(0..len);
        let to = rng.gen_range(0..len);
        scores[to] = scores[from];
    }
    scores
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
