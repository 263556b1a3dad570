//! Token accounting and dollar-cost estimation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llmclient::{Role, RoleConfig, TokenUsage};

/// Per-(role, stage) usage accumulated by a client over a run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct UsageLedger {
    pub entries: BTreeMap<Role, BTreeMap<String, TokenUsage>>,
}

impl UsageLedger {
    pub fn record(&mut self, role: Role, stage: &str, usage: TokenUsage) {
        self.entries
            .entry(role)
            .or_default()
            .entry(stage.to_string())
            .or_default()
            .add(&usage);
    }

    pub fn total_for_role(&self, role: Role) -> TokenUsage {
        let mut total = TokenUsage::default();
        if let Some(stages) = self.entries.get(&role) {
            for usage in stages.values() {
                total.add(usage);
            }
        }
        total
    }

    pub fn merge(&mut self, other: &UsageLedger) {
        for (role, stages) in &other.entries {
            for (stage, usage) in stages {
                self.record(*role, stage, *usage);
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Cost attributed to one role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleCost {
    pub role: Role,
    pub usage: TokenUsage,
    pub dollars: f64,
}

/// Total cost with per-role breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub per_role: Vec<RoleCost>,
    pub total_dollars: f64,
}

/// `sum over roles of input/1e6 * price_in + output/1e6 * price_out`.
///
/// Every role appearing in `usage` must carry a price binding.
pub fn estimate_cost(
    usage: &BTreeMap<Role, TokenUsage>,
    prices: &BTreeMap<Role, RoleConfig>,
) -> Result<CostReport> {
    let mut per_role = Vec::new();
    let mut total = 0.0;
    for (role, u) in usage {
        let cfg = prices.get(role).ok_or_else(|| {
            Error::Config(format!("no price configured for role {role}"))
        })?;
        let dollars =
            u.input_tokens as f64 / 1e6 * cfg.price_in + u.output_tokens as f64 / 1e6 * cfg.price_out;
        total += dollars;
        per_role.push(RoleCost {
            role: *role,
            usage: *u,
            dollars,
        });
    }
    Ok(CostReport {
        per_role,
        total_dollars: total,
    })
}
