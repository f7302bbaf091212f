//! Token cost accounting and per-session metrics.

use serde::{Deserialize, Serialize};

use crate::dialogue::TokenUsage;

/// USD per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

impl Default for Rates {
    /// $0.25/M input, $2/M output.
    fn default() -> Self {
        Rates {
            input_per_million: 0.25,
            output_per_million: 2.0,
        }
    }
}

pub fn compute_cost(usage: TokenUsage, rates: Rates) -> f64 {
    usage.input_tokens as f64 / 1e6 * rates.input_per_million
        + usage.output_tokens as f64 / 1e6 * rates.output_per_million
}

/// Reference figures the harness prints next to its own measurements
/// (medians over 10 runs of a hosted-model deployment).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub prompts: u32,
    pub input_tokens_k: f64,
    pub output_tokens_k: f64,
    pub cost_usd: f64,
    pub success_rate: f64,
}

pub const REFERENCE_MEDIANS: ReferenceFigures = ReferenceFigures {
    prompts: 3,
    input_tokens_k: 3.2,
    output_tokens_k: 0.26,
    cost_usd: 0.001,
    success_rate: 1.0,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub session_id: String,
    /// Clarifying questions asked by the agent.
    pub turns: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
    pub success: Option<bool>,
    pub duration_ms: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_definition() {
        let r = Rates::default();
        assert_eq!(compute_cost(TokenUsage::new(0, 0), r), 0.0);
        assert!((compute_cost(TokenUsage::new(1_000_000, 1_000_000), r) - 2.25).abs() < 1e-12);
    }

    #[test]
    fn reference_row_cost() {
        let c = compute_cost(TokenUsage::new(3200, 260), Rates::default());
        assert!((c - 0.00132).abs() < 1e-12);
        assert_eq!(format!("{c:.4}"), "0.0013");
        assert_eq!(format!("{c:.3}"), "0.001");
    }
}
