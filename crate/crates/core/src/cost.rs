//! Token accounting, pricing and the per-claim latency model.

use alloc::collections::BTreeMap;
use core::fmt;
use core::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::llm::Stage;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        TokenUsage { input_tokens, output_tokens }
    }

    pub fn is_zero(&self) -> bool {
        self.input_tokens == 0 && self.output_tokens == 0
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage::new(self.input_tokens + rhs.input_tokens, self.output_tokens + rhs.output_tokens)
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

/// Cumulative usage per stage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenLedger {
    stages: BTreeMap<Stage, TokenUsage>,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, stage: Stage, usage: TokenUsage) {
        *self.stages.entry(stage).or_default() += usage;
    }

    pub fn merge(&mut self, other: &TokenLedger) {
        for (stage, usage) in &other.stages {
            self.record(*stage, *usage);
        }
    }

    pub fn get(&self, stage: Stage) -> TokenUsage {
        self.stages.get(&stage).copied().unwrap_or_default()
    }

    pub fn total(&self) -> TokenUsage {
        self.stages.values().fold(TokenUsage::default(), |a, b| a + *b)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Stage, TokenUsage)> + '_ {
        self.stages.iter().map(|(s, u)| (*s, *u))
    }

    pub fn is_empty(&self) -> bool {
        self.stages.values().all(TokenUsage::is_zero)
    }
}

/// Price per million tokens, stored in micro-dollars so cost arithmetic stays
/// exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pricing {
    pub input_micros_per_million: u64,
    pub output_micros_per_million: u64,
}

impl Pricing {
    /// $0.50 per million input tokens, $1.50 per million output tokens.
    pub const DEFAULT: Pricing = Pricing { input_micros_per_million: 500_000, output_micros_per_million: 1_500_000 };

    /// From dollar amounts, rounded to the nearest micro-dollar. Negative or
    /// non-finite prices are rejected.
    pub fn from_dollars(input_per_million: f64, output_per_million: f64) -> Option<Self> {
        Some(Pricing {
            input_micros_per_million: dollars_to_micros(input_per_million)?,
            output_micros_per_million: dollars_to_micros(output_per_million)?,
        })
    }

    pub fn input_per_million(&self) -> f64 {
        self.input_micros_per_million as f64 / 1e6
    }

    pub fn output_per_million(&self) -> f64 {
        self.output_micros_per_million as f64 / 1e6
    }

    pub fn cost(&self, usage: TokenUsage) -> Cost {
        Cost::from_picodollars(
            u128::from(usage.input_tokens) * u128::from(self.input_micros_per_million)
                + u128::from(usage.output_tokens) * u128::from(self.output_micros_per_million),
        )
    }
}

impl Default for Pricing {
    fn default() -> Self {
        Pricing::DEFAULT
    }
}

fn dollars_to_micros(d: f64) -> Option<u64> {
    if !d.is_finite() || d < 0.0 {
        return None;
    }
    Some(libm::round(d * 1e6) as u64)
}

#[derive(Serialize, Deserialize)]
struct PricingRepr {
    input_per_million: f64,
    output_per_million: f64,
}

impl Serialize for Pricing {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PricingRepr { input_per_million: self.input_per_million(), output_per_million: self.output_per_million() }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pricing {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PricingRepr::deserialize(d)?;
        Pricing::from_dollars(r.input_per_million, r.output_per_million)
            .ok_or_else(|| serde::de::Error::custom("prices must be finite and non-negative"))
    }
}

/// A dollar amount held as whole picodollars (1e-12 USD).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cost(u128);

impl Cost {
    pub const ZERO: Cost = Cost(0);

    pub fn from_picodollars(p: u128) -> Self {
        Cost(p)
    }

    pub fn picodollars(self) -> u128 {
        self.0
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / 1e12
    }

    /// Rounded half-up to whole micro-dollars.
    pub fn micros_rounded(self) -> u128 {
        (self.0 + 500_000) / 1_000_000
    }

    /// Even split across `parts`, truncated to whole picodollars.
    pub fn per(self, parts: u64) -> Cost {
        if parts == 0 {
            Cost::ZERO
        } else {
            Cost(self.0 / u128::from(parts))
        }
    }
}

impl Add for Cost {
    type Output = Cost;
    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0 + rhs.0)
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        self.0 += rhs.0;
    }
}

/// `$X.YYYYYY`, six decimals, half-up.
impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.micros_rounded();
        write!(f, "${}.{:06}", m / 1_000_000, m % 1_000_000)
    }
}

impl Serialize for Cost {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.dollars())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CostBreakdown {
    pub per_stage: BTreeMap<Stage, Cost>,
    pub total: Cost,
}

pub fn estimate_cost(ledger: &TokenLedger, pricing: &Pricing) -> CostBreakdown {
    let mut out = CostBreakdown::default();
    for (stage, usage) in ledger.iter() {
        let c = pricing.cost(usage);
        out.per_stage.insert(stage, c);
        out.total += c;
    }
    out
}

/// Mean per-component latencies in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub decomposition: f64,
    pub relation: f64,
    pub retrieval: f64,
    pub competing: f64,
    pub prediction: f64,
    pub final_explanation: f64,
}

impl LatencyProfile {
    /// Estimated end-to-end latency of a claim with `n` sub-claims; retrieval
    /// and explanation generation repeat once per sub-claim.
    pub fn estimate(&self, n: usize) -> f64 {
        self.decomposition
            + self.relation
            + n as f64 * (self.retrieval + self.competing)
            + self.prediction
            + self.final_explanation
    }
}
