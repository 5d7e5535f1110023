//! Cost/benefit quantities for latency-for-bandwidth tradeoffs.
//!
//! Four rates drive every decision: the price of extra traffic at the server
//! and at the client (`CostRate`), and the value of a millisecond saved to
//! each of them (`ValueRate`). A technique that saves `ℓ` milliseconds per
//! kilobyte of traffic it adds pays off for a party when `ℓ ≥ cost / value`.
//!
//! Rates are held in canonical units ($/byte and $/ms). Conversions to the
//! display units ($/GB, $/KB, $/hr) use binary prefixes throughout:
//! 1 KB = 2^10 bytes, 1 GB = 2^30 bytes, and 1 hour = 3.6×10^6 ms.

mod catalog;
mod table;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{Catalog, CatalogEntry, RateUnit};
pub use table::{display_round, format_threshold, quadrant_table, render_quadrant_table, QuadrantCell};

pub const BYTES_PER_KB: f64 = 1024.0;
pub const BYTES_PER_GB: f64 = 1024.0 * 1024.0 * 1024.0;
pub const MS_PER_HOUR: f64 = 3.6e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconomicsError {
    #[error("rate must be finite and nonnegative, got {0}")]
    InvalidRate(f64),
    #[error("threshold must be finite and nonnegative, got {0} ms/KB")]
    InvalidThreshold(f64),
    #[error("break-even is undefined when the value of time is zero")]
    UndefinedBreakEven,
    #[error("{model} requires a positive {quantity}")]
    MissingRate {
        model: IncentiveModel,
        quantity: &'static str,
    },
    #[error("delay must be positive, got {0} ms")]
    InvalidDelay(f64),
    #[error("relative drop must lie in [0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("revenue per query must be finite and nonnegative, got {0}")]
    InvalidRevenue(f64),
    #[error("quadrant table needs at least one plan and one value estimate")]
    EmptyTable,
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
    #[error("no {kind} named {name:?} in catalog")]
    UnknownEntry { kind: &'static str, name: String },
}

/// Which party a plan or value estimate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Server,
    Client,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Server => f.write_str("server"),
            Side::Client => f.write_str("client"),
        }
    }
}

fn check_rate(x: f64) -> Result<f64, EconomicsError> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(EconomicsError::InvalidRate(x))
    }
}

/// Price of extra traffic, stored in dollars per byte.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CostRate(f64);

impl CostRate {
    pub fn from_dollars_per_byte(x: f64) -> Result<Self, EconomicsError> {
        check_rate(x).map(CostRate)
    }

    pub fn from_usd_per_kb(x: f64) -> Result<Self, EconomicsError> {
        check_rate(x).map(|x| CostRate(x / BYTES_PER_KB))
    }

    pub fn from_usd_per_gb(x: f64) -> Result<Self, EconomicsError> {
        check_rate(x).map(|x| CostRate(x / BYTES_PER_GB))
    }

    pub fn dollars_per_byte(self) -> f64 {
        self.0
    }

    pub fn usd_per_kb(self) -> f64 {
        self.0 * BYTES_PER_KB
    }

    pub fn usd_per_gb(self) -> f64 {
        self.0 * BYTES_PER_GB
    }
}

impl TryFrom<f64> for CostRate {
    type Error = EconomicsError;
    fn try_from(x: f64) -> Result<Self, Self::Error> {
        CostRate::from_dollars_per_byte(x)
    }
}

impl From<CostRate> for f64 {
    fn from(c: CostRate) -> f64 {
        c.0
    }
}

/// Value of latency reduction, stored in dollars per millisecond.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ValueRate(f64);

impl ValueRate {
    pub fn from_dollars_per_ms(x: f64) -> Result<Self, EconomicsError> {
        check_rate(x).map(ValueRate)
    }

    pub fn from_usd_per_hr(x: f64) -> Result<Self, EconomicsError> {
        check_rate(x).map(|x| ValueRate(x / MS_PER_HOUR))
    }

    pub fn dollars_per_ms(self) -> f64 {
        self.0
    }

    pub fn usd_per_hr(self) -> f64 {
        self.0 * MS_PER_HOUR
    }

    fn is_positive(self) -> bool {
        self.0 > 0.0
    }
}

impl TryFrom<f64> for ValueRate {
    type Error = EconomicsError;
    fn try_from(x: f64) -> Result<Self, Self::Error> {
        ValueRate::from_dollars_per_ms(x)
    }
}

impl From<ValueRate> for f64 {
    fn from(v: ValueRate) -> f64 {
        v.0
    }
}

/// Latency savings per unit of added traffic, in milliseconds per KB.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub const ZERO: Threshold = Threshold(0.0);

    pub fn from_ms_per_kb(x: f64) -> Result<Self, EconomicsError> {
        if x.is_finite() && x >= 0.0 {
            Ok(Threshold(x))
        } else {
            Err(EconomicsError::InvalidThreshold(x))
        }
    }

    pub fn ms_per_kb(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Threshold {
    type Error = EconomicsError;
    fn try_from(x: f64) -> Result<Self, Self::Error> {
        Threshold::from_ms_per_kb(x)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ms/KB", format_threshold(*self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServicePlan {
    pub name: String,
    pub side: Side,
    pub cost: CostRate,
    pub source_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub name: String,
    pub side: Side,
    pub rate: ValueRate,
    pub provenance: String,
}

/// Whose costs and benefits must independently balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IncentiveModel {
    SelfishClient,
    SelfishServer,
    BothSelfish,
    /// The server also counts the client's time among its benefits.
    ServerValuesClient,
}

impl IncentiveModel {
    pub const ALL: [IncentiveModel; 4] = [
        IncentiveModel::SelfishClient,
        IncentiveModel::SelfishServer,
        IncentiveModel::BothSelfish,
        IncentiveModel::ServerValuesClient,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IncentiveModel::SelfishClient => "selfish-client",
            IncentiveModel::SelfishServer => "selfish-server",
            IncentiveModel::BothSelfish => "both-selfish",
            IncentiveModel::ServerValuesClient => "server-values-client",
        }
    }
}

impl fmt::Display for IncentiveModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for IncentiveModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IncentiveModel::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown incentive model {s:?} (expected one of: {})",
                    IncentiveModel::ALL.map(|m| m.as_str()).join(", ")
                )
            })
    }
}

/// The four rates an incentive model may draw on. A model only requires the
/// rates it references; the rest may be left out.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IncentiveInputs {
    pub server_cost: Option<CostRate>,
    pub server_value: Option<ValueRate>,
    pub client_cost: Option<CostRate>,
    pub client_value: Option<ValueRate>,
}

impl IncentiveInputs {
    pub fn new(server_cost: CostRate, server_value: ValueRate, client_cost: CostRate, client_value: ValueRate) -> Self {
        IncentiveInputs {
            server_cost: Some(server_cost),
            server_value: Some(server_value),
            client_cost: Some(client_cost),
            client_value: Some(client_value),
        }
    }
}

/// Break-even savings `cost / value` in ms per KB.
pub fn break_even(cost: CostRate, value: ValueRate) -> Result<Threshold, EconomicsError> {
    if !value.is_positive() {
        return Err(EconomicsError::UndefinedBreakEven);
    }
    let dollars_per_kb = cost.dollars_per_byte() * BYTES_PER_KB;
    Threshold::from_ms_per_kb(dollars_per_kb / value.dollars_per_ms())
}

/// Savings threshold that satisfies every party the model says must benefit.
pub fn combined_threshold(model: IncentiveModel, inputs: &IncentiveInputs) -> Result<Threshold, EconomicsError> {
    let cost = |rate: Option<CostRate>, quantity| rate.ok_or(EconomicsError::MissingRate { model, quantity });
    let value = |rate: Option<ValueRate>, quantity| match rate {
        Some(v) if v.is_positive() => Ok(v),
        _ => Err(EconomicsError::MissingRate { model, quantity }),
    };

    match model {
        IncentiveModel::SelfishClient => break_even(
            cost(inputs.client_cost, "client cost p_c")?,
            value(inputs.client_value, "client value v_c")?,
        ),
        IncentiveModel::SelfishServer => break_even(
            cost(inputs.server_cost, "server cost p_s")?,
            value(inputs.server_value, "server value v_s")?,
        ),
        IncentiveModel::BothSelfish => {
            let server = break_even(
                cost(inputs.server_cost, "server cost p_s")?,
                value(inputs.server_value, "server value v_s")?,
            )?;
            let client = break_even(
                cost(inputs.client_cost, "client cost p_c")?,
                value(inputs.client_value, "client value v_c")?,
            )?;
            Ok(max_threshold(server, client))
        }
        IncentiveModel::ServerValuesClient => {
            let p_s = cost(inputs.server_cost, "server cost p_s")?;
            let v_s = value(inputs.server_value, "server value v_s")?;
            let p_c = cost(inputs.client_cost, "client cost p_c")?;
            let v_c = value(inputs.client_value, "client value v_c")?;
            let joint = ValueRate::from_dollars_per_ms(v_s.dollars_per_ms() + v_c.dollars_per_ms())?;
            Ok(max_threshold(break_even(p_s, joint)?, break_even(p_c, v_c)?))
        }
    }
}

fn max_threshold(a: Threshold, b: Threshold) -> Threshold {
    if b.ms_per_kb() > a.ms_per_kb() {
        b
    } else {
        a
    }
}

/// Value of time implied by a revenue study: an added `delay_ms` cost each
/// query `relative_drop` of its `revenue_per_query`.
pub fn value_from_revenue_study(
    revenue_per_query: f64,
    relative_drop: f64,
    delay_ms: f64,
) -> Result<ValueRate, EconomicsError> {
    if !(delay_ms.is_finite() && delay_ms > 0.0) {
        return Err(EconomicsError::InvalidDelay(delay_ms));
    }
    if !(0.0..=1.0).contains(&relative_drop) {
        return Err(EconomicsError::InvalidFraction(relative_drop));
    }
    if !(revenue_per_query.is_finite() && revenue_per_query >= 0.0) {
        return Err(EconomicsError::InvalidRevenue(revenue_per_query));
    }
    ValueRate::from_dollars_per_ms(revenue_per_query * relative_drop / delay_ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decision {
    pub model: IncentiveModel,
    pub measured: Threshold,
    pub threshold: Threshold,
    pub cost_effective: bool,
    /// `measured − threshold`, ms per KB.
    pub margin: f64,
}

/// Whether a measured saving clears the model's threshold. Break-even counts
/// as cost-effective.
pub fn verdict(
    measured: Threshold,
    model: IncentiveModel,
    inputs: &IncentiveInputs,
) -> Result<Decision, EconomicsError> {
    let threshold = combined_threshold(model, inputs)?;
    Ok(Decision {
        model,
        measured,
        threshold,
        cost_effective: measured.ms_per_kb() >= threshold.ms_per_kb(),
        margin: measured.ms_per_kb() - threshold.ms_per_kb(),
    })
}
