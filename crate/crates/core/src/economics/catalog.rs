use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CostRate, EconomicsError, IncentiveInputs, ServicePlan, Side, ValueEstimate, ValueRate};

const DEFAULT_CATALOG: &str = include_str!("../../data/plans.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateUnit {
    #[serde(rename = "USD_per_GB")]
    UsdPerGb,
    #[serde(rename = "USD_per_KB")]
    UsdPerKb,
    #[serde(rename = "USD_per_hr")]
    UsdPerHr,
    #[serde(rename = "USD_per_ms")]
    UsdPerMs,
}

/// One row of the plan/value data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub side: Side,
    pub amount: f64,
    pub unit: RateUnit,
    #[serde(default)]
    pub note: String,
}

/// Service plans (traffic prices) and value-of-time estimates, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    plans: Vec<ServicePlan>,
    values: Vec<ValueEstimate>,
}

impl Catalog {
    /// The shipped data: August 2014 prices and the two value-of-time estimates.
    pub fn builtin() -> Self {
        Catalog::from_json(DEFAULT_CATALOG).expect("shipped catalog is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, EconomicsError> {
        let entries: Vec<CatalogEntry> =
            serde_json::from_str(text).map_err(|e| EconomicsError::InvalidCatalog(e.to_string()))?;
        Catalog::from_entries(entries)
    }

    /// Loads a catalog file; the literal path `default` selects the built-in data.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EconomicsError> {
        let path = path.as_ref();
        if path == Path::new("default") {
            return Ok(Catalog::builtin());
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| EconomicsError::InvalidCatalog(format!("{}: {e}", path.display())))?;
        Catalog::from_json(&text)
    }

    pub fn from_entries(entries: Vec<CatalogEntry>) -> Result<Self, EconomicsError> {
        let mut seen = HashSet::new();
        let mut plans = Vec::new();
        let mut values = Vec::new();
        for entry in entries {
            if entry.name.trim().is_empty() {
                return Err(EconomicsError::InvalidCatalog("entry with empty name".into()));
            }
            if !seen.insert(entry.name.clone()) {
                return Err(EconomicsError::InvalidCatalog(format!(
                    "duplicate name {:?}",
                    entry.name
                )));
            }
            let bad_amount = |e: EconomicsError| EconomicsError::InvalidCatalog(format!("{}: {e}", entry.name));
            match entry.unit {
                RateUnit::UsdPerGb | RateUnit::UsdPerKb => {
                    let cost = if entry.unit == RateUnit::UsdPerGb {
                        CostRate::from_usd_per_gb(entry.amount)
                    } else {
                        CostRate::from_usd_per_kb(entry.amount)
                    }
                    .map_err(bad_amount)?;
                    plans.push(ServicePlan {
                        name: entry.name,
                        side: entry.side,
                        cost,
                        source_note: entry.note,
                    });
                }
                RateUnit::UsdPerHr | RateUnit::UsdPerMs => {
                    let rate = if entry.unit == RateUnit::UsdPerHr {
                        ValueRate::from_usd_per_hr(entry.amount)
                    } else {
                        ValueRate::from_dollars_per_ms(entry.amount)
                    }
                    .map_err(bad_amount)?;
                    values.push(ValueEstimate {
                        name: entry.name,
                        side: entry.side,
                        rate,
                        provenance: entry.note,
                    });
                }
            }
        }
        Ok(Catalog { plans, values })
    }

    pub fn plans(&self) -> &[ServicePlan] {
        &self.plans
    }

    pub fn values(&self) -> &[ValueEstimate] {
        &self.values
    }

    pub fn plan(&self, name: &str) -> Result<&ServicePlan, EconomicsError> {
        self.plans
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| EconomicsError::UnknownEntry {
                kind: "plan",
                name: name.to_string(),
            })
    }

    pub fn value(&self, name: &str) -> Result<&ValueEstimate, EconomicsError> {
        self.values
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| EconomicsError::UnknownEntry {
                kind: "value estimate",
                name: name.to_string(),
            })
    }

    /// First value estimate listed for `side`.
    pub fn default_value(&self, side: Side) -> Option<&ValueEstimate> {
        self.values.iter().find(|v| v.side == side)
    }

    /// Assembles incentive inputs from named entries. Value estimates default
    /// to the first one listed for each side.
    pub fn inputs(
        &self,
        server_plan: Option<&str>,
        client_plan: Option<&str>,
        server_value: Option<&str>,
        client_value: Option<&str>,
    ) -> Result<IncentiveInputs, EconomicsError> {
        let value_for = |name: Option<&str>, side| -> Result<Option<ValueRate>, EconomicsError> {
            match name {
                Some(n) => Ok(Some(self.value(n)?.rate)),
                None => Ok(self.default_value(side).map(|v| v.rate)),
            }
        };
        Ok(IncentiveInputs {
            server_cost: server_plan.map(|n| self.plan(n).map(|p| p.cost)).transpose()?,
            server_value: value_for(server_value, Side::Server)?,
            client_cost: client_plan.map(|n| self.plan(n).map(|p| p.cost)).transpose()?,
            client_value: value_for(client_value, Side::Client)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_thirteen_plans_and_two_values() {
        let c = Catalog::builtin();
        assert_eq!(c.plans().len(), 13);
        assert_eq!(c.plans().iter().filter(|p| p.side == Side::Server).count(), 9);
        assert_eq!(c.values().len(), 2);
        assert!((c.plan("att-cell-low").unwrap().cost.usd_per_gb() - 68.27).abs() < 1e-9);
        assert!((c.default_value(Side::Client).unwrap().rate.usd_per_hr() - 24.54).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_entries() {
        let dup = r#"[{"name":"a","side":"server","amount":1,"unit":"USD_per_GB"},
                      {"name":"a","side":"client","amount":1,"unit":"USD_per_GB"}]"#;
        assert!(matches!(
            Catalog::from_json(dup),
            Err(EconomicsError::InvalidCatalog(_))
        ));
        let neg = r#"[{"name":"a","side":"server","amount":-1,"unit":"USD_per_hr"}]"#;
        assert!(Catalog::from_json(neg).is_err());
        let unit = r#"[{"name":"a","side":"server","amount":1,"unit":"EUR_per_GB"}]"#;
        assert!(Catalog::from_json(unit).is_err());
        let empty = r#"[{"name":" ","side":"server","amount":1,"unit":"USD_per_GB"}]"#;
        assert!(Catalog::from_json(empty).is_err());
    }

    #[test]
    fn kb_units_convert() {
        let c = Catalog::from_json(r#"[{"name":"x","side":"client","amount":0.001,"unit":"USD_per_KB"}]"#).unwrap();
        assert!((c.plans()[0].cost.usd_per_gb() - 0.001 * 1048576.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_names_are_reported() {
        let c = Catalog::builtin();
        let err = c.inputs(Some("nope"), None, None, None).unwrap_err();
        assert!(err.to_string().contains("nope"));
        let inputs = c.inputs(Some("aws-common"), Some("att-dsl"), None, None).unwrap();
        assert!(inputs.server_value.is_some() && inputs.client_value.is_some());
    }
}
