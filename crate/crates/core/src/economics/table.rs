use std::fmt::Write as _;

use serde::Serialize;

use super::{break_even, EconomicsError, ServicePlan, Side, Threshold, ValueEstimate};

/// One (plan, value) pairing of the break-even table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadrantCell {
    pub plan: String,
    pub plan_side: Side,
    pub cost_usd_per_gb: f64,
    pub value: String,
    pub value_side: Side,
    pub value_usd_per_hr: f64,
    pub threshold: Threshold,
    /// Threshold rounded for display.
    pub display: String,
}

/// Break-even threshold for every (plan, value) pair. Plans are listed
/// server side first, each side in descending cost order (ties keep input
/// order); value columns are likewise server side first.
pub fn quadrant_table(plans: &[ServicePlan], values: &[ValueEstimate]) -> Result<Vec<QuadrantCell>, EconomicsError> {
    if plans.is_empty() || values.is_empty() {
        return Err(EconomicsError::EmptyTable);
    }
    let mut plans: Vec<&ServicePlan> = plans.iter().collect();
    plans.sort_by(|a, b| {
        a.side
            .cmp(&b.side)
            .then_with(|| b.cost.dollars_per_byte().total_cmp(&a.cost.dollars_per_byte()))
    });
    let mut values: Vec<&ValueEstimate> = values.iter().collect();
    values.sort_by_key(|v| v.side);

    let mut cells = Vec::with_capacity(plans.len() * values.len());
    for plan in &plans {
        for value in &values {
            let threshold = break_even(plan.cost, value.rate)?;
            cells.push(QuadrantCell {
                plan: plan.name.clone(),
                plan_side: plan.side,
                cost_usd_per_gb: plan.cost.usd_per_gb(),
                value: value.name.clone(),
                value_side: value.side,
                value_usd_per_hr: value.rate.usd_per_hr(),
                threshold,
                display: format_threshold(threshold),
            });
        }
    }
    Ok(cells)
}

/// Rounds half-up to 2 decimals at or above 0.10 ms/KB and to 3 decimals below.
pub fn display_round(ms_per_kb: f64) -> f64 {
    let scale = if ms_per_kb.abs() >= 0.10 { 100.0 } else { 1000.0 };
    (ms_per_kb * scale).round() / scale
}

pub fn format_threshold(t: Threshold) -> String {
    let x = t.ms_per_kb();
    if x >= 0.10 {
        format!("{:.2}", display_round(x))
    } else {
        format!("{:.3}", display_round(x))
    }
}

/// Plain-text rendering, one line per plan with a column per value estimate.
pub fn render_quadrant_table(cells: &[QuadrantCell]) -> String {
    let mut columns: Vec<(&str, Side, f64)> = Vec::new();
    for c in cells {
        if !columns.iter().any(|(name, _, _)| *name == c.value) {
            columns.push((&c.value, c.value_side, c.value_usd_per_hr));
        }
    }
    let plan_width = cells.iter().map(|c| c.plan.len()).max().unwrap_or(4).max(4);

    let mut out = String::new();
    let _ = write!(out, "{:<plan_width$}  {:>7}  {:>10}", "plan", "side", "$/GB");
    for (name, side, rate) in &columns {
        let _ = write!(out, "  {:>22}", format!("{name} ({side}, ${rate:.2}/hr)"));
    }
    out.push('\n');

    let mut current: Option<&str> = None;
    for c in cells {
        if current != Some(c.plan.as_str()) {
            if current.is_some() {
                out.push('\n');
            }
            current = Some(&c.plan);
            let _ = write!(
                out,
                "{:<plan_width$}  {:>7}  {:>10.3}",
                c.plan,
                c.plan_side.to_string(),
                c.cost_usd_per_gb
            );
        }
        let _ = write!(out, "  {:>22}", c.display);
    }
    if current.is_some() {
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economics::{Catalog, CostRate, ValueRate};

    #[test]
    fn rounding_rule() {
        assert_eq!(display_round(5.9524), 5.95);
        assert_eq!(display_round(152.19899), 152.20);
        assert_eq!(display_round(0.027981), 0.028);
        assert_eq!(display_round(0.016788), 0.017);
        assert_eq!(display_round(0.010493), 0.010);
        assert_eq!(
            format_threshold(Threshold::from_ms_per_kb(152.19899).unwrap()),
            "152.20"
        );
        assert_eq!(format_threshold(Threshold::from_ms_per_kb(0.010493).unwrap()), "0.010");
    }

    #[test]
    fn single_cell() {
        let plan = ServicePlan {
            name: "att-dsl".into(),
            side: Side::Client,
            cost: CostRate::from_usd_per_gb(0.20).unwrap(),
            source_note: String::new(),
        };
        let value = ValueEstimate {
            name: "wage".into(),
            side: Side::Client,
            rate: ValueRate::from_usd_per_hr(24.54).unwrap(),
            provenance: String::new(),
        };
        let cells = quadrant_table(&[plan], &[value]).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].display, "0.028");
    }

    #[test]
    fn empty_inputs_rejected() {
        let c = Catalog::builtin();
        assert_eq!(quadrant_table(&[], c.values()), Err(EconomicsError::EmptyTable));
        assert_eq!(quadrant_table(c.plans(), &[]), Err(EconomicsError::EmptyTable));
    }

    #[test]
    fn rows_sorted_by_side_then_descending_cost() {
        let c = Catalog::builtin();
        let mut shuffled = c.plans().to_vec();
        shuffled.reverse();
        let cells = quadrant_table(&shuffled, c.values()).unwrap();
        let order: Vec<&str> = cells.iter().step_by(2).map(|c| c.plan.as_str()).collect();
        assert_eq!(order[0], "aws-common");
        assert_eq!(order[8], "dreamhost");
        assert_eq!(order[9], "att-cell-low");
        assert_eq!(order[12], "att-dsl");
        // equal-cost rows keep the order they were given in
        assert_eq!(&order[3..5], &["nearlyfreespeech", "ec2-azure-brazil"]);
    }

    #[test]
    fn renders_one_line_per_plan() {
        let c = Catalog::builtin();
        let text = render_quadrant_table(&quadrant_table(c.plans(), c.values()).unwrap());
        assert_eq!(text.lines().count(), 14);
        assert!(text.contains("152.20"));
    }
}
