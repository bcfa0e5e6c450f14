use serde::{Deserialize, Serialize};

use super::ValueGrid;
use crate::cost::CostSpec;

/// Check of `0 ≤ u(t, x) ≤ |φ|_0 + t |Φ|_0` over every node and slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// False for unbounded costs, where the bound says nothing.
    pub applicable: bool,
    pub passed: bool,
    /// Smallest `u` over all nodes (slack of the lower bound).
    pub min_value: f64,
    /// Smallest `|φ|_0 + t_n |Φ|_0 - u` over all nodes.
    pub min_upper_slack: f64,
    /// Smallest upper slack over slices after the first.
    pub min_upper_slack_after_start: f64,
    pub violations: usize,
    /// `(slice, node multi-index, value, upper bound)` of the first violation.
    pub first_violation: Option<(usize, Vec<usize>, f64, f64)>,
}

pub fn assert_value_bounds(v: &ValueGrid, cost: &CostSpec) -> BoundReport {
    let (Some(sup_phi), Some(sup_big_phi)) = (cost.sup_phi(), cost.sup_Phi()) else {
        return BoundReport {
            applicable: false,
            passed: true,
            min_value: f64::NAN,
            min_upper_slack: f64::NAN,
            min_upper_slack_after_start: f64::NAN,
            violations: 0,
            first_violation: None,
        };
    };
    let mut min_value = f64::INFINITY;
    let mut min_slack = f64::INFINITY;
    let mut min_slack_late = f64::INFINITY;
    let mut violations = 0;
    let mut first = None;
    for (n, (t, slice)) in v.times.iter().zip(&v.values).enumerate() {
        let upper = sup_phi + t * sup_big_phi;
        for (flat, &u) in slice.iter().enumerate() {
            min_value = min_value.min(u);
            let slack = upper - u;
            min_slack = min_slack.min(slack);
            if n > 0 {
                min_slack_late = min_slack_late.min(slack);
            }
            if !(u >= 0.0 && u <= upper) {
                violations += 1;
                if first.is_none() {
                    first = Some((n, v.lattice.multi_index(flat), u, upper));
                }
            }
        }
    }
    BoundReport {
        applicable: true,
        passed: violations == 0,
        min_value,
        min_upper_slack: min_slack,
        min_upper_slack_after_start: min_slack_late,
        violations,
        first_violation: first,
    }
}
