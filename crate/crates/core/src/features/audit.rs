use serde::{Deserialize, Serialize};

use super::{compute_features, FeatureMatrix, FeatureRecipe, PanelView};
use crate::dataset::{year_start, FundamentalsPanel, MacroPanel, PricePanel};
use crate::par;

/// Result of the look-ahead audit, serialized as `audit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: usize,
    pub dropped_missing: usize,
    pub leakage_violations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.leakage_violations == 0
    }
}

/// Re-derives every feature of every row from panels truncated at the start
/// of the row's target year. A row whose stored features cannot be
/// reproduced bit for bit from that truncated view used information from
/// the target year or later and counts as a violation.
pub fn audit_leakage(
    matrix: &FeatureMatrix,
    prices: &PricePanel,
    fundamentals: &FundamentalsPanel,
    macro_panel: &MacroPanel,
) -> AuditReport {
    let recipe = FeatureRecipe::new(fundamentals, macro_panel, matrix.window_years);
    let mut violations = Vec::new();
    if recipe.names() != matrix.feature_names.as_slice() {
        violations.push("feature names do not match the recipe for these panels".to_string());
    }
    if violations.is_empty() {
        let per_row = par::map_range(matrix.n_rows(), |i| {
            let key = &matrix.keys[i];
            let view = PanelView {
                prices,
                fundamentals,
                macro_panel,
                cutoff: Some(year_start(key.target_year)),
            };
            let stored = matrix.row(i);
            match compute_features(&view, &recipe, &key.asset_id, key.target_year) {
                None => Some(format!(
                    "({}, {}): features need data from year {} or later",
                    key.asset_id, key.target_year, key.target_year
                )),
                Some(f) => f
                    .iter()
                    .zip(stored)
                    .position(|(a, b)| a.to_bits() != b.to_bits())
                    .map(|j| {
                        format!(
                            "({}, {}): `{}` = {} not reproducible from pre-{} data (expected {})",
                            key.asset_id, key.target_year, matrix.feature_names[j], stored[j], key.target_year, f[j]
                        )
                    }),
            }
        });
        violations.extend(per_row.into_iter().flatten());
    }
    AuditReport {
        rows: matrix.n_rows(),
        dropped_missing: matrix.dropped_missing,
        leakage_violations: violations.len(),
        violations,
    }
}
