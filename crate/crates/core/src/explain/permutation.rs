use rand::seq::SliceRandom;

use super::{ImportanceRanking, Predict};
use crate::evaluate::mse_of;
use crate::features::FeatureMatrix;
use crate::rng::{derive_index, seeded};
use crate::{par, Error, Result};

/// Mean increase in test MSE when each column is shuffled.
///
/// Repeat `r` of column `j` shuffles with the seed
/// `derive_index(derive_index(seed, j), r)`, so scores do not depend on the
/// order in which columns are processed.
pub fn permutation_importance<P: Predict + ?Sized>(
    model: &P,
    test: &FeatureMatrix,
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceRanking> {
    if n_repeats == 0 {
        return Err(Error::Config("n_repeats must be >= 1".into()));
    }
    let d = test.n_features();
    if model.input_dim() != d {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: d,
        });
    }
    if test.is_empty() {
        return Err(Error::Validation("cannot rank features on an empty matrix".into()));
    }
    let baseline = mse_of(&model.predict_flat(&test.x)?, &test.targets)?;
    let scores = par::map_range(d, |j| -> Result<f64> {
        let column = test.column(j);
        let mut x = test.x.clone();
        let mut total = 0.0;
        for r in 0..n_repeats {
            let mut shuffled = column.clone();
            shuffled.shuffle(&mut seeded(derive_index(derive_index(seed, j as u64), r as u64)));
            for (i, v) in shuffled.into_iter().enumerate() {
                x[i * d + j] = v;
            }
            total += mse_of(&model.predict_flat(&x)?, &test.targets)? - baseline;
        }
        Ok(total / n_repeats as f64)
    });
    let scores = scores.into_iter().collect::<Result<Vec<f64>>>()?;
    ImportanceRanking::from_scores(&test.feature_names, &scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::RowFn;
    use crate::features::RowKey;

    fn fixture() -> FeatureMatrix {
        let mut m = FeatureMatrix::empty(vec!["a".into(), "b".into(), "c".into()], 1);
        for i in 0..40 {
            let a = (i as f64 * 0.37).sin();
            let b = (i as f64 * 1.3).cos();
            m.keys.push(RowKey {
                asset_id: format!("A{i:02}"),
                target_year: 0,
            });
            m.x.extend([a, b, i as f64]);
            m.targets.push(3.0 * a + 0.5 * b);
        }
        m
    }

    #[test]
    fn unused_feature_scores_exactly_zero() {
        let f = RowFn::new(3, |r: &[f64]| 3.0 * r[0] + 0.5 * r[1]);
        let r = permutation_importance(&f, &fixture(), 3, 1).unwrap();
        let order: Vec<&str> = r.entries.iter().map(|e| e.feature.as_str()).collect();
        assert_eq!(order, ["a", "b", "c"]);
        assert_eq!(r.entries[2].raw, 0.0);
        assert!(r.entries[1].importance > 0.0);
    }

    #[test]
    fn same_seed_same_ranking() {
        let f = RowFn::new(3, |r: &[f64]| r[0] * r[1]);
        let m = fixture();
        assert_eq!(
            permutation_importance(&f, &m, 2, 9).unwrap(),
            permutation_importance(&f, &m, 2, 9).unwrap()
        );
        assert!(permutation_importance(&f, &m, 0, 9).is_err());
    }
}
