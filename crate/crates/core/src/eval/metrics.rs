use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("metrics need at least one prediction"));
    }
    Ok(())
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(target) {
        sum += (p - t).abs();
    }
    Ok(sum / pred.len() as f64)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check(pred, target)?;
    let sq: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

/// One point of the per-range error curve. `mae` is `None` when no target
/// reaches `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaMae {
    pub alpha: f64,
    pub mae: Option<f64>,
    pub population: usize,
}

/// Mean absolute error over the targets with `|y| >= alpha`.
pub fn mae_at_alpha(pred: &[f64], target: &[f64], alpha: f64) -> Result<AlphaMae> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidInput(format!("alpha must be non-negative, got {alpha}")));
    }
    let mut sum = 0.0;
    let mut population = 0;
    for (p, t) in pred.iter().zip(target) {
        if t.abs() >= alpha {
            sum += (p - t).abs();
            population += 1;
        }
    }
    Ok(AlphaMae {
        alpha,
        mae: (population > 0).then(|| sum / population as f64),
        population,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_examples() {
        assert_eq!(mae(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 2f64.sqrt());
        assert!(mae(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[]).is_err());
    }

    #[test]
    fn alpha_examples_pin_the_inclusive_boundary() {
        let p = [0.0, 0.0, 0.0];
        let t = [0.1, -0.2, 0.3];
        let at = |a| mae_at_alpha(&p, &t, a).unwrap();
        assert!((at(0.0).mae.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(at(0.0).population, 3);
        assert_eq!(at(0.25).population, 1);
        assert!((at(0.25).mae.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(at(0.2).population, 2);
        assert!((at(0.2).mae.unwrap() - 0.25).abs() < 1e-15);
        let empty = at(0.5);
        assert_eq!((empty.mae, empty.population), (None, 0));
        assert!(mae_at_alpha(&p, &t, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn rmse_bounds_mae_and_alpha_zero_is_mae(
            pairs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..60),
        ) {
            let p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
            let t: Vec<f64> = pairs.iter().map(|x| x.1).collect();
            let m = mae(&p, &t).unwrap();
            prop_assert!(rmse(&p, &t).unwrap() >= m - 1e-15);
            prop_assert_eq!(mae_at_alpha(&p, &t, 0.0).unwrap().mae, Some(m));
        }

        #[test]
        fn population_shrinks_with_alpha(
            t in prop::collection::vec(-1.0f64..1.0, 1..60), a in 0.0f64..1.0, da in 0.0f64..1.0,
        ) {
            let p = vec![0.0; t.len()];
            prop_assert!(
                mae_at_alpha(&p, &t, a + da).unwrap().population <= mae_at_alpha(&p, &t, a).unwrap().population
            );
        }
    }
}
