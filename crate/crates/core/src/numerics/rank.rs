use crate::error::{EsclError, Result};

/// 1-based ranks; tied values share the mean of the positions they occupy.
pub fn average_ranks(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(EsclError::Numeric("cannot rank NaN".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

/// Product-moment correlation of two equally long samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(EsclError::Dimension(format!(
            "correlation of samples of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(EsclError::Degenerate(format!(
            "correlation needs at least 2 samples, got {n}"
        )));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EsclError::Degenerate(
            "constant sample has zero variance".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman_rho(mu: &[f64], nu: &[f64]) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(EsclError::Dimension(format!(
            "rank correlation of lists of length {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    pearson(&average_ranks(mu)?, &average_ranks(nu)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // rank by counting, independent of the sort-based path
    fn oracle_ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let less = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }

    #[test]
    fn anchors() {
        assert_eq!(
            spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(),
            1.0
        );
        assert_eq!(
            spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0
        );
        let r = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((r - 0.6).abs() < 1e-15);
    }

    #[test]
    fn ties_get_average_rank() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0, 3.0]).unwrap(),
            vec![4.0, 1.0, 4.0, 2.0, 4.0]
        );
    }

    #[test]
    fn degenerate_and_mismatched_inputs() {
        assert!(matches!(
            spearman_rho(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(EsclError::Degenerate(_))
        ));
        assert!(matches!(
            spearman_rho(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(EsclError::Dimension(_))
        ));
        assert!(spearman_rho(&[1.0], &[1.0]).is_err());
    }

    fn tied_list(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0u8..5).prop_map(f64::from), n)
    }

    proptest! {
        #[test]
        fn ranks_match_counting_oracle(v in prop::collection::vec((0u8..6).prop_map(f64::from), 1..10)) {
            prop_assert_eq!(average_ranks(&v).unwrap(), oracle_ranks(&v));
        }

        #[test]
        fn invariant_under_monotone_maps(
            (mu, nu) in (2usize..12).prop_flat_map(|n| (tied_list(n), tied_list(n))),
            shift in -5.0f64..5.0,
            scale in 0.1f64..10.0,
        ) {
            let Ok(r) = spearman_rho(&mu, &nu) else { return Ok(()) };
            let warped: Vec<f64> = mu.iter().map(|x| (scale * x + shift).exp()).collect();
            prop_assert_eq!(spearman_rho(&warped, &nu).unwrap(), r);
            let cubed: Vec<f64> = nu.iter().map(|x| x * x * x - 7.0).collect();
            prop_assert_eq!(spearman_rho(&mu, &cubed).unwrap(), r);
        }
    }
}
