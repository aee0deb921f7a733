use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::SigmaInit;
use super::train::ResidualTarget;
use crate::error::{Error, Result};
use crate::series::{time_gap, MultivariateSeries, TimeGapMatrix};

/// Offset added to a repeated center, in units of the mean time gap, per wrap.
const JITTER: f64 = 1e-3;

/// Floor added to random widths.
const RANDOM_SIGMA_FLOOR: f64 = 1e-3;

/// An initial center and the row whose targets seed its weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterInit {
    pub time: f64,
    pub row: usize,
}

/// Picks `k` centers at the timestamps with the largest target magnitude
/// (maximum over observed variables), earliest first on ties. When `k`
/// exceeds the number of observed timestamps the ranking wraps and each
/// repeat is shifted by `1e-3 * mean gap` per wrap.
pub fn init_centers(
    target: &ResidualTarget,
    series: &MultivariateSeries,
    k: usize,
) -> Result<Vec<CenterInit>> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "number of centers must be positive".into(),
        ));
    }
    let mut scored: Vec<(usize, f64)> = (0..series.len())
        .filter_map(|n| {
            (0..series.n_vars())
                .filter(|&m| series.is_observed(n, m))
                .map(|m| target.values[[n, m]].abs())
                .fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.max(v)))
                })
                .map(|score| (n, score))
        })
        .collect();
    if scored.is_empty() {
        return Err(Error::NoObservedData);
    }
    // stable: equal scores keep time order
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));

    let count = scored.len();
    let jitter = if k > count {
        JITTER * time_gap(series).mean_positive_rows().unwrap_or(1.0)
    } else {
        0.0
    };
    let ts = series.timestamps();
    Ok((0..k)
        .map(|j| {
            let row = scored[j % count].0;
            let wrap = (j / count) as f64;
            CenterInit {
                time: ts[row] + wrap * jitter,
                row,
            }
        })
        .collect())
}

/// `K x M` weights: the target at each center's row, or 0 where that
/// variable is missing.
pub fn init_weights(
    target: &ResidualTarget,
    series: &MultivariateSeries,
    centers: &[CenterInit],
) -> Array2<f64> {
    let m = series.n_vars();
    Array2::from_shape_fn((centers.len(), m), |(k, j)| {
        let row = centers[k].row;
        if series.is_observed(row, j) {
            target.values[[row, j]]
        } else {
            0.0
        }
    })
}

/// Initial widths for `k` new bases.
pub fn init_sigmas<R: Rng + ?Sized>(
    delta: &TimeGapMatrix,
    mode: SigmaInit,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match mode {
        SigmaInit::TimeGapMean => {
            let mean = delta.mean_positive_rows().unwrap_or(0.0);
            if !(mean > 0.0) {
                return Err(Error::InvalidArgument(
                    "mean time gap is zero (need at least two timestamps)".into(),
                ));
            }
            Ok(vec![mean; k])
        }
        SigmaInit::RandomUnitNormalAbs => Ok((0..k)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z.abs() + RANDOM_SIGMA_FLOOR
            })
            .collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn target_of(series: &MultivariateSeries) -> ResidualTarget {
        ResidualTarget::from_series(series)
    }

    #[test]
    fn top_k_by_magnitude() {
        let s = MultivariateSeries::fully_observed(
            vec![0., 1., 2., 3.],
            array![[0.1], [5.0], [0.2], [3.0]],
            vec!["a".into()],
        )
        .unwrap();
        let c = init_centers(&target_of(&s), &s, 2).unwrap();
        assert_eq!(c.iter().map(|c| c.time).collect::<Vec<_>>(), vec![1.0, 3.0]);
    }

    #[test]
    fn ties_prefer_earlier() {
        let s = MultivariateSeries::fully_observed(
            vec![0., 1., 2., 3.],
            array![[2.0], [2.0], [2.0], [2.0]],
            vec!["a".into()],
        )
        .unwrap();
        let c = init_centers(&target_of(&s), &s, 2).unwrap();
        assert_eq!(c.iter().map(|c| c.time).collect::<Vec<_>>(), vec![0.0, 1.0]);
    }

    #[test]
    fn negative_residuals_rank_by_magnitude() {
        let s = MultivariateSeries::fully_observed(
            vec![0., 1., 2.],
            array![[1.0], [-4.0], [2.0]],
            vec!["a".into()],
        )
        .unwrap();
        let c = init_centers(&target_of(&s), &s, 1).unwrap();
        assert_eq!(c[0].time, 1.0);
    }

    #[test]
    fn wraps_with_jitter() {
        let s = MultivariateSeries::new(
            vec![0., 1., 2.],
            array![[1.0], [3.0], [0.0]],
            array![[1u8], [1], [0]],
            vec!["a".into()],
        )
        .unwrap();
        let c = init_centers(&target_of(&s), &s, 5).unwrap();
        // ranking [1, 0]; mean gap = (1 + 1) / 2 = 1
        let times: Vec<f64> = c.iter().map(|c| c.time).collect();
        assert_eq!(times, vec![1.0, 0.0, 1.001, 0.001, 1.002]);
        assert_eq!(c[2].row, 1);
        assert!(init_centers(&target_of(&s), &s, 0).is_err());
    }

    #[test]
    fn weights_copy_targets_or_zero() {
        let s = MultivariateSeries::new(
            vec![0., 1.],
            array![[0.0, 7.0], [5.0, 1.0]],
            array![[1u8, 1], [1, 0]],
            MultivariateSeries::default_names(2),
        )
        .unwrap();
        let t = target_of(&s);
        let w = init_weights(
            &t,
            &s,
            &[
                CenterInit { time: 1.0, row: 1 },
                CenterInit { time: 0.0, row: 0 },
            ],
        );
        assert_eq!(w, array![[5.0, 0.0], [0.0, 7.0]]);
    }

    #[test]
    fn sigma_modes() {
        let delta = TimeGapMatrix {
            deltas: array![[0., 0.], [1., 1.], [2., 1.], [3., 1.]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            init_sigmas(&delta, SigmaInit::TimeGapMean, 3, &mut rng).unwrap(),
            vec![1.5; 3]
        );

        let two = TimeGapMatrix {
            deltas: array![[0.], [4.]],
        };
        assert_eq!(
            init_sigmas(&two, SigmaInit::TimeGapMean, 1, &mut rng).unwrap(),
            vec![4.0]
        );

        let one = TimeGapMatrix {
            deltas: array![[0.]],
        };
        assert!(init_sigmas(&one, SigmaInit::TimeGapMean, 1, &mut rng).is_err());

        let a = init_sigmas(
            &delta,
            SigmaInit::RandomUnitNormalAbs,
            16,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        let b = init_sigmas(
            &delta,
            SigmaInit::RandomUnitNormalAbs,
            16,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&s| s >= 1e-3));
    }
}
