//! Active trajectory selection and sampling.

use crate::rng::SplitMix64;
use crate::types::{PointTrajectory, TraceSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TraceError {
    #[error("movement needs at least 2 points, trajectory has {0}")]
    TooShort(usize),
}

/// Trajectories whose total movement strictly exceeds `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    pub trajectories: Vec<PointTrajectory>,
    pub kappa: f64,
    pub total_input: usize,
}

impl ActiveSet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Sum of per-step L1 displacements.
pub fn trajectory_movement(traj: &PointTrajectory) -> Result<f64, TraceError> {
    if traj.points.len() < 2 {
        return Err(TraceError::TooShort(traj.points.len()));
    }
    Ok(traj.points.windows(2).map(|w| w[1].l1(w[0])).sum())
}

pub fn filter_active(trajs: &[PointTrajectory], kappa: f64) -> ActiveSet {
    let trajectories = trajs
        .iter()
        .filter(|t| t.all_valid() && trajectory_movement(t).is_ok_and(|m| m > kappa))
        .cloned()
        .collect();
    ActiveSet {
        trajectories,
        kappa,
        total_input: trajs.len(),
    }
}

/// Picks `m` of `n` indices uniformly without replacement, returned ascending.
pub fn sample_indices(n: usize, m: usize, seed: u64) -> Vec<usize> {
    if n <= m {
        return (0..n).collect();
    }
    let mut rng = SplitMix64::new(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + rng.below((n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx.sort_unstable();
    idx
}

/// Uniformly samples up to `m` trajectories, kept in input order.
///
/// The window bounds are taken from the caller; trajectories carry only
/// relative positions.
pub fn sample_traces(active: &ActiveSet, m: usize, seed: u64, window_start: usize, window_end: usize) -> TraceSet {
    let traces = sample_indices(active.len(), m, seed)
        .into_iter()
        .map(|i| active.trajectories[i].clone())
        .collect();
    TraceSet {
        traces,
        window_start,
        window_end,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Point;
    use proptest::prelude::*;

    fn traj(origin: usize, pts: &[(f64, f64)]) -> PointTrajectory {
        PointTrajectory {
            points: pts.iter().map(|&(x, y)| Point::new(x, y)).collect(),
            valid: vec![true; pts.len()],
            origin,
        }
    }

    fn stepping(origin: usize, step: f64, n: usize) -> PointTrajectory {
        let pts: Vec<(f64, f64)> = (0..n).map(|k| (10.0 + step * k as f64, 20.0)).collect();
        traj(origin, &pts)
    }

    #[test]
    fn movement_examples() {
        assert_eq!(trajectory_movement(&traj(0, &[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)])).unwrap(), 2.0);
        // Oracle: six steps of |+2| each.
        let oracle: f64 = (0..6).map(|_| 2.0f64.abs()).sum();
        assert_eq!(trajectory_movement(&stepping(0, 2.0, 7)).unwrap(), oracle);
        assert_eq!(trajectory_movement(&stepping(0, 0.0, 9)).unwrap(), 0.0);
        assert_eq!(
            trajectory_movement(&traj(0, &[(1.0, 1.0)])).unwrap_err(),
            TraceError::TooShort(1)
        );
    }

    #[test]
    fn static_set_is_empty() {
        let trajs: Vec<_> = (0..1600).map(|i| stepping(i, 0.0, 7)).collect();
        let active = filter_active(&trajs, 2.0);
        assert!(active.is_empty());
        assert_eq!(active.total_input, 1600);
    }

    #[test]
    fn strict_threshold() {
        let t = stepping(0, 1.0, 7);
        assert_eq!(trajectory_movement(&t).unwrap(), 6.0);
        assert_eq!(filter_active(std::slice::from_ref(&t), 2.0).len(), 1);
        assert_eq!(filter_active(&[t], 6.0).len(), 0);
    }

    #[test]
    fn invalid_trajectories_excluded() {
        let mut bad = stepping(1, 10.0 / 6.0, 7);
        bad.valid[4] = false;
        let good = stepping(2, 2.0, 7);
        let active = filter_active(&[bad, good], 2.0);
        assert_eq!(active.trajectories.iter().map(|t| t.origin).collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn small_active_set_returned_whole() {
        let trajs: Vec<_> = (0..3).map(|i| stepping(i, 1.0, 7)).collect();
        let active = filter_active(&trajs, 2.0);
        let set = sample_traces(&active, 5, 42, 6, 12);
        assert_eq!(set.traces, trajs);
        assert_eq!((set.window_start, set.window_end), (6, 12));
    }

    #[test]
    fn sampling_is_deterministic() {
        let trajs: Vec<_> = (0..1600).map(|i| stepping(i, 1.0, 7)).collect();
        let active = filter_active(&trajs, 2.0);
        let ids = |s: &TraceSet| s.traces.iter().map(|t| t.origin).collect::<Vec<_>>();
        let a = sample_traces(&active, 5, 99, 0, 6);
        let b = sample_traces(&active, 5, 99, 0, 6);
        assert_eq!(ids(&a), ids(&b));
        assert_eq!(a.len(), 5);
        assert!(ids(&a).windows(2).all(|w| w[0] < w[1]));
    }

    fn random_traj(origin: usize) -> impl Strategy<Value = PointTrajectory> {
        (
            proptest::collection::vec((0.0f64..64.0, 0.0f64..64.0), 2..9),
            proptest::bool::weighted(0.9),
        )
            .prop_map(move |(pts, ok)| {
                let mut t = traj(origin, &pts);
                if !ok {
                    let n = t.valid.len();
                    t.valid[n - 1] = false;
                }
                t
            })
    }

    fn random_set() -> impl Strategy<Value = Vec<PointTrajectory>> {
        proptest::collection::vec(random_traj(0), 0..40).prop_map(|mut v| {
            for (i, t) in v.iter_mut().enumerate() {
                t.origin = i;
            }
            v
        })
    }

    proptest! {
        #[test]
        fn movement_matches_direct_summation(t in random_traj(0)) {
            let mut direct = 0.0;
            for k in 0..t.points.len() - 1 {
                direct += (t.points[k + 1].x - t.points[k].x).abs() + (t.points[k + 1].y - t.points[k].y).abs();
            }
            prop_assert_eq!(trajectory_movement(&t).unwrap(), direct);
        }

        #[test]
        fn laws(trajs in random_set(), k1 in 0.0f64..200.0, dk in 0.0f64..200.0, m in 1usize..8, seed: u64) {
            let lo = filter_active(&trajs, k1);
            let hi = filter_active(&trajs, k1 + dk);
            let lo_ids: Vec<usize> = lo.trajectories.iter().map(|t| t.origin).collect();
            for t in &hi.trajectories {
                prop_assert!(lo_ids.contains(&t.origin));
            }
            for t in &lo.trajectories {
                prop_assert_eq!(t, &trajs[t.origin]);
            }
            let s = sample_traces(&lo, m, seed, 0, 1);
            prop_assert_eq!(s.len(), m.min(lo.len()));
            for t in &s.traces {
                prop_assert!(lo_ids.contains(&t.origin));
            }
        }
    }
}
