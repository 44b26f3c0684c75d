use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform partition `0 = t_0 < t_1 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    horizon: f64,
    steps: usize,
    times: Vec<f64>,
}

impl GridSpec {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("steps", "grid needs at least one step"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", format!("{horizon} must be > 0")));
        }
        let dt = horizon / steps as f64;
        let mut times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
        times[steps] = horizon;
        Ok(Self {
            horizon,
            steps,
            times,
        })
    }

    /// Accepts an explicit list of times, which must start at zero and be
    /// uniformly spaced.
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if times.len() < 2 {
            return Err(invalid("times", "grid needs at least two points"));
        }
        if times[0] != 0.0 {
            return Err(invalid("times", "grid must start at t = 0"));
        }
        let steps = times.len() - 1;
        let horizon = times[steps];
        let dt = horizon / steps as f64;
        for (i, pair) in times.windows(2).enumerate() {
            if !(pair[1] > pair[0]) {
                return Err(invalid("times", format!("not increasing at index {i}")));
            }
            if ((pair[1] - pair[0]) - dt).abs() > 1e-12 * horizon.max(1.0) {
                return Err(invalid("times", format!("non-uniform spacing at index {i}")));
            }
        }
        Self::uniform(horizon, steps)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    /// Index of the grid point closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let i = (t / self.dt()).round();
        i.clamp(0.0, self.steps as f64) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_endpoints() {
        let g = GridSpec::uniform(1.0, 20).unwrap();
        assert_eq!(g.times().len(), 21);
        assert_eq!(g.time(0), 0.0);
        assert_eq!(g.time(20), 1.0);
        assert!((g.dt() - 0.05).abs() < 1e-15);
        assert!(g.times().windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.nearest_index(0.5), 10);
    }

    #[test]
    fn rejects_empty_and_non_uniform() {
        assert!(GridSpec::uniform(1.0, 0).is_err());
        assert!(GridSpec::uniform(0.0, 4).is_err());
        assert!(GridSpec::from_times(&[0.0, 0.1, 0.3]).is_err());
        assert!(GridSpec::from_times(&[0.1, 0.2]).is_err());
        assert!(GridSpec::from_times(&[0.0]).is_err());
        let g = GridSpec::from_times(&[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert_eq!(g.steps(), 4);
    }
}
