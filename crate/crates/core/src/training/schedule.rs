use serde::{Deserialize, Serialize};

use crate::dataset::STAGE_RESOLUTIONS;
use crate::error::{Error, Result};

/// Default share of the total iterations spent at each default resolution.
pub const DEFAULT_STAGE_FRACTIONS: [f64; 4] = [0.40, 0.25, 0.20, 0.15];

/// Ordered `(resolution, iterations)` stages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSchedule {
    stages: Vec<(usize, u64)>,
}

impl StageSchedule {
    pub fn new(stages: Vec<(usize, u64)>) -> Result<Self> {
        let mut bad = Vec::new();
        if stages.is_empty() {
            bad.push("schedule has no stages".to_owned());
        }
        for (i, &(res, iters)) in stages.iter().enumerate() {
            if !STAGE_RESOLUTIONS.contains(&res) {
                bad.push(format!("stage {i}: resolution {res} not in {STAGE_RESOLUTIONS:?}"));
            }
            if iters == 0 {
                bad.push(format!("stage {i}: iteration count must be > 0"));
            }
            if i > 0 && res <= stages[i - 1].0 {
                bad.push(format!("stage {i}: resolutions must increase strictly"));
            }
        }
        if bad.is_empty() {
            Ok(Self { stages })
        } else {
            Err(Error::Config(bad))
        }
    }

    pub fn single(resolution: usize, iterations: u64) -> Result<Self> {
        Self::new(vec![(resolution, iterations)])
    }

    /// Splits `total` over `resolutions`: the default four use
    /// [`DEFAULT_STAGE_FRACTIONS`], any other list an even split. Rounding
    /// leftovers go to the first stage.
    pub fn from_total(total: u64, resolutions: &[usize]) -> Result<Self> {
        let n = resolutions.len();
        if n == 0 || total < n as u64 {
            return Err(Error::Config(vec![format!(
                "{total} total iterations cannot cover {n} stages"
            )]));
        }
        let fractions: Vec<f64> = if resolutions == STAGE_RESOLUTIONS {
            DEFAULT_STAGE_FRACTIONS.to_vec()
        } else {
            vec![1.0 / n as f64; n]
        };
        let mut iters: Vec<u64> = fractions
            .iter()
            .map(|f| ((total as f64 * f).floor() as u64).max(1))
            .collect();
        let assigned: u64 = iters.iter().sum();
        if assigned <= total {
            iters[0] += total - assigned;
        } else {
            return Err(Error::Config(vec![format!(
                "{total} total iterations too few for {n} stages"
            )]));
        }
        Self::new(resolutions.iter().copied().zip(iters).collect())
    }

    pub fn stages(&self) -> &[(usize, u64)] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn total_iterations(&self) -> u64 {
        self.stages.iter().map(|s| s.1).sum()
    }

    pub fn resolutions(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.0).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split() {
        let s = StageSchedule::from_total(1000, &STAGE_RESOLUTIONS).unwrap();
        assert_eq!(s.stages(), [(32, 400), (64, 250), (128, 200), (256, 150)]);
        let s = StageSchedule::from_total(7, &STAGE_RESOLUTIONS).unwrap();
        assert_eq!(s.total_iterations(), 7);
        assert!(s.stages().iter().all(|st| st.1 >= 1));
    }

    #[test]
    fn validation() {
        assert!(StageSchedule::new(vec![(64, 1), (32, 1)]).is_err());
        assert!(StageSchedule::new(vec![(32, 0)]).is_err());
        assert!(StageSchedule::new(vec![(48, 1)]).is_err());
        assert!(StageSchedule::new(vec![]).is_err());
        assert_eq!(StageSchedule::from_total(200, &[32]).unwrap().stages(), [(32, 200)]);
    }
}
