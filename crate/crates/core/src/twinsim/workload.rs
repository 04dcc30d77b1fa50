use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    /// `low` for the first half of each period, `high` for the second.
    Square,
    /// `low` with random excursions to `high`, on average one per period.
    Burst,
    /// `low` throughout.
    Constant,
    /// Uniform in `[low, high]` each tick.
    Noise,
}

/// Utilization pattern in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadPattern {
    pub kind: WorkloadKind,
    pub low: f64,
    #[serde(default)]
    pub high: f64,
    #[serde(default = "one")]
    pub period: u64,
}

fn one() -> u64 {
    1
}

impl WorkloadPattern {
    pub fn constant(level: f64) -> Self {
        WorkloadPattern {
            kind: WorkloadKind::Constant,
            low: level,
            high: level,
            period: 1,
        }
    }

    pub fn square(low: f64, high: f64, period: u64) -> Self {
        WorkloadPattern {
            kind: WorkloadKind::Square,
            low,
            high,
            period,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let high = if self.kind == WorkloadKind::Constant {
            self.low
        } else {
            self.high
        };
        if !(0.0 <= self.low && self.low <= high && high <= 100.0) {
            return Err(SimError::InvalidScenario(format!(
                "workload bounds must satisfy 0 <= low <= high <= 100 (got {} and {})",
                self.low, self.high
            )));
        }
        if self.period == 0 {
            return Err(SimError::InvalidScenario(
                "workload period must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `ticks` utilization samples, deterministic for a given seed.
pub fn generate_workload(
    seed: u64,
    pattern: &WorkloadPattern,
    ticks: u64,
) -> Result<Vec<f64>, SimError> {
    pattern.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = pattern.period;
    let trace = match pattern.kind {
        WorkloadKind::Constant => vec![pattern.low; ticks as usize],
        WorkloadKind::Square => (0..ticks)
            .map(|t| {
                if t % p < p / 2 {
                    pattern.low
                } else {
                    pattern.high
                }
            })
            .collect(),
        WorkloadKind::Noise => (0..ticks)
            .map(|_| rng.gen_range(pattern.low..=pattern.high))
            .collect(),
        WorkloadKind::Burst => {
            let mut out = Vec::with_capacity(ticks as usize);
            let mut remaining = 0u64;
            for _ in 0..ticks {
                if remaining == 0 && rng.gen_bool(1.0 / p as f64) {
                    remaining = rng.gen_range((p / 4).max(1)..=(p / 2).max(1));
                }
                if remaining > 0 {
                    remaining -= 1;
                    out.push(pattern.high);
                } else {
                    out.push(pattern.low);
                }
            }
            out
        }
    };
    Ok(trace)
}
