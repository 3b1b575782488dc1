use std::f64::consts::PI;

use super::TopologyError;

/// Drop/grow cadence for SET and RigL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologySchedule {
    pub update_interval: u64,
    pub drop_fraction: f64,
    pub start: u64,
    pub end: u64,
    pub total_steps: u64,
}

impl TopologySchedule {
    pub fn new(update_interval: u64, drop_fraction: f64, start: u64, end: u64, total_steps: u64) -> Result<Self, TopologyError> {
        if update_interval == 0 {
            return Err(TopologyError::Schedule("update interval must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&drop_fraction) {
            return Err(TopologyError::Schedule(format!("drop fraction {drop_fraction} outside [0, 1]")));
        }
        if !(start < end && end <= total_steps) {
            return Err(TopologyError::Schedule(format!(
                "need 0 <= start < end <= total, got {start}, {end}, {total_steps}"
            )));
        }
        Ok(Self { update_interval, drop_fraction, start, end, total_steps })
    }

    /// Updates run from step 0 and stop once 80% of training is done.
    pub fn standard(total_steps: u64, update_interval: u64, drop_fraction: f64) -> Result<Self, TopologyError> {
        Self::new(update_interval, drop_fraction, 0, (total_steps * 4) / 5, total_steps)
    }

    /// Cosine-decayed drop fraction; zero from `end` on.
    pub fn drop_fraction_at(&self, t: u64) -> f64 {
        if t >= self.end {
            return 0.0;
        }
        self.drop_fraction / 2.0 * (1.0 + (PI * t as f64 / self.end as f64).cos())
    }

    pub fn is_update_step(&self, t: u64) -> bool {
        t % self.update_interval == 0 && t >= self.start && t < self.end
    }
}

/// Gradual magnitude pruning with the cubic sparsity ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneSchedule {
    pub final_sparsity: f64,
    pub start: u64,
    pub end: u64,
    pub update_interval: u64,
}

impl PruneSchedule {
    pub fn new(final_sparsity: f64, start: u64, end: u64, update_interval: u64) -> Result<Self, TopologyError> {
        if !(0.0..1.0).contains(&final_sparsity) {
            return Err(TopologyError::Schedule(format!("final sparsity {final_sparsity} outside [0, 1)")));
        }
        if start >= end {
            return Err(TopologyError::Schedule(format!("prune start {start} must precede end {end}")));
        }
        if update_interval == 0 {
            return Err(TopologyError::Schedule("update interval must be at least 1".into()));
        }
        Ok(Self { final_sparsity, start, end, update_interval })
    }

    /// Ramp from 20% to 80% of `total_steps`.
    pub fn standard(total_steps: u64, final_sparsity: f64, update_interval: u64) -> Result<Self, TopologyError> {
        Self::new(final_sparsity, total_steps / 5, (total_steps * 4) / 5, update_interval)
    }

    pub fn target_sparsity(&self, t: u64) -> f64 {
        if t < self.start {
            0.0
        } else if t >= self.end {
            self.final_sparsity
        } else {
            let progress = (t - self.start) as f64 / (self.end - self.start) as f64;
            self.final_sparsity * (1.0 - (1.0 - progress).powi(3))
        }
    }

    /// Prune steps keep firing after `end`; they are no-ops once every layer
    /// has reached the final sparsity.
    pub fn is_update_step(&self, t: u64) -> bool {
        t % self.update_interval == 0 && t >= self.start
    }
}

/// `f₀/2·(1 + cos(π·t/t_end))` before `t_end`, zero after.
pub fn cosine_drop_fraction(schedule: &TopologySchedule, t: u64) -> f64 {
    schedule.drop_fraction_at(t)
}

/// Cubic ramp `s_f·(1 − (1 − progress)³)` between the prune start and end.
pub fn prune_target_sparsity(schedule: &PruneSchedule, t: u64) -> f64 {
    schedule.target_sparsity(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_points() {
        let s = TopologySchedule::new(100, 0.5, 0, 8000, 10_000).unwrap();
        assert_eq!(cosine_drop_fraction(&s, 0), 0.5);
        assert!((cosine_drop_fraction(&s, 4000) - 0.25).abs() < 1e-12);
        assert_eq!(cosine_drop_fraction(&s, 8000), 0.0);
        assert_eq!(cosine_drop_fraction(&s, 9000), 0.0);
    }

    #[test]
    fn cubic_points() {
        let p = PruneSchedule::new(0.8, 200, 800, 10).unwrap();
        assert_eq!(prune_target_sparsity(&p, 0), 0.0);
        assert_eq!(prune_target_sparsity(&p, 200), 0.0);
        assert_eq!(prune_target_sparsity(&p, 800), 0.8);
        assert_eq!(prune_target_sparsity(&p, 900), 0.8);
        assert!((prune_target_sparsity(&p, 500) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn cubic_is_monotone() {
        let p = PruneSchedule::standard(10_000, 0.95, 100).unwrap();
        let trace: Vec<f64> = (0..=10_000).map(|t| p.target_sparsity(t)).collect();
        assert!(trace.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn invalid_schedules() {
        assert!(TopologySchedule::new(0, 0.1, 0, 10, 10).is_err());
        assert!(TopologySchedule::new(1, 0.1, 5, 5, 10).is_err());
        assert!(TopologySchedule::new(1, 0.1, 0, 11, 10).is_err());
        assert!(TopologySchedule::new(1, 1.5, 0, 10, 10).is_err());
        assert!(PruneSchedule::new(1.0, 0, 10, 1).is_err());
    }

    #[test]
    fn update_steps_stop_at_end() {
        let s = TopologySchedule::standard(100_000, 1000, 0.5).unwrap();
        assert!(s.is_update_step(1000));
        assert!(s.is_update_step(79_000));
        assert!(!s.is_update_step(80_000));
        assert!(!s.is_update_step(1500));
    }
}
