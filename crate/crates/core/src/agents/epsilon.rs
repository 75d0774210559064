use serde::{Deserialize, Serialize};

/// Exploration rate schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonSchedule {
    /// `max(min, start - n * decrement)` after `n` training steps.
    PerStep { start: f64, min: f64, decrement: f64, reset_per_task: bool },
    /// Linear from the task's start value down to `min` over the task.
    TaskRamp { first_start: f64, later_start: f64, min: f64 },
}

impl EpsilonSchedule {
    pub fn arm() -> Self {
        EpsilonSchedule::PerStep { start: 1.0, min: 0.2, decrement: 0.0002, reset_per_task: true }
    }

    pub fn wheeled() -> Self {
        EpsilonSchedule::TaskRamp { first_start: 1.0, later_start: 0.5, min: 0.2 }
    }

    pub fn validate(&self) -> Result<(), String> {
        let (start, min) = match *self {
            EpsilonSchedule::PerStep { start, min, decrement, .. } => {
                if decrement.is_nan() || decrement < 0.0 {
                    return Err(format!("epsilon decrement {decrement} must be non-negative"));
                }
                (start, min)
            }
            EpsilonSchedule::TaskRamp { first_start, later_start, min } => {
                if !(0.0..=1.0).contains(&later_start) || later_start < min {
                    return Err(format!("epsilon later_start {later_start} must lie in [min, 1]"));
                }
                (first_start, min)
            }
        };
        if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&min) || start < min {
            return Err(format!("epsilon range [{min}, {start}] invalid"));
        }
        Ok(())
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self::arm()
    }
}

#[derive(Debug, Clone)]
pub struct Epsilon {
    schedule: EpsilonSchedule,
    task: usize,
    steps: u64,
    progress: f64,
}

impl Epsilon {
    pub fn new(schedule: EpsilonSchedule) -> Self {
        Self { schedule, task: 0, steps: 0, progress: 0.0 }
    }

    pub fn value(&self) -> f64 {
        match self.schedule {
            EpsilonSchedule::PerStep { start, min, decrement, .. } => (start - self.steps as f64 * decrement).max(min),
            EpsilonSchedule::TaskRamp { first_start, later_start, min } => {
                let start = if self.task == 0 { first_start } else { later_start };
                (start - (start - min) * self.progress).max(min)
            }
        }
    }

    pub fn begin_task(&mut self, task: usize) {
        self.task = task;
        self.progress = 0.0;
        if let EpsilonSchedule::PerStep { reset_per_task: false, .. } = self.schedule {
            return;
        }
        self.steps = 0;
    }

    pub fn on_step(&mut self) {
        self.steps += 1;
    }

    /// Fraction of the current task already trained, in `[0, 1]`.
    pub fn set_progress(&mut self, fraction: f64) {
        self.progress = fraction.clamp(0.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_step_reaches_floor_after_4000_steps() {
        let mut e = Epsilon::new(EpsilonSchedule::arm());
        for _ in 0..3999 {
            e.on_step();
        }
        assert!(e.value() > 0.2);
        e.on_step();
        assert!((e.value() - 0.2).abs() < 1e-12);
        for _ in 0..100 {
            e.on_step();
        }
        assert_eq!(e.value(), 0.2);
    }

    #[test]
    fn reset_flag_controls_task_boundary() {
        let mut e = Epsilon::new(EpsilonSchedule::arm());
        (0..1000).for_each(|_| e.on_step());
        e.begin_task(1);
        assert_eq!(e.value(), 1.0);
        let mut e =
            Epsilon::new(EpsilonSchedule::PerStep { start: 1.0, min: 0.2, decrement: 0.0002, reset_per_task: false });
        (0..1000).for_each(|_| e.on_step());
        e.begin_task(1);
        assert!((e.value() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn task_ramp_starts_lower_after_first_task() {
        let mut e = Epsilon::new(EpsilonSchedule::wheeled());
        assert_eq!(e.value(), 1.0);
        e.set_progress(1.0);
        assert!((e.value() - 0.2).abs() < 1e-12);
        e.begin_task(3);
        assert_eq!(e.value(), 0.5);
        e.set_progress(0.5);
        assert!((e.value() - 0.35).abs() < 1e-12);
    }

    #[test]
    fn rejects_inverted_range() {
        let s = EpsilonSchedule::PerStep { start: 0.1, min: 0.2, decrement: 0.0, reset_per_task: true };
        assert!(s.validate().is_err());
    }
}
