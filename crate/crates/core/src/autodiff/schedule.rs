use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub warmup_epochs: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            warmup_epochs: 5,
            plateau_factor: 0.1,
            plateau_patience: 5,
        }
    }
}

/// Linear warmup followed by reduce-on-plateau.
///
/// During warmup epoch `e` runs at `(e + 1) / warmup_epochs`. The monitored
/// value is observed every epoch; once warmup is over, `patience`
/// consecutive epochs without a new minimum cut the multiplier by `factor`.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    cfg: ScheduleConfig,
    best: f64,
    bad_epochs: usize,
    plateau_scale: f64,
}

impl LrSchedule {
    pub fn new(cfg: ScheduleConfig) -> Self {
        LrSchedule {
            cfg,
            best: f64::INFINITY,
            bad_epochs: 0,
            plateau_scale: 1.0,
        }
    }

    pub fn multiplier(&self, epoch: usize) -> f64 {
        if epoch < self.cfg.warmup_epochs {
            (epoch + 1) as f64 / self.cfg.warmup_epochs as f64
        } else {
            self.plateau_scale
        }
    }

    /// Records the monitored value at the end of `epoch`.
    pub fn observe(&mut self, epoch: usize, value: f64) {
        if value < self.best {
            self.best = value;
            self.bad_epochs = 0;
            return;
        }
        if epoch < self.cfg.warmup_epochs {
            return;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.cfg.plateau_patience {
            self.plateau_scale *= self.cfg.plateau_factor;
            self.bad_epochs = 0;
        }
    }
}

/// Multiplier for `epoch` given the monitored values of all earlier epochs.
pub fn lr_multiplier(epoch: usize, history: &[f64], cfg: ScheduleConfig) -> f64 {
    let mut s = LrSchedule::new(cfg);
    for (e, &v) in history.iter().enumerate().take(epoch) {
        s.observe(e, v);
    }
    s.multiplier(epoch)
}
