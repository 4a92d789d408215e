use super::TrainConfig;

/// A monitored value improves when it is below the best so far by more
/// than this.
pub const IMPROVEMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Plateau learning-rate cuts and early stopping, driven only by the
/// sequence of monitored values.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    lr: f64,
    min_lr: f64,
    factor: f64,
    patience: usize,
    es_patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
    lr_wait: usize,
    es_wait: usize,
}

impl Plateau {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            min_lr: cfg.min_lr,
            factor: cfg.factor,
            patience: cfg.patience,
            es_patience: cfg.es_patience,
            best: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
            lr_wait: 0,
            es_wait: 0,
        }
    }

    /// Learning rate for the next epoch.
    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// 1-based epoch of the best value so far, 0 before any observation.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Feeds one epoch's monitored value. Returns whether it improved and
    /// whether training should stop. A NaN never improves.
    pub fn observe(&mut self, monitored: f64) -> (bool, Decision) {
        self.epoch += 1;
        let improved = monitored < self.best - IMPROVEMENT_TOL;
        if improved {
            self.best = monitored;
            self.best_epoch = self.epoch;
            self.lr_wait = 0;
            self.es_wait = 0;
        } else {
            self.lr_wait += 1;
            self.es_wait += 1;
            if self.lr_wait >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.lr_wait = 0;
            }
        }
        let decision = if self.es_wait >= self.es_patience {
            Decision::Stop
        } else {
            Decision::Continue
        };
        (improved, decision)
    }
}

/// Learning rate in effect at every epoch of a monitored sequence, ignoring
/// early stopping.
pub fn lr_trajectory(monitored: &[f64], cfg: &TrainConfig) -> Vec<f64> {
    let mut plateau = Plateau::new(cfg);
    monitored
        .iter()
        .map(|&v| {
            let lr = plateau.lr();
            plateau.observe(v);
            lr
        })
        .collect()
}

/// 1-based epoch after which early stopping fires, if it does.
pub fn early_stop_epoch(monitored: &[f64], cfg: &TrainConfig) -> Option<usize> {
    let mut plateau = Plateau::new(cfg);
    monitored
        .iter()
        .position(|&v| plateau.observe(v).1 == Decision::Stop)
        .map(|i| i + 1)
}
