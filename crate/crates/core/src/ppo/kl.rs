/// Penalty coefficient on the KL term and its adaptation history.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveKl {
    beta: f64,
    last_kl: Option<f64>,
    log: Vec<KlEvent>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KlEvent {
    pub kl: f64,
    pub beta_before: f64,
    pub beta_after: f64,
}

impl AdaptiveKl {
    pub fn new(beta: f64) -> Self {
        assert!(beta > 0.0, "beta must be positive");
        Self {
            beta,
            last_kl: None,
            log: Vec::new(),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn last_kl(&self) -> Option<f64> {
        self.last_kl
    }

    pub fn log(&self) -> &[KlEvent] {
        &self.log
    }

    /// Divide `beta` by `factor` below the band `[target / band, target * band]`,
    /// multiply it above, leave it inside.
    pub fn adapt(&mut self, kl: f64, target: f64, band: f64, factor: f64) -> f64 {
        let before = self.beta;
        if kl < target / band {
            self.beta /= factor;
        } else if kl > target * band {
            self.beta *= factor;
        }
        if self.beta <= 0.0 || !self.beta.is_finite() {
            self.beta = before;
        }
        self.last_kl = Some(kl);
        self.log.push(KlEvent {
            kl,
            beta_before: before,
            beta_after: self.beta,
        });
        self.beta
    }
}
