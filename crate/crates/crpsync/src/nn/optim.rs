//! Adam with bias correction, plus the step-decay learning-rate schedule.

use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam state over a fixed set of parameter slots. One call to
/// [`Adam::step`] advances the shared timestep once and updates every slot.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, slot_sizes: &[usize]) -> Adam {
        Adam {
            cfg,
            t: 0,
            m: slot_sizes.iter().map(|n| vec![0.0; *n]).collect(),
            v: slot_sizes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    pub fn step(
        &mut self,
        lr: f64,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
    ) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} parameter slots, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let m_corr = 1.0 - b1.powi(self.t as i32);
        let v_corr = 1.0 - b2.powi(self.t as i32);
        for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.len() != self.m[slot].len() || g.len() != self.m[slot].len() {
                return Err(NnError::ShapeMismatch(format!(
                    "slot {slot} holds {} values, got {} params and {} grads",
                    self.m[slot].len(),
                    p.len(),
                    g.len()
                )));
            }
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / m_corr;
                let v_hat = v[i] / v_corr;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
            }
        }
        Ok(())
    }
}

/// Step decay: `base * factor^-(epoch / period)`, integer division.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub decay_factor: f64,
    pub decay_period: usize,
}

impl LrSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        assert!(self.decay_period >= 1, "decay period must be at least 1");
        self.base * self.decay_factor.powi(-((epoch / self.decay_period) as i32))
    }
}
