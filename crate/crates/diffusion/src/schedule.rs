//! Variance schedule, forward noising, and the deterministic reverse step.

use zippo_core::checkpoint::Section;
use zippo_core::Tensor;

use crate::error::{Error, Result};

/// Linear beta schedule with cumulative-product alpha-bar table.
/// `alpha_bar(0)` is defined as 1.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    t_max: usize,
    betas: Vec<f64>,
    alphas_bar: Vec<f64>,
}

pub const DEFAULT_T: usize = 200;
pub const DEFAULT_BETA_START: f64 = 1e-3;

/// Terminal beta scaled up for short schedules so that alpha_bar at T stays
/// near zero, capped at 0.05.
pub fn default_beta_end(t_max: usize) -> f64 {
    (0.02 * 1000.0 / t_max as f64).min(0.05)
}

impl NoiseSchedule {
    pub fn make(t_max: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
        if t_max < 1 {
            return Err(Error::config("schedule: T must be >= 1"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::config(format!(
                "schedule: need 0 < beta_start <= beta_end < 1, got {} and {}",
                beta_start, beta_end
            )));
        }
        // Endpoints pass through f32 so a schedule rebuilt from checkpoint
        // metadata is bit-identical to the one used in training.
        let beta_start = beta_start as f32 as f64;
        let beta_end = beta_end as f32 as f64;
        let betas: Vec<f64> = if t_max == 1 {
            vec![beta_start]
        } else {
            (0..t_max)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (t_max - 1) as f64)
                .collect()
        };
        let mut alphas_bar = Vec::with_capacity(t_max + 1);
        alphas_bar.push(1.0);
        let mut prod = 1.0;
        for &b in &betas {
            prod *= 1.0 - b;
            alphas_bar.push(prod);
        }
        Ok(NoiseSchedule {
            t_max,
            betas,
            alphas_bar,
        })
    }

    pub fn with_defaults(t_max: usize) -> Result<NoiseSchedule> {
        NoiseSchedule::make(t_max, DEFAULT_BETA_START, default_beta_end(t_max))
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `alpha_bar_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alphas_bar[t]
    }

    fn check_t(&self, t: usize, op: &'static str) -> Result<()> {
        if t < 1 || t > self.t_max {
            return Err(Error::config(format!(
                "{}: timestep {} outside 1..={}",
                op, t, self.t_max
            )));
        }
        Ok(())
    }

    /// Forward noising `sqrt(abar_t) z0 + sqrt(1-abar_t) eps`.
    pub fn add_noise(&self, z0: &Tensor, eps: &Tensor, t: usize) -> Result<Tensor> {
        self.check_t(t, "add_noise")?;
        if z0.shape() != eps.shape() {
            return Err(zippo_core::Error::shape(
                "add_noise",
                format!("z0 {:?} vs eps {:?}", z0.shape(), eps.shape()),
            )
            .into());
        }
        let a = self.alpha_bar(t).sqrt() as f32;
        let b = (1.0 - self.alpha_bar(t)).sqrt() as f32;
        let data: Vec<f32> = z0
            .data()
            .iter()
            .zip(eps.data())
            .map(|(z, e)| a * z + b * e)
            .collect();
        Ok(Tensor::from_vec(data, z0.shape())?)
    }

    /// Invert the noising formula around a noise prediction.
    pub fn predict_z0(&self, z_t: &Tensor, eps_pred: &Tensor, t: usize) -> Result<Tensor> {
        self.check_t(t, "predict_z0")?;
        if z_t.shape() != eps_pred.shape() {
            return Err(zippo_core::Error::shape(
                "predict_z0",
                format!("z_t {:?} vs eps {:?}", z_t.shape(), eps_pred.shape()),
            )
            .into());
        }
        let a = self.alpha_bar(t).sqrt() as f32;
        let b = (1.0 - self.alpha_bar(t)).sqrt() as f32;
        let data: Vec<f32> = z_t
            .data()
            .iter()
            .zip(eps_pred.data())
            .map(|(z, e)| (z - b * e) / a)
            .collect();
        Ok(Tensor::from_vec(data, z_t.shape())?)
    }

    /// Deterministic reverse hop from `t` to `t_prev` (eta = 0).
    /// `t_prev = 0` lands on the clean estimate.
    pub fn ddim_step(
        &self,
        z_t: &Tensor,
        eps_pred: &Tensor,
        t: usize,
        t_prev: usize,
    ) -> Result<Tensor> {
        self.check_t(t, "ddim_step")?;
        if t_prev >= t {
            return Err(Error::config(format!(
                "ddim_step: t_prev {} must be below t {}",
                t_prev, t
            )));
        }
        let z0 = self.predict_z0(z_t, eps_pred, t)?;
        let a_prev = self.alpha_bar(t_prev).sqrt() as f32;
        let b_prev = (1.0 - self.alpha_bar(t_prev)).sqrt() as f32;
        let data: Vec<f32> = z0
            .data()
            .iter()
            .zip(eps_pred.data())
            .map(|(z, e)| a_prev * z + b_prev * e)
            .collect();
        Ok(Tensor::from_vec(data, z_t.shape())?)
    }

    pub fn meta_section(&self) -> Section {
        Section::new(
            "meta.schedule",
            vec![3],
            vec![
                self.t_max as f32,
                self.betas[0] as f32,
                *self.betas.last().unwrap() as f32,
            ],
        )
    }

    pub fn from_meta_section(s: &Section) -> Result<NoiseSchedule> {
        if s.data.len() != 3 {
            return Err(Error::config("meta.schedule: expected 3 values"));
        }
        NoiseSchedule::make(s.data[0] as usize, s.data[1] as f64, s.data[2] as f64)
    }
}

/// Decreasing timestep sequence for DDIM sampling. The final hop to 0 is
/// implicit in [`SamplerPlan::hops`].
#[derive(Debug, Clone)]
pub struct SamplerPlan {
    steps: Vec<usize>,
}

impl SamplerPlan {
    /// `s` evenly spaced timesteps starting at `t_max`, spacing `t_max / s`.
    pub fn make(t_max: usize, s: usize) -> Result<SamplerPlan> {
        if s < 1 || s > t_max {
            return Err(Error::config(format!(
                "sampler plan: steps {} outside 1..={}",
                s, t_max
            )));
        }
        let spacing = t_max / s;
        let steps: Vec<usize> = (0..s).map(|k| t_max - k * spacing).collect();
        debug_assert!(steps.windows(2).all(|p| p[0] > p[1]));
        debug_assert!(*steps.last().unwrap() >= 1);
        Ok(SamplerPlan { steps })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    /// (t, t_prev) pairs ending with (last, 0).
    pub fn hops(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.steps
            .iter()
            .copied()
            .zip(self.steps.iter().copied().skip(1).chain(std::iter::once(0)))
    }
}
