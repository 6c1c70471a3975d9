//! Online structural model of the environment being explored.
//!
//! A single [`StructureState`] per filter run tracks the transition counts
//! observed so far, the belief over the view the robot currently sees, and
//! produces the likelihood of each new observation under the hypothesis that
//! the robot is outside the partial map:
//!
//! ```text
//! p(z | outside) = Σ_v p(z | v) Σ_v' p(v | v', α, f) b(v')
//! ```

use serde::{Deserialize, Serialize};

use crate::dirichlet::{self, CountMatrix, HyperMatrix};
use crate::error::{Error, Result};
use crate::view_model::{ObservationModel, ViewId};

/// How the structural model turns counts into transition predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureMode {
    /// Prior plus the counts gathered online.
    Adaptive,
    /// Prior alone; counts are never updated.
    PriorOnly,
    /// Marginal view frequencies from training, no transition structure.
    FrequencyOnly,
    /// Online counts scaled by a fixed ratio before entering the predictive.
    ScaledCounts(f64),
}

impl StructureMode {
    fn count_weight(self) -> f64 {
        match self {
            StructureMode::ScaledCounts(r) => r,
            _ => 1.0,
        }
    }

    fn accrues_counts(self) -> bool {
        matches!(self, StructureMode::Adaptive | StructureMode::ScaledCounts(_))
    }
}

/// Likelihood of an observation under the outside-the-map hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct OutsideLikelihood(f64);

impl OutsideLikelihood {
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn ln(self) -> f64 {
        self.0.ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureState {
    alpha: HyperMatrix,
    counts: CountMatrix,
    view_belief: Vec<f64>,
    last_ml_view: Option<ViewId>,
    mode: StructureMode,
    obs_model: ObservationModel,
    marginals: Option<Vec<f64>>,
}

/// Fresh structural state: no counts, uniform view belief.
pub fn init_structure(alpha: HyperMatrix, obs_model: ObservationModel, mode: StructureMode) -> Result<StructureState> {
    let nu = alpha.nu();
    if obs_model.nu() != nu {
        return Err(Error::DimensionMismatch {
            expected: nu,
            actual: obs_model.nu(),
        });
    }
    if let StructureMode::ScaledCounts(r) = mode {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidInput(format!("count scale must be non-negative, got {r}")));
        }
    }
    Ok(StructureState {
        alpha,
        counts: CountMatrix::zeros(nu),
        view_belief: vec![1.0 / nu as f64; nu],
        last_ml_view: None,
        mode,
        obs_model,
        marginals: None,
    })
}

impl StructureState {
    /// Attaches the training marginal view frequencies (normalized here).
    pub fn with_marginals(mut self, marginals: Vec<f64>) -> Result<Self> {
        if marginals.len() != self.nu() {
            return Err(Error::DimensionMismatch {
                expected: self.nu(),
                actual: marginals.len(),
            });
        }
        let total: f64 = marginals.iter().sum();
        if marginals.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || total <= 0.0 {
            return Err(Error::InvalidInput("marginal frequencies must be non-negative with positive sum".into()));
        }
        self.marginals = Some(marginals.iter().map(|m| m / total).collect());
        Ok(self)
    }

    pub fn nu(&self) -> usize {
        self.alpha.nu()
    }

    pub fn mode(&self) -> StructureMode {
        self.mode
    }

    pub fn counts(&self) -> &CountMatrix {
        &self.counts
    }

    pub fn alpha(&self) -> &HyperMatrix {
        &self.alpha
    }

    pub fn view_belief(&self) -> &[f64] {
        &self.view_belief
    }

    pub fn last_ml_view(&self) -> Option<ViewId> {
        self.last_ml_view
    }

    pub fn obs_model(&self) -> &ObservationModel {
        &self.obs_model
    }

    pub fn marginals(&self) -> Option<&[f64]> {
        self.marginals.as_deref()
    }

    /// Transition predictive `p(i | j)` under the current counts and mode.
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        dirichlet::predictive_weighted(&self.alpha, &self.counts, self.mode.count_weight(), i, j)
    }

    /// Distribution of the next view: transitions marginalized over the view belief.
    pub fn predict_next_view(&self) -> Vec<f64> {
        let nu = self.nu();
        let weight = self.mode.count_weight();
        let mut out = vec![0.0; nu];
        for (j, b) in self.view_belief.iter().enumerate() {
            if *b == 0.0 {
                continue;
            }
            let den = self.alpha.col_sum(j) + weight * self.counts.col_sum(j) as f64;
            for (i, o) in out.iter_mut().enumerate() {
                let num = self.alpha.get(i, j) + weight * self.counts.get(i, j) as f64;
                *o += num / den * b;
            }
        }
        out
    }

    /// Outside likelihood ignoring transitions: `Σ_v p(z | v) marginal(v)`.
    pub fn frequency_only_likelihood(&self, z: ViewId) -> Result<OutsideLikelihood> {
        self.check(z)?;
        let marginals = self
            .marginals
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("frequency-only likelihood needs training marginals".into()))?;
        let value = marginals
            .iter()
            .enumerate()
            .map(|(v, m)| self.obs_model.prob(z.index(), v) * m)
            .sum();
        Ok(OutsideLikelihood(value))
    }

    fn check(&self, z: ViewId) -> Result<()> {
        if z.index() >= self.nu() {
            return Err(Error::IndexOutOfRange {
                index: z.index(),
                size: self.nu(),
            });
        }
        Ok(())
    }

    /// Consumes one observed view and returns its outside likelihood.
    ///
    /// The likelihood and the belief update both use the counts as they were
    /// before this observation; the transition from the previous most likely
    /// view to the current one is recorded afterwards.
    pub fn step(&mut self, z: ViewId) -> Result<OutsideLikelihood> {
        self.check(z)?;
        let predicted = self.predict_next_view();
        let weighted: Vec<f64> = predicted
            .iter()
            .enumerate()
            .map(|(v, p)| self.obs_model.prob(z.index(), v) * p)
            .collect();
        let total: f64 = weighted.iter().sum();

        let likelihood = match self.mode {
            StructureMode::FrequencyOnly => self.frequency_only_likelihood(z)?,
            _ => OutsideLikelihood(total),
        };

        self.view_belief = if total > 0.0 {
            weighted.iter().map(|w| w / total).collect()
        } else {
            predicted
        };
        let ml_view = self.obs_model.most_likely_view(z);
        if self.mode.accrues_counts() {
            if let Some(prev) = self.last_ml_view {
                self.counts.increment(prev, ml_view);
            }
        }
        self.last_ml_view = Some(ml_view);
        Ok(likelihood)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(i: usize) -> ViewId {
        ViewId::new(i)
    }

    fn noisy_model(nu: usize, hit: f64) -> ObservationModel {
        let miss = (1.0 - hit) / (nu - 1) as f64;
        let m = (0..nu * nu)
            .map(|k| if k / nu == k % nu { hit } else { miss })
            .collect();
        ObservationModel::from_row_major(nu, m).unwrap()
    }

    #[test]
    fn init_is_uniform_and_deterministic() {
        let a = HyperMatrix::uniform(3, 1.0).unwrap();
        let s1 = init_structure(a.clone(), ObservationModel::identity(3), StructureMode::Adaptive).unwrap();
        let s2 = init_structure(a, ObservationModel::identity(3), StructureMode::Adaptive).unwrap();
        assert_eq!(s1.view_belief(), &[1.0 / 3.0; 3]);
        assert_eq!(s1.counts().total(), 0);
        assert_eq!(s1.last_ml_view(), None);
        assert_eq!(s1, s2);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = HyperMatrix::uniform(3, 1.0).unwrap();
        assert!(matches!(
            init_structure(a, ObservationModel::identity(2), StructureMode::Adaptive),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn first_step_uses_uniform_belief_and_records_nothing() {
        let obs = noisy_model(3, 0.8);
        let mut s = init_structure(HyperMatrix::uniform(3, 2.0).unwrap(), obs.clone(), StructureMode::Adaptive).unwrap();
        let l = s.step(v(1)).unwrap();
        let expected: f64 = (0..3).map(|k| obs.prob(1, k) / 3.0).sum();
        assert!((l.value() - expected).abs() < 1e-15);
        assert_eq!(s.counts().total(), 0);
        assert_eq!(s.last_ml_view(), Some(v(1)));
    }

    #[test]
    fn repeated_view_builds_self_transition_counts() {
        let mut s = init_structure(
            HyperMatrix::uniform(2, 1.0).unwrap(),
            ObservationModel::identity(2),
            StructureMode::Adaptive,
        )
        .unwrap();
        for _ in 0..3 {
            s.step(v(0)).unwrap();
        }
        assert_eq!(s.counts().get(0, 0), 2);
        assert!((s.transition(0, 0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn prior_only_never_counts() {
        let mut s = init_structure(
            HyperMatrix::uniform(3, 1.0).unwrap(),
            noisy_model(3, 0.9),
            StructureMode::PriorOnly,
        )
        .unwrap();
        let (b0, z0) = (s.view_belief().to_vec(), v(2));
        let first = s.step(z0).unwrap();
        for k in 0..50 {
            s.step(v(k % 3)).unwrap();
        }
        assert_eq!(s.counts().total(), 0);
        // The prior-only likelihood depends only on (belief, z).
        let mut fresh = s.clone();
        fresh.view_belief = b0;
        assert_eq!(fresh.step(z0).unwrap().value().to_bits(), first.value().to_bits());
    }

    #[test]
    fn predicted_view_follows_belief() {
        let alpha = HyperMatrix::from_columns(&[vec![3.0, 1.0, 1.0], vec![1.0, 1.0, 6.0], vec![1.0, 1.0, 1.0]]).unwrap();
        let mut s = init_structure(alpha, ObservationModel::identity(3), StructureMode::Adaptive).unwrap();
        let uniform = init_structure(HyperMatrix::uniform(3, 1.0).unwrap(), ObservationModel::identity(3), StructureMode::Adaptive)
            .unwrap()
            .predict_next_view();
        assert!(uniform.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
        s.view_belief = vec![0.0, 1.0, 0.0];
        let p = s.predict_next_view();
        assert_eq!(p, vec![1.0 / 8.0, 1.0 / 8.0, 6.0 / 8.0]);
        s.view_belief = vec![0.2, 0.5, 0.3];
        assert!((s.predict_next_view().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frequency_only_uses_marginals() {
        let s = init_structure(HyperMatrix::uniform(3, 1.0).unwrap(), ObservationModel::identity(3), StructureMode::FrequencyOnly)
            .unwrap();
        assert!(s.frequency_only_likelihood(v(0)).is_err());
        let s = s.with_marginals(vec![5.0, 3.0, 2.0]).unwrap();
        assert!((s.frequency_only_likelihood(v(0)).unwrap().value() - 0.5).abs() < 1e-15);
        let flat = s.clone().with_marginals(vec![1.0, 1.0, 1.0]).unwrap();
        let noisy = init_structure(HyperMatrix::uniform(3, 1.0).unwrap(), noisy_model(3, 0.7), StructureMode::FrequencyOnly)
            .unwrap()
            .with_marginals(vec![1.0; 3])
            .unwrap();
        for z in 0..3 {
            assert!((flat.frequency_only_likelihood(v(z)).unwrap().value() - 1.0 / 3.0).abs() < 1e-15);
            assert!((noisy.frequency_only_likelihood(v(z)).unwrap().value() - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn frequency_only_stream_is_order_free() {
        let mk = || {
            init_structure(HyperMatrix::uniform(3, 1.0).unwrap(), noisy_model(3, 0.8), StructureMode::FrequencyOnly)
                .unwrap()
                .with_marginals(vec![0.6, 0.3, 0.1])
                .unwrap()
        };
        let stream = [0, 1, 0, 2, 2, 1, 0];
        let mut a = mk();
        let mut b = mk();
        let la: f64 = stream.iter().map(|&z| a.step(v(z)).unwrap().ln()).sum();
        let lb: f64 = stream.iter().rev().map(|&z| b.step(v(z)).unwrap().ln()).sum();
        assert!((la - lb).abs() < 1e-12);
    }

    fn stream_log_likelihood(mode: StructureMode, alpha: &HyperMatrix, obs: &ObservationModel, stream: &[usize]) -> f64 {
        let mut s = init_structure(alpha.clone(), obs.clone(), mode).unwrap();
        stream.iter().map(|&z| s.step(v(z)).unwrap().ln()).sum::<f64>() / stream.len() as f64
    }

    #[test]
    fn scaled_counts_interpolates_between_modes() {
        let alpha = HyperMatrix::from_columns(&[vec![2.0, 0.5, 0.5], vec![1.0, 1.0, 1.0], vec![0.3, 0.3, 3.0]]).unwrap();
        let obs = noisy_model(3, 0.85);
        let stream: Vec<usize> = (0..60).map(|k| (k * 7 + k / 5) % 3).collect();
        let run = |mode| {
            let mut s = init_structure(alpha.clone(), obs.clone(), mode).unwrap();
            stream.iter().map(|&z| s.step(v(z)).unwrap().value().to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(StructureMode::ScaledCounts(0.0)), run(StructureMode::PriorOnly));
        assert_eq!(run(StructureMode::ScaledCounts(1.0)), run(StructureMode::Adaptive));
    }

    #[test]
    fn adaptation_helps_in_an_atypical_environment() {
        // Prior believes views mostly repeat; the held-out environment cycles 0 → 1 → 2.
        let alpha = HyperMatrix::from_columns(&[vec![4.0, 0.5, 0.5], vec![0.5, 4.0, 0.5], vec![0.5, 0.5, 4.0]]).unwrap();
        let obs = noisy_model(3, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut state = 0usize;
        let stream: Vec<usize> = (0..400)
            .map(|_| {
                state = if rng.random::<f64>() < 0.85 { (state + 1) % 3 } else { state };
                if rng.random::<f64>() < 0.1 { (state + 1 + rng.random_range(0..2)) % 3 } else { state }
            })
            .collect();
        let adaptive = stream_log_likelihood(StructureMode::Adaptive, &alpha, &obs, &stream);
        let prior = stream_log_likelihood(StructureMode::PriorOnly, &alpha, &obs, &stream);
        assert!(adaptive > prior, "adaptive {adaptive} prior {prior}");
    }

    #[test]
    fn belief_stays_normalized_and_likelihood_positive() {
        let alpha = HyperMatrix::uniform(4, 0.2).unwrap();
        let mut s = init_structure(alpha, noisy_model(4, 0.7), StructureMode::Adaptive).unwrap();
        for k in 0..200 {
            let l = s.step(v((k * k + 3) % 4)).unwrap();
            assert!(l.value() > 0.0);
            assert!((s.view_belief().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(s.step(v(4)).is_err());
    }
}
