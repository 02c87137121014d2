//! The interaction surface between learners and an environment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arm::Arm;
use crate::sem::SemInstance;

/// Anything a bandit learner can pull arms against.
pub trait Environment {
    fn node_count(&self) -> usize;

    /// Plays one round under `arm` and returns the realized node values.
    fn play(&mut self, arm: &Arm) -> Vec<f64>;
}

/// A [`SemInstance`] coupled with its own seeded RNG stream.
///
/// Instances are immutable and shareable; each environment owns an
/// independent stream so parallel replications stay deterministic.
pub struct SemEnvironment<'a> {
    instance: &'a SemInstance,
    rng: ChaCha8Rng,
    rounds: usize,
}

impl<'a> SemEnvironment<'a> {
    pub fn new(instance: &'a SemInstance, seed: u64) -> Self {
        SemEnvironment {
            instance,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rounds: 0,
        }
    }

    pub fn instance(&self) -> &SemInstance {
        self.instance
    }

    /// Rounds played so far.
    pub fn rounds(&self) -> usize {
        self.rounds
    }
}

impl Environment for SemEnvironment<'_> {
    fn node_count(&self) -> usize {
        self.instance.node_count()
    }

    fn play(&mut self, arm: &Arm) -> Vec<f64> {
        self.rounds += 1;
        self.instance.sample_with(arm, &mut self.rng)
    }
}
