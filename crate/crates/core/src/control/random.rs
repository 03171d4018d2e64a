use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Agent, AgentError};
use crate::observation::Observation;
use crate::vehicle::ActionCommand;

/// I.i.d. uniform commands on `[−1, 1]²` from a seeded stream.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> ActionCommand {
        let acceleration = self.rng.gen_range(-1.0..=1.0);
        let steering = self.rng.gen_range(-1.0..=1.0);
        ActionCommand::new(acceleration, steering)
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    /// Restarts the stream so every episode with the same seed is identical.
    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    fn act(&mut self, _observation: &Observation) -> Result<ActionCommand, AgentError> {
        Ok(self.sample())
    }
}
