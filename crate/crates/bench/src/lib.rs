//! Shared fixtures for the criterion benches.

use phs_core::gridworld::{generate_scenarios, GridScenario, ScenarioParams};
use phs_core::nn::{Architecture, Network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn scenarios(count: usize) -> Vec<GridScenario> {
    generate_scenarios(17, count, &ScenarioParams::default()).expect("default parameters are solvable")
}

pub fn value_net() -> Network {
    Network::new(Architecture::value_net(), &mut ChaCha8Rng::seed_from_u64(3)).expect("value net is well formed")
}
