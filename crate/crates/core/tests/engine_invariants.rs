//! Structural invariants of the step loop over randomized configurations.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use recourse_sim::domain::{AgentId, Behavior, SimulationConfig};
use recourse_sim::engine::SimulationState;

fn behavior() -> impl Strategy<Value = Behavior> {
    prop::sample::select(vec![
        Behavior::BINARY_CONSTANT,
        Behavior::CONTINUOUS_CONSTANT,
        Behavior::CONTINUOUS_FLEXIBLE,
        Behavior::BINARY_FLEXIBLE,
    ])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, ..ProptestConfig::default() })]

    #[test]
    fn step_loop_invariants(
        seed in any::<u64>(),
        g in 0.0f64..=1.0,
        k in 1usize..=12,
        n_new in 0usize..=15,
        p in 12usize..=60,
        steps in 1usize..=30,
        behavior in behavior(),
    ) {
        let cfg = SimulationConfig { master_seed: seed, g, k, n_new, p, steps, ..Default::default() }
            .with_behavior(behavior);
        let mut state = SimulationState::new(cfg).unwrap();
        let mut won: BTreeSet<AgentId> = BTreeSet::new();
        while !state.is_finished() {
            let before: BTreeSet<AgentId> = state.active_agents().iter().map(|a| a.id).collect();
            let t = state.t();
            let record = state.step().unwrap().clone();
            let entered: BTreeMap<AgentId, usize> =
                state.agent_summaries().iter().map(|a| (a.id, a.entered_at)).collect();
            let population: BTreeSet<AgentId> = entered
                .iter()
                .filter(|(id, &e)| e == t || before.contains(id))
                .map(|(&id, _)| id)
                .collect();

            prop_assert_eq!(record.pop_size, population.len());
            prop_assert_eq!(record.winner_ids.len(), k.min(record.pop_size));
            for w in &record.winner_ids {
                prop_assert!(won.insert(*w), "agent {:?} won twice", w);
                prop_assert!(population.contains(w));
                prop_assert!(state.active_agents().iter().all(|a| a.id != *w));
            }
            for c in &record.candidate_ids {
                prop_assert!(population.contains(c), "candidate outside P_t");
                prop_assert!(entered[c] < t, "entrant counted as a candidate");
            }
            prop_assert_eq!(record.rr.is_none(), record.candidate_ids.is_empty());
            prop_assert_eq!(record.threshold.is_none(), record.pop_size == 0);
        }
    }
}
