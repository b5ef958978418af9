//! Fixtures shared by the pipeline benchmarks.

use csmhr_core::workload::{elevator_text, restaurant_text, ElevatorConfig, RestaurantConfig};
use csmhr_core::{build, Engine, EngineConfig};

/// Elevator sizes swept by the throughput benches.
pub const ELEVATOR_SIZES: [usize; 3] = [10_000, 50_000, 100_000];

pub fn elevator_input(records: usize) -> String {
    elevator_text(&ElevatorConfig {
        record_count: records,
        ..ElevatorConfig::default()
    })
    .expect("default elevator config is valid")
}

/// Desk-size restaurant input with `records` records.
pub fn restaurant_input(records: usize) -> String {
    restaurant_text(&RestaurantConfig {
        record_count: records,
        ..RestaurantConfig::desk_preset()
    })
    .expect("desk preset is valid")
}

pub fn config(steps: usize, situations: bool) -> EngineConfig {
    let mut c = EngineConfig::new("bench");
    c.transition_steps = steps;
    if !situations {
        c.situations = None;
    }
    c
}

pub fn built(text: &str, steps: usize, situations: bool) -> Engine {
    build(config(steps, situations), text, None).expect("generated input builds")
}
