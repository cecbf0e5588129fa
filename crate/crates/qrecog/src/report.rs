//! Query counters and the report emitted by every pipeline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Named query counters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Queries(BTreeMap<String, u64>);

impl Queries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, n: u64) {
        *self.0.entry(name.to_string()).or_default() += n;
    }

    pub fn get(&self, name: &str) -> u64 {
        self.0.get(name).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &Queries) {
        for (k, v) in &other.0 {
            self.add(k, *v);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &u64)> {
        self.0.iter()
    }
}

/// Counter of black-box applications of the device under study.
pub const BLACK_BOX: &str = "black_box";
/// Applications of an (approximate) eigenspace reflection.
pub const EIGEN_REFLECTIONS: &str = "eigen_reflections";
/// Applications of start-vector reflections.
pub const START_REFLECTIONS: &str = "start_reflections";
/// Frequency readouts (one revealing run each).
pub const READOUTS: &str = "readouts";
/// Applications made only to tomograph a device for the simulator.
pub const TOMOGRAPHY: &str = "tomography";
/// Applications of the circuit-family application function.
pub const APP: &str = "app";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_accumulate_and_merge() {
        let mut a = Queries::new();
        a.add(BLACK_BOX, 3);
        a.add(BLACK_BOX, 4);
        let mut b = Queries::new();
        b.add(READOUTS, 1);
        b.merge(&a);
        assert_eq!(b.get(BLACK_BOX), 7);
        assert_eq!(b.get(READOUTS), 1);
        assert_eq!(b.get("missing"), 0);
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(json, r#"{"black_box":7,"readouts":1}"#);
    }
}
