// Loaded by other test files through `mod common`.
#![allow(dead_code)]

use std::path::PathBuf;

use platoon_core::Scenario;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

pub fn load(name: &str) -> Scenario {
    let text = std::fs::read_to_string(config_path(name)).expect("config readable");
    Scenario::from_json(&text).expect("config parses")
}
