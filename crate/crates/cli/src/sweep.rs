use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use platoon_core::report::format_sig;
use platoon_core::{MetricsReport, Scenario};
use rayon::prelude::*;
use serde_json::Value;

use crate::commands::{load_scenario, run_into};
use crate::error::CliError;

/// Splits `field=v1,v2,...`. Values are read as JSON where possible and as
/// plain strings otherwise.
pub fn parse_spec(spec: &str) -> Result<(String, Vec<(String, Value)>), CliError> {
    let (field, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("sweep `{spec}` is not field=v1,v2,...")))?;
    let field = field.trim();
    if field.is_empty() {
        return Err(CliError::config("sweep field is empty"));
    }
    let values: Vec<(String, Value)> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            let parsed = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            (v.to_string(), parsed)
        })
        .collect();
    if values.is_empty() {
        return Err(CliError::config(format!("sweep `{field}` has no values")));
    }
    Ok((field.to_string(), values))
}

/// Replaces the value at a dotted path; array elements are addressed by
/// index. The path must already exist in the serialized scenario.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    for key in path.split('.') {
        let next = match node {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        };
        node =
            next.ok_or_else(|| CliError::config(format!("unknown scenario parameter `{path}`")))?;
    }
    *node = value;
    Ok(())
}

fn dir_name(field: &str, raw: &str) -> String {
    let safe: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{field}={safe}")
}

pub fn sweep(config: &Path, out: &Path, spec: &str, seed: Option<u64>) -> Result<(), CliError> {
    let mut base = load_scenario(config)?;
    if let Some(seed) = seed {
        base.seed = seed;
    }
    let (field, values) = parse_spec(spec)?;
    let base_json = serde_json::to_value(&base).expect("scenario serializes");

    // Build and validate every variant before running any of them.
    let mut scenarios = Vec::with_capacity(values.len());
    for (raw, value) in &values {
        let mut doc = base_json.clone();
        set_path(&mut doc, &field, value.clone())?;
        let scenario: Scenario = serde_json::from_value(doc)
            .map_err(|e| CliError::config(format!("{field}={raw}: {e}")))?;
        scenarios.push((raw.clone(), scenario));
    }

    let results: Vec<Result<MetricsReport, CliError>> = scenarios
        .into_par_iter()
        .map(|(raw, scenario)| run_into(scenario, &out.join(dir_name(&field, &raw))))
        .collect();

    let mut csv = format!(
        "# x: {field}; y: mean_capacity_vps [vehicles/s]\nvalue,splits,merges,maneuver_time_s,max_split_grace_s,violations,mean_capacity_vps,final_capacity_vps,final_platoons\n"
    );
    for ((raw, _), result) in values.iter().zip(results) {
        let report = result?;
        let s = report.summary();
        writeln!(
            csv,
            "{raw},{},{},{},{},{},{},{},{}",
            s.splits,
            s.merges,
            format_sig(s.maneuver_time_s),
            format_sig(s.max_split_grace_s),
            report.total_violations(),
            format_sig(s.mean_capacity_vps),
            format_sig(s.final_capacity_vps),
            s.final_platoon_sizes.len()
        )
        .expect("string write");
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
