use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use platoon_core::montecarlo::{
    simulate_aloha_collision, simulate_reservation_latency, Arrival, TrialConfig,
};
use platoon_core::qos::{
    aloha_collision_probability, max_vehicles_aloha, max_vehicles_reservation,
    platoon_size_in_coverage, platoon_size_out_of_coverage, reservation_latency, road_capacity,
    slots_per_interval, LatencyVariant, PlatoonSizeDistribution, QosTarget, RadioConfig,
    RegulatoryCap, RoadGeometry, TrafficModel,
};
use platoon_core::report::{format_sig, write_event_log, write_metrics_csv, write_summary};
use platoon_core::{run, MetricsReport, Scenario, SimError};
use serde::Deserialize;

use crate::error::CliError;

/// Parameters for the closed-form commands.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub radio: RadioConfig,
    pub traffic: TrafficModel,
    pub qos: QosTarget,
    #[serde(default)]
    pub cap: Option<RegulatoryCap>,
    #[serde(default)]
    pub geometry: Option<RoadGeometry>,
}

pub fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected lo:hi")?;
    let lo: u64 = lo
        .trim()
        .parse()
        .map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: u64 = hi
        .trim()
        .parse()
        .map_err(|e| format!("bad upper bound: {e}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("need 1 <= lo <= hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(|e| CliError::new(crate::error::EXIT_CONFIG, e))
}

pub fn load_analysis(path: &Path) -> Result<AnalysisConfig, CliError> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Scenario::from_json(&read(path)?)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut out = BufWriter::new(fs::File::create(&path)?);
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

fn variant_name(v: LatencyVariant) -> &'static str {
    match v {
        LatencyVariant::AsPrinted => "as_printed",
        LatencyVariant::Calibrated => "calibrated",
    }
}

pub fn analyze(
    config: &Path,
    out: &Path,
    (lo, hi): (u64, u64),
    variant: LatencyVariant,
) -> Result<(), CliError> {
    let cfg = load_analysis(config)?;
    let slots = slots_per_interval(&cfg.radio, &cfg.traffic)?;

    let mut latency =
        String::from("# x: n [vehicles]; y: reservation_latency_s [s]\nn,reservation_latency_s\n");
    // Reservation latency is undefined once the platoon outgrows the slot budget.
    for n in lo..=hi.min(slots) {
        let dist = PlatoonSizeDistribution::point(n)?;
        let t = reservation_latency(&dist, &cfg.radio, &cfg.traffic, variant)?;
        writeln!(latency, "{n},{}", format_sig(t)).expect("string write");
    }
    let mut collision =
        String::from("# x: n [vehicles]; y: aloha_collision_prob\nn,aloha_collision_prob\n");
    for n in lo..=hi {
        let p = aloha_collision_probability(&PlatoonSizeDistribution::point(n)?, slots)?;
        writeln!(collision, "{n},{}", format_sig(p)).expect("string write");
    }
    write_file(out, "latency.csv", |w| w.write_all(latency.as_bytes()))?;
    write_file(out, "collision.csv", |w| w.write_all(collision.as_bytes()))?;

    let aloha = max_vehicles_aloha(&cfg.radio, &cfg.traffic, &cfg.qos)?;
    let reservation = max_vehicles_reservation(&cfg.radio, &cfg.traffic, &cfg.qos, variant)?;
    let printed = max_vehicles_reservation(
        &cfg.radio,
        &cfg.traffic,
        &cfg.qos,
        LatencyVariant::AsPrinted,
    )?;
    let mut summary = format!(
        "n_slots={slots} aloha_max={aloha} reservation_max={reservation} variant={} reservation_max_as_printed={printed}",
        variant_name(variant)
    );
    if let Some(cap) = cfg.cap {
        let inside = platoon_size_in_coverage(&cfg.radio, &cfg.traffic, &cfg.qos, &cap, variant)?;
        let outside = platoon_size_out_of_coverage(&cfg.radio, &cfg.traffic, &cfg.qos, &cap)?;
        write!(
            summary,
            " cap_in_coverage={inside} cap_out_of_coverage={outside}"
        )
        .expect("string write");
    }
    println!("{summary}");
    write_file(out, "summary.txt", |w| writeln!(w, "{summary}"))
}

pub fn capacity(config: &Path, out: &Path, (lo, hi): (u64, u64)) -> Result<(), CliError> {
    let cfg = load_analysis(config)?;
    let geom = cfg
        .geometry
        .ok_or_else(|| CliError::config("capacity needs a `geometry` section"))?;
    let mut csv = String::from("# x: n [vehicles]; y: capacity_vps [vehicles/s]\nn,capacity_vps\n");
    for n in lo..=hi {
        writeln!(csv, "{n},{}", format_sig(road_capacity(&geom, n)?)).expect("string write");
    }
    write_file(out, "capacity.csv", |w| w.write_all(csv.as_bytes()))?;
    let bound = geom.speed_mps() / (geom.vehicle_length_m() + geom.intra_spacing_m());
    println!("n={lo}..{hi} capacity_bound_vps={}", format_sig(bound));
    Ok(())
}

pub fn monte_carlo(
    config: &Path,
    out: &Path,
    (lo, hi): (u64, u64),
    trials: u64,
    seed: u64,
) -> Result<(), CliError> {
    let cfg = load_analysis(config)?;
    let slots = slots_per_interval(&cfg.radio, &cfg.traffic)?;
    let slot_time = cfg.radio.slot_time_s(&cfg.traffic);
    let mc = |e: platoon_core::montecarlo::McError| CliError::config(e);

    let mut aloha = String::from(
        "# x: n [vehicles]; y: collision probability\nn,analytic,mc_mean,std_error,z\n",
    );
    let mut latency = String::from(
        "# x: n [vehicles]; y: reservation latency [s]\nn,analytic_calibrated,analytic_as_printed,mc_mean,mc_p99,mc_max,collisions\n",
    );
    let mut worst_z: f64 = 0.0;
    for n in lo..=hi {
        // One RNG stream family per n keeps rows independent of the range.
        let trial = TrialConfig {
            trials,
            seed: seed.wrapping_add(n),
            n_vehicles: n,
            n_slots: slots,
            slot_time_s: slot_time,
        };
        let est = simulate_aloha_collision(&trial).map_err(mc)?;
        let dist = PlatoonSizeDistribution::point(n)?;
        let exact = aloha_collision_probability(&dist, slots)?;
        let z = est.z_score(exact);
        if z.is_finite() {
            worst_z = worst_z.max(z.abs());
        }
        writeln!(
            aloha,
            "{n},{},{},{},{}",
            format_sig(exact),
            format_sig(est.mean),
            format_sig(est.std_error),
            format_sig(z)
        )
        .expect("string write");

        if n <= slots {
            let stats = simulate_reservation_latency(&trial, Arrival::Synchronized).map_err(mc)?;
            let cal =
                reservation_latency(&dist, &cfg.radio, &cfg.traffic, LatencyVariant::Calibrated)?;
            let printed =
                reservation_latency(&dist, &cfg.radio, &cfg.traffic, LatencyVariant::AsPrinted)?;
            writeln!(
                latency,
                "{n},{},{},{},{},{},{}",
                format_sig(cal),
                format_sig(printed),
                format_sig(stats.mean),
                format_sig(stats.p99),
                format_sig(stats.max),
                stats.collisions
            )
            .expect("string write");
        }
    }
    write_file(out, "mc_aloha.csv", |w| w.write_all(aloha.as_bytes()))?;
    write_file(out, "mc_reservation.csv", |w| {
        w.write_all(latency.as_bytes())
    })?;
    println!(
        "n={lo}..{hi} trials={trials} max_abs_z={}",
        format_sig(worst_z)
    );
    Ok(())
}

/// Writes `events.ndjson`, `metrics.csv` and `summary.json` into `dir`.
pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<(), CliError> {
    write_file(dir, "events.ndjson", |w| {
        write_event_log(&report.event_log, w)
    })?;
    write_file(dir, "metrics.csv", |w| {
        write_metrics_csv(&report.achieved_capacity_vps, w)
    })?;
    write_file(dir, "summary.json", |w| write_summary(report, w))
}

/// Runs a scenario; on an invariant violation the offending world state is
/// saved next to the other outputs.
pub fn run_into(scenario: Scenario, dir: &Path) -> Result<MetricsReport, CliError> {
    match run(scenario) {
        Ok(report) => {
            write_report(&report, dir)?;
            Ok(report)
        }
        Err(e) => {
            if let SimError::Invariant { state, .. } = &e {
                write_file(dir, "invariant_state.json", |w| writeln!(w, "{state}"))?;
            }
            Err(e.into())
        }
    }
}

pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut scenario = load_scenario(config)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let report = run_into(scenario, out)?;
    let s = report.summary();
    println!(
        "ticks={} splits={} merges={} violations={} mean_capacity_vps={}",
        s.ticks,
        s.splits,
        s.merges,
        report.total_violations(),
        format_sig(s.mean_capacity_vps)
    );
    Ok(())
}
