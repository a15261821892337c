//! Closed-form platoon sizing.
//!
//! Road capacity, the bandwidth / platoon-size duality, the slot budget of a
//! band, the slotted-ALOHA collision probability, the reservation queue
//! latency and the coverage-dependent size caps. Everything here is a pure
//! function of its inputs.
//!
//! Units: packet sizes are bits, rates are packets per second, bandwidth is
//! Hz, spectral efficiency is bits/s/Hz, latencies are seconds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QosError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("band supports less than one slot per generation interval ({slots:.6})")]
    ZeroSlots { slots: f64 },
    #[error("platoon size {n} exceeds the slot budget {slots}")]
    ExceedsSlotBudget { n: u64, slots: u64 },
    #[error("no platoon size satisfies the QoS target")]
    NoFeasibleSize,
    #[error("platoon size bound floors to zero vehicles")]
    Infeasible,
}

pub type Result<T> = std::result::Result<T, QosError>;

fn invalid(msg: impl Into<String>) -> QosError {
    QosError::InvalidParameter(msg.into())
}

/// Floors a positive quantity that is mathematically an integer but may sit
/// a few ulps below it after a multiply/divide chain.
fn floor_count(x: f64) -> f64 {
    (x * (1.0 + 1e-12)).floor()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTraffic", into = "RawTraffic")]
pub struct TrafficModel {
    packet_size_bits: u64,
    generation_rate: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    packet_size_bits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    packet_size_bytes: Option<u64>,
    generation_rate: f64,
}

impl TryFrom<RawTraffic> for TrafficModel {
    type Error = QosError;

    fn try_from(raw: RawTraffic) -> Result<Self> {
        match (raw.packet_size_bits, raw.packet_size_bytes) {
            (Some(bits), None) => TrafficModel::new(bits, raw.generation_rate),
            (None, Some(bytes)) => TrafficModel::from_bytes(bytes, raw.generation_rate),
            _ => Err(invalid(
                "exactly one of packet_size_bits or packet_size_bytes must be given",
            )),
        }
    }
}

impl From<TrafficModel> for RawTraffic {
    fn from(t: TrafficModel) -> Self {
        RawTraffic {
            packet_size_bits: Some(t.packet_size_bits),
            packet_size_bytes: None,
            generation_rate: t.generation_rate,
        }
    }
}

impl TrafficModel {
    pub fn new(packet_size_bits: u64, generation_rate: f64) -> Result<Self> {
        if packet_size_bits == 0 {
            return Err(invalid("packet_size_bits must be >= 1"));
        }
        if !(generation_rate > 0.0 && generation_rate.is_finite()) {
            return Err(invalid("generation_rate must be > 0"));
        }
        Ok(Self {
            packet_size_bits,
            generation_rate,
        })
    }

    pub fn from_bytes(packet_size_bytes: u64, generation_rate: f64) -> Result<Self> {
        Self::new(packet_size_bytes.saturating_mul(8), generation_rate)
    }

    pub fn packet_size_bits(&self) -> u64 {
        self.packet_size_bits
    }

    pub fn generation_rate(&self) -> f64 {
        self.generation_rate
    }

    /// Offered load of one vehicle in bits per second.
    pub fn bit_rate(&self) -> f64 {
        self.packet_size_bits as f64 * self.generation_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRadio", into = "RawRadio")]
pub struct RadioConfig {
    bandwidth_hz: f64,
    spectral_efficiency: f64,
    subchannel_count: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRadio {
    bandwidth_hz: f64,
    spectral_efficiency: f64,
    #[serde(default = "one")]
    subchannel_count: u32,
}

fn one() -> u32 {
    1
}

impl TryFrom<RawRadio> for RadioConfig {
    type Error = QosError;
    fn try_from(r: RawRadio) -> Result<Self> {
        RadioConfig::new(r.bandwidth_hz, r.spectral_efficiency, r.subchannel_count)
    }
}

impl From<RadioConfig> for RawRadio {
    fn from(r: RadioConfig) -> Self {
        RawRadio {
            bandwidth_hz: r.bandwidth_hz,
            spectral_efficiency: r.spectral_efficiency,
            subchannel_count: r.subchannel_count,
        }
    }
}

impl RadioConfig {
    pub fn new(bandwidth_hz: f64, spectral_efficiency: f64, subchannel_count: u32) -> Result<Self> {
        if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
            return Err(invalid("bandwidth_hz must be > 0"));
        }
        if !(spectral_efficiency > 0.0 && spectral_efficiency.is_finite()) {
            return Err(invalid("spectral_efficiency must be > 0"));
        }
        if subchannel_count == 0 {
            return Err(invalid("subchannel_count must be >= 1"));
        }
        Ok(Self {
            bandwidth_hz,
            spectral_efficiency,
            subchannel_count,
        })
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    pub fn spectral_efficiency(&self) -> f64 {
        self.spectral_efficiency
    }

    pub fn subchannel_count(&self) -> u32 {
        self.subchannel_count
    }

    /// Spectrum reuse efficiency under equal sub-channelization.
    pub fn reuse_efficiency(&self) -> f64 {
        1.0 / self.subchannel_count as f64
    }

    /// Same radio restricted to the bandwidth of one sub-channel.
    pub fn per_subchannel(&self) -> RadioConfig {
        RadioConfig {
            bandwidth_hz: self.bandwidth_hz / self.subchannel_count as f64,
            spectral_efficiency: self.spectral_efficiency,
            subchannel_count: 1,
        }
    }

    pub fn with_subchannels(&self, subchannel_count: u32) -> Result<RadioConfig> {
        RadioConfig::new(
            self.bandwidth_hz,
            self.spectral_efficiency,
            subchannel_count,
        )
    }

    pub fn with_bandwidth(&self, bandwidth_hz: f64) -> Result<RadioConfig> {
        RadioConfig::new(
            bandwidth_hz,
            self.spectral_efficiency,
            self.subchannel_count,
        )
    }

    /// Air time of one packet, `L_pkt / (S_mcs * B)`.
    pub fn slot_time_s(&self, traffic: &TrafficModel) -> f64 {
        traffic.packet_size_bits as f64 / (self.spectral_efficiency * self.bandwidth_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQos", into = "RawQos")]
pub struct QosTarget {
    reliability_target: f64,
    latency_target_s: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQos {
    reliability_target: f64,
    latency_target_s: f64,
}

impl TryFrom<RawQos> for QosTarget {
    type Error = QosError;
    fn try_from(r: RawQos) -> Result<Self> {
        QosTarget::new(r.reliability_target, r.latency_target_s)
    }
}

impl From<QosTarget> for RawQos {
    fn from(q: QosTarget) -> Self {
        RawQos {
            reliability_target: q.reliability_target,
            latency_target_s: q.latency_target_s,
        }
    }
}

impl QosTarget {
    pub fn new(reliability_target: f64, latency_target_s: f64) -> Result<Self> {
        if !(reliability_target > 0.0 && reliability_target < 1.0) {
            return Err(invalid("reliability_target must lie in (0, 1)"));
        }
        if !(latency_target_s > 0.0 && latency_target_s.is_finite()) {
            return Err(invalid("latency_target_s must be > 0"));
        }
        Ok(Self {
            reliability_target,
            latency_target_s,
        })
    }

    pub fn reliability_target(&self) -> f64 {
        self.reliability_target
    }

    pub fn latency_target_s(&self) -> f64 {
        self.latency_target_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct RoadGeometry {
    vehicle_length_m: f64,
    intra_spacing_m: f64,
    inter_spacing_m: f64,
    speed_mps: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    vehicle_length_m: f64,
    intra_spacing_m: f64,
    inter_spacing_m: f64,
    speed_mps: f64,
}

impl TryFrom<RawGeometry> for RoadGeometry {
    type Error = QosError;
    fn try_from(r: RawGeometry) -> Result<Self> {
        RoadGeometry::new(
            r.vehicle_length_m,
            r.intra_spacing_m,
            r.inter_spacing_m,
            r.speed_mps,
        )
    }
}

impl From<RoadGeometry> for RawGeometry {
    fn from(g: RoadGeometry) -> Self {
        RawGeometry {
            vehicle_length_m: g.vehicle_length_m,
            intra_spacing_m: g.intra_spacing_m,
            inter_spacing_m: g.inter_spacing_m,
            speed_mps: g.speed_mps,
        }
    }
}

impl RoadGeometry {
    pub fn new(
        vehicle_length_m: f64,
        intra_spacing_m: f64,
        inter_spacing_m: f64,
        speed_mps: f64,
    ) -> Result<Self> {
        let all = [
            vehicle_length_m,
            intra_spacing_m,
            inter_spacing_m,
            speed_mps,
        ];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("road geometry values must be strictly positive"));
        }
        if inter_spacing_m <= intra_spacing_m {
            return Err(invalid("inter_spacing_m must exceed intra_spacing_m"));
        }
        Ok(Self {
            vehicle_length_m,
            intra_spacing_m,
            inter_spacing_m,
            speed_mps,
        })
    }

    pub fn vehicle_length_m(&self) -> f64 {
        self.vehicle_length_m
    }

    pub fn intra_spacing_m(&self) -> f64 {
        self.intra_spacing_m
    }

    pub fn inter_spacing_m(&self) -> f64 {
        self.inter_spacing_m
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_mps
    }

    /// Length of a compact platoon of `n` vehicles, bumper to bumper.
    pub fn platoon_length_m(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        n as f64 * self.vehicle_length_m + (n - 1) as f64 * self.intra_spacing_m
    }
}

/// Distribution of the platoon size used in the collision and latency
/// expectations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u64, f64)>", into = "Vec<(u64, f64)>")]
pub struct PlatoonSizeDistribution {
    pmf: Vec<(u64, f64)>,
}

impl TryFrom<Vec<(u64, f64)>> for PlatoonSizeDistribution {
    type Error = QosError;
    fn try_from(pmf: Vec<(u64, f64)>) -> Result<Self> {
        PlatoonSizeDistribution::new(pmf)
    }
}

impl From<PlatoonSizeDistribution> for Vec<(u64, f64)> {
    fn from(d: PlatoonSizeDistribution) -> Self {
        d.pmf
    }
}

impl PlatoonSizeDistribution {
    pub fn new(mut pmf: Vec<(u64, f64)>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(invalid("platoon size distribution is empty"));
        }
        pmf.sort_by_key(|(n, _)| *n);
        if pmf.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid("platoon sizes must be distinct"));
        }
        if pmf.iter().any(|(n, _)| *n == 0) {
            return Err(invalid("platoon sizes must be >= 1"));
        }
        if pmf.iter().any(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(invalid("probabilities must lie in [0, 1]"));
        }
        let total: f64 = pmf.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { pmf })
    }

    pub fn point(n: u64) -> Result<Self> {
        Self::new(vec![(n, 1.0)])
    }

    pub fn pmf(&self) -> &[(u64, f64)] {
        &self.pmf
    }

    pub fn max_size(&self) -> u64 {
        self.pmf.iter().map(|(n, _)| *n).max().unwrap_or(0)
    }

    fn expect(&self, f: impl Fn(u64) -> f64) -> f64 {
        self.pmf.iter().map(|&(n, p)| f(n) * p).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCap", into = "RawCap")]
pub struct RegulatoryCap {
    max_platoon_size: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCap {
    max_platoon_size: u64,
}

impl TryFrom<RawCap> for RegulatoryCap {
    type Error = QosError;
    fn try_from(r: RawCap) -> Result<Self> {
        RegulatoryCap::new(r.max_platoon_size)
    }
}

impl From<RegulatoryCap> for RawCap {
    fn from(c: RegulatoryCap) -> Self {
        RawCap {
            max_platoon_size: c.max_platoon_size,
        }
    }
}

impl RegulatoryCap {
    pub fn new(max_platoon_size: u64) -> Result<Self> {
        if max_platoon_size == 0 {
            return Err(invalid("max_platoon_size must be >= 1"));
        }
        Ok(Self { max_platoon_size })
    }

    pub fn max_platoon_size(&self) -> u64 {
        self.max_platoon_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacProtocol {
    SlottedAloha,
    ReservationBased,
}

/// Which reading of the reservation latency formula to evaluate.
///
/// `AsPrinted` weights the load term `n * L_pkt * R_gen / (S_mcs * B)` by
/// `1 - ((N_s - 1) / N_s)^(n - 1)`. `Calibrated` uses exponent `n` and halves
/// the load term (mean queue position); it is the reading that yields a
/// 394-vehicle platoon for the 3 ms target of the reference parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyVariant {
    AsPrinted,
    #[default]
    Calibrated,
}

/// Vehicles per second through a lane of identical platoons of size `n`.
pub fn road_capacity(geom: &RoadGeometry, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("platoon size must be >= 1"));
    }
    Ok(geom.speed_mps * n as f64 / (geom.platoon_length_m(n) + geom.inter_spacing_m))
}

fn raw_slots(radio: &RadioConfig, traffic: &TrafficModel) -> f64 {
    radio.spectral_efficiency * radio.bandwidth_hz / traffic.bit_rate()
}

/// Slots per generation interval over the full band,
/// `floor(S_mcs * B / (L_pkt * R_gen))`.
pub fn slots_per_interval(radio: &RadioConfig, traffic: &TrafficModel) -> Result<u64> {
    let slots = raw_slots(radio, traffic);
    let floored = floor_count(slots);
    if floored < 1.0 {
        return Err(QosError::ZeroSlots { slots });
    }
    Ok(floored as u64)
}

/// Slot budget of a single sub-channel of bandwidth `B / N_b`.
pub fn slots_per_subchannel(radio: &RadioConfig, traffic: &TrafficModel) -> Result<u64> {
    slots_per_interval(&radio.per_subchannel(), traffic)
}

/// `1 - ((N_s - 1) / N_s)^exponent`, evaluated without cancellation.
fn contention_weight(slots: u64, exponent: u64) -> f64 {
    if exponent == 0 {
        return 0.0;
    }
    if slots == 1 {
        return 1.0;
    }
    let log_q = (-1.0 / slots as f64).ln_1p();
    -(exponent as f64 * log_q).exp_m1()
}

/// Collision probability of a tagged vehicle sharing `slots` slots with
/// `n - 1` other uncoordinated transmitters.
pub fn collision_probability(n: u64, slots: u64) -> f64 {
    contention_weight(slots, n.saturating_sub(1))
}

pub fn aloha_collision_probability(dist: &PlatoonSizeDistribution, slots: u64) -> Result<f64> {
    if slots == 0 {
        return Err(invalid("slot count must be >= 1"));
    }
    Ok(dist.expect(|n| collision_probability(n, slots)))
}

/// Largest platoon whose slotted-ALOHA collision probability stays within
/// the reliability target.
pub fn max_vehicles_aloha(
    radio: &RadioConfig,
    traffic: &TrafficModel,
    qos: &QosTarget,
) -> Result<u64> {
    let slots = slots_per_interval(radio, traffic)?;
    largest_satisfying(
        |n| collision_probability(n, slots) <= qos.reliability_target,
        None,
    )
}

/// Linear scan from 1 with early exit; the predicate must be monotone
/// (true up to some n*, false afterwards).
fn largest_satisfying(pred: impl Fn(u64) -> bool, limit: Option<u64>) -> Result<u64> {
    if !pred(1) {
        return Err(QosError::NoFeasibleSize);
    }
    let mut n = 1;
    while limit.is_none_or(|l| n < l) && pred(n + 1) {
        n += 1;
    }
    Ok(n)
}

fn point_latency(n: u64, slots: u64, load_per_vehicle_s: f64, variant: LatencyVariant) -> f64 {
    let load = n as f64 * load_per_vehicle_s;
    match variant {
        LatencyVariant::AsPrinted => contention_weight(slots, n - 1) * load,
        LatencyVariant::Calibrated => contention_weight(slots, n) * 0.5 * load,
    }
}

pub fn reservation_latency(
    dist: &PlatoonSizeDistribution,
    radio: &RadioConfig,
    traffic: &TrafficModel,
    variant: LatencyVariant,
) -> Result<f64> {
    let slots = slots_per_interval(radio, traffic)?;
    let n_max = dist.max_size();
    if n_max > slots {
        return Err(QosError::ExceedsSlotBudget { n: n_max, slots });
    }
    let load = traffic.bit_rate() / (radio.spectral_efficiency * radio.bandwidth_hz);
    Ok(dist.expect(|n| point_latency(n, slots, load, variant)))
}

/// Largest platoon (at most `N_s`) whose reservation latency meets the
/// latency target.
pub fn max_vehicles_reservation(
    radio: &RadioConfig,
    traffic: &TrafficModel,
    qos: &QosTarget,
    variant: LatencyVariant,
) -> Result<u64> {
    let slots = slots_per_interval(radio, traffic)?;
    let load = traffic.bit_rate() / (radio.spectral_efficiency * radio.bandwidth_hz);
    largest_satisfying(
        |n| point_latency(n, slots, load, variant) <= qos.latency_target_s,
        Some(slots),
    )
}

pub fn max_vehicles(
    protocol: MacProtocol,
    radio: &RadioConfig,
    traffic: &TrafficModel,
    qos: &QosTarget,
    variant: LatencyVariant,
) -> Result<u64> {
    match protocol {
        MacProtocol::SlottedAloha => max_vehicles_aloha(radio, traffic, qos),
        MacProtocol::ReservationBased => max_vehicles_reservation(radio, traffic, qos, variant),
    }
}

/// `eta_MAC = N_v / N_s` for the selected protocol.
pub fn mac_efficiency(
    protocol: MacProtocol,
    radio: &RadioConfig,
    traffic: &TrafficModel,
    qos: &QosTarget,
    variant: LatencyVariant,
) -> Result<f64> {
    let slots = slots_per_interval(radio, traffic)?;
    let n = max_vehicles(protocol, radio, traffic, qos, variant)?;
    Ok(n as f64 / slots as f64)
}

fn check_efficiency(name: &str, eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(invalid(format!("{name} must lie in (0, 1], got {eta}")));
    }
    Ok(())
}

/// Bandwidth needed to carry `n_vehicles` at the given MAC and reuse
/// efficiencies.
pub fn required_bandwidth(
    traffic: &TrafficModel,
    n_vehicles: u64,
    spectral_efficiency: f64,
    eta_mac: f64,
    eta_b: f64,
) -> Result<f64> {
    check_efficiency("eta_mac", eta_mac)?;
    check_efficiency("eta_b", eta_b)?;
    if n_vehicles == 0 {
        return Err(invalid("n_vehicles must be >= 1"));
    }
    if !(spectral_efficiency > 0.0) {
        return Err(invalid("spectral_efficiency must be > 0"));
    }
    Ok(traffic.bit_rate() * n_vehicles as f64 / (spectral_efficiency * eta_mac * eta_b))
}

/// Inverse of [`required_bandwidth`]: vehicles the band carries at the given
/// efficiencies. [`QosError::Infeasible`] when not even one vehicle fits.
pub fn max_platoon_size(
    radio: &RadioConfig,
    traffic: &TrafficModel,
    eta_mac: f64,
    eta_b: f64,
) -> Result<u64> {
    check_efficiency("eta_mac", eta_mac)?;
    check_efficiency("eta_b", eta_b)?;
    let n = floor_count(
        radio.bandwidth_hz * radio.spectral_efficiency * eta_mac * eta_b / traffic.bit_rate(),
    );
    if n < 1.0 {
        return Err(QosError::Infeasible);
    }
    Ok(n as u64)
}

/// Size cap while a base station coordinates the MAC.
pub fn platoon_size_in_coverage(
    radio: &RadioConfig,
    traffic: &TrafficModel,
    qos: &QosTarget,
    cap: &RegulatoryCap,
    variant: LatencyVariant,
) -> Result<u64> {
    Ok(max_vehicles_reservation(radio, traffic, qos, variant)?.min(cap.max_platoon_size))
}

/// Size cap under autonomous slotted ALOHA.
pub fn platoon_size_out_of_coverage(
    radio: &RadioConfig,
    traffic: &TrafficModel,
    qos: &QosTarget,
    cap: &RegulatoryCap,
) -> Result<u64> {
    Ok(max_vehicles_aloha(radio, traffic, qos)?.min(cap.max_platoon_size))
}

/// Evaluation parameter set used throughout the tests and shipped configs.
pub mod presets {
    use super::*;

    pub fn baseline_traffic() -> TrafficModel {
        TrafficModel::from_bytes(50, 10.0).expect("valid preset")
    }

    pub fn baseline_radio() -> RadioConfig {
        RadioConfig::new(10e6, 2.0, 1).expect("valid preset")
    }

    pub fn baseline_qos() -> QosTarget {
        QosTarget::new(0.001, 3e-3).expect("valid preset")
    }

    pub fn baseline_geometry() -> RoadGeometry {
        RoadGeometry::new(1.5, 1.0, 50.0, 20.0).expect("valid preset")
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    /// Direct evaluation by repeated multiplication, independent of the
    /// `ln_1p`/`exp_m1` route.
    fn oracle_pc(n: u64, slots: u64) -> f64 {
        let q = (slots as f64 - 1.0) / slots as f64;
        let mut p = 1.0;
        for _ in 1..n {
            p *= q;
        }
        1.0 - p
    }

    #[test]
    fn road_capacity_examples() {
        let g = baseline_geometry();
        assert!(close(road_capacity(&g, 10).unwrap(), 200.0 / 74.0, 1e-12));
        assert!(close(road_capacity(&g, 1).unwrap(), 20.0 / 51.5, 1e-12));
        let big = road_capacity(&g, 1_000_000).unwrap();
        assert!(big < 8.0 && big > 7.99);
        assert!(road_capacity(&g, 0).is_err());
    }

    #[test]
    fn slot_budget() {
        let t = baseline_traffic();
        assert_eq!(t.packet_size_bits(), 400);
        assert_eq!(slots_per_interval(&baseline_radio(), &t).unwrap(), 5000);
        let wide = baseline_radio().with_bandwidth(20e6).unwrap();
        assert_eq!(slots_per_interval(&wide, &t).unwrap(), 10000);
        let fat = TrafficModel::new(20_000_000, 2.0).unwrap();
        assert!(matches!(
            slots_per_interval(&baseline_radio(), &fat),
            Err(QosError::ZeroSlots { .. })
        ));
        let quad = baseline_radio().with_subchannels(4).unwrap();
        assert_eq!(slots_per_subchannel(&quad, &t).unwrap(), 1250);
        assert_eq!(slots_per_interval(&quad, &t).unwrap(), 5000);
    }

    #[test]
    fn collision_probability_examples() {
        let p1 = aloha_collision_probability(&PlatoonSizeDistribution::point(1).unwrap(), 17);
        assert_eq!(p1.unwrap(), 0.0);
        let p6 = collision_probability(6, 5000);
        assert!(close(p6, oracle_pc(6, 5000), 1e-12));
        assert!(close(p6, 9.996000799918914e-4, 1e-9));
        assert!(p6 <= 0.001);
        let p7 = collision_probability(7, 5000);
        assert!(close(p7, 1.199400159975883e-3, 1e-9));
        assert!(p7 > 0.001);
        assert_eq!(collision_probability(2, 1), 1.0);
    }

    #[test]
    fn aloha_maximum() {
        let q = baseline_qos();
        assert_eq!(
            max_vehicles_aloha(&baseline_radio(), &baseline_traffic(), &q).unwrap(),
            6
        );

        // Just below P_c(2) = 1/N_s only a lone vehicle fits.
        let tight = QosTarget::new(1.0 / 5000.0 * 0.999, 3e-3).unwrap();
        assert_eq!(
            max_vehicles_aloha(&baseline_radio(), &baseline_traffic(), &tight).unwrap(),
            1
        );

        // N_s = 100: brute-force the boundary with the oracle.
        let traffic = TrafficModel::new(400, 10.0).unwrap();
        let radio = RadioConfig::new(100.0 * 4000.0 / 2.0, 2.0, 1).unwrap();
        assert_eq!(slots_per_interval(&radio, &traffic).unwrap(), 100);
        let loose = QosTarget::new(0.05, 1.0).unwrap();
        let brute = (1..=100)
            .filter(|&n| oracle_pc(n, 100) <= 0.05)
            .max()
            .unwrap();
        assert_eq!(brute, 6);
        assert_eq!(max_vehicles_aloha(&radio, &traffic, &loose).unwrap(), brute);
    }

    #[test]
    fn reservation_latency_examples() {
        let (r, t) = (baseline_radio(), baseline_traffic());
        let point = |n| PlatoonSizeDistribution::point(n).unwrap();
        assert_eq!(
            reservation_latency(&point(1), &r, &t, LatencyVariant::AsPrinted).unwrap(),
            0.0
        );
        let cal = |n| reservation_latency(&point(n), &r, &t, LatencyVariant::Calibrated).unwrap();
        assert!(close(cal(394), 2.985831797107824e-3, 1e-9));
        assert!(cal(394) <= 3e-3 && cal(395) > 3e-3);
        let printed = reservation_latency(&point(394), &r, &t, LatencyVariant::AsPrinted).unwrap();
        assert!(close(printed, 5.957095013218292e-3, 1e-9));
        assert!(matches!(
            reservation_latency(&point(5001), &r, &t, LatencyVariant::Calibrated),
            Err(QosError::ExceedsSlotBudget { .. })
        ));
    }

    #[test]
    fn reservation_maximum() {
        let (r, t, q) = (baseline_radio(), baseline_traffic(), baseline_qos());
        assert_eq!(
            max_vehicles_reservation(&r, &t, &q, LatencyVariant::Calibrated).unwrap(),
            394
        );
        assert_eq!(
            max_vehicles_reservation(&r, &t, &q, LatencyVariant::AsPrinted).unwrap(),
            278
        );
        let lax = QosTarget::new(0.001, 10.0).unwrap();
        assert_eq!(
            max_vehicles_reservation(&r, &t, &lax, LatencyVariant::Calibrated).unwrap(),
            5000
        );
    }

    #[test]
    fn efficiencies_and_ordering() {
        let (r, t, q) = (baseline_radio(), baseline_traffic(), baseline_qos());
        let v = LatencyVariant::Calibrated;
        let aloha = mac_efficiency(MacProtocol::SlottedAloha, &r, &t, &q, v).unwrap();
        let res = mac_efficiency(MacProtocol::ReservationBased, &r, &t, &q, v).unwrap();
        assert!(close(aloha, 0.0012, 1e-12));
        assert!(close(res, 0.0788, 1e-12));
        assert!(res > aloha);
    }

    #[test]
    fn bandwidth_duality() {
        let t = baseline_traffic();
        assert!(close(
            required_bandwidth(&t, 1, 2.0, 1.0, 1.0).unwrap(),
            2000.0,
            1e-12
        ));
        let full = required_bandwidth(&t, 10, 2.0, 0.5, 1.0).unwrap();
        let half = required_bandwidth(&t, 10, 2.0, 0.5, 0.5).unwrap();
        assert!(close(half, 2.0 * full, 1e-12));
        assert!(close(
            required_bandwidth(&t, 394, 2.0, 0.0788, 1.0).unwrap(),
            10e6,
            1e-9
        ));
        assert!(required_bandwidth(&t, 1, 2.0, 0.0, 1.0).is_err());
        assert!(required_bandwidth(&t, 1, 2.0, 1.0, 1.5).is_err());

        let r = baseline_radio();
        assert_eq!(max_platoon_size(&r, &t, 1.0, 1.0).unwrap(), 5000);
        assert_eq!(max_platoon_size(&r, &t, 0.0012, 1.0).unwrap(), 6);
        assert_eq!(max_platoon_size(&r, &t, 1.0, 0.5).unwrap(), 2500);
        let narrow = r.with_bandwidth(1000.0).unwrap();
        assert_eq!(
            max_platoon_size(&narrow, &t, 1.0, 1.0),
            Err(QosError::Infeasible)
        );
    }

    #[test]
    fn coverage_caps() {
        let (r, t, q) = (baseline_radio(), baseline_traffic(), baseline_qos());
        let v = LatencyVariant::Calibrated;
        let cap = |n| RegulatoryCap::new(n).unwrap();
        assert_eq!(
            platoon_size_in_coverage(&r, &t, &q, &cap(1000), v).unwrap(),
            394
        );
        assert_eq!(
            platoon_size_in_coverage(&r, &t, &q, &cap(20), v).unwrap(),
            20
        );
        assert_eq!(platoon_size_in_coverage(&r, &t, &q, &cap(1), v).unwrap(), 1);
        assert_eq!(
            platoon_size_out_of_coverage(&r, &t, &q, &cap(1000)).unwrap(),
            6
        );
        assert_eq!(
            platoon_size_out_of_coverage(&r, &t, &q, &cap(4)).unwrap(),
            4
        );
        assert!(RegulatoryCap::new(0).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(PlatoonSizeDistribution::new(vec![]).is_err());
        assert!(PlatoonSizeDistribution::new(vec![(0, 1.0)]).is_err());
        assert!(PlatoonSizeDistribution::new(vec![(2, 0.5), (2, 0.5)]).is_err());
        assert!(PlatoonSizeDistribution::new(vec![(2, 0.5), (3, 0.4)]).is_err());
        assert!(PlatoonSizeDistribution::new(vec![(2, 0.5), (3, 0.5)]).is_ok());
    }

    #[test]
    fn distribution_linearity() {
        let (r, t) = (baseline_radio(), baseline_traffic());
        let pmf = vec![(1, 0.1), (6, 0.2), (40, 0.3), (394, 0.4)];
        let dist = PlatoonSizeDistribution::new(pmf.clone()).unwrap();
        let mixed = aloha_collision_probability(&dist, 5000).unwrap();
        let summed: f64 = pmf
            .iter()
            .map(|&(n, p)| p * collision_probability(n, 5000))
            .sum();
        assert!((mixed - summed).abs() <= 1e-12);
        for variant in [LatencyVariant::AsPrinted, LatencyVariant::Calibrated] {
            let mixed = reservation_latency(&dist, &r, &t, variant).unwrap();
            let summed: f64 = pmf
                .iter()
                .map(|&(n, p)| {
                    let d = PlatoonSizeDistribution::point(n).unwrap();
                    p * reservation_latency(&d, &r, &t, variant).unwrap()
                })
                .sum();
            assert!((mixed - summed).abs() <= 1e-12);
        }
    }

    #[test]
    fn traffic_accepts_bytes_or_bits() {
        let t: TrafficModel =
            serde_json::from_str(r#"{"packet_size_bytes": 50, "generation_rate": 10}"#).unwrap();
        assert_eq!(t.packet_size_bits(), 400);
        let t: TrafficModel =
            serde_json::from_str(r#"{"packet_size_bits": 400, "generation_rate": 10}"#).unwrap();
        assert_eq!(t.packet_size_bits(), 400);
        assert!(serde_json::from_str::<TrafficModel>(
            r#"{"packet_size_bits": 400, "packet_size_bytes": 50, "generation_rate": 10}"#
        )
        .is_err());
        assert!(serde_json::from_str::<TrafficModel>(
            r#"{"packet_size_bits": 400, "generation_rate": 10, "extra": 1}"#
        )
        .is_err());
    }

    #[test]
    fn invalid_types_rejected() {
        assert!(TrafficModel::new(0, 10.0).is_err());
        assert!(TrafficModel::new(400, 0.0).is_err());
        assert!(RadioConfig::new(0.0, 2.0, 1).is_err());
        assert!(RadioConfig::new(1.0, 2.0, 0).is_err());
        assert!(QosTarget::new(1.0, 1.0).is_err());
        assert!(QosTarget::new(0.5, 0.0).is_err());
        assert!(RoadGeometry::new(1.5, 50.0, 1.0, 20.0).is_err());
    }
}
