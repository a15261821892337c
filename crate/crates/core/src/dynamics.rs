//! Coverage-driven platoon state machine: two-threshold split trigger,
//! mid-platoon splitting, the single-channel separation maneuver and
//! in-coverage merging.
//!
//! State flow:
//!
//! ```text
//! Steady --(signal < P1)--> PrepareSplit --(signal < P2)--> Splitting
//!   ^  ^                        |                               |
//!   |  +----(signal >= P1)------+                               v
//!   |                              rear piece: Separating, or Steady when
//!   +--------------------------<-- a vacant sub-channel was assigned
//!
//! Steady --(merge accepted)--> Merging --(gap closed)--> Steady
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectrum::{PlatoonId, SubChannelId};

pub type VehicleId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("platoon {platoon} is in state {state:?}, which does not accept {op}")]
    WrongState {
        platoon: PlatoonId,
        state: PlatoonState,
        op: &'static str,
    },
    #[error("platoon {platoon} has {size} vehicles, no split needed for a cap of {max}")]
    NoSplitNeeded {
        platoon: PlatoonId,
        size: usize,
        max: u64,
    },
    #[error("maximum size must be >= 1")]
    ZeroCap,
    #[error("empty member list")]
    Empty,
    #[error("split threshold {split_dbm} dBm must be below prepare threshold {prepare_dbm} dBm")]
    Thresholds { prepare_dbm: f64, split_dbm: f64 },
    #[error("invalid maneuver parameter: {0}")]
    Maneuver(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: VehicleId,
    /// Front bumper, longitudinal coordinate.
    pub position_m: f64,
    pub velocity_mps: f64,
    pub length_m: f64,
}

impl Vehicle {
    pub fn rear_m(&self) -> f64 {
        self.position_m - self.length_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlatoonState {
    Steady,
    PrepareSplit,
    Splitting,
    Separating,
    Merging,
}

/// An ordered vehicle string, front to rear. The leader is always the first
/// member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Platoon {
    pub id: PlatoonId,
    members: Vec<VehicleId>,
    pub subchannel_id: Option<SubChannelId>,
    pub fsm_state: PlatoonState,
    pub prospective_leader_id: Option<VehicleId>,
}

impl Platoon {
    pub fn new(id: PlatoonId, members: Vec<VehicleId>) -> Result<Self, DynamicsError> {
        if members.is_empty() {
            return Err(DynamicsError::Empty);
        }
        Ok(Self {
            id,
            members,
            subchannel_id: None,
            fsm_state: PlatoonState::Steady,
            prospective_leader_id: None,
        })
    }

    pub fn with_subchannel(mut self, channel: SubChannelId) -> Self {
        self.subchannel_id = Some(channel);
        self
    }

    pub fn leader_vehicle_id(&self) -> VehicleId {
        self.members[0]
    }

    pub fn members(&self) -> &[VehicleId] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Index where a mid-split cuts the member list; the front keeps the
    /// extra vehicle on odd sizes.
    fn mid(&self) -> usize {
        self.members.len().div_ceil(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawThresholds", into = "RawThresholds")]
pub struct SignalThresholds {
    prepare_dbm: f64,
    split_dbm: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThresholds {
    prepare_dbm: f64,
    split_dbm: f64,
}

impl TryFrom<RawThresholds> for SignalThresholds {
    type Error = DynamicsError;
    fn try_from(r: RawThresholds) -> Result<Self, DynamicsError> {
        SignalThresholds::new(r.prepare_dbm, r.split_dbm)
    }
}

impl From<SignalThresholds> for RawThresholds {
    fn from(t: SignalThresholds) -> Self {
        RawThresholds {
            prepare_dbm: t.prepare_dbm,
            split_dbm: t.split_dbm,
        }
    }
}

impl SignalThresholds {
    pub fn new(prepare_dbm: f64, split_dbm: f64) -> Result<Self, DynamicsError> {
        if !(split_dbm < prepare_dbm) {
            return Err(DynamicsError::Thresholds {
                prepare_dbm,
                split_dbm,
            });
        }
        Ok(Self {
            prepare_dbm,
            split_dbm,
        })
    }

    pub fn prepare_dbm(&self) -> f64 {
        self.prepare_dbm
    }

    pub fn split_dbm(&self) -> f64 {
        self.split_dbm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerDecision {
    Hold,
    /// Entered `PrepareSplit`; the caller starts sensing sub-channels.
    Prepare {
        prospective_leader: VehicleId,
    },
    /// Entered `Splitting`.
    Split,
    /// Signal recovered above P1; back to `Steady`.
    Abort,
}

pub fn evaluate_split_trigger(
    platoon: &mut Platoon,
    signal_dbm: f64,
    thresholds: &SignalThresholds,
) -> Result<TriggerDecision, DynamicsError> {
    match platoon.fsm_state {
        PlatoonState::Steady if signal_dbm < thresholds.prepare_dbm => {
            let leader = designate_leader(&platoon.members[platoon.mid()..])?;
            platoon.fsm_state = PlatoonState::PrepareSplit;
            platoon.prospective_leader_id = Some(leader);
            Ok(TriggerDecision::Prepare {
                prospective_leader: leader,
            })
        }
        PlatoonState::Steady => Ok(TriggerDecision::Hold),
        PlatoonState::PrepareSplit if signal_dbm < thresholds.split_dbm => {
            platoon.fsm_state = PlatoonState::Splitting;
            Ok(TriggerDecision::Split)
        }
        PlatoonState::PrepareSplit if signal_dbm >= thresholds.prepare_dbm => {
            platoon.fsm_state = PlatoonState::Steady;
            platoon.prospective_leader_id = None;
            Ok(TriggerDecision::Abort)
        }
        PlatoonState::PrepareSplit => Ok(TriggerDecision::Hold),
        state => Err(DynamicsError::WrongState {
            platoon: platoon.id,
            state,
            op: "split trigger evaluation",
        }),
    }
}

/// The front-most vehicle of the rear part leads the new platoon.
pub fn designate_leader(rear_members: &[VehicleId]) -> Result<VehicleId, DynamicsError> {
    rear_members.first().copied().ok_or(DynamicsError::Empty)
}

/// One binary mid-split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub front_platoon_id: PlatoonId,
    pub rear_platoon_id: PlatoonId,
    pub front_members: Vec<VehicleId>,
    pub rear_members: Vec<VehicleId>,
    pub rear_leader_id: VehicleId,
    /// Vacant sub-channel given to the rear, if any.
    pub rear_subchannel: Option<SubChannelId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    /// Resulting platoons, front to rear.
    pub platoons: Vec<Platoon>,
    /// Mid-splits in the order they were applied.
    pub plans: Vec<SplitPlan>,
}

/// Splits `platoon` at its middle, then keeps splitting the front-most part
/// that still exceeds `max_size_out`.
///
/// For every new rear part `pick_channel` is asked for a vacant sub-channel,
/// given the pending plan and all parts so far (front to rear, the new rear
/// already included with its parent's sub-channel). A rear part that gets a
/// channel is `Steady`; otherwise it keeps the parent's channel and is
/// `Separating`. New platoon ids are drawn from `next_id`.
pub fn split_platoon<F>(
    platoon: Platoon,
    max_size_out: u64,
    next_id: &mut PlatoonId,
    mut pick_channel: F,
) -> Result<SplitOutcome, DynamicsError>
where
    F: FnMut(&SplitPlan, &[Platoon]) -> Option<SubChannelId>,
{
    if max_size_out == 0 {
        return Err(DynamicsError::ZeroCap);
    }
    if platoon.fsm_state != PlatoonState::Splitting {
        return Err(DynamicsError::WrongState {
            platoon: platoon.id,
            state: platoon.fsm_state,
            op: "split",
        });
    }
    if platoon.size() as u64 <= max_size_out {
        return Err(DynamicsError::NoSplitNeeded {
            platoon: platoon.id,
            size: platoon.size(),
            max: max_size_out,
        });
    }

    let mut parts = vec![Platoon {
        fsm_state: PlatoonState::Steady,
        prospective_leader_id: None,
        ..platoon
    }];
    let mut plans = Vec::new();
    while let Some(idx) = parts.iter().position(|p| p.size() as u64 > max_size_out) {
        let parent = &mut parts[idx];
        let rear_members = parent.members.split_off(parent.mid());
        let rear_leader = designate_leader(&rear_members)?;
        let rear = Platoon {
            id: *next_id,
            members: rear_members.clone(),
            subchannel_id: parent.subchannel_id,
            fsm_state: PlatoonState::Separating,
            prospective_leader_id: None,
        };
        *next_id += 1;
        let mut plan = SplitPlan {
            front_platoon_id: parent.id,
            rear_platoon_id: rear.id,
            front_members: parent.members.clone(),
            rear_members,
            rear_leader_id: rear_leader,
            rear_subchannel: None,
        };
        parts.insert(idx + 1, rear);
        if let Some(c) = pick_channel(&plan, &parts) {
            let rear = &mut parts[idx + 1];
            rear.subchannel_id = Some(c);
            rear.fsm_state = PlatoonState::Steady;
            plan.rear_subchannel = Some(c);
        }
        plans.push(plan);
    }
    Ok(SplitOutcome {
        platoons: parts,
        plans,
    })
}

/// Rear-platoon deceleration that opens the gap to a co-channel platoon
/// ahead until it leaves transmission range. The front platoon keeps its
/// cruise speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationManeuver {
    pub transmission_range_m: f64,
    pub guard_margin_m: f64,
    pub speed_delta_mps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub time_s: f64,
    pub front_velocity_mps: f64,
    pub rear_velocity_mps: f64,
    pub gap_m: f64,
}

impl SeparationManeuver {
    pub fn new(
        transmission_range_m: f64,
        guard_margin_m: f64,
        speed_delta_mps: f64,
    ) -> Result<Self, DynamicsError> {
        if !(transmission_range_m > 0.0) {
            return Err(DynamicsError::Maneuver(
                "transmission range must be > 0".into(),
            ));
        }
        if !(guard_margin_m >= 0.0) {
            return Err(DynamicsError::Maneuver("guard margin must be >= 0".into()));
        }
        if !(speed_delta_mps > 0.0) {
            return Err(DynamicsError::Maneuver("speed delta must be > 0".into()));
        }
        Ok(Self {
            transmission_range_m,
            guard_margin_m,
            speed_delta_mps,
        })
    }

    /// Gap at which the maneuver is complete.
    pub fn target_gap_m(&self) -> f64 {
        self.transmission_range_m + self.guard_margin_m
    }

    /// Whether two co-channel platoons at `gap_m` need to separate at all.
    pub fn required(&self, gap_m: f64) -> bool {
        gap_m <= self.transmission_range_m
    }

    pub fn is_complete(&self, gap_m: f64) -> bool {
        gap_m > self.target_gap_m()
    }

    /// Time to open the gap from `gap_m`, zero when not required.
    pub fn duration_s(&self, gap_m: f64) -> f64 {
        if !self.required(gap_m) {
            return 0.0;
        }
        (self.target_gap_m() - gap_m) / self.speed_delta_mps
    }

    /// Per-step commands for a pair at `gap_m`, cruising at `cruise_mps`.
    /// Empty when the pair is already out of range.
    pub fn commands(&self, gap_m: f64, cruise_mps: f64, dt_s: f64) -> Vec<VelocityCommand> {
        let mut out = Vec::new();
        if !self.required(gap_m) || !(dt_s > 0.0) {
            return out;
        }
        let rear = (cruise_mps - self.speed_delta_mps).max(0.0);
        let closing = (cruise_mps - rear) * dt_s;
        if closing <= 0.0 {
            return out;
        }
        let mut gap = gap_m;
        let mut step = 0u64;
        while !self.is_complete(gap) {
            step += 1;
            gap = gap_m + step as f64 * closing;
            out.push(VelocityCommand {
                time_s: step as f64 * dt_s,
                front_velocity_mps: cruise_mps,
                rear_velocity_mps: rear,
                gap_m: gap,
            });
        }
        out
    }
}

/// Two halves of a split must separate only when they share a sub-channel.
pub fn needs_separation(front: &Platoon, rear: &Platoon) -> bool {
    front.subchannel_id == rear.subchannel_id
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRejection {
    OutOfCoverage,
    SizeExceedsCap { combined: u64, limit: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MergeOutcome {
    /// The merged platoon keeps the front's id, leader and sub-channel and
    /// stays `Merging` until the rear part has closed up.
    Merged(Platoon),
    Rejected(MergeRejection),
}

pub fn merge_platoons(
    front: &Platoon,
    rear: &Platoon,
    max_size_in: u64,
    cap: u64,
    in_coverage: bool,
) -> Result<MergeOutcome, DynamicsError> {
    for p in [front, rear] {
        if p.fsm_state != PlatoonState::Steady {
            return Err(DynamicsError::WrongState {
                platoon: p.id,
                state: p.fsm_state,
                op: "merge",
            });
        }
    }
    if !in_coverage {
        return Ok(MergeOutcome::Rejected(MergeRejection::OutOfCoverage));
    }
    let combined = (front.size() + rear.size()) as u64;
    let limit = max_size_in.min(cap);
    if combined > limit {
        return Ok(MergeOutcome::Rejected(MergeRejection::SizeExceedsCap {
            combined,
            limit,
        }));
    }
    let mut members = front.members.clone();
    members.extend_from_slice(&rear.members);
    Ok(MergeOutcome::Merged(Platoon {
        id: front.id,
        members,
        subchannel_id: front.subchannel_id,
        fsm_state: PlatoonState::Merging,
        prospective_leader_id: None,
    }))
}
