//! Random training-scene sampler and fixed evaluation-scene presets.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::StreamRng;
use crate::room::{ear_positions, HeadPose, Position, RoomSpec};
use crate::sh::head_rotation;

/// Bounds of the random room configuration.
pub mod bounds {
    pub const ROOM_X: (f64, f64) = (3.0, 30.0);
    pub const ROOM_Y_FACTOR: (f64, f64) = (0.5, 1.0);
    pub const ROOM_Z: (f64, f64) = (2.5, 5.0);
    pub const HEAD_XY_FRACTION: (f64, f64) = (0.35, 0.65);
    pub const HEAD_Z: (f64, f64) = (1.0, 2.0);
    pub const TARGET_DISTANCE: (f64, f64) = (0.5, 3.0);
    /// Degrees.
    pub const TARGET_ANGLE: (f64, f64) = (-45.0, 45.0);
    /// Degrees.
    pub const HEAD_YAW: (f64, f64) = (-45.0, 45.0);
    /// Degrees.
    pub const HEAD_PITCH: (f64, f64) = (-10.0, 10.0);
    pub const SNR_DB: (f64, f64) = (0.0, 6.0);
    pub const RT60_BASE: (f64, f64) = (0.1, 0.5);
    pub const RT60_SNR_OFFSET: f64 = 0.3;
    pub const RT60_SNR_SCALE: f64 = 5.3;
}

/// Attempts at drawing an in-room target before a seed is rejected.
pub const TARGET_RETRIES: usize = 1000;

/// Target relative to the head: azimuth in the head frame (elevation 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPlacement {
    /// Radians, positive to the left.
    pub azimuth: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub room: RoomSpec,
    pub head: HeadPose,
    pub target: TargetPlacement,
    pub target_position: Position,
    pub snr_db: f64,
    pub seed: u64,
    /// Raw `U(0.1, 0.5)` factor of the RT60 draw; absent for presets.
    pub rt60_draw: Option<f64>,
}

/// World position of a target placed relative to a head.
pub fn target_world_position(head: &HeadPose, target: &TargetPlacement) -> Position {
    let local = Vector3::new(target.azimuth.cos(), target.azimuth.sin(), 0.0) * target.distance;
    (Vector3::from(head.position) + head_rotation(head.yaw, head.pitch) * local).into()
}

/// RT60 coupled to the SNR: `draw * (snr + 0.3) / 5.3`.
pub fn coupled_rt60(draw: f64, snr_db: f64) -> f64 {
    draw * (snr_db + bounds::RT60_SNR_OFFSET) / bounds::RT60_SNR_SCALE
}

/// Optional fixed values for otherwise random fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct SceneOverrides {
    pub snr_db: Option<f64>,
}

pub fn sample_scene(seed: u64) -> Result<SceneSpec> {
    sample_scene_with(seed, SceneOverrides::default())
}

/// Draws one scene from stream 0 of `seed`. Fields are drawn in a fixed order:
/// room x, y factor, z, head x, y, z, yaw, pitch, SNR, RT60 factor, then
/// (distance, angle) pairs until the target lies inside the room.
pub fn sample_scene_with(seed: u64, overrides: SceneOverrides) -> Result<SceneSpec> {
    use bounds::*;
    let mut rng = StreamRng::new(seed, 0);
    let rx = rng.uniform(ROOM_X.0, ROOM_X.1);
    let ry = rx * rng.uniform(ROOM_Y_FACTOR.0, ROOM_Y_FACTOR.1);
    let rz = rng.uniform(ROOM_Z.0, ROOM_Z.1);
    let hx = rng.uniform(HEAD_XY_FRACTION.0 * rx, HEAD_XY_FRACTION.1 * rx);
    let hy = rng.uniform(HEAD_XY_FRACTION.0 * ry, HEAD_XY_FRACTION.1 * ry);
    let hz = rng.uniform(HEAD_Z.0, HEAD_Z.1);
    let yaw = rng.uniform(HEAD_YAW.0, HEAD_YAW.1).to_radians();
    let pitch = rng.uniform(HEAD_PITCH.0, HEAD_PITCH.1).to_radians();
    let snr_draw = rng.uniform(SNR_DB.0, SNR_DB.1);
    let snr_db = overrides.snr_db.unwrap_or(snr_draw);
    let rt60_draw = rng.uniform(RT60_BASE.0, RT60_BASE.1);
    let room = RoomSpec::new([rx, ry, rz], coupled_rt60(rt60_draw, snr_db))?;
    let head = HeadPose::new([hx, hy, hz], yaw, pitch);
    ear_positions(&head, &room)?;
    for _ in 0..TARGET_RETRIES {
        let target = TargetPlacement {
            distance: rng.uniform(TARGET_DISTANCE.0, TARGET_DISTANCE.1),
            azimuth: rng.uniform(TARGET_ANGLE.0, TARGET_ANGLE.1).to_radians(),
        };
        let pos = target_world_position(&head, &target);
        if room.contains(&pos) {
            return Ok(SceneSpec {
                room,
                head,
                target,
                target_position: pos,
                snr_db,
                seed,
                rt60_draw: Some(rt60_draw),
            });
        }
    }
    Err(Error::Data(format!(
        "seed {seed}: no in-room target after {TARGET_RETRIES} draws"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Party,
    Restaurant,
    Office,
}

impl Environment {
    pub const ALL: [Environment; 3] = [Environment::Party, Environment::Restaurant, Environment::Office];

    pub fn dims(self) -> [f64; 3] {
        match self {
            Environment::Party => [15.0, 10.0, 3.5],
            Environment::Restaurant => [28.0, 17.0, 4.2],
            Environment::Office => [5.0, 2.0, 2.5],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Environment::Party => "party",
            Environment::Restaurant => "restaurant",
            Environment::Office => "office",
        }
    }
}

impl std::str::FromStr for Environment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "party" => Ok(Environment::Party),
            "restaurant" => Ok(Environment::Restaurant),
            "office" => Ok(Environment::Office),
            other => Err(invalid(format!("unknown environment {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetAngle {
    Front,
    Right30,
}

impl TargetAngle {
    pub const ALL: [TargetAngle; 2] = [TargetAngle::Front, TargetAngle::Right30];

    /// Head-frame azimuth in radians (right is negative).
    pub fn azimuth(self) -> f64 {
        match self {
            TargetAngle::Front => 0.0,
            TargetAngle::Right30 => -30.0 * PI / 180.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetAngle::Front => "0deg",
            TargetAngle::Right30 => "30deg_right",
        }
    }
}

pub const EVAL_HEAD_HEIGHT: f64 = 1.5;
pub const EVAL_TARGET_DISTANCE: f64 = 1.0;
pub const EVAL_SNR_DB: f64 = 5.0;

/// Evaluation scene: head at the room center, 1.5 m high, facing +x; target
/// at 1 m; binaural SNR +5 dB. `rt60` is supplied by the caller.
pub fn eval_scene_presets(env: Environment, angle: TargetAngle, rt60: f64) -> Result<SceneSpec> {
    let dims = env.dims();
    let room = RoomSpec::new(dims, rt60)?;
    let head = HeadPose::new([dims[0] / 2.0, dims[1] / 2.0, EVAL_HEAD_HEIGHT], 0.0, 0.0);
    let target = TargetPlacement {
        azimuth: angle.azimuth(),
        distance: EVAL_TARGET_DISTANCE,
    };
    let target_position = target_world_position(&head, &target);
    if !room.contains(&target_position) {
        return Err(Error::OutsideRoom {
            what: "target",
            pos: target_position,
            dims,
        });
    }
    let seed = (env as u64) * 2 + angle as u64;
    Ok(SceneSpec {
        room,
        head,
        target,
        target_position,
        snr_db: EVAL_SNR_DB,
        seed,
        rt60_draw: None,
    })
}
