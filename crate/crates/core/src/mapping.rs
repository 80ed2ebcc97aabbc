//! Cartesian-space human to humanoid mapping.
//!
//! Six tracked links (pelvis, torso, both hands, both feet) are mapped frame
//! by frame with closed-form rigid transforms, parameterized once by a
//! neutral-pose calibration. The mapping is stateless: every output depends
//! only on the profile and the frame being mapped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::se3::{align_axis, compose, relative, Pose, Rotation, Se3Error, Vec3};

/// Minimum plausible human pelvis height at calibration, meters.
pub const MIN_HUMAN_PELVIS_HEIGHT: f64 = 0.3;
/// Minimum plausible human arm length at calibration, meters.
pub const MIN_HUMAN_ARM_LENGTH: f64 = 0.1;
/// Minimum pelvis-to-headset distance for torso estimation, meters.
pub const MIN_HEADSET_OFFSET: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MappingError {
    #[error("implausible neutral pose: {0}")]
    DegenerateNeutral(String),
    #[error("headset offset from pelvis has norm {0:e}")]
    DegenerateHeadset(f64),
    #[error("invalid robot model: {0}")]
    InvalidRobot(String),
    #[error(transparent)]
    Geometry(#[from] Se3Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Pelvis,
    Torso,
    LeftHand,
    RightHand,
    LeftFoot,
    RightFoot,
}

impl Link {
    pub const ALL: [Link; 6] = [
        Link::Pelvis,
        Link::Torso,
        Link::LeftHand,
        Link::RightHand,
        Link::LeftFoot,
        Link::RightFoot,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn hand(self) -> Link {
        match self {
            Side::Left => Link::LeftHand,
            Side::Right => Link::RightHand,
        }
    }

    pub fn foot(self) -> Link {
        match self {
            Side::Left => Link::LeftFoot,
            Side::Right => Link::RightFoot,
        }
    }
}

/// One value per tracked link.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Links<T> {
    pub pelvis: T,
    pub torso: T,
    pub left_hand: T,
    pub right_hand: T,
    pub left_foot: T,
    pub right_foot: T,
}

impl<T> Links<T> {
    pub fn get(&self, link: Link) -> &T {
        match link {
            Link::Pelvis => &self.pelvis,
            Link::Torso => &self.torso,
            Link::LeftHand => &self.left_hand,
            Link::RightHand => &self.right_hand,
            Link::LeftFoot => &self.left_foot,
            Link::RightFoot => &self.right_foot,
        }
    }

    pub fn get_mut(&mut self, link: Link) -> &mut T {
        match link {
            Link::Pelvis => &mut self.pelvis,
            Link::Torso => &mut self.torso,
            Link::LeftHand => &mut self.left_hand,
            Link::RightHand => &mut self.right_hand,
            Link::LeftFoot => &mut self.left_foot,
            Link::RightFoot => &mut self.right_foot,
        }
    }

    pub fn from_fn(mut f: impl FnMut(Link) -> T) -> Self {
        Links {
            pelvis: f(Link::Pelvis),
            torso: f(Link::Torso),
            left_hand: f(Link::LeftHand),
            right_hand: f(Link::RightHand),
            left_foot: f(Link::LeftFoot),
            right_foot: f(Link::RightFoot),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Link, &T) -> U) -> Links<U> {
        Links::from_fn(|l| f(l, self.get(l)))
    }
}

/// World-frame poses of the six tracked links.
pub type LinkSet = Links<Pose>;

/// A left/right pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerSide<T> {
    pub left: T,
    pub right: T,
}

impl<T> PerSide<T> {
    pub fn new(left: T, right: T) -> Self {
        PerSide { left, right }
    }

    pub fn get(&self, side: Side) -> &T {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn get_mut(&mut self, side: Side) -> &mut T {
        match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }
}

/// Humanoid kinematic constants used by the mapping.
///
/// Shoulder offsets are expressed in the torso frame, which is the frame the
/// hands are re-anchored in. Arm length is measured along the torso `+x` axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub pelvis_height: f64,
    pub shoulder_offset: PerSide<Vec3>,
    pub arm_length: PerSide<f64>,
    pub pelvis_to_torso: Vec3,
    pub neutral_foot: PerSide<Vec3>,
    /// Link orientations of the standing robot; identity when omitted.
    #[serde(default)]
    pub neutral_rotations: Links<Rotation>,
}

impl RobotModel {
    /// Rough proportions of a 1.3 m humanoid.
    pub fn small_humanoid() -> Self {
        RobotModel {
            pelvis_height: 0.75,
            shoulder_offset: PerSide::new(Vec3::new(0.0, 0.15, 0.2), Vec3::new(0.0, -0.15, 0.2)),
            arm_length: PerSide::new(0.45, 0.45),
            pelvis_to_torso: Vec3::new(0.0, 0.0, 0.15),
            neutral_foot: PerSide::new(Vec3::new(0.0, 0.12, 0.03), Vec3::new(0.0, -0.12, 0.03)),
            neutral_rotations: Links::default(),
        }
    }

    pub fn validate(&self) -> Result<(), MappingError> {
        if !(self.pelvis_height > 0.0) {
            return Err(MappingError::InvalidRobot(format!(
                "pelvis height {} must be positive",
                self.pelvis_height
            )));
        }
        for side in Side::BOTH {
            let l = *self.arm_length.get(side);
            if !(l > 0.0) {
                return Err(MappingError::InvalidRobot(format!(
                    "{side:?} arm length {l} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Link poses of the robot standing at the origin.
    pub fn neutral_links(&self) -> LinkSet {
        let rot = &self.neutral_rotations;
        let pelvis = Pose::new(rot.pelvis, Vec3::new(0.0, 0.0, self.pelvis_height));
        let torso = Pose::new(
            rot.torso,
            pelvis.translation + rot.pelvis.apply(&self.pelvis_to_torso),
        );
        let hand = |side: Side| {
            let reach = self.shoulder_offset.get(side) + Vec3::x() * *self.arm_length.get(side);
            Pose::new(*rot.get(side.hand()), torso.transform_point(&reach))
        };
        let foot = |side: Side| Pose::new(*rot.get(side.foot()), *self.neutral_foot.get(side));
        Links {
            pelvis,
            torso,
            left_hand: hand(Side::Left),
            right_hand: hand(Side::Right),
            left_foot: foot(Side::Left),
            right_foot: foot(Side::Right),
        }
    }
}

/// Everything the per-frame mapping needs, fixed at calibration time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    /// Right-composed onto human orientations. Hand offsets act on the
    /// torso-relative hand orientation.
    pub rot_offsets: Links<Rotation>,
    pub human_pelvis_height: f64,
    /// Torso-frame shoulder position (neutral hand with its `x` zeroed).
    pub human_shoulder: PerSide<Vec3>,
    pub human_arm_length: PerSide<f64>,
    pub foot_offset: PerSide<Vec3>,
    pub robot: RobotModel,
}

impl CalibrationProfile {
    /// Pelvis height ratio robot / human.
    pub fn scale(&self) -> f64 {
        self.robot.pelvis_height / self.human_pelvis_height
    }
}

/// One-shot calibration from the human standing in the neutral pose.
pub fn calibrate(neutral: &LinkSet, robot: &RobotModel) -> Result<CalibrationProfile, MappingError> {
    robot.validate()?;
    let human_pelvis_height = neutral.pelvis.translation.z;
    if !(human_pelvis_height > MIN_HUMAN_PELVIS_HEIGHT) {
        return Err(MappingError::DegenerateNeutral(format!(
            "pelvis height {human_pelvis_height} m"
        )));
    }
    let scale = robot.pelvis_height / human_pelvis_height;
    let robot_neutral = robot.neutral_links();

    let mut human_shoulder = PerSide::<Vec3>::default();
    let mut human_arm_length = PerSide::<f64>::default();
    let mut foot_offset = PerSide::<Vec3>::default();
    for side in Side::BOTH {
        let hand = relative(&neutral.torso, neutral.get(side.hand())).translation;
        if !(hand.x > MIN_HUMAN_ARM_LENGTH) {
            return Err(MappingError::DegenerateNeutral(format!(
                "{side:?} arm length {} m",
                hand.x
            )));
        }
        *human_arm_length.get_mut(side) = hand.x;
        *human_shoulder.get_mut(side) = Vec3::new(0.0, hand.y, hand.z);
        *foot_offset.get_mut(side) =
            robot.neutral_foot.get(side) - neutral.get(side.foot()).translation * scale;
    }

    let rot_offsets = Links::from_fn(|link| match link {
        Link::LeftHand | Link::RightHand => {
            let human = neutral.torso.rotation.inverse().compose(&neutral.get(link).rotation);
            let robot = robot_neutral
                .torso
                .rotation
                .inverse()
                .compose(&robot_neutral.get(link).rotation);
            human.inverse().compose(&robot)
        }
        _ => neutral
            .get(link)
            .rotation
            .inverse()
            .compose(&robot_neutral.get(link).rotation),
    });

    Ok(CalibrationProfile {
        rot_offsets,
        human_pelvis_height,
        human_shoulder,
        human_arm_length,
        foot_offset,
        robot: robot.clone(),
    })
}

/// Maps one frame of human link poses to humanoid link targets.
pub fn map_frame(profile: &CalibrationProfile, human: &LinkSet) -> LinkSet {
    let robot = &profile.robot;
    let off = &profile.rot_offsets;
    let scale = profile.scale();

    let pelvis = Pose::new(
        human.pelvis.rotation.compose(&off.pelvis),
        human.pelvis.translation * scale,
    );
    let torso = Pose::new(
        human.torso.rotation.compose(&off.torso),
        pelvis.translation + pelvis.rotation.apply(&robot.pelvis_to_torso),
    );
    let hand = |side: Side| {
        let link = side.hand();
        let rel = relative(&human.torso, human.get(link));
        let reach = (rel.translation - profile.human_shoulder.get(side))
            / *profile.human_arm_length.get(side)
            * *robot.arm_length.get(side);
        let target = Pose::new(
            rel.rotation.compose(off.get(link)),
            robot.shoulder_offset.get(side) + reach,
        );
        compose(&torso, &target)
    };
    let foot = |side: Side| {
        let link = side.foot();
        let h = human.get(link);
        Pose::new(
            h.rotation.compose(off.get(link)),
            h.translation * scale + profile.foot_offset.get(side),
        )
    };

    Links {
        pelvis,
        torso,
        left_hand: hand(Side::Left),
        right_hand: hand(Side::Right),
        left_foot: foot(Side::Left),
        right_foot: foot(Side::Right),
    }
}

/// Torso orientation, in the pelvis frame, from the headset position alone.
///
/// The headset's own orientation is never read.
pub fn torso_from_headset(pelvis: &Pose, headset_position: &Vec3) -> Result<Rotation, MappingError> {
    let local = pelvis
        .rotation
        .inverse()
        .apply(&(headset_position - pelvis.translation));
    let n = local.norm();
    if n <= MIN_HEADSET_OFFSET {
        return Err(MappingError::DegenerateHeadset(n));
    }
    Ok(align_axis(&Vec3::z(), &local)?)
}

/// World-frame torso orientation implied by [`torso_from_headset`].
pub fn world_torso_from_headset(pelvis: &Pose, headset_position: &Vec3) -> Result<Rotation, MappingError> {
    Ok(pelvis.rotation.compose(&torso_from_headset(pelvis, headset_position)?))
}

/// One line of a frame stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedLinkSet {
    pub timestamp_ns: u64,
    #[serde(flatten)]
    pub links: LinkSet,
}

/// Largest translation and rotation discrepancy between two link sets.
pub fn max_discrepancy(a: &LinkSet, b: &LinkSet) -> (f64, f64) {
    Link::ALL.iter().fold((0.0, 0.0), |(dt, dr), &l| {
        let (pa, pb) = (a.get(l), b.get(l));
        (
            f64::max(dt, (pa.translation - pb.translation).norm()),
            f64::max(dr, pa.rotation.angle_to(&pb.rotation)),
        )
    })
}

/// Human neutral pose in the prescribed stance: standing at the origin,
/// arms straight forward along the torso `+x` axis, feet on the ground.
///
/// `height_scale` scales every length of a 1.0 m pelvis-height reference
/// body; `arm_length` is given at that reference scale.
pub fn reference_human_neutral(height_scale: f64, arm_length: f64) -> LinkSet {
    let s = height_scale;
    let pelvis = Pose::from_translation(0.0, 0.0, 1.0 * s);
    let torso = Pose::from_translation(0.0, 0.0, 1.3 * s);
    let hand = |y: f64| Pose::from_translation(arm_length * s, y * s, 1.5 * s);
    let foot = |y: f64| Pose::from_translation(0.0, y * s, 0.02 * s);
    Links {
        pelvis,
        torso,
        left_hand: hand(0.2),
        right_hand: hand(-0.2),
        left_foot: foot(0.1),
        right_foot: foot(-0.1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn rot(axis: Vec3, angle: f64) -> Rotation {
        Rotation::from_axis_angle(&axis, angle).unwrap()
    }

    #[test]
    fn self_calibration_is_identity() {
        let robot = RobotModel::small_humanoid();
        let neutral = robot.neutral_links();
        let profile = calibrate(&neutral, &robot).unwrap();
        for l in Link::ALL {
            assert!(profile.rot_offsets.get(l).angle() < 1e-12);
        }
        assert!(profile.foot_offset.left.norm() < 1e-15);
        assert!(profile.foot_offset.right.norm() < 1e-15);
        assert_eq!(profile.scale(), 1.0);
        let mapped = map_frame(&profile, &neutral);
        let (dt, dr) = max_discrepancy(&mapped, &neutral);
        assert!(dt < 1e-12 && dr < 1e-12, "{dt} {dr}");
    }

    #[test]
    fn foot_offset_formula() {
        let mut robot = RobotModel::small_humanoid();
        robot.pelvis_height = 0.75;
        robot.neutral_foot.left = Vec3::new(0.0, 0.12, 0.03);
        let human = reference_human_neutral(1.0, 0.6);
        assert_eq!(human.pelvis.translation.z, 1.0);
        assert_eq!(human.left_foot.translation, Vec3::new(0.0, 0.1, 0.02));
        let profile = calibrate(&human, &robot).unwrap();
        let d = profile.foot_offset.left;
        assert!((d - Vec3::new(0.0, 0.045, 0.015)).norm() < 1e-15, "{d:?}");
    }

    #[test]
    fn shoulder_and_arm_measurement() {
        let mut human = reference_human_neutral(1.0, 0.6);
        // torso frame at the origin so torso-frame and listed coordinates coincide
        human.torso = Pose::identity();
        human.right_hand = Pose::from_translation(0.6, -0.2, 0.3);
        let profile = calibrate(&human, &RobotModel::small_humanoid()).unwrap();
        assert_eq!(profile.human_arm_length.right, 0.6);
        assert_eq!(profile.human_shoulder.right, Vec3::new(0.0, -0.2, 0.3));
    }

    #[test]
    fn pelvis_scales_with_height_ratio() {
        let human = reference_human_neutral(1.0, 0.6);
        let profile = calibrate(&human, &RobotModel::small_humanoid()).unwrap();
        let mut frame = human;
        frame.pelvis.translation.z = 0.9;
        let out = map_frame(&profile, &frame);
        assert!((out.pelvis.translation.z - 0.675).abs() < 1e-15);
    }

    #[test]
    fn full_extension_reaches_robot_arm_length() {
        let human = reference_human_neutral(1.0, 0.6);
        let robot = RobotModel::small_humanoid();
        let profile = calibrate(&human, &robot).unwrap();
        // swing the right arm about the shoulder, fully extended
        let shoulder_h = human.torso.transform_point(&profile.human_shoulder.right);
        let dir = Vec3::new(0.3, -0.5, 0.8).normalize();
        let mut frame = human;
        frame.right_hand.translation = shoulder_h + dir * 0.6;
        let out = map_frame(&profile, &frame);
        let shoulder_r = out.torso.transform_point(&robot.shoulder_offset.right);
        let reach = out.right_hand.translation - shoulder_r;
        assert!((reach.norm() - robot.arm_length.right).abs() < 1e-12);
        let local = out.torso.rotation.inverse().apply(&reach).normalize();
        assert!((local - dir).norm() < 1e-12);
    }

    #[test]
    fn degenerate_neutral_rejected() {
        let robot = RobotModel::small_humanoid();
        let short = reference_human_neutral(0.25, 0.6);
        assert!(matches!(calibrate(&short, &robot), Err(MappingError::DegenerateNeutral(_))));
        let stubby = reference_human_neutral(1.0, 0.05);
        assert!(matches!(calibrate(&stubby, &robot), Err(MappingError::DegenerateNeutral(_))));
        let mut bad_robot = robot.clone();
        bad_robot.arm_length.left = 0.0;
        assert!(matches!(
            calibrate(&reference_human_neutral(1.0, 0.6), &bad_robot),
            Err(MappingError::InvalidRobot(_))
        ));
    }

    #[test]
    fn headset_overhead_is_identity() {
        let pelvis = Pose::from_translation(0.3, 0.1, 0.9);
        let r = torso_from_headset(&pelvis, &Vec3::new(0.3, 0.1, 1.6)).unwrap();
        assert!(r.angle() < 1e-12);
    }

    #[test]
    fn headset_forward_gives_pitch() {
        let pelvis = Pose::from_translation(0.0, 0.0, 1.0);
        let r = torso_from_headset(&pelvis, &Vec3::new(0.5, 0.0, 1.5)).unwrap();
        // oracle: quarter-turn pitch about +y scaled to 45 degrees
        let expected = rot(Vec3::y(), FRAC_PI_4);
        assert!(r.angle_to(&expected) < 1e-12);
    }

    #[test]
    fn headset_reexpressed_in_yawed_pelvis() {
        let headset = Vec3::new(0.5, 0.0, 1.5);
        let straight = Pose::from_translation(0.0, 0.0, 1.0);
        let yawed = Pose::new(rot(Vec3::z(), FRAC_PI_2), straight.translation);
        let a = torso_from_headset(&straight, &headset).unwrap();
        let b = torso_from_headset(&yawed, &headset).unwrap();
        // in the yawed pelvis frame the world +x offset reads as -y
        let oracle = align_axis(&Vec3::z(), &Vec3::new(0.0, -0.5, 0.5)).unwrap();
        assert!(b.angle_to(&oracle) < 1e-12);
        assert!(a.angle_to(&b) > 0.1);
        // both describe the same world-frame torso axis
        let wa = world_torso_from_headset(&straight, &headset).unwrap().apply(&Vec3::z());
        let wb = world_torso_from_headset(&yawed, &headset).unwrap().apply(&Vec3::z());
        assert!((wa - wb).norm() < 1e-12);
    }

    #[test]
    fn headset_at_pelvis_rejected() {
        let pelvis = Pose::from_translation(0.0, 0.0, 1.0);
        assert!(matches!(
            torso_from_headset(&pelvis, &Vec3::new(0.0, 0.0, 1.0)),
            Err(MappingError::DegenerateHeadset(_))
        ));
    }

    #[test]
    fn frame_stream_json_flattens_links() {
        let line = TimedLinkSet {
            timestamp_ns: 42,
            links: reference_human_neutral(1.0, 0.6),
        };
        let s = serde_json::to_string(&line).unwrap();
        assert!(s.starts_with(r#"{"timestamp_ns":42,"pelvis":{"q":"#));
        let back: TimedLinkSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, line);
    }

    fn arb_rot() -> impl Strategy<Value = Rotation> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -3.0..3.0f64).prop_filter_map("axis", |(x, y, z, a)| {
            Rotation::from_axis_angle(&Vec3::new(x, y, z), a).ok()
        })
    }

    fn arb_vec(lo: f64, hi: f64) -> impl Strategy<Value = Vec3> {
        (lo..hi, lo..hi, lo..hi).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    /// Random human in a valid neutral stance: pelvis above the origin, arms
    /// forward in the torso frame, arbitrary link orientations.
    fn arb_human_neutral() -> impl Strategy<Value = LinkSet> {
        (
            0.8..1.2f64,
            arb_vec(-0.1, 0.1),
            prop::array::uniform6(arb_rot()),
            (0.4..0.8f64, 0.4..0.8f64),
            (arb_vec(-0.3, 0.3), arb_vec(-0.3, 0.3)),
            (arb_vec(-0.2, 0.2), arb_vec(-0.2, 0.2)),
        )
            .prop_map(|(z, torso_off, rots, (ll, lr), (sl, sr), (fl, fr))| {
                let pelvis = Pose::new(rots[0], Vec3::new(0.0, 0.0, z));
                let torso = Pose::new(rots[1], pelvis.translation + Vec3::new(0.0, 0.0, 0.3) + torso_off);
                let hand = |r: Rotation, s: Vec3, l: f64| {
                    Pose::new(r, torso.transform_point(&Vec3::new(l, s.y, s.z)))
                };
                Links {
                    pelvis,
                    torso,
                    left_hand: hand(rots[2], sl, ll),
                    right_hand: hand(rots[3], sr, lr),
                    left_foot: Pose::new(rots[4], fl),
                    right_foot: Pose::new(rots[5], fr),
                }
            })
    }

    fn arb_robot() -> impl Strategy<Value = RobotModel> {
        (
            0.5..1.0f64,
            (arb_vec(-0.3, 0.3), arb_vec(-0.3, 0.3)),
            (0.3..0.6f64, 0.3..0.6f64),
            arb_vec(-0.1, 0.3),
            (arb_vec(-0.2, 0.2), arb_vec(-0.2, 0.2)),
            prop::array::uniform6(arb_rot()),
        )
            .prop_map(|(z, (sl, sr), (ll, lr), diff, (fl, fr), rots)| RobotModel {
                pelvis_height: z,
                shoulder_offset: PerSide::new(sl, sr),
                arm_length: PerSide::new(ll, lr),
                pelvis_to_torso: diff,
                neutral_foot: PerSide::new(fl, fr),
                neutral_rotations: Links {
                    pelvis: rots[0],
                    torso: rots[1],
                    left_hand: rots[2],
                    right_hand: rots[3],
                    left_foot: rots[4],
                    right_foot: rots[5],
                },
            })
    }

    fn scale_translations(set: &LinkSet, s: f64) -> LinkSet {
        set.map(|_, p| Pose::new(p.rotation, p.translation * s))
    }

    proptest! {
        #[test]
        fn calibration_consistency(human in arb_human_neutral(), robot in arb_robot()) {
            let profile = calibrate(&human, &robot).unwrap();
            let (dt, dr) = max_discrepancy(&map_frame(&profile, &human), &robot.neutral_links());
            prop_assert!(dt < 1e-9 && dr < 1e-9, "dt={dt} dr={dr}");
        }

        #[test]
        fn uniform_scale_invariance(
            human in arb_human_neutral(),
            robot in arb_robot(),
            s in 0.7..1.4f64,
            motion in arb_vec(-0.3, 0.3),
            twist in arb_rot(),
        ) {
            let mut frame = human;
            frame.right_hand.translation += motion;
            frame.left_foot.translation += motion * 0.5;
            frame.torso.rotation = twist.compose(&frame.torso.rotation);
            let base = map_frame(&calibrate(&human, &robot).unwrap(), &frame);
            let scaled_profile = calibrate(&scale_translations(&human, s), &robot).unwrap();
            let scaled = map_frame(&scaled_profile, &scale_translations(&frame, s));
            let (dt, dr) = max_discrepancy(&base, &scaled);
            prop_assert!(dt < 1e-9 && dr < 1e-9, "dt={dt} dr={dr}");
        }

        #[test]
        fn hand_reach_bound(human in arb_human_neutral(), robot in arb_robot(), motion in arb_vec(-0.4, 0.4)) {
            let profile = calibrate(&human, &robot).unwrap();
            let mut frame = human;
            frame.left_hand.translation += motion;
            let out = map_frame(&profile, &frame);
            let h_rel = relative(&frame.torso, &frame.left_hand).translation - profile.human_shoulder.left;
            let r_rel = relative(&out.torso, &out.left_hand).translation - robot.shoulder_offset.left;
            let expected = robot.arm_length.left * h_rel.norm() / profile.human_arm_length.left;
            prop_assert!((r_rel.norm() - expected).abs() < 1e-9);
        }

        #[test]
        fn stateless(human in arb_human_neutral(), robot in arb_robot(), motion in arb_vec(-0.4, 0.4)) {
            let profile = calibrate(&human, &robot).unwrap();
            let mut later = human;
            later.right_hand.translation += motion;
            let a1 = map_frame(&profile, &human);
            let _ = map_frame(&profile, &later);
            let a2 = map_frame(&profile, &human);
            prop_assert_eq!(a1, a2);
        }
    }
}
