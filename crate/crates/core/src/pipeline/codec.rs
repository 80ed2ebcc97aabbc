//! The 353-byte wire frame.
//!
//! `XCTL`, version u8, seq u32, timestamp_ns u64, then per link (pelvis,
//! torso, left hand, right hand, left foot, right foot) translation xyz and
//! quaternion wxyz as f64. Everything little-endian.

use thiserror::Error;

use crate::mapping::{Link, LinkSet, Links};
use crate::se3::{Pose, Rotation, Vec3};

pub const MAGIC: &[u8; 4] = b"XCTL";
pub const VERSION: u8 = 1;
pub const FRAME_SIZE: usize = 4 + 1 + 4 + 8 + 6 * 56;
/// Allowed deviation of a quaternion norm from 1.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("{link:?} quaternion has norm {norm}")]
    NonUnitQuaternion { link: Link, norm: f64 },
    #[error("short read: {got} of {FRAME_SIZE} bytes")]
    ShortRead { got: usize },
}

/// One link as it travels: translation in metres, quaternion wxyz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireLink {
    pub translation: [f64; 3],
    pub quaternion: [f64; 4],
}

/// Raw arrays rather than [`Pose`] so that decode then encode gives back
/// the same bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub seq: u32,
    pub timestamp_ns: u64,
    pub links: [WireLink; 6],
}

impl PoseFrame {
    pub fn from_links(seq: u32, timestamp_ns: u64, links: &LinkSet) -> Self {
        PoseFrame {
            seq,
            timestamp_ns,
            links: Link::ALL.map(|l| {
                let p = links.get(l);
                WireLink {
                    translation: [p.translation.x, p.translation.y, p.translation.z],
                    quaternion: p.rotation.wxyz(),
                }
            }),
        }
    }

    pub fn to_links(&self) -> Result<LinkSet, CodecError> {
        self.validate()?;
        Ok(Links::from_fn(|l| {
            let w = &self.links[link_index(l)];
            let [qw, qx, qy, qz] = w.quaternion;
            let rotation = Rotation::from_wxyz(qw, qx, qy, qz).expect("norm checked by validate");
            Pose::new(rotation, Vec3::from(w.translation))
        }))
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        for (l, w) in Link::ALL.iter().zip(&self.links) {
            let norm = w.quaternion.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !((norm - 1.0).abs() <= UNIT_TOLERANCE) || w.translation.iter().any(|x| !x.is_finite()) {
                return Err(CodecError::NonUnitQuaternion { link: *l, norm });
            }
        }
        Ok(())
    }
}

fn link_index(link: Link) -> usize {
    Link::ALL.iter().position(|&l| l == link).unwrap()
}

pub fn encode_frame(frame: &PoseFrame) -> [u8; FRAME_SIZE] {
    let mut out = [0u8; FRAME_SIZE];
    out[..4].copy_from_slice(MAGIC);
    out[4] = VERSION;
    out[5..9].copy_from_slice(&frame.seq.to_le_bytes());
    out[9..17].copy_from_slice(&frame.timestamp_ns.to_le_bytes());
    let mut at = 17;
    for w in &frame.links {
        for x in w.translation.iter().chain(&w.quaternion) {
            out[at..at + 8].copy_from_slice(&x.to_le_bytes());
            at += 8;
        }
    }
    out
}

/// Decodes the first [`FRAME_SIZE`] bytes of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<PoseFrame, CodecError> {
    if bytes.len() < FRAME_SIZE {
        return Err(CodecError::ShortRead { got: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(CodecError::BadMagic(magic));
    }
    if bytes[4] != VERSION {
        return Err(CodecError::BadVersion(bytes[4]));
    }
    let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let frame = PoseFrame {
        seq: u32::from_le_bytes(bytes[5..9].try_into().unwrap()),
        timestamp_ns: u64::from_le_bytes(bytes[9..17].try_into().unwrap()),
        links: std::array::from_fn(|k| {
            let at = 17 + 56 * k;
            WireLink {
                translation: [f(at), f(at + 8), f(at + 16)],
                quaternion: [f(at + 24), f(at + 32), f(at + 40), f(at + 48)],
            }
        }),
    };
    frame.validate()?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::reference_human_neutral;

    fn frame() -> PoseFrame {
        PoseFrame::from_links(7, 123_456_789, &reference_human_neutral(1.1, 0.55))
    }

    #[test]
    fn layout() {
        assert_eq!(FRAME_SIZE, 353);
        let bytes = encode_frame(&frame());
        assert_eq!(&bytes[..4], b"XCTL");
        assert_eq!(bytes[4], 1);
        assert_eq!(&bytes[5..9], &7u32.to_le_bytes());
        assert_eq!(&bytes[9..17], &123_456_789u64.to_le_bytes());
        // pelvis z of a 1.1 scale body
        assert_eq!(&bytes[33..41], &1.1f64.to_le_bytes());
    }

    #[test]
    fn roundtrip_and_links() {
        let f = frame();
        let bytes = encode_frame(&f);
        let back = decode_frame(&bytes).unwrap();
        assert_eq!(back, f);
        assert_eq!(encode_frame(&back), bytes);
        assert_eq!(back.to_links().unwrap(), reference_human_neutral(1.1, 0.55));
    }

    #[test]
    fn malformed() {
        let bytes = encode_frame(&frame());
        assert_eq!(decode_frame(&bytes[..352]), Err(CodecError::ShortRead { got: 352 }));
        let mut b = bytes;
        b[0] = b'Y';
        assert!(matches!(decode_frame(&b), Err(CodecError::BadMagic(_))));
        let mut b = bytes;
        b[4] = 2;
        assert_eq!(decode_frame(&b), Err(CodecError::BadVersion(2)));
        let mut f = frame();
        f.links[3].quaternion = [0.9, 0.0, 0.0, 0.0];
        match decode_frame(&encode_frame(&f)) {
            Err(CodecError::NonUnitQuaternion { link, norm }) => {
                assert_eq!(link, Link::RightHand);
                assert!((norm - 0.9).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }
}
