//! Single-slot latest-value channel.

use std::sync::Arc;

use arc_swap::ArcSwapOption;

use super::codec::PoseFrame;

/// Writes replace, reads return the newest frame. Neither side ever waits
/// on the other.
#[derive(Debug, Default)]
pub struct Mailbox {
    slot: ArcSwapOption<PoseFrame>,
}

impl Mailbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&self, frame: PoseFrame) {
        self.slot.store(Some(Arc::new(frame)));
    }

    pub fn peek(&self) -> Option<Arc<PoseFrame>> {
        self.slot.load_full()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Read {
    pub frame: Arc<PoseFrame>,
    /// `now - frame.timestamp_ns`, saturating at zero.
    pub staleness_ns: u64,
    /// False when this frame was already returned by an earlier read.
    pub fresh: bool,
}

/// Consumer handle. Never goes back to a lower sequence number: a frame
/// that arrives out of order behind a newer one is ignored.
#[derive(Debug, Clone)]
pub struct Reader {
    mailbox: Arc<Mailbox>,
    last: Option<Arc<PoseFrame>>,
    /// Frames skipped because they were older than one already seen.
    pub reordered: u64,
}

impl Reader {
    pub fn new(mailbox: Arc<Mailbox>) -> Self {
        Reader {
            mailbox,
            last: None,
            reordered: 0,
        }
    }

    pub fn last_read_seq(&self) -> Option<u32> {
        self.last.as_ref().map(|f| f.seq)
    }

    pub fn read(&mut self, now_ns: u64) -> Option<Read> {
        let newest = self.mailbox.peek();
        let (frame, fresh) = match (newest, self.last.take()) {
            (Some(n), Some(l)) if n.seq < l.seq => {
                self.reordered += 1;
                (l, false)
            }
            (Some(n), Some(l)) => {
                let fresh = n.seq != l.seq;
                (n, fresh)
            }
            (Some(n), None) => (n, true),
            (None, last) => (last?, false),
        };
        self.last = Some(frame.clone());
        Some(Read {
            staleness_ns: now_ns.saturating_sub(frame.timestamp_ns),
            frame,
            fresh,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::reference_human_neutral;

    fn frame(seq: u32, ts: u64) -> PoseFrame {
        PoseFrame::from_links(seq, ts, &reference_human_neutral(1.0, 0.6))
    }

    #[test]
    fn newest_wins() {
        let mb = Arc::new(Mailbox::new());
        let mut r = Reader::new(mb.clone());
        assert!(r.read(0).is_none());
        mb.write(frame(1, 100));
        mb.write(frame(2, 200));
        let got = r.read(250).unwrap();
        assert_eq!(got.frame.seq, 2);
        assert_eq!(got.staleness_ns, 50);
        assert!(got.fresh);
        let again = r.read(300).unwrap();
        assert!(!again.fresh);
        assert_eq!(again.staleness_ns, 100);
    }

    #[test]
    fn never_goes_backwards() {
        let mb = Arc::new(Mailbox::new());
        let mut r = Reader::new(mb.clone());
        mb.write(frame(5, 500));
        r.read(500).unwrap();
        mb.write(frame(4, 400));
        let got = r.read(600).unwrap();
        assert_eq!(got.frame.seq, 5);
        assert_eq!(r.reordered, 1);
        assert_eq!(r.last_read_seq(), Some(5));
    }
}
