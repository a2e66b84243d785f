//! Time-indexed pose sequences. Poses are stored camera-to-world.

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// One trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEntry {
    pub frame_id: u64,
    pub timestamp: f64,
    pub pose: Pose,
}

/// Ordered sequence of absolute camera-to-world poses with strictly
/// increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    entries: Vec<TrajectoryEntry>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<TrajectoryEntry>) -> Result<Self> {
        let mut t = Self::new();
        for e in entries {
            t.push(e)?;
        }
        Ok(t)
    }

    /// Appends an entry, enforcing timestamp monotonicity.
    pub fn push(&mut self, entry: TrajectoryEntry) -> Result<()> {
        if !entry.timestamp.is_finite() {
            return Err(Error::invalid("timestamp must be finite"));
        }
        if let Some(last) = self.entries.last() {
            if entry.timestamp <= last.timestamp {
                return Err(Error::invalid(format!(
                    "timestamps must be strictly increasing ({} after {})",
                    entry.timestamp, last.timestamp
                )));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[TrajectoryEntry] {
        &self.entries
    }

    pub fn get(&self, idx: usize) -> Option<&TrajectoryEntry> {
        self.entries.get(idx)
    }

    /// Entry with the given frame id, if present.
    pub fn by_frame_id(&self, frame_id: u64) -> Option<&TrajectoryEntry> {
        self.entries.iter().find(|e| e.frame_id == frame_id)
    }

    /// Relative motion from frame index `i` to `i + 1`:
    /// `pose_i^-1 * pose_{i+1}` (maps frame-(i+1) camera coordinates into
    /// frame i).
    pub fn relative(&self, i: usize) -> Option<Pose> {
        let a = self.entries.get(i)?;
        let b = self.entries.get(i + 1)?;
        Some(a.pose.inverse().compose(&b.pose))
    }

    /// Left-multiplies every pose by a fixed transform.
    pub fn transformed(&self, t: &Pose) -> Trajectory {
        Trajectory {
            entries: self
                .entries
                .iter()
                .map(|e| TrajectoryEntry {
                    pose: t.compose(&e.pose),
                    ..*e
                })
                .collect(),
        }
    }
}

/// Pairs of entries sharing a frame id, in increasing frame-id order.
pub fn associate<'a>(
    a: &'a Trajectory,
    b: &'a Trajectory,
) -> Vec<(&'a TrajectoryEntry, &'a TrajectoryEntry)> {
    let mut out = Vec::new();
    for ea in a.entries() {
        if let Some(eb) = b.by_frame_id(ea.frame_id) {
            out.push((ea, eb));
        }
    }
    out.sort_by_key(|(ea, _)| ea.frame_id);
    out
}
