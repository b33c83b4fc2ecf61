//! Map captured frames back to source frames through their markers.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marker::{decode_frame_id, FrameId, MarkerGeometry};
use crate::media::FrameBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Same source frame as the previous readable capture.
    Duplicate,
    /// Source index moved by more than one (or backwards).
    Skip,
    /// No marker payload could be decoded.
    Unreadable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenlockEvent {
    pub kind: EventKind,
    pub captured_index: usize,
    /// Source indices involved: `[s]` for a duplicate, `[from, to]` for a skip.
    pub detail: Vec<u32>,
}

impl fmt::Display for GenlockEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EventKind::Duplicate => write!(f, "duplicate of source {:?} at capture {}", self.detail, self.captured_index),
            EventKind::Skip => match self.detail.as_slice() {
                [from, to] => write!(f, "skip from source {from} to {to} at capture {}", self.captured_index),
                d => write!(f, "skip {d:?} at capture {}", self.captured_index),
            },
            EventKind::Unreadable => write!(f, "unreadable capture {}", self.captured_index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub captured_index: usize,
    pub source_index: u32,
    pub agreement: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub clip_id: u16,
    pub entries: Vec<AlignmentEntry>,
    pub events: Vec<GenlockEvent>,
    /// Unreadable frames dropped before the first readable one.
    pub leading_trimmed: usize,
    /// Unreadable frames dropped after the last readable one.
    pub trailing_trimmed: usize,
}

impl AlignmentMap {
    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn has_sync_events(&self) -> bool {
        self.events.iter().any(|e| e.kind != EventKind::Unreadable)
    }

    /// First captured index for every source index, in source order.
    pub fn first_captures(&self) -> BTreeMap<u32, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.source_index).or_insert(e.captured_index);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairPolicy {
    /// Any duplicate or skip is an error.
    Strict,
    /// Keep the first capture of each source frame.
    #[default]
    FirstOfDup,
}

pub fn build_alignment_map(
    captured: &[FrameBuffer],
    expected_clip_id: u16,
    geometry: &MarkerGeometry,
) -> Result<AlignmentMap> {
    if captured.is_empty() {
        return Err(Error::EmptyInput("no captured frames to align".into()));
    }
    let decoded: Vec<Option<FrameId>> = captured.par_iter().map(|f| decode_frame_id(f, geometry).ok()).collect();
    assemble_alignment(&decoded, expected_clip_id)
}

/// Build a map from per-frame decode results (`None` = unreadable).
pub fn assemble_alignment(decoded: &[Option<FrameId>], expected_clip_id: u16) -> Result<AlignmentMap> {
    let readable: Vec<usize> = (0..decoded.len()).filter(|&i| decoded[i].is_some()).collect();
    let (Some(&first), Some(&last)) = (readable.first(), readable.last()) else {
        return Err(Error::AlignmentImpossible { captured: decoded.len() });
    };

    let mut votes: BTreeMap<u16, usize> = BTreeMap::new();
    for id in decoded.iter().flatten() {
        *votes.entry(id.payload.clip_id()).or_default() += 1;
    }
    let (&majority, _) = votes.iter().max_by_key(|&(id, n)| (*n, std::cmp::Reverse(*id))).expect("at least one readable");
    if majority != expected_clip_id {
        return Err(Error::WrongClip { expected: expected_clip_id, found: majority });
    }

    let mut entries = Vec::new();
    let mut events = Vec::new();
    let mut prev: Option<u32> = None;
    for (captured_index, id) in decoded.iter().enumerate().take(last + 1).skip(first) {
        let id = match id {
            Some(id) if id.payload.clip_id() == expected_clip_id => id,
            _ => {
                events.push(GenlockEvent { kind: EventKind::Unreadable, captured_index, detail: vec![] });
                continue;
            }
        };
        let source = id.payload.frame_index();
        if let Some(p) = prev {
            if source == p {
                events.push(GenlockEvent { kind: EventKind::Duplicate, captured_index, detail: vec![source] });
            } else if source != p + 1 {
                events.push(GenlockEvent { kind: EventKind::Skip, captured_index, detail: vec![p, source] });
            }
        }
        prev = Some(source);
        entries.push(AlignmentEntry { captured_index, source_index: source, agreement: id.agreement });
    }
    Ok(AlignmentMap {
        clip_id: expected_clip_id,
        entries,
        events,
        leading_trimmed: first,
        trailing_trimmed: decoded.len() - 1 - last,
    })
}

fn check_policy(maps: &[&AlignmentMap], policy: PairPolicy) -> Result<()> {
    if policy == PairPolicy::Strict {
        let sync: Vec<GenlockEvent> =
            maps.iter().flat_map(|m| m.events.iter()).filter(|e| e.kind != EventKind::Unreadable).cloned().collect();
        if !sync.is_empty() {
            return Err(Error::GenlockViolation(sync));
        }
    }
    Ok(())
}

fn bounds(what: &str, index: usize, len: usize) -> Result<()> {
    if index >= len {
        return Err(Error::Dimension(format!("{what} index {index} outside clip of {len} frames")));
    }
    Ok(())
}

/// Pair source frames with their captures, in source order.
pub fn pair_frames<'a>(
    map: &AlignmentMap,
    reference: &'a [FrameBuffer],
    captured: &'a [FrameBuffer],
    policy: PairPolicy,
) -> Result<Vec<(&'a FrameBuffer, &'a FrameBuffer)>> {
    check_policy(&[map], policy)?;
    map.first_captures()
        .into_iter()
        .map(|(src, cap)| {
            bounds("source", src as usize, reference.len())?;
            bounds("captured", cap, captured.len())?;
            Ok((&reference[src as usize], &captured[cap]))
        })
        .collect()
}

/// Pair two captures of the same source clip by source index, keeping only
/// source frames seen in both. Returns `(a, b)` pairs in source order.
pub fn pair_captures<'a>(
    map_a: &AlignmentMap,
    captured_a: &'a [FrameBuffer],
    map_b: &AlignmentMap,
    captured_b: &'a [FrameBuffer],
    policy: PairPolicy,
) -> Result<Vec<(&'a FrameBuffer, &'a FrameBuffer)>> {
    check_policy(&[map_a, map_b], policy)?;
    let b = map_b.first_captures();
    let mut out = Vec::new();
    for (src, ia) in map_a.first_captures() {
        if let Some(&ib) = b.get(&src) {
            bounds("captured", ia, captured_a.len())?;
            bounds("captured", ib, captured_b.len())?;
            out.push((&captured_a[ia], &captured_b[ib]));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("captures share no source frames".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marker::MarkerPayload;

    fn ids(clip: u16, frames: &[Option<u32>]) -> Vec<Option<FrameId>> {
        frames
            .iter()
            .map(|f| f.map(|i| FrameId { payload: MarkerPayload::new(clip, i).unwrap(), agreement: 4 }))
            .collect()
    }

    #[test]
    fn clean_sequence() {
        let map = assemble_alignment(&ids(1, &[Some(5), Some(6), Some(7), Some(8)]), 1).unwrap();
        assert_eq!(map.entries.len(), 4);
        assert!(map.events.is_empty());
    }

    #[test]
    fn duplicate_and_skip() {
        let map = assemble_alignment(&ids(1, &[Some(5), Some(6), Some(7), Some(7), Some(8)]), 1).unwrap();
        assert_eq!(map.events, vec![GenlockEvent { kind: EventKind::Duplicate, captured_index: 3, detail: vec![7] }]);
        let map = assemble_alignment(&ids(1, &[Some(5), Some(6), Some(8)]), 1).unwrap();
        assert_eq!(map.events, vec![GenlockEvent { kind: EventKind::Skip, captured_index: 2, detail: vec![6, 8] }]);
    }

    #[test]
    fn trims_pre_and_post_roll() {
        let map = assemble_alignment(&ids(2, &[None, None, Some(0), None, Some(1), None]), 2).unwrap();
        assert_eq!((map.leading_trimmed, map.trailing_trimmed), (2, 1));
        assert_eq!(map.entries.len(), 2);
        assert_eq!(map.count(EventKind::Unreadable), 1);
        assert_eq!(map.events[0].captured_index, 3);
    }

    #[test]
    fn failures() {
        assert!(matches!(assemble_alignment(&ids(1, &[None, None]), 1), Err(Error::AlignmentImpossible { captured: 2 })));
        assert!(matches!(
            assemble_alignment(&ids(4, &[Some(0), Some(1)]), 3),
            Err(Error::WrongClip { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn pairing_policies() {
        use crate::media::{Chroma, FrameFormat};
        let fmt = FrameFormat::new(2, 2, 8, Chroma::Yuv444).unwrap();
        let reference: Vec<FrameBuffer> = (0..4).map(|v| FrameBuffer::filled(fmt, [v, 0, 0])).collect();
        let captured: Vec<FrameBuffer> = [0u16, 1, 1, 2, 3].iter().map(|&v| FrameBuffer::filled(fmt, [v, 0, 0])).collect();
        let map = assemble_alignment(&ids(1, &[Some(0), Some(1), Some(1), Some(2), Some(3)]), 1).unwrap();
        let pairs = pair_frames(&map, &reference, &captured, PairPolicy::FirstOfDup).unwrap();
        assert_eq!(pairs.len(), 4);
        assert!(pairs.iter().all(|(r, c)| r == c));
        assert!(matches!(
            pair_frames(&map, &reference, &captured, PairPolicy::Strict),
            Err(Error::GenlockViolation(ev)) if ev.len() == 1
        ));

        let skip = assemble_alignment(&ids(1, &[Some(0), Some(2), Some(3)]), 1).unwrap();
        let err = pair_frames(&skip, &reference, &captured, PairPolicy::Strict).unwrap_err();
        assert!(err.to_string().contains("skip from source 0 to 2"), "{err}");
        let pairs = pair_captures(&map, &captured, &skip, &captured[..3], PairPolicy::FirstOfDup).unwrap();
        assert_eq!(pairs.len(), 3);
    }
}
