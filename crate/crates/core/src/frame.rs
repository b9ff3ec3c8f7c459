//! Slot occupancy of a single frame and iterative interference cancellation.

use std::fmt;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::SystemConfig;

/// One transmitted packet: its identifier and the distinct slots holding its
/// instances. Every instance carries pointers to the others, so decoding any
/// one instance reveals the full slot set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketPlacement {
    pub id: u64,
    slots: Vec<usize>,
}

impl PacketPlacement {
    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn degree(&self) -> usize {
        self.slots.len()
    }
}

/// The bipartite packet/slot graph of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameGraph {
    frame_size: usize,
    packets: Vec<PacketPlacement>,
}

impl FrameGraph {
    pub fn empty(frame_size: usize) -> Self {
        Self {
            frame_size,
            packets: Vec::new(),
        }
    }

    /// Builds a frame from explicit placements, checking slot ranges and
    /// distinctness.
    pub fn from_placements<I, S>(frame_size: usize, placements: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, S)>,
        S: IntoIterator<Item = usize>,
    {
        let mut frame = Self::empty(frame_size);
        for (id, slots) in placements {
            let mut slots: Vec<usize> = slots.into_iter().collect();
            slots.sort_unstable();
            if slots.is_empty() {
                return Err(Error::Validation(format!("packet {id} has no slots")));
            }
            if let Some(&s) = slots.iter().find(|&&s| s >= frame_size) {
                return Err(Error::Validation(format!(
                    "packet {id} uses slot {s} outside frame of {frame_size}"
                )));
            }
            if slots.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Validation(format!(
                    "packet {id} places two instances in the same slot"
                )));
            }
            frame.packets.push(PacketPlacement { id, slots });
        }
        Ok(frame)
    }

    /// Adds one packet whose degree is drawn from the configured distribution
    /// and whose slots are chosen uniformly without replacement.
    pub fn push_random<R: Rng + ?Sized>(&mut self, id: u64, config: &SystemConfig, rng: &mut R) {
        let degree = config.degree_dist().sample(rng) as usize;
        let mut slots = index::sample(rng, self.frame_size, degree).into_vec();
        slots.sort_unstable();
        self.packets.push(PacketPlacement { id, slots });
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn packets(&self) -> &[PacketPlacement] {
        &self.packets
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Number of instances in each slot.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut counts = vec![0; self.frame_size];
        for p in &self.packets {
            for &s in &p.slots {
                counts[s] += 1;
            }
        }
        counts
    }
}

/// Text dump for golden tests: one line per packet, `id: s0 s1 ...`.
impl fmt::Display for FrameGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.packets {
            write!(f, "{}:", p.id)?;
            for s in &p.slots {
                write!(f, " {s}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Ids `0..num_packets`, each placed by [`FrameGraph::push_random`].
pub fn build_frame<R: Rng + ?Sized>(
    num_packets: usize,
    config: &SystemConfig,
    rng: &mut R,
) -> FrameGraph {
    let mut frame = FrameGraph::empty(config.frame_size());
    frame.packets.reserve(num_packets);
    for id in 0..num_packets as u64 {
        frame.push_random(id, config, rng);
    }
    frame
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeResult {
    /// Sorted ids of decoded packets.
    pub decoded_ids: Vec<u64>,
    /// Sweeps that decoded at least one packet.
    pub iterations_used: u32,
    pub per_iteration_decoded: Vec<usize>,
    /// `decoded[i]` tells whether the i-th packet of the frame was decoded.
    pub decoded_mask: Vec<bool>,
}

impl DecodeResult {
    pub fn num_decoded(&self) -> usize {
        self.decoded_ids.len()
    }
}

/// Iterative peeling with synchronous sweeps.
///
/// Each sweep collects every slot that holds exactly one undecoded instance,
/// marks those packets decoded and then cancels all of their instances. The
/// loop stops at a fixpoint or after `max_iterations` sweeps that made
/// progress.
pub fn sic_decode(frame: &FrameGraph, max_iterations: u32) -> DecodeResult {
    let n = frame.packets.len();
    let mut counts = vec![0u32; frame.frame_size];
    // xor of packet indices per slot: a singleton slot's value is its packet
    let mut acc = vec![0usize; frame.frame_size];
    for (i, p) in frame.packets.iter().enumerate() {
        for &s in &p.slots {
            counts[s] += 1;
            acc[s] ^= i;
        }
    }

    let mut decoded = vec![false; n];
    let mut per_iteration = Vec::new();
    let mut fresh = Vec::new();
    while (per_iteration.len() as u32) < max_iterations {
        fresh.clear();
        for s in 0..frame.frame_size {
            if counts[s] == 1 {
                let i = acc[s];
                if !decoded[i] {
                    decoded[i] = true;
                    fresh.push(i);
                }
            }
        }
        if fresh.is_empty() {
            break;
        }
        per_iteration.push(fresh.len());
        for &i in &fresh {
            for &s in &frame.packets[i].slots {
                counts[s] -= 1;
                acc[s] ^= i;
            }
        }
    }

    let mut decoded_ids: Vec<u64> = frame
        .packets
        .iter()
        .zip(&decoded)
        .filter(|(_, &d)| d)
        .map(|(p, _)| p.id)
        .collect();
    decoded_ids.sort_unstable();
    DecodeResult {
        decoded_ids,
        iterations_used: per_iteration.len() as u32,
        per_iteration_decoded: per_iteration,
        decoded_mask: decoded,
    }
}

/// Decoded packets per slot.
pub fn throughput_of(result: &DecodeResult, frame_size: usize) -> f64 {
    result.num_decoded() as f64 / frame_size as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_regular, SystemConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(n_f: usize, packets: &[&[usize]]) -> FrameGraph {
        FrameGraph::from_placements(
            n_f,
            packets
                .iter()
                .enumerate()
                .map(|(i, s)| (i as u64, s.iter().copied())),
        )
        .unwrap()
    }

    #[test]
    fn empty_frame() {
        let cfg = SystemConfig::crdsa(100, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = build_frame(0, &cfg, &mut rng);
        assert!(f.is_empty());
        let r = sic_decode(&f, 20);
        assert_eq!(r.iterations_used, 0);
        assert_eq!(throughput_of(&r, 100), 0.0);
    }

    #[test]
    fn one_crdsa_packet_has_two_distinct_slots() {
        let cfg = SystemConfig::crdsa(100, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let f = build_frame(1, &cfg, &mut rng);
            let s = f.packets()[0].slots();
            assert_eq!(s.len(), 2);
            assert_ne!(s[0], s[1]);
            assert!(s.iter().all(|&x| x < 100));
        }
    }

    #[test]
    fn clean_packet_decodes_in_one_sweep() {
        let r = sic_decode(&frame(10, &[&[3, 7]]), 20);
        assert_eq!(r.decoded_ids, vec![0]);
        assert_eq!(r.iterations_used, 1);
    }

    #[test]
    fn stopping_set_is_not_decoded() {
        let r = sic_decode(&frame(10, &[&[3, 7], &[3, 7]]), 20);
        assert!(r.decoded_ids.is_empty());
        assert_eq!(r.iterations_used, 0);
    }

    #[test]
    fn chain_unlocks_by_peeling() {
        let f = frame(4, &[&[0, 1], &[1, 2], &[2, 3]]);
        let r = sic_decode(&f, 20);
        assert_eq!(r.decoded_ids, vec![0, 1, 2]);
        assert!(r.iterations_used <= 3);
        // A and C are clean in slots 0 and 3, B follows
        assert_eq!(r.per_iteration_decoded, vec![2, 1]);
        assert_eq!(throughput_of(&r, 4), 0.75);

        let capped = sic_decode(&f, 1);
        assert_eq!(capped.decoded_ids, vec![0, 2]);
        assert_eq!(capped.iterations_used, 1);
    }

    #[test]
    fn duplicate_clean_instances_count_once() {
        let r = sic_decode(&frame(4, &[&[0, 1]]), 5);
        assert_eq!(r.per_iteration_decoded, vec![1]);
    }

    #[test]
    fn throughput_arithmetic() {
        let r = DecodeResult {
            decoded_ids: (0..55).collect(),
            iterations_used: 1,
            per_iteration_decoded: vec![55],
            decoded_mask: vec![true; 55],
        };
        assert!((throughput_of(&r, 100) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_placements() {
        assert!(FrameGraph::from_placements(4, [(0u64, vec![1, 1])]).is_err());
        assert!(FrameGraph::from_placements(4, [(0u64, vec![4])]).is_err());
        assert!(FrameGraph::from_placements(4, [(0u64, Vec::<usize>::new())]).is_err());
    }

    #[test]
    fn dump_format() {
        let f = FrameGraph::from_placements(8, [(5u64, vec![6, 1]), (9, vec![0, 2])]).unwrap();
        assert_eq!(f.to_string(), "5: 1 6\n9: 0 2\n");
    }

    #[test]
    fn slotted_aloha_needs_a_single_sweep() {
        let cfg = SystemConfig::new(20, 10, make_regular(1).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let f = build_frame(15, &cfg, &mut rng);
            let occ = f.occupancy();
            let r = sic_decode(&f, 10);
            assert!(r.iterations_used <= 1);
            for (p, &d) in f.packets().iter().zip(&r.decoded_mask) {
                assert_eq!(d, occ[p.slots()[0]] == 1);
            }
            assert_eq!(sic_decode(&f, 1), r);
        }
    }
}
