use std::collections::BTreeSet;

use crdsa_core::frame::{sic_decode, FrameGraph};

/// Fixpoint peeling that recomputes slot loads from scratch and decodes one
/// packet at a time. Returns the decoded index set and the number of
/// synchronous sweeps an equivalent parallel schedule needs.
pub fn oracle(packets: &[Vec<usize>], n_f: usize) -> (BTreeSet<usize>, u32) {
    let singles = |done: &BTreeSet<usize>| -> BTreeSet<usize> {
        let mut holders: Vec<Vec<usize>> = vec![Vec::new(); n_f];
        for (i, p) in packets.iter().enumerate() {
            if !done.contains(&i) {
                for &s in p {
                    holders[s].push(i);
                }
            }
        }
        holders
            .into_iter()
            .filter(|h| h.len() == 1)
            .map(|h| h[0])
            .collect()
    };

    let mut serial = BTreeSet::new();
    while let Some(i) = singles(&serial).into_iter().next() {
        serial.insert(i);
    }

    let mut sweeps = 0;
    let mut parallel = BTreeSet::new();
    loop {
        let fresh = singles(&parallel);
        if fresh.is_empty() {
            break;
        }
        sweeps += 1;
        parallel.extend(fresh);
    }
    assert_eq!(serial, parallel, "peeling order changed the fixpoint");
    (serial, sweeps)
}

pub fn graph(packets: &[Vec<usize>], n_f: usize) -> FrameGraph {
    FrameGraph::from_placements(
        n_f,
        packets
            .iter()
            .enumerate()
            .map(|(i, s)| (i as u64, s.iter().copied())),
    )
    .unwrap()
}

/// Calls `visit` on every multiset of `k` items drawn from `0..n`.
pub fn multisets(n: usize, k: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i, cur, visit);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut Vec::new(), visit);
}

/// Compares `sic_decode` with the oracle on every frame of up to six
/// degree-2 packets in 2..=8 slots. Returns the number of frames checked.
pub fn exhaustive_degree_two() -> u64 {
    let mut checked = 0u64;
    for n_f in 2..=8 {
        let pairs: Vec<Vec<usize>> = (0..n_f)
            .flat_map(|a| (a + 1..n_f).map(move |b| vec![a, b]))
            .collect();
        for k in 0..=6 {
            multisets(pairs.len(), k, &mut |choice| {
                let packets: Vec<Vec<usize>> = choice.iter().map(|&c| pairs[c].clone()).collect();
                let (expect, sweeps) = oracle(&packets, n_f);
                let got = sic_decode(&graph(&packets, n_f), n_f as u32);
                let got_set: BTreeSet<usize> = got.decoded_ids.iter().map(|&i| i as usize).collect();
                assert_eq!(got_set, expect, "n_f={n_f} packets={packets:?}");
                assert_eq!(got.iterations_used, sweeps, "n_f={n_f} packets={packets:?}");
                checked += 1;
            });
        }
    }
    checked
}
