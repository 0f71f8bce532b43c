use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::source::{check_duration, generate_wire_arrivals, PhotonSource};
use super::wire::{simulate_wire, WireStats};
use super::{DiscriminatorConfig, TagRecord, TruthRecord};
use crate::detector::WireParams;
use crate::error::{Error, Result};
use crate::optics::CouplingProfile;

#[derive(Debug, Clone, Default)]
pub struct ArrayOutput {
    /// Sorted by time, ties by channel.
    pub tags: Vec<TagRecord>,
    pub truth: Vec<TruthRecord>,
    pub per_wire: Vec<WireStats>,
}

/// Simulates every wire independently and merges the streams.
///
/// `params` and `discs` hold one entry per wire, or a single entry shared by
/// all wires. Results do not depend on the rayon thread count.
pub fn simulate_array(
    source: &PhotonSource,
    profile: &CouplingProfile,
    params: &[WireParams],
    discs: &[DiscriminatorConfig],
    duration: f64,
    seed: u64,
) -> Result<ArrayOutput> {
    check_duration(duration)?;
    let n = profile.n_wires();
    if n > u16::MAX as usize + 1 {
        return Err(Error::param("at most 65536 wires"));
    }
    let pick = |len: usize, what: &str| -> Result<()> {
        if len == 1 || len == n {
            Ok(())
        } else {
            Err(Error::param(format!("{what}: expected 1 or {n} entries, got {len}")))
        }
    };
    pick(params.len(), "wire parameters")?;
    pick(discs.len(), "discriminators")?;

    let outputs: Vec<_> = (0..n)
        .into_par_iter()
        .map(|k| {
            let p = &params[k.min(params.len() - 1)];
            let d = &discs[k.min(discs.len() - 1)];
            let ch = k as u16;
            let arrivals = generate_wire_arrivals(source, profile.per_wire[k], ch, duration, seed)?;
            simulate_wire(&arrivals, ch, p, d, duration, seed)
        })
        .collect::<Result<_>>()?;

    let mut streams = Vec::with_capacity(n);
    let mut per_wire = Vec::with_capacity(n);
    for o in outputs {
        streams.push((o.tags, o.truth));
        per_wire.push(o.stats);
    }
    let (tags, truth) = merge_streams(streams);
    Ok(ArrayOutput { tags, truth, per_wire })
}

/// k-way merge of per-channel streams by `(time, channel)`; each input must
/// be sorted by time.
pub fn merge_streams(
    streams: Vec<(Vec<TagRecord>, Vec<TruthRecord>)>,
) -> (Vec<TagRecord>, Vec<TruthRecord>) {
    let total: usize = streams.iter().map(|s| s.0.len()).sum();
    let mut tags = Vec::with_capacity(total);
    let mut truth = Vec::with_capacity(total);
    let mut heap = BinaryHeap::with_capacity(streams.len());
    for (s, (t, _)) in streams.iter().enumerate() {
        if let Some(first) = t.first() {
            heap.push(Reverse((first.key(), s, 0usize)));
        }
    }
    while let Some(Reverse((_, s, i))) = heap.pop() {
        let (t, tr) = &streams[s];
        tags.push(t[i]);
        if let Some(r) = tr.get(i) {
            truth.push(*r);
        }
        if let Some(next) = t.get(i + 1) {
            heap.push(Reverse((next.key(), s, i + 1)));
        }
    }
    (tags, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_wire_array_equals_wire() {
        let profile = CouplingProfile::from_fractions(vec![0.8]).unwrap();
        let src = PhotonSource::cw(2e7);
        let p = WireParams::default();
        let d = DiscriminatorConfig::default();
        let a = simulate_array(&src, &profile, &[p.clone()], &[d.clone()], 1e5, 11).unwrap();
        let arr = generate_wire_arrivals(&src, 0.8, 0, 1e5, 11).unwrap();
        let w = simulate_wire(&arr, 0, &p, &d, 1e5, 11).unwrap();
        assert_eq!(a.tags, w.tags);
        assert_eq!(a.truth, w.truth);
    }

    #[test]
    fn merged_is_sorted_and_conserves_counts() {
        let profile = CouplingProfile::from_fractions(vec![0.1; 8]).unwrap();
        let out = simulate_array(
            &PhotonSource::cw(1e8),
            &profile,
            &[WireParams::default()],
            &[DiscriminatorConfig::default()],
            1e5,
            2,
        )
        .unwrap();
        assert!(out.tags.windows(2).all(|w| w[0].key() <= w[1].key()));
        let sum: u64 = out.per_wire.iter().map(|s| s.tags).sum();
        assert_eq!(sum as usize, out.tags.len());
        assert_eq!(out.truth.len(), out.tags.len());
        for (t, r) in out.tags.iter().zip(&out.truth) {
            assert_eq!(t.channel, r.channel);
        }
    }

    #[test]
    fn thread_count_does_not_matter() {
        let profile = CouplingProfile::from_fractions(vec![0.05; 16]).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                simulate_array(
                    &PhotonSource::cw(3e8),
                    &profile,
                    &[WireParams::default()],
                    &[DiscriminatorConfig::default()],
                    2e4,
                    5,
                )
                .unwrap()
                .tags
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn wrong_param_count_rejected() {
        let profile = CouplingProfile::from_fractions(vec![0.1; 3]).unwrap();
        let p = WireParams::default();
        let r = simulate_array(
            &PhotonSource::cw(1e6),
            &profile,
            &[p.clone(), p],
            &[DiscriminatorConfig::default()],
            1e3,
            1,
        );
        assert!(r.is_err());
    }
}
