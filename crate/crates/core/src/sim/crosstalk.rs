use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{merge_streams, stream_rng, Purpose, TagRecord, TruthRecord, FLAG_CROSSTALK};
use crate::error::{Error, Result};

/// Neighbor of `channel` picked with `go_up`; edges reflect inward and a
/// single-wire array maps onto itself.
pub fn neighbor_channel(channel: u16, n_wires: usize, go_up: bool) -> u16 {
    if n_wires <= 1 {
        return channel;
    }
    let last = (n_wires - 1) as u16;
    match (channel, go_up) {
        (0, _) => 1,
        (c, _) if c >= last => last - 1,
        (c, true) => c + 1,
        (c, false) => c - 1,
    }
}

/// Each tag spawns, with probability `p_ct`, a copy on a neighboring wire
/// delayed by `|N(0, delay_sigma)|` ps. Spawned tags carry the cross-talk
/// flag and copy their source's truth record.
pub fn inject_crosstalk(
    tags: &[TagRecord],
    truth: &[TruthRecord],
    n_wires: usize,
    p_ct: f64,
    delay_sigma: f64,
    seed: u64,
) -> Result<(Vec<TagRecord>, Vec<TruthRecord>)> {
    if !(0.0..=1.0).contains(&p_ct) {
        return Err(Error::param(format!("p_ct must be in [0, 1], got {p_ct}")));
    }
    if !(delay_sigma >= 0.0 && delay_sigma.is_finite()) {
        return Err(Error::param("delay_sigma must be >= 0"));
    }
    if !truth.is_empty() && truth.len() != tags.len() {
        return Err(Error::param("truth must be empty or match the tags one to one"));
    }
    if p_ct == 0.0 {
        return Ok((tags.to_vec(), truth.to_vec()));
    }
    let mut rng = stream_rng(seed, 0, Purpose::Crosstalk);
    let mut extra = Vec::new();
    let mut extra_truth = Vec::new();
    for (i, t) in tags.iter().enumerate() {
        if rng.random::<f64>() >= p_ct {
            continue;
        }
        let up: bool = rng.random();
        let z: f64 = StandardNormal.sample(&mut rng);
        let delay = (z * delay_sigma).abs().round() as u64;
        extra.push(TagRecord {
            channel: neighbor_channel(t.channel, n_wires, up),
            flags: t.flags | FLAG_CROSSTALK,
            time: t.time + delay,
        });
        if let Some(r) = truth.get(i) {
            extra_truth.push(*r);
        }
    }
    // delays can reorder the spawned tags among themselves
    let mut idx: Vec<usize> = (0..extra.len()).collect();
    idx.sort_by_key(|&i| extra[i].key());
    let extra_sorted: Vec<_> = idx.iter().map(|&i| extra[i]).collect();
    let truth_sorted: Vec<_> = if extra_truth.is_empty() {
        Vec::new()
    } else {
        idx.iter().map(|&i| extra_truth[i]).collect()
    };
    Ok(merge_streams(vec![(tags.to_vec(), truth.to_vec()), (extra_sorted, truth_sorted)]))
}
