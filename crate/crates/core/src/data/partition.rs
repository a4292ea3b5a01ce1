use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::mix_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    IidShuffle,
    /// Sort by label, cut into `n · shards_per_client` shards and deal
    /// `shards_per_client` of them to each client.
    LabelSkew { shards_per_client: usize },
}

/// Assignment of dataset samples to clients; every client owns exactly `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// Dataset sample indices owned by each client, in local order.
    pub clients: Vec<Vec<usize>>,
    pub m: usize,
    pub mode: PartitionMode,
}

impl Partition {
    pub fn n(&self) -> usize {
        self.clients.len()
    }

    /// Client index per dataset sample; `None` for dropped samples.
    pub fn assignment(&self, total: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; total];
        for (c, idx) in self.clients.iter().enumerate() {
            for &s in idx {
                out[s] = Some(c);
            }
        }
        out
    }
}

pub fn partition(ds: &Dataset, n: usize, mode: PartitionMode, seed: u64) -> Result<Partition> {
    if n == 0 {
        return Err(Error::invalid("partition needs at least one client"));
    }
    if ds.is_empty() {
        return Err(Error::invalid("cannot partition an empty dataset"));
    }
    if n > ds.len() {
        return Err(Error::invalid(format!(
            "{n} clients but only {} samples",
            ds.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_key(&[seed, 0x5041_5254]));
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);

    let clients = match mode {
        PartitionMode::IidShuffle => {
            let m = ds.len() / n;
            order.chunks_exact(m).take(n).map(<[usize]>::to_vec).collect()
        }
        PartitionMode::LabelSkew { shards_per_client: s } => {
            if s == 0 {
                return Err(Error::invalid("label_skew needs at least one shard per client"));
            }
            let shard = ds.len() / n / s;
            if shard == 0 {
                return Err(Error::invalid(format!(
                    "{} samples cannot fill {} shards",
                    ds.len(),
                    n * s
                )));
            }
            // positives first; stable so the shuffled order survives within a label
            order.sort_by(|&a, &b| ds.samples[b].label.total_cmp(&ds.samples[a].label));
            let shards: Vec<&[usize]> = order.chunks_exact(shard).take(n * s).collect();
            let mut deal: Vec<usize> = (0..n * s).collect();
            deal.shuffle(&mut rng);
            deal.chunks_exact(s)
                .map(|ids| ids.iter().flat_map(|&k| shards[k].iter().copied()).collect())
                .collect()
        }
    };
    let m = match mode {
        PartitionMode::IidShuffle => ds.len() / n,
        PartitionMode::LabelSkew { shards_per_client: s } => ds.len() / n / s * s,
    };
    Ok(Partition { clients, m, mode })
}
