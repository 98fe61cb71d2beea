//! Bernoulli seed configurations.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};

pub const SEEDS_MAGIC: &[u8; 14] = b"FPPHE-SEEDS-v1";

/// Which vertices host a dormant `FPPλ` seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedConfig {
    is_seed: Vec<bool>,
    mu: f64,
    excluded: BTreeSet<VertexId>,
}

impl SeedConfig {
    /// Configuration with no seeds at all.
    pub fn empty(vertex_count: usize) -> Self {
        SeedConfig {
            is_seed: vec![false; vertex_count],
            mu: 0.0,
            excluded: BTreeSet::new(),
        }
    }

    #[inline]
    pub fn is_seed(&self, v: VertexId) -> bool {
        self.is_seed[v as usize]
    }

    pub fn len(&self) -> usize {
        self.is_seed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_seed.is_empty()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn excluded(&self) -> &BTreeSet<VertexId> {
        &self.excluded
    }

    pub fn seed_count(&self) -> usize {
        self.is_seed.iter().filter(|&&s| s).count()
    }

    pub fn seeds(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.is_seed
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(v, _)| v as VertexId)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.is_seed
    }

    /// Binary blob: magic, `mu` (f64 LE), master-seed flag byte and value
    /// (u64 LE), vertex count (u64 LE), excluded count (u64 LE), excluded ids
    /// (u32 LE each), then the seed bitset packed LSB-first.
    pub fn to_blob(&self, master_seed: Option<u64>) -> Vec<u8> {
        let n = self.is_seed.len();
        let mut out = Vec::with_capacity(14 + 33 + 4 * self.excluded.len() + n.div_ceil(8));
        out.extend_from_slice(SEEDS_MAGIC);
        out.extend_from_slice(&self.mu.to_le_bytes());
        out.push(u8::from(master_seed.is_some()));
        out.extend_from_slice(&master_seed.unwrap_or(0).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.excluded.len() as u64).to_le_bytes());
        for &v in &self.excluded {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut bits = vec![0u8; n.div_ceil(8)];
        for (v, _) in self.is_seed.iter().enumerate().filter(|(_, &s)| s) {
            bits[v / 8] |= 1 << (v % 8);
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn from_blob(blob: &[u8]) -> Result<(SeedConfig, Option<u64>)> {
        let mut r = Reader { buf: blob, pos: 0 };
        if r.take(14)? != SEEDS_MAGIC {
            return Err(Error::Format("missing FPPHE-SEEDS-v1 header".into()));
        }
        let mu = f64::from_le_bytes(r.array()?);
        let has_seed = r.take(1)?[0];
        let master = u64::from_le_bytes(r.array()?);
        let n = u64::from_le_bytes(r.array()?) as usize;
        let n_excl = u64::from_le_bytes(r.array()?) as usize;
        let mut excluded = BTreeSet::new();
        for _ in 0..n_excl {
            let v = u32::from_le_bytes(r.array()?);
            if v as usize >= n {
                return Err(Error::Format(format!("excluded vertex {v} out of range")));
            }
            excluded.insert(v);
        }
        let bits = r.take(n.div_ceil(8))?;
        if r.pos != blob.len() {
            return Err(Error::Format("trailing bytes after seed bitset".into()));
        }
        let is_seed: Vec<bool> = (0..n).map(|v| bits[v / 8] >> (v % 8) & 1 == 1).collect();
        if excluded.iter().any(|&v| is_seed[v as usize]) {
            return Err(Error::Format("an excluded vertex is marked as seed".into()));
        }
        let master = (has_seed != 0).then_some(master);
        Ok((SeedConfig { is_seed, mu, excluded }, master))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("seed blob truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Marks each non-excluded vertex as a seed independently with probability
/// `mu`. One uniform is drawn per non-excluded vertex, in vertex order.
pub fn place_seeds<R: Rng + ?Sized>(
    g: &Graph,
    mu: f64,
    excluded: &[VertexId],
    rng: &mut R,
) -> Result<SeedConfig> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::invalid(format!("mu must lie in [0, 1], got {mu}")));
    }
    let n = g.vertex_count();
    let mut skip = vec![false; n];
    for &v in excluded {
        if !g.contains(v) {
            return Err(Error::invalid(format!("excluded vertex {v} not in graph")));
        }
        skip[v as usize] = true;
    }
    let is_seed = skip
        .iter()
        .map(|&s| !s && rng.random::<f64>() < mu)
        .collect();
    Ok(SeedConfig {
        is_seed,
        mu,
        excluded: excluded.iter().copied().collect(),
    })
}

/// Exactly the listed vertices are seeds.
pub fn fixed_seeds(g: &Graph, seeds: &[VertexId]) -> Result<SeedConfig> {
    let mut cfg = SeedConfig::empty(g.vertex_count());
    for &v in seeds {
        if !g.contains(v) {
            return Err(Error::invalid(format!("seed vertex {v} not in graph")));
        }
        cfg.is_seed[v as usize] = true;
    }
    // No sampling law behind a fixed configuration; record its density.
    cfg.mu = cfg.seed_count() as f64 / cfg.len().max(1) as f64;
    Ok(cfg)
}
