//! Branch tracing: records branch-condition realizations and tangents per
//! control-flow path so jump contributions can be estimated across samples.

use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::scalar::{AdScalar, Real};

/// Default bound on distinct branch keys held by one registry.
pub const DEFAULT_REGISTRY_CAP: usize = 10_000;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Static identity of a branch site: a 32-bit site family plus a 32-bit
/// index (agent number, bin number, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteId(pub u64);

impl SiteId {
    pub const fn new(family: u32, index: u32) -> Self {
        SiteId(((family as u64) << 32) | index as u64)
    }

    pub const fn family(self) -> u32 {
        (self.0 >> 32) as u32
    }

    pub const fn index(self) -> u32 {
        self.0 as u32
    }
}

/// A branch site with its tracking flag. Untracked ("passthrough") sites are
/// only recorded in full DGO mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BranchSite {
    pub id: SiteId,
    pub tracked: bool,
}

impl BranchSite {
    pub const fn tracked(family: u32) -> Self {
        BranchSite { id: SiteId::new(family, 0), tracked: true }
    }

    pub const fn passthrough(family: u32) -> Self {
        BranchSite { id: SiteId::new(family, 0), tracked: false }
    }

    /// Same family and flag, different index.
    pub const fn at(self, index: u32) -> Self {
        BranchSite { id: SiteId::new(self.id.family(), index), tracked: self.tracked }
    }
}

/// Order-sensitive digest of the (site, sign) sequence seen so far.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathKey(pub u64);

impl PathKey {
    pub const ROOT: PathKey = PathKey(0x6a09_e667_f3bc_c908);

    #[inline]
    pub fn extend(self, site: SiteId, taken: bool) -> PathKey {
        let step = mix64(site.0.rotate_left(1) ^ taken as u64);
        PathKey(mix64(self.0.rotate_left(17) ^ step))
    }

    /// Fresh path for an independent sub-computation identified by `scope`.
    pub fn scoped(scope: u64) -> PathKey {
        PathKey(mix64(Self::ROOT.0 ^ mix64(scope ^ 0x5ca1_ab1e)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchKey {
    pub path: PathKey,
    pub site: SiteId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraceMode {
    /// Plain evaluation; branches are ordinary comparisons.
    Plain,
    /// Pathwise derivatives only.
    Ipa,
    /// Every traced branch is recorded.
    Dgo,
    /// Only tracked sites are recorded.
    Hybrid,
}

impl TraceMode {
    #[inline]
    fn records(self, site: BranchSite) -> bool {
        match self {
            TraceMode::Plain | TraceMode::Ipa => false,
            TraceMode::Dgo => true,
            TraceMode::Hybrid => site.tracked,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T> {
    pub key: BranchKey,
    pub sample: usize,
    pub condition: T,
    pub tangent: Vec<T>,
    pub taken: bool,
}

/// Per-sample tracing state.
#[derive(Debug)]
pub struct TraceContext<T: Real> {
    sample: usize,
    mode: TraceMode,
    dim: usize,
    path: PathKey,
    log: Vec<Observation<T>>,
}

impl<T: Real> TraceContext<T> {
    /// `dim` is the calibration parameter dimension; recorded tangents are
    /// padded to it.
    pub fn new(mode: TraceMode, sample: usize, dim: usize) -> Self {
        TraceContext { sample, mode, dim, path: PathKey::ROOT, log: Vec::new() }
    }

    pub fn plain() -> Self {
        Self::new(TraceMode::Plain, 0, 0)
    }

    pub fn mode(&self) -> TraceMode {
        self.mode
    }

    pub fn sample(&self) -> usize {
        self.sample
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn path(&self) -> PathKey {
        self.path
    }

    /// Restarts path identification for an independent sub-computation,
    /// e.g. one agent's coefficient draw.
    pub fn enter_scope(&mut self, scope: u64) {
        self.path = PathKey::scoped(scope);
    }

    /// Evaluates `condition < 0`. Recording modes append the realization to
    /// the log under the current path and then extend the path with its sign.
    pub fn traced_less_than<S: AdScalar<Base = T>>(&mut self, site: BranchSite, condition: S) -> Result<bool> {
        let c = condition.value();
        if !c.is_finite() {
            return Err(Error::NonFiniteCondition { sample: self.sample, site: site.id.0 });
        }
        let taken = c < T::zero();
        if self.mode.records(site) {
            let t = condition.tangent();
            let mut tangent = vec![T::zero(); self.dim.max(t.len())];
            tangent[..t.len()].copy_from_slice(t);
            self.log.push(Observation {
                key: BranchKey { path: self.path, site: site.id },
                sample: self.sample,
                condition: c,
                tangent,
                taken,
            });
            self.path = self.path.extend(site.id, taken);
        }
        Ok(taken)
    }

    pub fn observations(&self) -> &[Observation<T>] {
        &self.log
    }

    pub fn into_observations(self) -> Vec<Observation<T>> {
        self.log
    }
}

/// All observations of one branch key across the samples of an estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchRecord<T> {
    pub key: BranchKey,
    pub observations: Vec<Observation<T>>,
    pub reach_count: usize,
    last_sample: Option<usize>,
}

impl<T: Real> BranchRecord<T> {
    /// Fraction of samples that reached this key, in (0, 1].
    pub fn reach_fraction(&self, total_samples: usize) -> T {
        T::from_usize_lossy(self.reach_count) / T::from_usize_lossy(total_samples.max(1))
    }
}

/// Branch records keyed by path and site, merged in sample order.
#[derive(Clone, Debug)]
pub struct BranchRegistry<T> {
    records: BTreeMap<BranchKey, BranchRecord<T>>,
    cap: usize,
    total_samples: usize,
    dropped_observations: usize,
}

impl<T: Real> BranchRegistry<T> {
    pub fn new(cap: usize) -> Self {
        BranchRegistry { records: BTreeMap::new(), cap, total_samples: 0, dropped_observations: 0 }
    }

    /// Adds one sample's observations. Must be called once per executed
    /// sample, including samples that recorded nothing.
    pub fn merge_sample(&mut self, observations: Vec<Observation<T>>) {
        self.total_samples += 1;
        for obs in observations {
            let full = self.records.len() >= self.cap;
            match self.records.get_mut(&obs.key) {
                Some(rec) => {
                    if rec.last_sample != Some(obs.sample) {
                        rec.reach_count += 1;
                        rec.last_sample = Some(obs.sample);
                    }
                    rec.observations.push(obs);
                }
                None if full => {
                    if self.dropped_observations == 0 {
                        warn!("branch registry full ({} keys); further keys are dropped", self.cap);
                    }
                    self.dropped_observations += 1;
                }
                None => {
                    let key = obs.key;
                    let sample = obs.sample;
                    self.records.insert(
                        key,
                        BranchRecord { key, observations: vec![obs], reach_count: 1, last_sample: Some(sample) },
                    );
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_samples(&self) -> usize {
        self.total_samples
    }

    pub fn truncated(&self) -> bool {
        self.dropped_observations > 0
    }

    pub fn dropped_observations(&self) -> usize {
        self.dropped_observations
    }

    pub fn records(&self) -> impl Iterator<Item = &BranchRecord<T>> {
        self.records.values()
    }

    pub fn get(&self, key: &BranchKey) -> Option<&BranchRecord<T>> {
        self.records.get(key)
    }
}
