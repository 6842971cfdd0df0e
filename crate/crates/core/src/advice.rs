// SPDX-License-Identifier: Apache-2.0

//! Persistent advice and probabilistic policy reuse (PPR).
//!
//! Advice a trainer gives is remembered per cluster. When the trainer is
//! silent and the current cluster has stored advice, the agent replays it
//! with probability `psi(episode)` and otherwise falls back to its own
//! default policy. `psi` starts at `psi0` and decays geometrically per
//! episode down to `floor`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::generalize::ClusterId;
use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdviceMode {
    None,
    NonPersistent,
    Persistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdviceSource {
    Simulated,
    Live,
    Rule,
}

impl AdviceSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Simulated => "simulated",
            Self::Live => "live",
            Self::Rule => "rule",
        }
    }
}

/// Where the executed action came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Advisor,
    Reused,
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PprParams {
    pub psi0: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for PprParams {
    fn default() -> Self {
        Self {
            psi0: 0.8,
            decay: 0.99,
            floor: 0.0,
        }
    }
}

impl PprParams {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.psi0)
            && self.decay > 0.0
            && self.decay <= 1.0
            && (0.0..=1.0).contains(&self.floor)
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!(
                "PPR parameters out of range: {self:?}"
            )))
        }
    }

    /// Reuse probability for `episode`.
    pub fn psi(&self, episode: u32) -> f64 {
        (self.psi0 * crate::math::powi(self.decay, episode)).max(self.floor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdviceEntry {
    pub action: usize,
    pub times_reused: u64,
    pub source: AdviceSource,
    pub raw_state: Option<Vec<f64>>,
    /// Write order, so re-keying keeps "latest wins".
    seq: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdviceStore {
    entries: BTreeMap<ClusterId, AdviceEntry>,
    writes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub action: usize,
    pub provenance: Provenance,
}

impl AdviceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, cluster: ClusterId) -> bool {
        self.entries.contains_key(&cluster)
    }

    pub fn lookup(&self, cluster: ClusterId) -> Option<usize> {
        self.entries.get(&cluster).map(|e| e.action)
    }

    pub fn entry(&self, cluster: ClusterId) -> Option<&AdviceEntry> {
        self.entries.get(&cluster)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClusterId, &AdviceEntry)> {
        self.entries.iter().map(|(c, e)| (*c, e))
    }

    /// Upserts advice for `cluster`; an overwrite resets the reuse counter.
    pub fn record(
        &mut self,
        cluster: ClusterId,
        action: usize,
        source: AdviceSource,
        raw_state: Option<Vec<f64>>,
    ) {
        self.writes += 1;
        self.entries.insert(
            cluster,
            AdviceEntry {
                action,
                times_reused: 0,
                source,
                raw_state,
                seq: self.writes,
            },
        );
    }

    /// Moves every entry to `remap[old]`. Entries whose ids are missing from
    /// `remap` are re-assigned from their raw state through `assign`, and
    /// dropped when they have none. Colliding entries keep the latest write.
    pub fn rekey(
        &mut self,
        remap: &BTreeMap<ClusterId, ClusterId>,
        mut assign: impl FnMut(&[f64]) -> ClusterId,
    ) {
        let old = core::mem::take(&mut self.entries);
        for (id, entry) in old {
            let target = match (remap.get(&id), &entry.raw_state) {
                (Some(t), _) => *t,
                (None, Some(raw)) => assign(raw),
                (None, None) => continue,
            };
            match self.entries.get(&target) {
                Some(existing) if existing.seq > entry.seq => {}
                _ => {
                    self.entries.insert(target, entry);
                }
            }
        }
    }

    /// Chooses the action to execute this step.
    ///
    /// Live advice always wins (and is remembered in persistent mode). In
    /// persistent mode, stored advice for `cluster` is replayed with
    /// probability `psi(episode)`. Everything else falls through to
    /// `default_action`. Only persistent mode ever reads the store.
    #[allow(clippy::too_many_arguments)]
    pub fn arbitrate(
        &mut self,
        mode: AdviceMode,
        live_advice: Option<(usize, AdviceSource)>,
        cluster: ClusterId,
        raw_state: Option<&[f64]>,
        ppr: &PprParams,
        episode: u32,
        default_action: usize,
        rng: &mut RngStream,
    ) -> Decision {
        if let Some((action, source)) = live_advice {
            if mode == AdviceMode::Persistent {
                self.record(cluster, action, source, raw_state.map(<[f64]>::to_vec));
            }
            return Decision {
                action,
                provenance: Provenance::Advisor,
            };
        }
        if mode == AdviceMode::Persistent {
            if let Some(entry) = self.entries.get_mut(&cluster) {
                if rng.bernoulli(ppr.psi(episode)) {
                    entry.times_reused += 1;
                    return Decision {
                        action: entry.action,
                        provenance: Provenance::Reused,
                    };
                }
            }
        }
        Decision {
            action: default_action,
            provenance: Provenance::Default,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    const C: ClusterId = ClusterId(7);

    #[test]
    fn record_then_lookup() {
        let mut s = AdviceStore::new();
        s.record(C, 1, AdviceSource::Simulated, None);
        assert_eq!(s.lookup(C), Some(1));
        s.record(C, 2, AdviceSource::Live, None);
        assert_eq!(s.lookup(C), Some(2));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn overwrite_resets_reuse_counter() {
        let mut s = AdviceStore::new();
        let mut rng = derive_stream(0, "agent");
        s.record(C, 1, AdviceSource::Simulated, None);
        let always = PprParams {
            psi0: 1.0,
            decay: 1.0,
            floor: 0.0,
        };
        s.arbitrate(
            AdviceMode::Persistent,
            None,
            C,
            None,
            &always,
            0,
            0,
            &mut rng,
        );
        assert_eq!(s.entry(C).unwrap().times_reused, 1);
        s.record(C, 2, AdviceSource::Simulated, None);
        assert_eq!(s.entry(C).unwrap().times_reused, 0);
    }

    #[test]
    fn psi_schedule() {
        let flat = PprParams {
            psi0: 0.8,
            decay: 1.0,
            floor: 0.0,
        };
        assert_eq!(flat.psi(0), 0.8);
        assert_eq!(flat.psi(12_345), 0.8);
        let decaying = PprParams {
            psi0: 0.8,
            decay: 0.99,
            floor: 0.0,
        };
        assert!((decaying.psi(100) - 0.292_825_873).abs() < 1e-9);
        let floored = PprParams {
            psi0: 0.8,
            decay: 0.9,
            floor: 0.1,
        };
        assert_eq!(floored.psi(1000), 0.1);
    }

    #[test]
    fn live_advice_wins_and_is_remembered_only_when_persistent() {
        let mut rng = derive_stream(0, "agent");
        let ppr = PprParams::default();
        for mode in [
            AdviceMode::None,
            AdviceMode::NonPersistent,
            AdviceMode::Persistent,
        ] {
            let mut s = AdviceStore::new();
            s.record(C, 4, AdviceSource::Simulated, None);
            let d = s.arbitrate(
                mode,
                Some((2, AdviceSource::Live)),
                C,
                None,
                &ppr,
                0,
                0,
                &mut rng,
            );
            assert_eq!(
                d,
                Decision {
                    action: 2,
                    provenance: Provenance::Advisor
                }
            );
            let expected = if mode == AdviceMode::Persistent { 2 } else { 4 };
            assert_eq!(s.lookup(C), Some(expected));
        }
    }

    #[test]
    fn empty_store_falls_through() {
        let mut rng = derive_stream(0, "agent");
        let mut s = AdviceStore::new();
        let d = s.arbitrate(
            AdviceMode::Persistent,
            None,
            C,
            None,
            &PprParams::default(),
            0,
            3,
            &mut rng,
        );
        assert_eq!(
            d,
            Decision {
                action: 3,
                provenance: Provenance::Default
            }
        );
    }

    #[test]
    fn non_persistent_never_reuses() {
        let mut rng = derive_stream(0, "agent");
        let mut s = AdviceStore::new();
        s.record(C, 4, AdviceSource::Simulated, None);
        let always = PprParams {
            psi0: 1.0,
            decay: 1.0,
            floor: 1.0,
        };
        for mode in [AdviceMode::None, AdviceMode::NonPersistent] {
            for _ in 0..100 {
                let d = s.arbitrate(mode, None, C, None, &always, 0, 0, &mut rng);
                assert_eq!(d.provenance, Provenance::Default);
            }
        }
    }

    #[test]
    fn rekey_keeps_latest_write() {
        let mut s = AdviceStore::new();
        s.record(
            ClusterId(0),
            1,
            AdviceSource::Simulated,
            Some(alloc::vec![0.0]),
        );
        s.record(
            ClusterId(1),
            2,
            AdviceSource::Simulated,
            Some(alloc::vec![0.1]),
        );
        s.record(ClusterId(2), 0, AdviceSource::Simulated, None);
        let remap: BTreeMap<_, _> =
            [(ClusterId(0), ClusterId(5)), (ClusterId(1), ClusterId(5))].into();
        s.rekey(&remap, |_| ClusterId(9));
        assert_eq!(s.len(), 1);
        assert_eq!(s.lookup(ClusterId(5)), Some(2));
    }
}
