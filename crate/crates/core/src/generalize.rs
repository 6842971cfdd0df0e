// SPDX-License-Identifier: Apache-2.0

//! State generalization: maps raw states onto a finite set of clusters so
//! that advice can be stored per cluster instead of per exact state.
//!
//! Three generalizers are provided. `Identity` reuses an environment's own
//! discrete id, `UniformGrid` bins each feature, and `KMeans` clusters a
//! warm-up sample of visited states (min-max scaled) and is then frozen.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::StateView;
use crate::rng::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneralizerSpec {
    Identity,
    UniformGrid {
        bins_per_dim: Vec<u32>,
    },
    #[serde(rename = "kmeans")]
    KMeans {
        k: u32,
        #[serde(default = "default_warmup")]
        warmup_samples: u32,
        #[serde(default = "default_max_iters")]
        max_iters: u32,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
}

fn default_warmup() -> u32 {
    5000
}
fn default_max_iters() -> u32 {
    100
}
fn default_tolerance() -> f64 {
    1e-6
}

impl GeneralizerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        match self {
            Self::Identity => Ok(()),
            Self::UniformGrid { bins_per_dim } => {
                if bins_per_dim.is_empty() || bins_per_dim.contains(&0) {
                    bad("grid needs at least one bin per dimension")
                } else {
                    Ok(())
                }
            }
            Self::KMeans {
                k,
                warmup_samples,
                tolerance,
                ..
            } => {
                if *k == 0 {
                    bad("kmeans k must be at least 1")
                } else if tolerance.is_nan() || *tolerance <= 0.0 {
                    bad("kmeans tolerance must be positive")
                } else if warmup_samples < k {
                    bad("kmeans warmup must hold at least k samples")
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// What a generalizer may know about the state space up front.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub bounds: Vec<(f64, f64)>,
    pub discrete_count: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generalizer {
    Identity {
        cluster_count: u32,
    },
    UniformGrid {
        bins_per_dim: Vec<u32>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    #[serde(rename = "kmeans")]
    KMeans {
        /// In original feature units.
        centroids: Vec<Vec<f64>>,
        min: Vec<f64>,
        scale: Vec<f64>,
    },
}

impl Generalizer {
    /// Builds a generalizer. Identity and grid ignore `samples`.
    pub fn fit(
        spec: &GeneralizerSpec,
        domain: &Domain,
        samples: &[Vec<f64>],
        rng: &mut RngStream,
    ) -> Result<Generalizer> {
        spec.validate()?;
        match spec {
            GeneralizerSpec::Identity => match domain.discrete_count {
                Some(n) => Ok(Generalizer::Identity { cluster_count: n }),
                None => Err(Error::InvalidConfig(
                    "identity generalizer needs a discrete state space".into(),
                )),
            },
            GeneralizerSpec::UniformGrid { bins_per_dim } => {
                if bins_per_dim.len() != domain.bounds.len() {
                    return Err(Error::Dimension {
                        expected: domain.bounds.len(),
                        got: bins_per_dim.len(),
                    });
                }
                Ok(Generalizer::UniformGrid {
                    bins_per_dim: bins_per_dim.clone(),
                    lo: domain.bounds.iter().map(|b| b.0).collect(),
                    hi: domain.bounds.iter().map(|b| b.1).collect(),
                })
            }
            GeneralizerSpec::KMeans {
                k,
                max_iters,
                tolerance,
                ..
            } => kmeans(samples, *k as usize, *max_iters, *tolerance, rng),
        }
    }

    pub fn cluster_count(&self) -> u32 {
        match self {
            Self::Identity { cluster_count } => *cluster_count,
            Self::UniformGrid { bins_per_dim, .. } => bins_per_dim.iter().product(),
            Self::KMeans { centroids, .. } => centroids.len() as u32,
        }
    }

    pub fn assign(&self, s: StateView<'_>) -> ClusterId {
        match self {
            Self::Identity { .. } => ClusterId(
                s.discrete
                    .expect("identity generalizer used on a state without a discrete id"),
            ),
            Self::UniformGrid {
                bins_per_dim,
                lo,
                hi,
            } => {
                let mut id = 0u32;
                for (d, &x) in s.features.iter().enumerate() {
                    let bins = bins_per_dim[d];
                    let raw = libm::floor((x - lo[d]) * f64::from(bins) / (hi[d] - lo[d]));
                    let bin = if raw.is_nan() || raw < 0.0 {
                        0
                    } else {
                        (raw as u32).min(bins - 1)
                    };
                    id = id * bins + bin;
                }
                ClusterId(id)
            }
            Self::KMeans {
                centroids, scale, ..
            } => {
                let mut best = (0usize, f64::INFINITY);
                for (i, c) in centroids.iter().enumerate() {
                    let d: f64 = s
                        .features
                        .iter()
                        .zip(c)
                        .enumerate()
                        .map(|(j, (&x, &m))| {
                            let diff = (x - m) / scale[j];
                            diff * diff
                        })
                        .sum();
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                ClusterId(best.0 as u32)
            }
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Lloyd's algorithm with k-means++ seeding on min-max scaled features.
pub fn kmeans(
    samples: &[Vec<f64>],
    k: usize,
    max_iters: u32,
    tolerance: f64,
    rng: &mut RngStream,
) -> Result<Generalizer> {
    let distinct: BTreeSet<Vec<u64>> = samples.iter().map(|s| bits(s)).collect();
    if distinct.len() < k || k == 0 {
        return Err(Error::TooFewSamples {
            k,
            distinct: distinct.len(),
        });
    }
    let dim = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: bad.len(),
        });
    }

    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    for s in samples {
        for j in 0..dim {
            min[j] = min[j].min(s[j]);
            max[j] = max[j].max(s[j]);
        }
    }
    let scale: Vec<f64> = min
        .iter()
        .zip(&max)
        .map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 })
        .collect();
    let points: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| (0..dim).map(|j| (s[j] - min[j]) / scale[j]).collect())
        .collect();

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.below(points.len())].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    if target < w {
                        chosen = Some(i);
                        break;
                    }
                    target -= w;
                }
            }
            // rounding can exhaust the loop; fall back to the last positive weight
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            unreachable!("fewer distinct points than k was rejected above")
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let nearest = |c: &[Vec<f64>], p: &[f64]| {
        let mut best = (0usize, f64::INFINITY);
        for (i, m) in c.iter().enumerate() {
            let d = sq_dist(p, m);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    };

    for _ in 0..max_iters {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for p in &points {
            let c = nearest(&centroids, p);
            counts[c] += 1;
            for j in 0..dim {
                sums[c][j] += p[j];
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let updated: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(libm::sqrt(sq_dist(&updated, &centroids[c])));
            centroids[c] = updated;
        }
        if shift < tolerance {
            break;
        }
    }

    let centroids = centroids
        .into_iter()
        .map(|c| (0..dim).map(|j| c[j] * scale[j] + min[j]).collect())
        .collect();
    Ok(Generalizer::KMeans {
        centroids,
        min,
        scale,
    })
}

/// A generalizer that may still be collecting its warm-up sample.
///
/// Until a k-means model is fitted, states get provisional ids (one per
/// distinct raw state). [`StagedGeneralizer::fit_pending`] freezes the model
/// and returns the provisional-to-final id map so stored advice can be
/// re-keyed.
#[derive(Debug, Clone)]
pub struct StagedGeneralizer {
    spec: GeneralizerSpec,
    fitted: Option<Generalizer>,
    warmup: Vec<Vec<f64>>,
    warmup_target: usize,
    provisional: BTreeMap<Vec<u64>, ClusterId>,
}

impl StagedGeneralizer {
    pub fn new(spec: GeneralizerSpec, domain: &Domain, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let (fitted, warmup_target) = match &spec {
            GeneralizerSpec::KMeans { warmup_samples, .. } => (None, *warmup_samples as usize),
            _ => (Some(Generalizer::fit(&spec, domain, &[], rng)?), 0),
        };
        Ok(Self {
            spec,
            fitted,
            warmup: Vec::new(),
            warmup_target,
            provisional: BTreeMap::new(),
        })
    }

    pub fn from_fitted(g: Generalizer) -> Self {
        let spec = match &g {
            Generalizer::Identity { .. } => GeneralizerSpec::Identity,
            Generalizer::UniformGrid { bins_per_dim, .. } => GeneralizerSpec::UniformGrid {
                bins_per_dim: bins_per_dim.clone(),
            },
            Generalizer::KMeans { centroids, .. } => GeneralizerSpec::KMeans {
                k: centroids.len() as u32,
                warmup_samples: 0,
                max_iters: 0,
                tolerance: 1.0,
            },
        };
        Self {
            spec,
            fitted: Some(g),
            warmup: Vec::new(),
            warmup_target: 0,
            provisional: BTreeMap::new(),
        }
    }

    pub fn spec(&self) -> &GeneralizerSpec {
        &self.spec
    }

    pub fn fitted(&self) -> Option<&Generalizer> {
        self.fitted.as_ref()
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn cluster_count(&self) -> Option<u32> {
        self.fitted.as_ref().map(Generalizer::cluster_count)
    }

    /// Assigns `s`, recording it into the warm-up sample while unfitted.
    pub fn observe(&mut self, s: StateView<'_>) -> ClusterId {
        if let Some(g) = &self.fitted {
            return g.assign(s);
        }
        if self.warmup.len() < self.warmup_target {
            self.warmup.push(s.features.to_vec());
        }
        self.key(s)
    }

    /// Like [`Self::observe`] but never adds to the warm-up sample.
    pub fn key(&mut self, s: StateView<'_>) -> ClusterId {
        match &self.fitted {
            Some(g) => g.assign(s),
            None => self.provisional_id(s.features),
        }
    }

    /// Id lookup without side effects.
    pub fn peek(&self, s: StateView<'_>) -> ClusterId {
        match &self.fitted {
            Some(g) => g.assign(s),
            None => self
                .provisional
                .get(&bits(s.features))
                .copied()
                .unwrap_or(ClusterId(u32::MAX)),
        }
    }

    fn provisional_id(&mut self, features: &[f64]) -> ClusterId {
        let next = ClusterId(self.provisional.len() as u32);
        *self.provisional.entry(bits(features)).or_insert(next)
    }

    pub fn ready_to_fit(&self) -> bool {
        self.fitted.is_none() && self.warmup.len() >= self.warmup_target
    }

    /// Fits the pending k-means model; returns provisional id -> cluster.
    pub fn fit_pending(
        &mut self,
        domain: &Domain,
        rng: &mut RngStream,
    ) -> Result<BTreeMap<ClusterId, ClusterId>> {
        let g = Generalizer::fit(&self.spec, domain, &self.warmup, rng)?;
        let mut map = BTreeMap::new();
        for (key, id) in &self.provisional {
            let features: Vec<f64> = key.iter().map(|b| f64::from_bits(*b)).collect();
            map.insert(
                *id,
                g.assign(StateView {
                    features: &features,
                    discrete: None,
                }),
            );
        }
        self.fitted = Some(g);
        self.warmup = Vec::new();
        self.provisional = BTreeMap::new();
        Ok(map)
    }
}
