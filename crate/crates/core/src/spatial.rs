//! Spatial weights over counties and global Moran's I with permutation
//! inference.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{CountySet, LonLat};
use crate::rng;
use crate::stats::dist;

/// Vertex quantization step for contiguity detection, in degrees.
pub const QUANTUM_DEG: f64 = 1e-7;

const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Neighbors share at least one boundary vertex.
    QueenContiguity,
    /// Neighbors share at least one boundary edge.
    RookContiguity,
    KNearestCentroid(usize),
}

/// Row-standardized spatial weights in adjacency-list form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialWeights {
    pub ids: Vec<String>,
    pub neighbors: Vec<Vec<usize>>,
    pub weights: Vec<Vec<f64>>,
    pub scheme: WeightScheme,
}

impl SpatialWeights {
    /// Build from explicit neighbor lists; duplicates are merged and rows are
    /// standardized to sum to one.
    pub fn from_neighbors(ids: Vec<String>, neighbors: Vec<Vec<usize>>, scheme: WeightScheme) -> Result<Self> {
        let n = ids.len();
        if neighbors.len() != n {
            return Err(Error::contract("one neighbor list per unit is required"));
        }
        let mut clean = Vec::with_capacity(n);
        for (i, row) in neighbors.into_iter().enumerate() {
            let set: BTreeSet<usize> = row.into_iter().collect();
            if set.contains(&i) {
                return Err(Error::contract(format!("unit {} lists itself as a neighbor", ids[i])));
            }
            if let Some(&bad) = set.iter().find(|&&j| j >= n) {
                return Err(Error::contract(format!("neighbor index {bad} out of range")));
            }
            clean.push(set.into_iter().collect::<Vec<_>>());
        }
        let weights = clean
            .iter()
            .map(|row: &Vec<usize>| vec![1.0 / row.len() as f64; row.len()])
            .collect();
        Ok(Self {
            ids,
            neighbors: clean,
            weights,
            scheme,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Units with no neighbors.
    pub fn isolates(&self) -> Vec<&str> {
        self.neighbors
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_empty())
            .map(|(i, _)| self.ids[i].as_str())
            .collect()
    }

    /// Restrict to units where `keep` is true and re-standardize rows.
    fn subset(&self, keep: &[bool]) -> SpatialWeights {
        let mut remap = vec![usize::MAX; self.len()];
        let mut ids = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = ids.len();
                ids.push(self.ids[i].clone());
            }
        }
        let neighbors: Vec<Vec<usize>> = (0..self.len())
            .filter(|&i| keep[i])
            .map(|i| {
                self.neighbors[i]
                    .iter()
                    .filter(|&&j| keep[j])
                    .map(|&j| remap[j])
                    .collect()
            })
            .collect();
        SpatialWeights::from_neighbors(ids, neighbors, self.scheme)
            .expect("subset of valid weights is valid")
    }

    /// Σ_j w_ij v_j for every unit.
    pub fn lag(&self, values: &[f64]) -> Vec<f64> {
        self.neighbors
            .iter()
            .zip(&self.weights)
            .map(|(nb, w)| nb.iter().zip(w).map(|(&j, &wij)| wij * values[j]).sum())
            .collect()
    }
}

fn quantize(p: LonLat) -> (i64, i64) {
    (
        (p[0] / QUANTUM_DEG).round() as i64,
        (p[1] / QUANTUM_DEG).round() as i64,
    )
}

fn contiguity(counties: &CountySet, by_edge: bool) -> Vec<Vec<usize>> {
    type Key = ((i64, i64), (i64, i64));
    let mut owners: HashMap<Key, BTreeSet<usize>> = HashMap::new();
    for (ci, county) in counties.iter().enumerate() {
        for ring in county.polygons.iter().flat_map(|p| p.rings()) {
            if by_edge {
                for w in ring.windows(2) {
                    let (a, b) = (quantize(w[0]), quantize(w[1]));
                    if a != b {
                        owners.entry((a.min(b), a.max(b))).or_default().insert(ci);
                    }
                }
            } else {
                for &p in ring {
                    let q = quantize(p);
                    owners.entry((q, q)).or_default().insert(ci);
                }
            }
        }
    }
    let mut neighbors = vec![BTreeSet::new(); counties.len()];
    for set in owners.values() {
        for &a in set {
            for &b in set {
                if a != b {
                    neighbors[a].insert(b);
                }
            }
        }
    }
    neighbors.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: LonLat, b: LonLat) -> f64 {
    let (lat1, lat2) = (a[1].to_radians(), b[1].to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b[0] - a[0]).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn k_nearest(centroids: &[LonLat], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = centroids
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, &c)| (haversine_km(centroids[i], c), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Spatial weights over all counties in `counties` (fips order).
pub fn build_weights(counties: &CountySet, scheme: WeightScheme) -> Result<SpatialWeights> {
    build_weights_with_fallback(counties, scheme, None)
}

/// As [`build_weights`], giving contiguity isolates their `fallback_k`
/// nearest centroids as neighbors.
pub fn build_weights_with_fallback(
    counties: &CountySet,
    scheme: WeightScheme,
    fallback_k: Option<usize>,
) -> Result<SpatialWeights> {
    let n = counties.len();
    if n < 2 {
        return Err(Error::contract("spatial weights need at least two units"));
    }
    let centroids: Vec<LonLat> = counties.iter().map(|c| c.centroid).collect();
    let mut neighbors = match scheme {
        WeightScheme::QueenContiguity => contiguity(counties, false),
        WeightScheme::RookContiguity => contiguity(counties, true),
        WeightScheme::KNearestCentroid(k) => {
            if k == 0 {
                return Err(Error::contract("k must be positive"));
            }
            (0..n).map(|i| k_nearest(&centroids, i, k.min(n - 1))).collect()
        }
    };
    if let Some(k) = fallback_k.filter(|&k| k > 0) {
        for (i, row) in neighbors.iter_mut().enumerate() {
            if row.is_empty() {
                *row = k_nearest(&centroids, i, k.min(n - 1));
            }
        }
    }
    let ids = counties.iter().map(|c| c.fips.clone()).collect();
    SpatialWeights::from_neighbors(ids, neighbors, scheme)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    TwoSided,
    /// Tests for positive autocorrelation only.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoranOptions {
    pub n_perm: usize,
    pub seed: u64,
    pub sidedness: Sidedness,
    /// Also compute the normal-approximation p-value.
    pub analytical: bool,
}

impl Default for MoranOptions {
    fn default() -> Self {
        Self {
            n_perm: 999,
            seed: 0,
            sidedness: Sidedness::TwoSided,
            analytical: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticalMoran {
    pub variance: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoranResult {
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "expected_I")]
    pub expected_i: f64,
    pub p_value: f64,
    pub n_used: usize,
    pub n_islands_dropped: usize,
    pub n_perm: usize,
    pub seed: u64,
    pub sidedness: Sidedness,
    /// Mean and standard deviation of I over the permutations.
    pub perm_mean: f64,
    pub perm_sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytical: Option<AnalyticalMoran>,
    /// (id, z, spatial lag of z) per unit used, for scatterplots.
    #[serde(skip)]
    pub points: Vec<(String, f64, f64)>,
}

fn moran_statistic(weights: &SpatialWeights, z: &[f64], s0: f64) -> f64 {
    let n = z.len() as f64;
    let denom: f64 = z.iter().map(|v| v * v).sum();
    let lag = weights.lag(z);
    let num: f64 = z.iter().zip(&lag).map(|(a, b)| a * b).sum();
    (n / s0) * num / denom
}

fn analytical_moments(weights: &SpatialWeights, i_obs: f64, expected: f64, s0: f64) -> AnalyticalMoran {
    let n = weights.len() as f64;
    let mut dense: HashMap<(usize, usize), f64> = HashMap::new();
    for (i, (nb, w)) in weights.neighbors.iter().zip(&weights.weights).enumerate() {
        for (&j, &wij) in nb.iter().zip(w) {
            *dense.entry((i, j)).or_default() += wij;
        }
    }
    let mut s1 = 0.0;
    for (&(i, j), &wij) in &dense {
        let wji = dense.get(&(j, i)).copied().unwrap_or(0.0);
        s1 += (wij + wji).powi(2);
    }
    s1 /= 2.0;
    let mut row = vec![0.0; weights.len()];
    let mut col = vec![0.0; weights.len()];
    for (&(i, j), &w) in &dense {
        row[i] += w;
        col[j] += w;
    }
    let s2: f64 = row.iter().zip(&col).map(|(r, c)| (r + c).powi(2)).sum();
    let variance = (n * n * s1 - n * s2 + 3.0 * s0 * s0) / ((n * n - 1.0) * s0 * s0) - expected * expected;
    let z = (i_obs - expected) / variance.sqrt();
    AnalyticalMoran {
        variance,
        z,
        p_value: (2.0 * dist::normal_sf(z.abs())).min(1.0),
    }
}

/// Global Moran's I of `values` (keyed by unit id) under `weights`.
///
/// Units without a value are dropped, as are units left without any valued
/// neighbor; remaining rows are re-standardized. Significance comes from
/// `n_perm` seeded permutations of the values across units, with the +1
/// correction so the p-value is never zero.
pub fn morans_i(values: &BTreeMap<String, f64>, weights: &SpatialWeights, opts: &MoranOptions) -> Result<MoranResult> {
    if opts.n_perm < 99 {
        return Err(Error::contract("Moran's I needs at least 99 permutations"));
    }
    let mut active: Vec<bool> = weights
        .ids
        .iter()
        .map(|id| values.get(id).is_some_and(|v| v.is_finite()))
        .collect();
    let n_valued = active.iter().filter(|&&a| a).count();
    loop {
        let drop: Vec<usize> = (0..weights.len())
            .filter(|&i| active[i] && !weights.neighbors[i].iter().any(|&j| active[j]))
            .collect();
        if drop.is_empty() {
            break;
        }
        for i in drop {
            active[i] = false;
        }
    }
    let sub = weights.subset(&active);
    let n = sub.len();
    if n < 2 {
        return Err(Error::contract(format!(
            "Moran's I needs at least two units with valued neighbors, found {n}"
        )));
    }
    let x: Vec<f64> = sub.ids.iter().map(|id| values[id]).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = x.iter().map(|v| v - mean).collect();
    if z.iter().all(|&v| v == 0.0) {
        return Err(Error::degenerate("all values are identical"));
    }
    let s0 = n as f64; // every remaining row sums to one
    let i_obs = moran_statistic(&sub, &z, s0);
    let expected = -1.0 / (n as f64 - 1.0);

    let null: Vec<f64> = (0..opts.n_perm)
        .into_par_iter()
        .map(|k| {
            let perm = rng::permutation(n, opts.seed, k as u64, 0);
            let zp: Vec<f64> = perm.iter().map(|&j| z[j]).collect();
            moran_statistic(&sub, &zp, s0)
        })
        .collect();
    let obs_dev = (i_obs - expected).abs();
    let extreme = null
        .iter()
        .filter(|&&v| match opts.sidedness {
            Sidedness::TwoSided => (v - expected).abs() >= obs_dev * (1.0 - 1e-12),
            Sidedness::Greater => v >= i_obs - 1e-12 * i_obs.abs(),
        })
        .count();
    let p_value = (1 + extreme) as f64 / (opts.n_perm + 1) as f64;
    let perm_mean = null.iter().sum::<f64>() / null.len() as f64;
    let perm_sd = (null.iter().map(|v| (v - perm_mean).powi(2)).sum::<f64>() / (null.len() - 1) as f64).sqrt();

    let lag = sub.lag(&z);
    let sd = (z.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let points = sub
        .ids
        .iter()
        .zip(z.iter().zip(&lag))
        .map(|(id, (zi, li))| (id.clone(), zi / sd, li / sd))
        .collect();

    Ok(MoranResult {
        i: i_obs,
        expected_i: expected,
        p_value,
        n_used: n,
        n_islands_dropped: n_valued - n,
        n_perm: opts.n_perm,
        seed: opts.seed,
        sidedness: opts.sidedness,
        perm_mean,
        perm_sd,
        analytical: opts.analytical.then(|| analytical_moments(&sub, i_obs, expected, s0)),
        points,
    })
}
