//! Call-accounting benchmark over pool sizes.
//!
//! Wall-clock time is recorded but depends on the machine; the scorer items
//! and utility calls are exact and are what scaling claims are checked on.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::fusion::{fuse_corpus, FusionConfig};
use crate::rerank::{mbr, qe_rerank, CountingUtility, Utility};
use crate::scoring::{CountingScorer, Scorer};
use crate::{CandidatePool, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    QeRerank,
    Mbr,
    Fuse,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::QeRerank => "qe_rerank",
            Method::Mbr => "mbr",
            Method::Fuse => "fuse",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "qe_rerank" | "rerank" => Ok(Method::QeRerank),
            "mbr" => Ok(Method::Mbr),
            "fuse" | "fusion" => Ok(Method::Fuse),
            other => Err(Error::contract(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    pub pool_size: usize,
    pub wall_time_s: f64,
    /// Items that reached the scorer (after the cache, for fusion).
    pub scored_items: u64,
    pub utility_calls: u64,
}

impl BenchRecord {
    /// The cost measure scaling is judged on for this method.
    pub fn cost(&self) -> u64 {
        match self.method {
            Method::Mbr => self.utility_calls,
            Method::QeRerank | Method::Fuse => self.scored_items,
        }
    }
}

/// Runs each method over each corpus, one `(method, N)` at a time.
pub fn run_bench(
    pools_by_size: &BTreeMap<usize, Vec<CandidatePool>>,
    methods: &[Method],
    scorer: &dyn Scorer,
    utility: &dyn Utility,
    fusion: &FusionConfig,
) -> Result<Vec<BenchRecord>> {
    let mut records = Vec::with_capacity(methods.len() * pools_by_size.len());
    for &method in methods {
        for (&n, pools) in pools_by_size {
            let counting_scorer = CountingScorer::new(scorer);
            let counting_utility = CountingUtility::new(utility);
            let started = Instant::now();
            match method {
                Method::QeRerank => {
                    for pool in pools {
                        qe_rerank(pool, &counting_scorer)?;
                    }
                }
                Method::Mbr => {
                    for pool in pools {
                        mbr(pool, &counting_utility)?;
                    }
                }
                Method::Fuse => {
                    fuse_corpus(pools, &counting_scorer, fusion)?;
                }
            }
            records.push(BenchRecord {
                method,
                pool_size: n,
                wall_time_s: started.elapsed().as_secs_f64(),
                scored_items: counting_scorer.items(),
                utility_calls: counting_utility.calls(),
            });
        }
    }
    Ok(records)
}

/// Truncates every pool to each size in `sizes`.
///
/// Fails if a pool has fewer candidates than a requested size.
pub fn pools_by_size(pools: &[CandidatePool], sizes: &[usize]) -> Result<BTreeMap<usize, Vec<CandidatePool>>> {
    let mut out = BTreeMap::new();
    for &n in sizes {
        if n == 0 {
            return Err(Error::contract("pool size must be at least 1"));
        }
        if let Some(short) = pools.iter().find(|p| p.len() < n) {
            return Err(Error::contract(format!(
                "pool `{}` has {} candidates, {n} requested",
                short.id,
                short.len()
            )));
        }
        out.insert(n, pools.iter().map(|p| p.truncated(n)).collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

fn r_squared(ys: &[f64], predicted: impl Iterator<Item = f64>) -> f64 {
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = ys.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Ordinary least squares line through `(xs, ys)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> ScalingFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    ScalingFit {
        slope,
        intercept,
        r_squared: r_squared(ys, xs.iter().map(|x| intercept + slope * x)),
    }
}

/// Coefficients `[c0, c1, c2]` of the least-squares parabola and its R².
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> ([f64; 3], f64) {
    // normal equations: sum x^(i+j) c_j = sum x^i y
    let mut a = [[0.0f64; 4]; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let powers = [1.0, x, x * x, x * x * x, x * x * x * x];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] += powers[i + j];
            }
            a[i][3] += powers[i] * y;
        }
    }
    // Gauss-Jordan with partial pivoting
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        let p = a[col][col];
        if p.abs() < 1e-12 {
            continue;
        }
        for v in &mut a[col][col..] {
            *v /= p;
        }
        let pivot_row = a[col];
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let f = row[col];
                for (v, pv) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *v -= f * pv;
                }
            }
        }
    }
    let c = [a[0][3], a[1][3], a[2][3]];
    let r2 = r_squared(ys, xs.iter().map(|x| c[0] + c[1] * x + c[2] * x * x));
    (c, r2)
}

/// Linear fit of each record's cost against its pool size.
pub fn fit_scaling(records: &[BenchRecord]) -> Result<ScalingFit> {
    let (xs, ys) = cost_points(records)?;
    Ok(linear_fit(&xs, &ys))
}

/// R² of the quadratic fit over the same points as [`fit_scaling`].
pub fn fit_scaling_quadratic(records: &[BenchRecord]) -> Result<f64> {
    let (xs, ys) = cost_points(records)?;
    Ok(quadratic_fit(&xs, &ys).1)
}

fn cost_points(records: &[BenchRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut sizes: Vec<usize> = records.iter().map(|r| r.pool_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::contract(format!(
            "scaling fit needs at least 3 pool sizes, got {}",
            sizes.len()
        )));
    }
    Ok(records.iter().map(|r| (r.pool_size as f64, r.cost() as f64)).unzip())
}
