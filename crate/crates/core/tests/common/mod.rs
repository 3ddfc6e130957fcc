//! Independent reference implementations and simulators shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Solves a dense system by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

pub fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| solve(a.to_vec(), (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()))
        .collect();
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

/// OLS through the normal equations; rows of `x` are observations.
pub fn normal_equations(y: &[f64], x: &[Vec<f64>]) -> Vec<f64> {
    let k = x[0].len();
    let xtx: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|b| x.iter().map(|r| r[a] * r[b]).sum()).collect())
        .collect();
    let xty: Vec<f64> = (0..k).map(|a| x.iter().zip(y).map(|(r, y)| r[a] * y).sum()).collect();
    solve(xtx, xty)
}

pub fn r_squared(y: &[f64], x: &[Vec<f64>], b: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let ssr: f64 = y
        .iter()
        .zip(x)
        .map(|(y, r)| {
            let f: f64 = r.iter().zip(b).map(|(a, b)| a * b).sum();
            (y - f) * (y - f)
        })
        .sum();
    let sst: f64 = y.iter().map(|y| (y - m) * (y - m)).sum();
    1.0 - ssr / sst
}

/// Newey-West sandwich written out element by element.
pub fn brute_force_hac(y: &[f64], x: &[Vec<f64>], lags: usize) -> Vec<Vec<f64>> {
    let (n, k) = (y.len(), x[0].len());
    let b = normal_equations(y, x);
    let u: Vec<f64> = (0..n).map(|t| y[t] - (0..k).map(|j| x[t][j] * b[j]).sum::<f64>()).collect();
    let mut omega = vec![vec![0.0; k]; k];
    for a in 0..k {
        for c in 0..k {
            let mut s = 0.0;
            for t in 0..n {
                s += u[t] * u[t] * x[t][a] * x[t][c];
            }
            for l in 1..=lags {
                let w = 1.0 - l as f64 / (lags as f64 + 1.0);
                for t in l..n {
                    s += w * u[t] * u[t - l] * (x[t][a] * x[t - l][c] + x[t - l][a] * x[t][c]);
                }
            }
            omega[a][c] = s;
        }
    }
    let xtx: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|c| (0..n).map(|t| x[t][a] * x[t][c]).sum()).collect())
        .collect();
    let inv = invert(&xtx);
    let mut out = vec![vec![0.0; k]; k];
    for a in 0..k {
        for c in 0..k {
            let mut s = 0.0;
            for p in 0..k {
                for q in 0..k {
                    s += inv[a][p] * omega[p][q] * inv[q][c];
                }
            }
            out[a][c] = s;
        }
    }
    out
}

/// Heteroskedasticity-robust sandwich with the meat as a double loop over observations and
/// coefficient pairs.
pub fn white_cov(y: &[f64], x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k) = (y.len(), x[0].len());
    let b = normal_equations(y, x);
    let xtx: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|c| (0..n).map(|t| x[t][a] * x[t][c]).sum()).collect())
        .collect();
    let inv = invert(&xtx);
    let mut meat = vec![vec![0.0; k]; k];
    for t in 0..n {
        let u = y[t] - (0..k).map(|j| x[t][j] * b[j]).sum::<f64>();
        for a in 0..k {
            for c in 0..k {
                meat[a][c] += u * u * x[t][a] * x[t][c];
            }
        }
    }
    let tmp: Vec<Vec<f64>> = (0..k)
        .map(|a| (0..k).map(|c| (0..k).map(|p| inv[a][p] * meat[p][c]).sum()).collect())
        .collect();
    (0..k)
        .map(|a| (0..k).map(|c| (0..k).map(|p| tmp[a][p] * inv[p][c]).sum()).collect())
        .collect()
}

/// A monthly economy in which a persistent state variable forecasts the market and its daily
/// shocks carry a risk premium, plus an unpriced placebo state variable.
pub struct IcapmEconomy {
    pub state: Vec<f64>,
    pub placebo: Vec<f64>,
    /// Monthly market return, percent.
    pub mkt: Vec<f64>,
    pub mkt_daily: Vec<f64>,
    pub base_monthly: Vec<Vec<f64>>,
    pub base_daily: Vec<Vec<f64>>,
    pub test_daily: Vec<Vec<f64>>,
}

pub struct IcapmParams {
    pub months: usize,
    pub days: usize,
    pub phi: f64,
    /// Monthly market mean response to last month's state.
    pub slope: f64,
    /// Monthly premium per unit of state-shock exposure.
    pub premium: f64,
    pub base: usize,
    pub test: usize,
}

impl Default for IcapmParams {
    fn default() -> Self {
        IcapmParams {
            months: 480,
            days: 21,
            phi: 0.9,
            slope: -1.0,
            premium: -0.5,
            base: 6,
            test: 25,
        }
    }
}

pub fn icapm_economy(p: &IcapmParams, seed: u64) -> IcapmEconomy {
    let mut r = rng(seed);
    let mut n = move || -> f64 { r.sample(StandardNormal) };
    let d = p.days as f64;
    let base_load: Vec<(f64, f64)> = (0..p.base).map(|j| (0.5 + j as f64 * 0.2, n())).collect();
    let test_load: Vec<(f64, f64)> = (0..p.test).map(|_| (0.5 + n().abs(), n())).collect();
    let mut e = IcapmEconomy {
        state: Vec::new(),
        placebo: Vec::new(),
        mkt: Vec::new(),
        mkt_daily: Vec::new(),
        base_monthly: vec![Vec::new(); p.base],
        base_daily: vec![Vec::new(); p.base],
        test_daily: vec![Vec::new(); p.test],
    };
    let (mut x, mut z) = (0.0, 0.0);
    for _ in 0..p.months {
        let mu = 0.6 + p.slope * x;
        let mut shock = 0.0;
        let mut gross_m = 1.0;
        let mut gross_b = vec![1.0; p.base];
        for _ in 0..p.days {
            let m = mu / d + 4.0 / d.sqrt() * n();
            let s = 1.0 / d.sqrt() * n();
            shock += s;
            e.mkt_daily.push(m);
            gross_m *= 1.0 + m / 100.0;
            for (j, &(a, b)) in base_load.iter().enumerate() {
                let v = a * m + b * (s + p.premium / d) + 1.0 / d.sqrt() * n();
                e.base_daily[j].push(v);
                gross_b[j] *= 1.0 + v / 100.0;
            }
            for (i, &(a, b)) in test_load.iter().enumerate() {
                e.test_daily[i].push(a * m + b * (s + p.premium / d) + 1.0 / d.sqrt() * n());
            }
        }
        x = p.phi * x + shock;
        z = p.phi * z + n();
        e.state.push(x);
        e.placebo.push(z);
        e.mkt.push((gross_m - 1.0) * 100.0);
        for (j, g) in gross_b.iter().enumerate() {
            e.base_monthly[j].push((g - 1.0) * 100.0);
        }
    }
    e
}
