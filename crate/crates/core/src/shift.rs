//! Two-sample tests for event-distribution shift between snapshot windows.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::data::{Split, TkgDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Stat("sample contains NaN".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

/// Kolmogorov survival function `Q(λ) = P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series converges fast for small λ.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * c).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sample KS test: `D = sup |F_a − F_b|`, asymptotic p-value with the
/// effective-size correction `(√n_e + 0.12 + 0.11/√n_e)·D`.
pub fn ks_test(sample_a: &[f64], sample_b: &[f64]) -> Result<KsResult> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::Stat("KS test needs two nonempty samples".into()));
    }
    let a = sorted(sample_a)?;
    let b = sorted(sample_b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let p = kolmogorov_sf((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult {
        statistic: d,
        p_value: p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UTestResult {
    /// `U` for sample a: pairs `(a_i, b_j)` with `a_i > b_j`, ties counting ½.
    pub u_a: f64,
    pub u_b: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Whether `p_value` came from full enumeration rather than the normal
    /// approximation.
    pub exact: bool,
}

/// Largest number of rank splits enumerated for an exact p-value.
pub const EXACT_U_LIMIT: u64 = 20_000;

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn mid_ranks(pooled: &[(f64, bool)]) -> Vec<f64> {
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        ranks[i..j].iter_mut().for_each(|x| *x = r);
        i = j;
    }
    ranks
}

/// Visits every `k`-subset rank sum of `ranks`.
fn for_each_rank_sum(ranks: &[f64], k: usize, visit: &mut impl FnMut(f64)) {
    fn rec(ranks: &[f64], start: usize, left: usize, acc: f64, visit: &mut impl FnMut(f64)) {
        if left == 0 {
            visit(acc);
            return;
        }
        for i in start..=ranks.len() - left {
            rec(ranks, i + 1, left - 1, acc + ranks[i], visit);
        }
    }
    rec(ranks, 0, k, 0.0, visit);
}

/// Mann-Whitney U test with mid-rank ties. The p-value is exact (conditional
/// on the observed ties) when at most [`EXACT_U_LIMIT`] splits exist, and
/// otherwise uses the tie-corrected normal approximation with continuity
/// correction.
pub fn u_test(sample_a: &[f64], sample_b: &[f64]) -> Result<UTestResult> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::Stat("U test needs two nonempty samples".into()));
    }
    if sample_a.iter().chain(sample_b).any(|x| x.is_nan()) {
        return Err(Error::Stat("sample contains NaN".into()));
    }
    let (na, nb) = (sample_a.len(), sample_b.len());
    let mut pooled: Vec<(f64, bool)> = sample_a
        .iter()
        .map(|&x| (x, true))
        .chain(sample_b.iter().map(|&x| (x, false)))
        .collect();
    pooled.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let ranks = mid_ranks(&pooled);
    let r_a: f64 = ranks
        .iter()
        .zip(&pooled)
        .filter(|(_, (_, in_a))| *in_a)
        .map(|(r, _)| r)
        .sum();
    let offset = (na * (na + 1)) as f64 / 2.0;
    let u_a = r_a - offset;
    let nn = (na * nb) as f64;
    let u_b = nn - u_a;
    let mean = nn / 2.0;
    let observed = (u_a - mean).abs();
    let n = na + nb;

    let splits = binomial(n as u64, na as u64);
    let (p_value, exact) = if splits <= EXACT_U_LIMIT {
        let (mut extreme, mut total) = (0u64, 0u64);
        for_each_rank_sum(&ranks, na, &mut |sum| {
            total += 1;
            if ((sum - offset) - mean).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        });
        (extreme as f64 / total as f64, true)
    } else {
        let mut tie_term = 0.0;
        let mut i = 0;
        while i < pooled.len() {
            let mut j = i + 1;
            while j < pooled.len() && pooled[j].0 == pooled[i].0 {
                j += 1;
            }
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            i = j;
        }
        let nf = n as f64;
        let var = nn / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
        if var <= 0.0 {
            (1.0, false)
        } else {
            let z = (observed - 0.5).max(0.0) / var.sqrt();
            ((2.0 * normal_sf(z)).min(1.0), false)
        }
    };
    Ok(UTestResult {
        u_a,
        u_b,
        p_value: p_value.clamp(0.0, 1.0),
        exact,
    })
}

/// Standard normal upper tail via `erfc`.
fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Which fact attribute forms the per-window sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftFeature {
    /// Relation index of every fact.
    Relation,
    /// Object entity index of every fact.
    Entity,
}

impl FromStr for ShiftFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relation" => Ok(ShiftFeature::Relation),
            "entity" => Ok(ShiftFeature::Entity),
            other => Err(Error::Config(format!("unknown shift feature `{other}`"))),
        }
    }
}

/// Inclusive range of timestamp indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Window {
    pub start: u32,
    pub end: u32,
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// Fixed-size consecutive blocks (`"10"` or `"size=10"`) or explicit
/// inclusive ranges (`"0-9,10-24"`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Windowing {
    Fixed(u32),
    Explicit(Vec<Window>),
}

impl FromStr for Windowing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed window spec `{s}`"));
        let s = s.trim();
        let size = s.strip_prefix("size=").unwrap_or(s);
        if !size.contains('-') && !size.contains(',') {
            let n: u32 = size.parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(bad());
            }
            return Ok(Windowing::Fixed(n));
        }
        let mut windows = Vec::new();
        for part in s.split(',') {
            let (a, b) = part.trim().split_once('-').ok_or_else(bad)?;
            let start: u32 = a.trim().parse().map_err(|_| bad())?;
            let end: u32 = b.trim().parse().map_err(|_| bad())?;
            if end < start || windows.last().is_some_and(|w: &Window| w.end >= start) {
                return Err(bad());
            }
            windows.push(Window { start, end });
        }
        Ok(Windowing::Explicit(windows))
    }
}

impl Windowing {
    pub fn windows(&self, num_timestamps: usize) -> Result<Vec<Window>> {
        let nt = num_timestamps as u32;
        let windows = match self {
            Windowing::Fixed(size) => (0..nt)
                .step_by(*size as usize)
                .map(|start| Window {
                    start,
                    end: (start + size - 1).min(nt.saturating_sub(1)),
                })
                .collect(),
            Windowing::Explicit(w) => {
                if let Some(bad) = w.iter().find(|w| w.end >= nt) {
                    return Err(Error::Config(format!(
                        "window {bad} exceeds the {nt} available timestamps"
                    )));
                }
                w.clone()
            }
        };
        Ok(windows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftPair {
    pub window_a: Window,
    pub window_b: Window,
    pub ks: KsResult,
    pub u: UTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftReport {
    pub feature: ShiftFeature,
    pub pairs: Vec<ShiftPair>,
}

impl ShiftReport {
    /// CSV with header `window_a,window_b,D,p_ks,U,p_u`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "window_a,window_b,D,p_ks,U,p_u")?;
        for p in &self.pairs {
            writeln!(
                out,
                "{},{},{:.6},{:.6e},{},{:.6e}",
                p.window_a, p.window_b, p.ks.statistic, p.ks.p_value, p.u.u_a, p.u.p_value
            )?;
        }
        Ok(())
    }

    /// Index of the pair with the largest KS statistic (first on ties).
    pub fn max_shift_pair(&self) -> Option<usize> {
        self.pairs
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, p)| match best {
                Some((_, d)) if d >= p.ks.statistic => best,
                _ => Some((i, p.ks.statistic)),
            })
            .map(|(i, _)| i)
    }
}

/// Runs both tests on every adjacent pair of nonempty windows.
pub fn analyze_shift(
    dataset: &TkgDataset,
    windowing: &Windowing,
    feature: ShiftFeature,
    splits: &[Split],
) -> Result<ShiftReport> {
    let windows = windowing.windows(dataset.num_timestamps())?;
    if windows.len() < 2 {
        return Err(Error::Config(format!(
            "shift analysis needs at least two windows, got {}",
            windows.len()
        )));
    }
    let mut samples: Vec<(Window, Vec<f64>)> = Vec::new();
    for w in windows {
        let mut sample = Vec::new();
        for t in w.start..=w.end {
            for q in dataset.snapshot(t, splits)? {
                sample.push(match feature {
                    ShiftFeature::Relation => q.predicate as f64,
                    ShiftFeature::Entity => q.object as f64,
                });
            }
        }
        if sample.is_empty() {
            warn!("window {w} has no facts; skipped");
        } else {
            samples.push((w, sample));
        }
    }
    if samples.len() < 2 {
        return Err(Error::Config("fewer than two windows contain facts".into()));
    }
    let pairs = samples
        .windows(2)
        .map(|pair| {
            let (wa, a) = &pair[0];
            let (wb, b) = &pair[1];
            Ok(ShiftPair {
                window_a: *wa,
                window_b: *wb,
                ks: ks_test(a, b)?,
                u: u_test(a, b)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ShiftReport { feature, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0, 3.0];
        let r = ks_test(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = ks_test(&[1.0, 2.0], &[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
    }

    #[test]
    fn ks_hand_case() {
        // ECDF gap peaks at x = 2 where F_a = 0.5 and F_b = 0.
        let r = ks_test(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.statistic, 0.5);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn kolmogorov_series_agree_at_switch_point() {
        let lo = {
            let l: f64 = 1.18;
            let c = std::f64::consts::PI.powi(2) / (8.0 * l * l);
            let s: f64 = (1..=20).map(|k| (-(((2 * k - 1) as f64).powi(2)) * c).exp()).sum();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / l * s
        };
        assert!((lo - kolmogorov_sf(1.18)).abs() < 1e-10);
        // Q(1.3581) ≈ 0.05 is the textbook 5% critical value.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
    }

    #[test]
    fn u_test_conventions() {
        let r = u_test(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u_a, 0.0);
        assert!(r.exact);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-12);
        let r = u_test(&[7.0], &[7.0]).unwrap();
        assert_eq!((r.u_a, r.u_b), (0.5, 0.5));
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn u_test_normal_branch_on_large_samples() {
        let a: Vec<f64> = (0..40).map(|x| x as f64).collect();
        let b: Vec<f64> = (20..60).map(|x| x as f64).collect();
        let r = u_test(&a, &b).unwrap();
        assert!(!r.exact);
        assert_eq!(r.u_a + r.u_b, 1600.0);
        assert!(r.p_value < 0.01);
        let same = u_test(&a, &a).unwrap();
        assert!(same.p_value > 0.9);
    }

    #[test]
    fn normal_tail_reference_values() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-12);
        assert!((normal_sf(1.959_963_984_540_054) - 0.025).abs() < 1e-9);
    }

    #[test]
    fn empty_samples_are_errors() {
        assert!(matches!(ks_test(&[], &[1.0]), Err(Error::Stat(_))));
        assert!(matches!(u_test(&[1.0], &[]), Err(Error::Stat(_))));
    }

    #[test]
    fn window_specs() {
        assert_eq!("10".parse::<Windowing>().unwrap(), Windowing::Fixed(10));
        assert_eq!("size=3".parse::<Windowing>().unwrap(), Windowing::Fixed(3));
        assert_eq!(
            "0-4, 5-9".parse::<Windowing>().unwrap(),
            Windowing::Explicit(vec![Window { start: 0, end: 4 }, Window { start: 5, end: 9 }])
        );
        for bad in ["", "0", "a-b", "5-2", "0-5,3-8", "size=x", "1-2;3-4"] {
            assert!(bad.parse::<Windowing>().is_err(), "{bad}");
        }
        let w = Windowing::Fixed(4).windows(10).unwrap();
        assert_eq!(w.last().unwrap(), &Window { start: 8, end: 9 });
    }

    proptest! {
        #[test]
        fn ks_is_symmetric(
            a in prop::collection::vec(-50i32..50, 1..30),
            b in prop::collection::vec(-50i32..50, 1..30),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = ks_test(&a, &b).unwrap();
            let ba = ks_test(&b, &a).unwrap();
            prop_assert_eq!(ab.statistic, ba.statistic);
            prop_assert!((0.0..=1.0).contains(&ab.statistic));
            prop_assert!((0.0..=1.0).contains(&ab.p_value));
        }

        #[test]
        fn u_statistics_sum_to_product(
            a in prop::collection::vec(-10i32..10, 1..25),
            b in prop::collection::vec(-10i32..10, 1..25),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let r = u_test(&a, &b).unwrap();
            prop_assert_eq!(r.u_a + r.u_b, (a.len() * b.len()) as f64);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
