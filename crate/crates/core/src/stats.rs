//! Pearson correlation and a seeded percentile bootstrap over grouped pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two pairs, got {0}")]
    TooFew(usize),
    #[error("{0} vector is constant; correlation is undefined")]
    DegenerateVariance(Side),
    #[error("every bootstrap resample was degenerate")]
    AllResamplesDegenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    X,
    Y,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::X => "first",
            Side::Y => "second",
        })
    }
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFew(x.len()));
    }
    if is_constant(x) {
        return Err(StatsError::DegenerateVariance(Side::X));
    }
    if is_constant(y) {
        return Err(StatsError::DegenerateVariance(Side::Y));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::DegenerateVariance(Side::X));
    }
    if syy == 0.0 {
        return Err(StatsError::DegenerateVariance(Side::Y));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapCi {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_pairs: usize,
    pub n_groups: usize,
    pub n_boot: usize,
    pub seed: u64,
    /// Resamples skipped because one side came out constant.
    pub degenerate_resamples: usize,
}

/// Pearson r with a 95% percentile bootstrap that resamples whole groups
/// (tuples) with replacement. `x[i]` and `y[i]` hold the coordinates of group `i`.
pub fn grouped_pearson_ci(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    n_boot: usize,
    seed: u64,
) -> Result<BootstrapCi, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    for (a, b) in x.iter().zip(y) {
        if a.len() != b.len() {
            return Err(StatsError::LengthMismatch(a.len(), b.len()));
        }
    }
    let flat_x: Vec<f64> = x.iter().flatten().copied().collect();
    let flat_y: Vec<f64> = y.iter().flatten().copied().collect();
    let r = pearson(&flat_x, &flat_y)?;

    let groups = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(n_boot);
    let mut degenerate = 0;
    let (mut bx, mut by) = (Vec::with_capacity(flat_x.len()), Vec::with_capacity(flat_y.len()));
    for _ in 0..n_boot {
        bx.clear();
        by.clear();
        for _ in 0..groups {
            let g = rng.random_range(0..groups);
            bx.extend_from_slice(&x[g]);
            by.extend_from_slice(&y[g]);
        }
        match pearson(&bx, &by) {
            Ok(v) => stats.push(v),
            Err(_) => degenerate += 1,
        }
    }
    if n_boot > 0 && stats.is_empty() {
        return Err(StatsError::AllResamplesDegenerate);
    }
    let (lo, hi) = if stats.is_empty() { (r, r) } else { percentile_interval(&mut stats, 0.95) };
    Ok(BootstrapCi {
        r,
        // The percentile interval can miss the point estimate on skewed
        // resample distributions; widen to keep r inside.
        ci_low: lo.min(r),
        ci_high: hi.max(r),
        n_pairs: flat_x.len(),
        n_groups: groups,
        n_boot,
        seed,
        degenerate_resamples: degenerate,
    })
}

fn percentile_interval(stats: &mut [f64], confidence: f64) -> (f64, f64) {
    stats.sort_by(f64::total_cmp);
    let n = stats.len();
    let alpha = (1.0 - confidence) / 2.0;
    let lo = ((alpha * n as f64).floor() as usize).min(n - 1);
    let hi = (((1.0 - alpha) * n as f64).ceil() as usize).saturating_sub(1).min(n - 1);
    (stats[lo], stats[hi])
}

/// `.78`-style formatting: two decimals, no leading zero.
pub fn short_decimal(v: f64) -> String {
    let s = format!("{v:.2}");
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}
