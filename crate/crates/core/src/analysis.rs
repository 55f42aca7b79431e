//! Statistical analysis of evolving topologies: power-law exponent
//! fitting, a Monte-Carlo test of the Erdős–Rényi null hypothesis, and
//! per-visible-neuron connectivity maps.
//!
//! The hypothesis test conditions on the total degree, under which the
//! Erdős–Rényi null has no free parameters: T link-endpoints fall
//! uniformly on N neurons, so a degree vector is a multinomial throw and
//! each neuron's degree is marginally Binomial(T, 1/N). The statistic is
//! the tail-conditional log-likelihood ratio of the refitted power law
//! over that null; Monte-Carlo replicates are fresh multinomial throws
//! with the power-law exponent refitted each time. Conditioning makes
//! the p-value calibrated by construction: ER-initialized layers score
//! high, and the p-value falls under 0.05 as heavy-tailed degree
//! distributions emerge.

use std::io::Write;

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::rng;
use crate::topology::{Side, SparseWeights};

/// Default degree cutoff for tail fits.
pub const DEFAULT_D_MIN: usize = 2;

/// Result of a power-law analysis of one degree sequence.
#[derive(Debug, Clone)]
pub struct PowerLawReport {
    pub gamma_hat: f64,
    pub d_min: usize,
    pub p_value: f64,
    pub n_tail: usize,
}

/// Discrete maximum-likelihood exponent over degrees >= d_min:
/// gamma = 1 + n_tail / sum(ln(d_i / (d_min - 0.5))).
pub fn fit_power_law(degrees: &[usize], d_min: usize) -> Result<f64> {
    if d_min < 1 {
        return Err(Error::InvalidParameter("d_min must be >= 1".into()));
    }
    let tail: Vec<usize> = degrees.iter().copied().filter(|&d| d >= d_min).collect();
    if tail.len() < 10 {
        return Err(Error::UndefinedFit(format!(
            "only {} degrees >= d_min={d_min}, need at least 10",
            tail.len()
        )));
    }
    let (min, max) = tail
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if min == max {
        return Err(Error::UndefinedFit(format!(
            "all tail degrees equal {min}; exponent undefined"
        )));
    }
    let shift = d_min as f64 - 0.5;
    let sum_ln: f64 = tail.iter().map(|&d| (d as f64 / shift).ln()).sum();
    Ok(1.0 + tail.len() as f64 / sum_ln)
}

/// Full report: exponent plus the null-hypothesis p-value at the given
/// cutoff.
pub fn power_law_report<R: Rng>(
    degrees: &[usize],
    d_min: usize,
    n_monte_carlo: usize,
    rng: &mut R,
) -> Result<PowerLawReport> {
    let gamma_hat = fit_power_law(degrees, d_min)?;
    let p_value = null_hypothesis_p_value_at(degrees, d_min, n_monte_carlo, rng)?;
    let n_tail = degrees.iter().filter(|&&d| d >= d_min).count();
    Ok(PowerLawReport {
        gamma_hat,
        d_min,
        p_value,
        n_tail,
    })
}

/// One-tailed Monte-Carlo p-value for the null hypothesis that the
/// degrees are binomial/ER-distributed against the power-law
/// alternative, at the default cutoff. Small values reject the null.
pub fn null_hypothesis_p_value<R: Rng>(
    degrees: &[usize],
    n_monte_carlo: usize,
    rng: &mut R,
) -> Result<f64> {
    null_hypothesis_p_value_at(degrees, DEFAULT_D_MIN, n_monte_carlo, rng)
}

pub fn null_hypothesis_p_value_at<R: Rng>(
    degrees: &[usize],
    d_min: usize,
    n_monte_carlo: usize,
    rng: &mut R,
) -> Result<f64> {
    if degrees.len() < 30 {
        return Err(Error::InvalidParameter(format!(
            "need at least 30 degrees, got {}",
            degrees.len()
        )));
    }
    if n_monte_carlo < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 Monte-Carlo replicates, got {n_monte_carlo}"
        )));
    }
    let null = ErNull::for_degrees(degrees)?;
    let observed = llr_statistic(degrees, d_min, &null)?;

    let base: u64 = rng.gen();
    let mut count = 0usize;
    let mut sample = vec![0usize; degrees.len()];
    for rep in 0..n_monte_carlo {
        let mut stream = rng::substream(base, rep as u64);
        null.sample_degree_vector(&mut sample, &mut stream);
        // The exponent is refitted per replicate; degenerate fits count
        // as maximally null-consistent.
        let stat = match llr_statistic(&sample, d_min, &null) {
            Ok(s) => s,
            Err(Error::UndefinedFit(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        if stat >= observed {
            count += 1;
        }
    }
    Ok((1 + count) as f64 / (n_monte_carlo + 1) as f64)
}

/// Optional cutoff selection: the d_min in [1, max/4] minimizing the
/// Kolmogorov-Smirnov distance between the tail and its fitted power law.
pub fn select_d_min_ks(degrees: &[usize]) -> Result<usize> {
    let max = degrees.iter().copied().max().unwrap_or(0);
    let mut best: Option<(f64, usize)> = None;
    for d_min in 1..=(max / 4).max(1) {
        let Ok(gamma) = fit_power_law(degrees, d_min) else {
            continue;
        };
        let mut tail: Vec<usize> = degrees.iter().copied().filter(|&d| d >= d_min).collect();
        tail.sort_unstable();
        let n = tail.len() as f64;
        let h_all = hurwitz_zeta(gamma, d_min);
        let mut ks: f64 = 0.0;
        let mut seen = 0usize;
        let mut i = 0;
        while i < tail.len() {
            let d = tail[i];
            let mut j = i;
            while j < tail.len() && tail[j] == d {
                j += 1;
            }
            seen += j - i;
            let empirical = seen as f64 / n;
            let model = 1.0 - hurwitz_zeta(gamma, d + 1) / h_all;
            ks = ks.max((empirical - model).abs());
            i = j;
        }
        if best.map_or(true, |(b, _)| ks < b) {
            best = Some((ks, d_min));
        }
    }
    best.map(|(_, d)| d)
        .ok_or_else(|| Error::UndefinedFit("no usable cutoff in [1, max/4]".into()))
}

/// Per-input-neuron degrees reshaped row-major onto an image grid.
#[derive(Debug, Clone)]
pub struct ConnectivityMap {
    height: usize,
    width: usize,
    grid: Vec<usize>,
}

pub fn visible_connectivity_map(
    weights: &SparseWeights,
    height: usize,
    width: usize,
) -> Result<ConnectivityMap> {
    if height * width != weights.n_in() {
        return Err(Error::DimensionMismatch(format!(
            "{height}x{width} grid cannot hold {} input neurons",
            weights.n_in()
        )));
    }
    Ok(ConnectivityMap {
        height,
        width,
        grid: weights.degree_distribution(Side::Input),
    })
}

impl ConnectivityMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.grid[row * self.width + col]
    }

    pub fn total(&self) -> usize {
        self.grid.iter().sum()
    }

    /// Mean degree over a rectangular block [r0, r1) x [c0, c1).
    pub fn block_mean(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let mut sum = 0usize;
        let mut n = 0usize;
        for r in r0..r1.min(self.height) {
            for c in c0..c1.min(self.width) {
                sum += self.get(r, c);
                n += 1;
            }
        }
        sum as f64 / n.max(1) as f64
    }

    /// Mean degree over the frame of pixels within `depth` of an edge.
    pub fn border_mean(&self, depth: usize) -> f64 {
        let mut sum = 0usize;
        let mut n = 0usize;
        for r in 0..self.height {
            for c in 0..self.width {
                let on_border = r < depth
                    || c < depth
                    || r >= self.height.saturating_sub(depth)
                    || c >= self.width.saturating_sub(depth);
                if on_border {
                    sum += self.get(r, c);
                    n += 1;
                }
            }
        }
        sum as f64 / n.max(1) as f64
    }

    /// Space-separated integers, one row per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for row in self.grid.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(|d| d.to_string()).collect();
            writeln!(w, "{}", cells.join(" "))?;
        }
        Ok(())
    }

    /// Binary 8-bit PGM with degrees linearly rescaled to 0..=255.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let max = self.grid.iter().copied().max().unwrap_or(0).max(1) as f64;
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .grid
            .iter()
            .map(|&d| (d as f64 / max * 255.0).round() as u8)
            .collect();
        w.write_all(&bytes)?;
        Ok(())
    }
}

// ---- internal: the conditional ER null and the test statistic ----

/// Erdős–Rényi degree null conditioned on the total: T endpoints fall
/// uniformly on N neurons. Parameter-free given the data.
#[derive(Debug, Clone, Copy)]
struct ErNull {
    total: u64,
    slots: usize,
}

impl ErNull {
    fn for_degrees(degrees: &[usize]) -> Result<Self> {
        let total: usize = degrees.iter().sum();
        if total == 0 {
            return Err(Error::UndefinedFit("all degrees are zero".into()));
        }
        Ok(ErNull {
            total: total as u64,
            slots: degrees.len(),
        })
    }

    /// One multinomial throw of the total onto the slots, via sequential
    /// binomial splitting (exact, O(slots)).
    fn sample_degree_vector<R: Rng>(&self, out: &mut [usize], rng: &mut R) {
        debug_assert_eq!(out.len(), self.slots);
        let mut remaining = self.total;
        for (i, slot) in out.iter_mut().enumerate() {
            let left = (self.slots - i) as f64;
            if remaining == 0 {
                *slot = 0;
                continue;
            }
            if i + 1 == self.slots {
                *slot = remaining as usize;
                break;
            }
            let draw = rand_distr::Binomial::new(remaining, 1.0 / left)
                .expect("valid split")
                .sample(rng);
            *slot = draw as usize;
            remaining -= draw;
        }
    }

    /// Marginal ln pmf of one neuron's degree: Binomial(T, 1/N).
    fn ln_pmf(&self, d: usize) -> f64 {
        let k = d as f64;
        let t = self.total as f64;
        if d as u64 > self.total {
            return f64::NEG_INFINITY;
        }
        let p = 1.0 / self.slots as f64;
        let ln_choose = ln_gamma(t + 1.0) - ln_gamma(k + 1.0) - ln_gamma(t - k + 1.0);
        let miss = if t > k { (t - k) * (1.0 - p).ln() } else { 0.0 };
        ln_choose + k * p.ln() + miss
    }

    /// ln P(D >= d_min).
    fn ln_tail_prob(&self, d_min: usize) -> f64 {
        let mut below = 0.0f64;
        for d in 0..d_min {
            below += self.ln_pmf(d).exp();
        }
        (1.0 - below).max(1e-300).ln()
    }
}

/// Tail-conditional log-likelihood ratio of the fitted power law over the
/// fitted null, summed over degrees >= d_min. Per-degree log terms are
/// memoized; degree values repeat heavily in layer-sized samples.
fn llr_statistic(degrees: &[usize], d_min: usize, null: &ErNull) -> Result<f64> {
    let gamma = fit_power_law(degrees, d_min)?;
    if gamma <= 1.0 + 1e-9 {
        return Err(Error::UndefinedFit(format!(
            "fitted exponent {gamma} too close to 1"
        )));
    }
    let ln_h = hurwitz_zeta(gamma, d_min).ln();
    let ln_tail = null.ln_tail_prob(d_min);
    let max_degree = degrees.iter().copied().max().unwrap_or(0);
    let mut memo = vec![f64::NAN; max_degree + 1];
    let mut stat = 0.0;
    for &d in degrees.iter().filter(|&&d| d >= d_min) {
        if memo[d].is_nan() {
            let ln_pl = -gamma * (d as f64).ln() - ln_h;
            let ln_null = null.ln_pmf(d) - ln_tail;
            memo[d] = ln_pl - ln_null;
        }
        stat += memo[d];
    }
    Ok(stat)
}

/// Hurwitz zeta sum_{k=a}^inf k^-gamma for gamma > 1, via explicit
/// summation plus an Euler-Maclaurin tail.
pub fn hurwitz_zeta(gamma: f64, a: usize) -> f64 {
    let cutoff = a + 5000;
    let mut sum = 0.0;
    for k in a..cutoff {
        sum += (-gamma * (k as f64).ln()).exp();
    }
    let kf = cutoff as f64;
    let tail = kf.powf(1.0 - gamma) / (gamma - 1.0) + 0.5 * kf.powf(-gamma)
        - gamma * kf.powf(-gamma - 1.0) / 12.0;
    sum + tail
}

/// Lanczos approximation of ln Gamma(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{EvolutionConfig, WeightInitSpec};

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(matches!(
            fit_power_law(&[5; 100], 2),
            Err(Error::UndefinedFit(_))
        ));
        assert!(matches!(
            fit_power_law(&[1; 100], 2),
            Err(Error::UndefinedFit(_))
        ));
        assert!(matches!(
            fit_power_law(&[2, 3, 4], 2),
            Err(Error::UndefinedFit(_))
        ));
    }

    #[test]
    fn fit_is_scale_consistent() {
        let degrees: Vec<usize> = (0..200).map(|i| 2 + (i % 17) * (i % 5)).collect();
        let g1 = fit_power_law(&degrees, 2).unwrap();
        let doubled: Vec<usize> = degrees.iter().chain(degrees.iter()).copied().collect();
        let g2 = fit_power_law(&doubled, 2).unwrap();
        assert!((g1 - g2).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..15 {
            fact *= n as f64;
            assert!((ln_gamma(n as f64 + 1.0) - fact.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn hurwitz_zeta_matches_direct_sum() {
        // Slow reference sum with generous cutoff.
        for (gamma, a) in [(2.5, 2usize), (3.0, 1), (1.8, 2)] {
            let direct: f64 = (a..2_000_000).map(|k| (k as f64).powf(-gamma)).sum();
            let fast = hurwitz_zeta(gamma, a);
            assert!(
                (fast - direct).abs() / direct < 1e-4,
                "gamma={gamma} a={a}: {fast} vs {direct}"
            );
        }
    }

    #[test]
    fn connectivity_map_conserves_and_exports() {
        let cfg = EvolutionConfig::new(3.0, 0.3, 8).unwrap();
        let w = SparseWeights::init_erdos_renyi(12, 9, &cfg, &WeightInitSpec::default()).unwrap();
        let map = visible_connectivity_map(&w, 3, 4).unwrap();
        assert_eq!(map.total(), w.nnz());
        let mut text = Vec::new();
        map.write_text(&mut text).unwrap();
        assert_eq!(String::from_utf8(text).unwrap().lines().count(), 3);
        let mut pgm = Vec::new();
        map.write_pgm(&mut pgm).unwrap();
        assert!(pgm.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(pgm.len(), b"P5\n4 3\n255\n".len() + 12);
        assert!(visible_connectivity_map(&w, 5, 2).is_err());
    }

    #[test]
    fn fully_connected_map_is_flat() {
        let cfg = EvolutionConfig::new(100.0, 0.3, 8).unwrap();
        let w = SparseWeights::init_erdos_renyi(4, 3, &cfg, &WeightInitSpec::default()).unwrap();
        let map = visible_connectivity_map(&w, 2, 2).unwrap();
        assert!(map.grid().iter().all(|&d| d == 3));
    }

    #[test]
    fn p_value_requires_sane_inputs() {
        let mut r = crate::rng::seeded(0);
        assert!(null_hypothesis_p_value(&[1, 2, 3], 1000, &mut r).is_err());
        let degrees: Vec<usize> = (0..100).map(|i| 5 + i % 7).collect();
        assert!(null_hypothesis_p_value(&degrees, 10, &mut r).is_err());
    }
}
