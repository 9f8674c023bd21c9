//! Empirical statistics over runs and densities.
//!
//! Sums run left to right in a fixed order so results do not depend on the
//! number of threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pde::DensityField;
use crate::sim::RunRecord;

/// Mean and population standard deviation (divisor `n`).
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean of `x^order`.
pub fn empirical_moment(samples: &[f64], order: u32) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("samples".into()));
    }
    if order == 0 {
        return Err(Error::invalid("order", "must be positive"));
    }
    Ok(samples.iter().map(|x| x.powi(order as i32)).sum::<f64>() / samples.len() as f64)
}

/// Measure argument of [`interaction_functional`].
#[derive(Debug, Clone, Copy)]
pub enum MeasureRef<'a> {
    Samples(&'a [f64]),
    Density(&'a DensityField),
}

/// `∫ β dμ`: sample mean for samples, midpoint quadrature for densities.
pub fn interaction_functional(measure: MeasureRef<'_>, beta: impl Fn(f64) -> f64) -> Result<f64> {
    match measure {
        MeasureRef::Samples(s) => {
            if s.is_empty() {
                return Err(Error::EmptyInput("samples".into()));
            }
            Ok(s.iter().map(|&x| beta(x)).sum::<f64>() / s.len() as f64)
        }
        MeasureRef::Density(d) => {
            let dx = d.grid.dx();
            Ok(d.grid
                .centers()
                .zip(&d.values)
                .map(|(x, m)| beta(x) * m * dx)
                .sum())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    /// Samples clamped into the first bin.
    pub below: u64,
    /// Samples clamped into the last bin.
    pub above: u64,
    pub normalized: bool,
}

impl Histogram1D {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        let w = self.width();
        (0..self.bins())
            .map(|k| self.lo + (k as f64 + 0.5) * w)
            .collect()
    }

    /// Counts divided by `total · width` (a probability density).
    pub fn density(&self) -> Vec<f64> {
        let norm = self.total() as f64 * self.width();
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }
}

/// Histogram on `[lo, hi]` with uniform bins; out-of-range samples are
/// clamped into the edge bins and tallied in `below`/`above`.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Histogram1D> {
    if bins == 0 {
        return Err(Error::invalid("bins", "must be at least 1"));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("range", "need finite lo < hi"));
    }
    let mut counts = vec![0u64; bins];
    let (mut below, mut above) = (0, 0);
    let w = (hi - lo) / bins as f64;
    for &x in samples {
        let k = if x < lo || x.is_nan() {
            below += 1;
            0
        } else if x > hi {
            above += 1;
            bins - 1
        } else {
            (((x - lo) / w) as usize).min(bins - 1)
        };
        counts[k] += 1;
    }
    Ok(Histogram1D {
        lo,
        hi,
        counts,
        below,
        above,
        normalized: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl SeriesReport {
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid(
                "series",
                "times and values differ in length",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("series", "times must be increasing"));
        }
        Ok(Self {
            label: label.into(),
            times,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// Value at the first time `≥ t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let k = self.times.partition_point(|&s| s < t - 1e-12);
        self.values.get(k).copied()
    }

    /// First time at which the value is at or below `level`.
    pub fn first_below(&self, level: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.values)
            .find(|(_, v)| **v <= level)
            .map(|(t, _)| *t)
    }
}

/// Per-sample standard deviation of one coordinate across a population.
pub fn dispersion_series(
    run: &RunRecord,
    coordinate: usize,
    population: usize,
) -> Result<SeriesReport> {
    if population >= run.n_populations || coordinate >= run.dim {
        return Err(Error::MissingStatistic(format!(
            "no standard deviation recorded for population {population}, coordinate {coordinate}"
        )));
    }
    if run.samples.is_empty() {
        return Err(Error::MissingStatistic("run has no samples".into()));
    }
    SeriesReport::new(
        format!("std_p{population}_c{coordinate}"),
        run.times(),
        run.std_series(population, coordinate),
    )
}

/// `√(Σ μ_j² e^{κ(1+x_j²)} Δx)`.
pub fn weighted_l2_norm(density: &DensityField, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::invalid("kappa", "must lie in (0, 1)"));
    }
    let dx = density.grid.dx();
    let mut acc = 0.0;
    for (x, &m) in density.grid.centers().zip(&density.values) {
        if m == 0.0 {
            continue;
        }
        let w = (kappa * (1.0 + x * x)).exp();
        if !w.is_finite() {
            return Err(Error::Overflow(format!(
                "weight e^(kappa(1+x^2)) overflows at x = {x}"
            )));
        }
        acc += m * m * w * dx;
    }
    if !acc.is_finite() {
        return Err(Error::Overflow("weighted norm is not finite".into()));
    }
    Ok(acc.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSplit {
    pub fraction_above: f64,
    pub fraction_below: f64,
    /// Smallest distance from any sample to the pivot.
    pub gap: f64,
}

pub fn cluster_split(samples: &[f64], pivot: f64) -> Result<ClusterSplit> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("samples".into()));
    }
    let n = samples.len() as f64;
    let above = samples.iter().filter(|&&x| x > pivot).count() as f64;
    let below = samples.iter().filter(|&&x| x < pivot).count() as f64;
    let gap = samples
        .iter()
        .map(|x| (x - pivot).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(ClusterSplit {
        fraction_above: above / n,
        fraction_below: below / n,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{generic_rng, sample_normal};
    use crate::pde::{DensityField, Grid1D};
    use proptest::prelude::*;

    fn normal_cdf(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26 is too coarse for a chi-square oracle;
        // integrate the density with composite Simpson instead.
        let n = 2000;
        let (a, b) = (-12.0f64, x);
        if b <= a {
            return 0.0;
        }
        let h = (b - a) / n as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(a) + pdf(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn moment_examples() {
        assert_eq!(empirical_moment(&[1.0, 1.0, 1.0], 2).unwrap(), 1.0);
        assert_eq!(empirical_moment(&[-1.0, 1.0], 1).unwrap(), 0.0);
        assert!(empirical_moment(&[], 2).is_err());
        let mut rng = generic_rng(42);
        let s: Vec<f64> = (0..1_000_000)
            .map(|_| sample_normal(&mut rng, 0.0, 1.0))
            .collect();
        assert!((empirical_moment(&s, 2).unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn functional_examples() {
        assert_eq!(
            interaction_functional(MeasureRef::Samples(&[0.3, 7.0]), |_| 1.0).unwrap(),
            1.0
        );
        assert_eq!(
            interaction_functional(MeasureRef::Samples(&[2.0]), |y| y * y).unwrap(),
            4.0
        );
        let grid = Grid1D::new(8.0, 4096).unwrap();
        let d = DensityField::from_fn(grid, 0.1, |x| (-x * x / (2.0 * 0.3)).exp()).unwrap();
        assert!(
            (interaction_functional(MeasureRef::Density(&d), |_| 1.0).unwrap() - 1.0).abs() < 1e-12
        );
        // refined quadrature oracle of the normalized second moment
        let oracle = |m: usize| {
            let h = 16.0 / m as f64;
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..m {
                let x = -8.0 + (j as f64 + 0.5) * h;
                let w = (-x * x / 0.6).exp();
                num += x * x * w;
                den += w;
            }
            num / den
        };
        let rich = (4.0 * oracle(32768) - oracle(16384)) / 3.0;
        let got = interaction_functional(MeasureRef::Density(&d), |y| y * y).unwrap();
        assert!((got - rich).abs() < 1e-6);
        assert!((got - 0.3).abs() < 1e-6);
    }

    #[test]
    fn histogram_examples() {
        let h = histogram(&[0.5, 0.51, 0.52], 0.0, 1.0, 4).unwrap();
        assert_eq!(h.counts, vec![0, 0, 3, 0]);
        let centers: Vec<f64> = (0..10).map(|k| 0.05 + 0.1 * k as f64).collect();
        let h = histogram(&centers, 0.0, 1.0, 10).unwrap();
        assert!(h.counts.iter().all(|&c| c == 1));
        let h = histogram(&[-5.0, 5.0, 0.0], -1.0, 1.0, 2).unwrap();
        assert_eq!((h.below, h.above, h.total()), (1, 1, 3));
        assert!(histogram(&[1.0], 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn histogram_chi_square_against_normal() {
        let mut rng = generic_rng(7);
        let n = 100_000;
        let s: Vec<f64> = (0..n).map(|_| sample_normal(&mut rng, 0.0, 1.0)).collect();
        let bins = 20;
        let h = histogram(&s, -3.0, 3.0, bins).unwrap();
        let mut chi2 = 0.0;
        for k in 0..bins {
            let a = if k == 0 { -40.0 } else { -3.0 + 0.3 * k as f64 };
            let b = if k == bins - 1 {
                40.0
            } else {
                -3.0 + 0.3 * (k + 1) as f64
            };
            let expected = n as f64 * (normal_cdf(b) - normal_cdf(a));
            chi2 += (h.counts[k] as f64 - expected).powi(2) / expected;
        }
        // chi-square 99th percentile with 19 degrees of freedom
        assert!(chi2 < 36.19, "chi2 = {chi2}");
    }

    #[test]
    fn weighted_norm_examples() {
        let grid = Grid1D::new(1.0, 64).unwrap();
        let zero = DensityField::new(grid.clone(), vec![0.0; 64], 0.1, 0.0).unwrap();
        assert_eq!(weighted_l2_norm(&zero, 0.5).unwrap(), 0.0);
        // odd cell count puts a center at x = 0
        let grid = Grid1D::new(1.0, 65).unwrap();
        let mut v = vec![0.0; 65];
        let h = 3.0;
        v[32] = h;
        let d = DensityField::new(grid.clone(), v, 0.1, 0.0).unwrap();
        let kappa: f64 = 0.4;
        let expected = h * (kappa.exp() * grid.dx()).sqrt();
        assert!((weighted_l2_norm(&d, kappa).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn weighted_norm_gaussian_closed_form() {
        // ∫ N(0,s²)² e^{κ(1+x²)} dx = e^κ / (2π s²) · √(π / (1/s² − κ))
        let s2: f64 = 0.25;
        let kappa: f64 = 0.5;
        let grid = Grid1D::new(8.0, 4096).unwrap();
        let d = DensityField::from_fn(grid, 0.1, |x| (-x * x / (2.0 * s2)).exp()).unwrap();
        let pi = std::f64::consts::PI;
        let exact = (kappa.exp() / (2.0 * pi * s2) * (pi / (1.0 / s2 - kappa)).sqrt()).sqrt();
        assert!((weighted_l2_norm(&d, kappa).unwrap() - exact).abs() < 1e-4);
    }

    #[test]
    fn weighted_norm_overflow() {
        let grid = Grid1D::new(40.0, 64).unwrap();
        let d = DensityField::from_fn(grid, 0.1, |_| 1.0).unwrap();
        assert!(matches!(weighted_l2_norm(&d, 0.9), Err(Error::Overflow(_))));
    }

    #[test]
    fn cluster_examples() {
        let c = cluster_split(&[1.0, 2.0], 0.5).unwrap();
        assert_eq!((c.fraction_above, c.fraction_below, c.gap), (1.0, 0.0, 0.5));
        let c = cluster_split(&[-1.0, 1.0], 0.0).unwrap();
        assert_eq!((c.fraction_above, c.fraction_below, c.gap), (0.5, 0.5, 1.0));
    }

    #[test]
    fn series_queries() {
        let s = SeriesReport::new("x", vec![0.0, 1.0, 2.0], vec![3.0, 0.4, 0.1]).unwrap();
        assert_eq!(s.first_below(0.5), Some(1.0));
        assert_eq!(s.at(1.5), Some(0.1));
        assert!(SeriesReport::new("x", vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn histogram_total(samples in proptest::collection::vec(-10.0f64..10.0, 0..200), bins in 1usize..30) {
            let h = histogram(&samples, -3.0, 3.0, bins).unwrap();
            prop_assert_eq!(h.total() as usize, samples.len());
        }

        #[test]
        fn moment_homogeneity(samples in proptest::collection::vec(-5.0f64..5.0, 1..100),
                              lambda in -3.0f64..3.0, k in 1u32..5) {
            let scaled: Vec<f64> = samples.iter().map(|x| x * lambda).collect();
            let a = empirical_moment(&scaled, k).unwrap();
            let b = lambda.powi(k as i32) * empirical_moment(&samples, k).unwrap();
            let scale = samples.iter().map(|x| (x * lambda).abs().powi(k as i32)).sum::<f64>() / samples.len() as f64;
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + scale));
        }

        #[test]
        fn functional_linear_in_beta(samples in proptest::collection::vec(-5.0f64..5.0, 1..50),
                                     a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let m = MeasureRef::Samples(&samples);
            let lhs = interaction_functional(m, |y| a * y * y + b).unwrap();
            let rhs = a * interaction_functional(m, |y| y * y).unwrap() + b * interaction_functional(m, |_| 1.0).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            prop_assert!((interaction_functional(m, |_| 1.0).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn weighted_norm_monotone(values in proptest::collection::vec(0.0f64..2.0, 64), k1 in 0.01f64..0.98) {
            let grid = Grid1D::new(3.0, 64).unwrap();
            let d = DensityField::new(grid, values, 0.1, 0.0).unwrap();
            let a = weighted_l2_norm(&d, k1).unwrap();
            let b = weighted_l2_norm(&d, k1 + 0.01).unwrap();
            prop_assert!(b >= a);
        }
    }
}
