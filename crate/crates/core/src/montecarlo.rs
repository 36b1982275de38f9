//! Sampling-based oracle for the analytic moment and no-signaling engines.
//!
//! Draws are split into fixed chunks of [`CHUNK_SIZE`] points. Chunk `k` of a
//! stream with base seed `s` uses `ChaCha8Rng::seed_from_u64(s + k)` (wrapping),
//! and chunk results are merged in chunk order, so every estimate is
//! bit-reproducible for a given `(seed, n)` whatever the rayon pool size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::behaviors::{BellBehavior, SettingVector};
use crate::error::{Error, Result};
use crate::measures::{GaussianComponent, MixtureMeasure, Sampler};

pub const CHUNK_SIZE: usize = 65_536;

/// z-score bound used by every statistical comparison here.
pub const Z_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Runs `f` on every chunk of an `n`-point stream and returns the chunk results in order.
fn chunked<T, F>(measure: &MixtureMeasure, n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize, &Sampler<'_>) -> T + Sync,
{
    let sampler = Sampler::new(measure);
    let chunks = n.div_ceil(CHUNK_SIZE);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            let len = CHUNK_SIZE.min(n - k * CHUNK_SIZE);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            f(&mut rng, len, &sampler)
        })
        .collect()
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Self) -> Self {
        if other.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return other;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        Self {
            count,
            mean: self.mean + d * other.count / count,
            m2: self.m2 + other.m2 + d * d * self.count * other.count / count,
        }
    }
}

/// Sample mean of `∏ x_i^{n_i}` with its standard error.
pub fn estimate_moment(
    measure: &MixtureMeasure,
    exponents: &[u32],
    n: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 samples, got {n}")));
    }
    if exponents.len() != measure.dim() {
        return Err(Error::DimensionMismatch { expected: measure.dim(), found: exponents.len() });
    }
    let dim = measure.dim();
    let parts = chunked(measure, n, seed, |rng, len, sampler| {
        let mut acc = Welford::default();
        let mut point = vec![0.0; dim];
        for _ in 0..len {
            sampler.draw_into(rng, &mut point);
            acc.push(point.iter().zip(exponents).map(|(x, &e)| x.powi(e as i32)).product());
        }
        acc
    });
    let acc = parts.into_iter().fold(Welford::default(), Welford::merge);
    let sd = (acc.m2 / (acc.count - 1.0)).sqrt();
    Ok(EstimateReport { estimate: acc.mean, std_error: sd / (n as f64).sqrt(), samples: n, seed })
}

/// First four raw power sums of each kept coordinate.
#[derive(Debug, Clone, Default)]
struct PowerSums {
    count: f64,
    sums: Vec<[f64; 4]>,
}

impl PowerSums {
    fn merge(mut self, other: Self) -> Self {
        if self.sums.is_empty() {
            return other;
        }
        self.count += other.count;
        for (a, b) in self.sums.iter_mut().zip(other.sums) {
            for k in 0..4 {
                a[k] += b[k];
            }
        }
        self
    }

    /// (mean, variance, fourth central moment) of coordinate `j`.
    fn moments(&self, j: usize) -> (f64, f64, f64) {
        let [s1, s2, s3, s4] = self.sums[j].map(|s| s / self.count);
        let var = (s2 - s1 * s1).max(0.0);
        let mu4 = s4 - 4.0 * s1 * s3 + 6.0 * s1 * s1 * s2 - 3.0 * s1.powi(4);
        (s1, var, mu4.max(0.0))
    }
}

fn marginal_power_sums(measure: &MixtureMeasure, keep: &[usize], n: usize, seed: u64) -> PowerSums {
    let dim = measure.dim();
    chunked(measure, n, seed, |rng, len, sampler| {
        let mut sums = vec![[0.0; 4]; keep.len()];
        let mut point = vec![0.0; dim];
        for _ in 0..len {
            sampler.draw_into(rng, &mut point);
            for (acc, &i) in sums.iter_mut().zip(keep) {
                let x = point[i];
                let x2 = x * x;
                acc[0] += x;
                acc[1] += x2;
                acc[2] += x2 * x;
                acc[3] += x2 * x2;
            }
        }
        PowerSums { count: len as f64, sums }
    })
    .into_iter()
    .fold(PowerSums::default(), PowerSums::merge)
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NsStatReport {
    pub pass: bool,
    pub worst_z: f64,
    pub comparisons: usize,
    pub samples: usize,
    pub seed: u64,
}

/// Statistical no-signaling check on the marginal over `modes_kept`.
///
/// For every setting vector, the kept coordinates are compared with those of
/// the setting that agrees on `modes_kept` and is 0 elsewhere: per-coordinate
/// z-tests on the mean and on the variance, each at [`Z_LIMIT`]. The samples
/// for setting bits `b` use base seed `seed + (b << 32)`.
pub fn ns_statistical_test(
    b: &BellBehavior,
    modes_kept: &[usize],
    n: usize,
    seed: u64,
) -> Result<NsStatReport> {
    let m = b.modes();
    if modes_kept.is_empty() || modes_kept.len() >= m {
        return Err(Error::InvalidSubset("modes_kept must be a nonempty proper subset".into()));
    }
    let mut mask = 0u32;
    for &i in modes_kept {
        if i >= m || mask >> i & 1 == 1 {
            return Err(Error::InvalidSubset(format!("mode {i} invalid or repeated")));
        }
        mask |= 1 << i;
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 samples, got {n}")));
    }

    let stats = |s: SettingVector| -> Result<PowerSums> {
        let measure = b.measure(s)?;
        let stream = seed.wrapping_add(u64::from(s.bits()) << 32);
        Ok(marginal_power_sums(&measure, modes_kept, n, stream))
    };

    let nf = n as f64;
    let mut worst = 0.0f64;
    let mut comparisons = 0;
    let mut reps = std::collections::HashMap::new();
    for s in SettingVector::all(m) {
        let rep_bits = s.bits() & mask;
        if rep_bits == s.bits() {
            continue;
        }
        if !reps.contains_key(&rep_bits) {
            reps.insert(rep_bits, stats(SettingVector::from_bits(m, rep_bits)?)?);
        }
        let here = stats(s)?;
        let there = &reps[&rep_bits];
        for j in 0..modes_kept.len() {
            let (m1, v1, k1) = here.moments(j);
            let (m2, v2, k2) = there.moments(j);
            let z_mean = z_score(m1 - m2, ((v1 + v2) / nf).sqrt());
            let se_var = (((k1 - v1 * v1).max(0.0) + (k2 - v2 * v2).max(0.0)) / nf).sqrt();
            let z_var = z_score(v1 - v2, se_var);
            worst = worst.max(z_mean.abs()).max(z_var.abs());
            comparisons += 2;
        }
    }
    Ok(NsStatReport { pass: worst <= Z_LIMIT, worst_z: worst, comparisons, samples: n, seed })
}

/// A random moment query: a mixture and an exponent vector.
#[derive(Debug, Clone)]
pub struct MomentCase {
    pub measure: MixtureMeasure,
    pub exponents: Vec<u32>,
}

/// `count` random 3-component mixtures in 1 to 3 dimensions, each with an
/// exponent vector of total degree at most `max_degree`.
pub fn random_moment_cases(count: usize, max_degree: u32, seed: u64) -> Vec<MomentCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let dim = rng.random_range(1..=3usize);
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            weights[0] = 1.0 - weights[1..].iter().sum::<f64>();
            let components = weights
                .into_iter()
                .map(|w| {
                    let center = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
                    let sigma = rng.random_range(0.1..1.2);
                    (w, GaussianComponent::new(center, sigma).expect("finite parameters"))
                })
                .collect();
            let measure = MixtureMeasure::from_components(components).expect("normalized weights");
            let degree = rng.random_range(1..=max_degree);
            let mut exponents = vec![0u32; dim];
            for _ in 0..degree {
                exponents[rng.random_range(0..dim)] += 1;
            }
            MomentCase { measure, exponents }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentCheck {
    pub exponents: Vec<u32>,
    pub analytic: f64,
    pub estimate: EstimateReport,
    pub z: f64,
    pub agrees: bool,
}

/// Compares the analytic moment of each case with its Monte-Carlo estimate.
/// Case `i` samples with base seed `seed + i·2^32`.
pub fn check_moment_cases(cases: &[MomentCase], n: usize, seed: u64) -> Result<Vec<MomentCheck>> {
    cases
        .iter()
        .enumerate()
        .map(|(i, case)| {
            let analytic = case.measure.moment(&case.exponents)?;
            let estimate =
                estimate_moment(&case.measure, &case.exponents, n, seed.wrapping_add((i as u64) << 32))?;
            let z = z_score(estimate.estimate - analytic, estimate.std_error);
            Ok(MomentCheck {
                exponents: case.exponents.clone(),
                analytic,
                estimate,
                z,
                agrees: z.abs() <= Z_LIMIT,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behaviors::{behavior_2mode, behavior_mmode, signaling_example};
    use crate::measures::normal_measure;

    fn eq3a(l: f64, s: f64) -> MixtureMeasure {
        behavior_mmode(3, l, s)
            .unwrap()
            .measure(SettingVector::all_ones(3).unwrap())
            .unwrap()
            .as_ref()
            .clone()
    }

    #[test]
    fn zero_mean() {
        let n = normal_measure(vec![0.0], 1.0).unwrap();
        let r = estimate_moment(&n, &[1], 1_000_000, 11).unwrap();
        assert!(r.estimate.abs() <= Z_LIMIT * r.std_error, "{r:?}");
        assert!((r.std_error - 1e-3).abs() < 1e-4);
    }

    #[test]
    fn three_mode_moments() {
        let m = eq3a(1.0, 0.5);
        let r = estimate_moment(&m, &[1, 1, 1], 1_000_000, 3).unwrap();
        assert!((r.estimate + 1.0).abs() <= Z_LIMIT * r.std_error, "{r:?}");
        let r = estimate_moment(&m, &[2, 2, 2], 1_000_000, 4).unwrap();
        assert!((r.estimate - 1.953_125).abs() <= Z_LIMIT * r.std_error, "{r:?}");
    }

    #[test]
    fn point_mass_has_zero_error() {
        let d = normal_measure(vec![0.5, 2.0], 0.0).unwrap();
        let r = estimate_moment(&d, &[2, 1], 1000, 0).unwrap();
        assert_eq!(r.estimate, 0.5);
        assert_eq!(r.std_error, 0.0);
    }

    #[test]
    fn reproducible_across_pool_sizes() {
        let m = eq3a(0.8, 0.3);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_moment(&m, &[2, 1, 1], 300_000, 99).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(8));
    }

    #[test]
    fn invalid_inputs() {
        let n = normal_measure(vec![0.0], 1.0).unwrap();
        assert!(estimate_moment(&n, &[1], 1, 0).is_err());
        assert!(estimate_moment(&n, &[1, 1], 10, 0).is_err());
        let b = behavior_mmode(3, 1.0, 0.5).unwrap();
        assert!(ns_statistical_test(&b, &[], 10, 0).is_err());
        assert!(ns_statistical_test(&b, &[0, 1, 2], 10, 0).is_err());
        assert!(ns_statistical_test(&b, &[3], 10, 0).is_err());
    }

    #[test]
    fn ns_statistics() {
        let b = behavior_mmode(3, 1.0, 0.5).unwrap();
        let r = ns_statistical_test(&b, &[0], 100_000, 5).unwrap();
        assert!(r.pass, "{r:?}");
        assert_eq!(r.comparisons, 2 * 6);

        let b = behavior_2mode(1.0, 0.3).unwrap();
        assert!(ns_statistical_test(&b, &[1], 100_000, 6).unwrap().pass);

        let b = signaling_example(1.0, 0.3).unwrap();
        let r = ns_statistical_test(&b, &[0], 100_000, 7).unwrap();
        assert!(!r.pass);
        assert!(r.worst_z > 100.0);
    }

    #[test]
    fn small_moment_suite() {
        let cases = random_moment_cases(12, 6, 2024);
        assert!(cases.iter().all(|c| c.exponents.iter().sum::<u32>() <= 6));
        let checks = check_moment_cases(&cases, 200_000, 1).unwrap();
        let agree = checks.iter().filter(|c| c.agrees).count();
        assert!(agree >= 11, "{checks:#?}");
    }
}
