//! Empirical spectral diagnostics: rigidity, local law, unfolded gaps and
//! fixed-energy counting statistics.

use crate::free_convolution::{FcError, FcModel};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("length mismatch: {0} eigenvalues vs {1} reference points")]
    Length(usize, usize),
    #[error("index window {lo}..={hi} invalid for N = {n}")]
    Window { lo: usize, hi: usize, n: usize },
    #[error("need at least {need} replicas for this resolution, got {got}")]
    TooFewReplicas { need: usize, got: usize },
    #[error("empty sample")]
    Empty,
    #[error("eta grid must satisfy eta >= 10/N (smallest {eta}, N = {n})")]
    EtaTooSmall { eta: f64, n: usize },
    #[error(transparent)]
    Fc(#[from] FcError),
}

/// Per-replica values of one statistic with a summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub name: String,
    pub values: Vec<f64>,
    pub median: f64,
    pub max: f64,
    pub q05: f64,
    pub q95: f64,
    pub threshold: Option<f64>,
}

impl StatReport {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let mut s = values.clone();
        s.sort_by(f64::total_cmp);
        Self {
            name: name.into(),
            median: quantile_sorted(&s, 0.5),
            max: s.last().copied().unwrap_or(f64::NAN),
            q05: quantile_sorted(&s, 0.05),
            q95: quantile_sorted(&s, 0.95),
            values,
            threshold: None,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    /// Fraction of replicas at or below the threshold.
    pub fn pass_fraction(&self) -> Option<f64> {
        let t = self.threshold?;
        let n = self.values.iter().filter(|&&v| v <= t).count();
        Some(n as f64 / self.values.len().max(1) as f64)
    }

    pub fn write_table<W: Write>(&self, mut w: W, ensemble: &str, n: usize) -> io::Result<()> {
        writeln!(w, "ensemble,N,statistic,replica,value")?;
        for (r, v) in self.values.iter().enumerate() {
            writeln!(w, "{ensemble},{n},{},{r},{v}", self.name)?;
        }
        writeln!(w, "{ensemble},{n},{},median,{}", self.name, self.median)?;
        writeln!(w, "{ensemble},{n},{},max,{}", self.name, self.max)
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    let w = pos - k as f64;
    if k + 1 < sorted.len() {
        sorted[k] * (1.0 - w) + sorted[k + 1] * w
    } else {
        sorted[k]
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, 0.5)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// sup |F_n − F| for a continuous reference CDF (right-continuous ECDF).
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let s = sorted(samples);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// sup |F_a − F_b| over the pooled sample, ties handled by right continuity.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (sa, sb) = (sorted(a), sorted(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Total variation between two empirical distributions on the integers.
pub fn tv_distance(a: &[usize], b: &[usize]) -> f64 {
    let (pa, pb) = (histogram(a), histogram(b));
    let len = pa.len().max(pb.len());
    let get = |p: &Vec<f64>, k: usize| p.get(k).copied().unwrap_or(0.0);
    0.5 * (0..len).map(|k| (get(&pa, k) - get(&pb, k)).abs()).sum::<f64>()
}

/// KS distance between two integer-valued samples on the lattice.
pub fn ks_lattice(a: &[usize], b: &[usize]) -> f64 {
    let (pa, pb) = (histogram(a), histogram(b));
    let len = pa.len().max(pb.len());
    let (mut ca, mut cb, mut d) = (0.0, 0.0, 0.0f64);
    for k in 0..len {
        ca += pa.get(k).copied().unwrap_or(0.0);
        cb += pb.get(k).copied().unwrap_or(0.0);
        d = d.max((ca - cb).abs());
    }
    d
}

/// Empirical probabilities P[X = k], k = 0..=max.
pub fn histogram(v: &[usize]) -> Vec<f64> {
    let max = v.iter().copied().max().unwrap_or(0);
    let mut h = vec![0.0; max + 1];
    for &k in v {
        h[k] += 1.0;
    }
    let n = v.len().max(1) as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

/// Wigner surmise CDF 1 − exp(−πs²/4) (density (πs/2)·exp(−πs²/4)).
pub fn wigner_surmise_cdf(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        1.0 - (-std::f64::consts::PI * s * s / 4.0).exp()
    }
}

/// max_{i ∈ window} N·|λ_i − γ_i|.
pub fn rigidity_stat(eigs: &[f64], gammas: &[f64], window: (usize, usize)) -> Result<f64, StatsError> {
    let n = eigs.len();
    if gammas.len() != n {
        return Err(StatsError::Length(n, gammas.len()));
    }
    let (lo, hi) = window;
    if lo > hi || hi >= n {
        return Err(StatsError::Window { lo, hi, n });
    }
    Ok((lo..=hi).map(|i| n as f64 * (eigs[i] - gammas[i]).abs()).fold(0.0, f64::max))
}

pub fn rigidity_report(samples: &[Vec<f64>], gammas: &[f64], window: (usize, usize)) -> Result<StatReport, StatsError> {
    let v = samples
        .iter()
        .map(|e| rigidity_stat(e, gammas, window))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StatReport::new("rigidity", v))
}

/// Deterministic Stieltjes transform on a grid of spectral parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalLawGrid {
    pub z: Vec<Complex64>,
    pub m: Vec<Complex64>,
}

impl LocalLawGrid {
    pub fn new(model: &FcModel, energies: &[f64], etas: &[f64]) -> Result<Self, StatsError> {
        let mut z = Vec::new();
        let mut m = Vec::new();
        for &eta in etas {
            for &e in energies {
                let zz = Complex64::new(e, eta);
                m.push(model.stieltjes(zz)?);
                z.push(zz);
            }
        }
        Ok(Self { z, m })
    }

    /// Grid against an explicit transform, e.g. the semicircle closed form.
    pub fn from_fn<F: Fn(Complex64) -> Complex64>(f: F, energies: &[f64], etas: &[f64]) -> Self {
        let z: Vec<Complex64> = etas
            .iter()
            .flat_map(|&eta| energies.iter().map(move |&e| Complex64::new(e, eta)))
            .collect();
        let m = z.iter().map(|&w| f(w)).collect();
        Self { z, m }
    }
}

/// Empirical Stieltjes transform (1/N) Σ 1/(λ_i − z).
pub fn empirical_stieltjes(eigs: &[f64], z: Complex64) -> Complex64 {
    let s: Complex64 = eigs.iter().map(|&l| 1.0 / (l - z)).sum();
    s / eigs.len() as f64
}

/// sup over the grid of (Nη)·|m_N(z) − m(z)|.
pub fn local_law_stat(eigs: &[f64], grid: &LocalLawGrid) -> Result<f64, StatsError> {
    let n = eigs.len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    let mut sup = 0.0f64;
    for (z, m) in grid.z.iter().zip(&grid.m) {
        if z.im < 10.0 / n as f64 - 1e-15 {
            return Err(StatsError::EtaTooSmall { eta: z.im, n });
        }
        sup = sup.max(n as f64 * z.im * (empirical_stieltjes(eigs, *z) - m).norm());
    }
    Ok(sup)
}

pub fn local_law_report(samples: &[Vec<f64>], grid: &LocalLawGrid) -> Result<StatReport, StatsError> {
    let v = samples
        .iter()
        .map(|e| local_law_stat(e, grid))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StatReport::new("local_law", v))
}

/// Semicircle Stieltjes transform m_sc(z) = (−z + √(z² − 4))/2, branch with Im m > 0.
pub fn semicircle_stieltjes(z: Complex64) -> Complex64 {
    let s = (z * z - 4.0).sqrt();
    let m = (-z + s) / 2.0;
    if m.im * z.im >= 0.0 {
        m
    } else {
        (-z - s) / 2.0
    }
}

/// Unfolded gaps N·ρ(γ_i)·(λ_{i+1} − λ_i) for i in center ± half_window,
/// with ρ(γ_i) supplied per index (free-convolution unfolding).
pub fn gap_statistics(eigs: &[f64], center: usize, half_window: usize, rho: &dyn Fn(usize) -> f64) -> Result<Vec<f64>, StatsError> {
    let n = eigs.len();
    if center < half_window || center + half_window + 1 >= n {
        return Err(StatsError::Window {
            lo: center.saturating_sub(half_window),
            hi: center + half_window + 1,
            n,
        });
    }
    Ok((center - half_window..=center + half_window)
        .map(|i| n as f64 * rho(i) * (eigs[i + 1] - eigs[i]))
        .collect())
}

/// Local density ρ(γ_i) from a free-convolution model, cached per index.
pub fn unfolding_densities(model: &FcModel, n: usize, indices: &[usize]) -> Result<Vec<(usize, f64)>, StatsError> {
    let levels: Vec<f64> = indices.iter().map(|&i| (i as f64 + 0.5) / n as f64).collect();
    let gammas = model.quantiles_at(&levels)?;
    gammas
        .iter()
        .zip(indices)
        .map(|(&g, &i)| Ok((i, model.density(g)?)))
        .collect()
}

/// One ensemble's view of the comparison point: energy E and ρ(E).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub energy: f64,
    pub density: f64,
}

/// #{λ ∈ E + [0, s]/(Nρ(E))}.
pub fn count_in_window(eigs: &[f64], point: EnergyPoint, s: f64) -> usize {
    let n = eigs.len() as f64;
    let lo = point.energy;
    let hi = lo + s / (n * point.density);
    let a = eigs.partition_point(|&x| x < lo);
    let b = eigs.partition_point(|&x| x <= hi);
    b - a
}

/// Unfolded gaps of the `k` eigenvalue pairs nearest to E.
pub fn local_gaps(eigs: &[f64], point: EnergyPoint, half_window: usize) -> Vec<f64> {
    let n = eigs.len();
    let k = eigs.partition_point(|&x| x < point.energy).clamp(half_window + 1, n - half_window - 1);
    (k - half_window - 1..k + half_window)
        .filter(|&i| i + 1 < n)
        .map(|i| n as f64 * point.density * (eigs[i + 1] - eigs[i]))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingComparison {
    pub length: f64,
    pub deformed: Vec<f64>,
    pub reference: Vec<f64>,
    pub tv: f64,
    pub ks: f64,
    pub mean_deformed: f64,
    pub mean_reference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedEnergyReport {
    pub counting: Vec<CountingComparison>,
    pub gap_ks: f64,
    pub gap_samples: (usize, usize),
}

impl FixedEnergyReport {
    pub fn max_tv(&self) -> f64 {
        self.counting.iter().map(|c| c.tv).fold(0.0, f64::max)
    }
}

/// Minimum replicas per ensemble for the counting comparison.
pub const MIN_REPLICAS: usize = 50;

/// Counting and localized gap distributions at matched unfolded scale.
pub fn fixed_energy_compare(
    deformed: &[Vec<f64>],
    deformed_point: EnergyPoint,
    reference: &[Vec<f64>],
    reference_point: EnergyPoint,
    lengths: &[f64],
    gap_half_window: usize,
) -> Result<FixedEnergyReport, StatsError> {
    let got = deformed.len().min(reference.len());
    if got < MIN_REPLICAS {
        return Err(StatsError::TooFewReplicas {
            need: MIN_REPLICAS,
            got,
        });
    }
    let mut counting = Vec::new();
    for &s in lengths {
        let a: Vec<usize> = deformed.iter().map(|e| count_in_window(e, deformed_point, s)).collect();
        let b: Vec<usize> = reference.iter().map(|e| count_in_window(e, reference_point, s)).collect();
        let mean = |v: &[usize]| v.iter().sum::<usize>() as f64 / v.len() as f64;
        counting.push(CountingComparison {
            length: s,
            tv: tv_distance(&a, &b),
            ks: ks_lattice(&a, &b),
            mean_deformed: mean(&a),
            mean_reference: mean(&b),
            deformed: histogram(&a),
            reference: histogram(&b),
        });
    }
    let ga: Vec<f64> = deformed.iter().flat_map(|e| local_gaps(e, deformed_point, gap_half_window)).collect();
    let gb: Vec<f64> = reference.iter().flat_map(|e| local_gaps(e, reference_point, gap_half_window)).collect();
    Ok(FixedEnergyReport {
        counting,
        gap_ks: ks_two_sample(&ga, &gb),
        gap_samples: (ga.len(), gb.len()),
    })
}
