#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use shapelet_mil::data::{Bag, Instance, InstancePool, Label, LabeledSample, Source};
use shapelet_mil::kernel::KernelSpec;
use shapelet_mil::lp::LinearProgram;
use shapelet_mil::weak::LengthContext;

pub fn bag(points: &[Vec<f64>]) -> Bag {
    Bag::from_instances(points.iter().map(|p| Instance::new(p.clone()).unwrap()).collect()).unwrap()
}

/// A weak-learning problem small enough for the grid oracle: up to four bags,
/// singleton positive bags, and at most three pool points.
pub struct TinyProblem {
    pub sample: LabeledSample,
    pub pool: InstancePool,
    pub spec: KernelSpec,
    pub d: Vec<f64>,
}

impl TinyProblem {
    pub fn context(&self) -> LengthContext {
        LengthContext::build(&self.sample, self.pool.clone(), self.spec).unwrap()
    }
}

fn separated_points(rng: &mut ChaCha8Rng, count: usize, min_dist: f64) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = Vec::new();
    while pts.len() < count {
        let p = vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        if pts.iter().all(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() >= min_dist) {
            pts.push(p);
        }
    }
    pts
}

pub fn tiny_problem(seed: u64) -> TinyProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(2..=4usize);
    let positives = rng.random_range(1..m);
    let mut bags = Vec::new();
    let mut labels = Vec::new();
    for i in 0..m {
        let size = if i < positives { 1 } else { rng.random_range(1..=3) };
        let pts: Vec<Vec<f64>> = (0..size)
            .map(|_| vec![rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)])
            .collect();
        bags.push(bag(&pts));
        labels.push(if i < positives { Label::Positive } else { Label::Negative });
    }
    let sample = LabeledSample::new(bags, labels).unwrap();
    let p = rng.random_range(1..=3usize);
    let pts = separated_points(&mut rng, p, 1.0);
    let pool = InstancePool::from_candidates(
        2,
        pts.iter().enumerate().map(|(c, v)| {
            (
                v.as_slice(),
                Source::Centroid {
                    label: Label::Positive,
                    cluster: c,
                },
            )
        }),
    )
    .unwrap();
    let sigma2 = [0.5, 1.0, 2.0][rng.random_range(0..3)];
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    TinyProblem {
        sample,
        pool,
        spec: KernelSpec::gaussian(sigma2).unwrap(),
        d: raw.into_iter().map(|v| v / total).collect(),
    }
}

/// A bounded, feasible LP with at most six variables and eight rows.
pub fn random_lp(seed: u64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=6usize);
    let mut lp = LinearProgram::new((0..n).map(|_| rng.random_range(-3.0..3.0)).collect());
    for j in 0..n {
        match rng.random_range(0..4) {
            0 => lp.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY),
            1 => lp.set_bounds(j, -1.0, 2.0),
            2 => lp.set_bounds(j, f64::NEG_INFINITY, 1.5),
            _ => lp.set_bounds(j, 0.0, f64::INFINITY),
        };
    }
    // a known interior-ish point keeps the problem feasible
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
    let rows = rng.random_range(1..=8usize);
    let n_eq = if n > 1 { rng.random_range(0..=rows.min(2)) } else { 0 };
    for r in 0..rows {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ax: f64 = a.iter().zip(&x0).map(|(a, x)| a * x).sum();
        if r < n_eq {
            lp.add_eq(a, ax);
        } else {
            lp.add_le(a, ax + rng.random_range(0.0..1.0));
        }
    }
    // box rows keep the region bounded
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        lp.add_le(e.clone(), 5.0);
        lp.add_ge(e, -5.0);
    }
    lp
}

/// Planted-pattern time series: positives carry a fixed length-`width`
/// pattern at a random offset.
pub struct Planted {
    pub series: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    /// Start of the planted window (positives only).
    pub offsets: Vec<Option<usize>>,
}

pub fn planted_series(n: usize, len: usize, width: usize, amplitude: f64, noise: f64, seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).unwrap();
    let pattern: Vec<f64> = (0..width)
        .map(|t| amplitude * (std::f64::consts::PI * t as f64 / (width - 1) as f64).sin())
        .collect();
    let mut series = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut offsets = Vec::with_capacity(n);
    for i in 0..n {
        let mut s: Vec<f64> = (0..len).map(|_| normal.sample(&mut rng)).collect();
        if i % 2 == 0 {
            let off = rng.random_range(0..=len - width);
            for t in 0..width {
                s[off + t] += pattern[t];
            }
            labels.push(Label::Positive);
            offsets.push(Some(off));
        } else {
            labels.push(Label::Negative);
            offsets.push(None);
        }
        series.push(s);
    }
    Planted {
        series,
        labels,
        offsets,
    }
}
