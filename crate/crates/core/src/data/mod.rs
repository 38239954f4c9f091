//! Bags, labeled samples, instance pools and the conversion of time series
//! into bags of sliding-window subsequences.

mod io;

pub use io::{
    binary_labels, load_mil_jsonl, load_mil_jsonl_classes, load_timeseries_csv, one_vs_rest,
    save_mil_jsonl, save_timeseries_csv, MilData, TimeSeriesData,
};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single fixed-dimension feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance(Vec<f64>);

impl Instance {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("instance has dimension 0".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite instance value {v}")));
        }
        Ok(Instance(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Instances of one dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceGroup {
    dim: usize,
    data: Vec<f64>,
}

impl InstanceGroup {
    fn new(dim: usize) -> Self {
        InstanceGroup { dim, data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    fn push(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.dim);
        self.data.extend_from_slice(values);
    }
}

/// A nonempty finite set of instances. Instances are grouped by dimension;
/// within a group they keep their insertion order, so for time series the
/// instance index is the 0-based window start.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    groups: Vec<InstanceGroup>,
}

impl Bag {
    pub fn from_instances(instances: Vec<Instance>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::InvalidInput("bag has no instances".into()));
        }
        let mut groups: Vec<InstanceGroup> = Vec::new();
        for inst in &instances {
            let dim = inst.dim();
            let pos = match groups.binary_search_by_key(&dim, |g| g.dim) {
                Ok(pos) => pos,
                Err(pos) => {
                    groups.insert(pos, InstanceGroup::new(dim));
                    pos
                }
            };
            groups[pos].push(inst.values());
        }
        Ok(Bag { groups })
    }

    /// Instances of dimension `length`, if the bag has any.
    pub fn group(&self, length: usize) -> Option<&InstanceGroup> {
        self.groups
            .binary_search_by_key(&length, |g| g.dim)
            .ok()
            .map(|pos| &self.groups[pos])
    }

    pub fn groups(&self) -> &[InstanceGroup] {
        &self.groups
    }

    /// Instance dimensions present, ascending.
    pub fn lengths(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.dim).collect()
    }

    /// Total number of instances over all dimensions.
    pub fn len(&self) -> usize {
        self.groups.iter().map(InstanceGroup::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn instances(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.groups.iter().flat_map(|g| g.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign(sign: f64) -> Self {
        if sign >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn as_i64(self) -> i64 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

/// The training sample: bags with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    bags: Vec<Bag>,
    labels: Vec<Label>,
}

impl LabeledSample {
    pub fn new(bags: Vec<Bag>, labels: Vec<Label>) -> Result<Self> {
        if bags.is_empty() {
            return Err(Error::InvalidInput("sample has no bags".into()));
        }
        if bags.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} bags but {} labels",
                bags.len(),
                labels.len()
            )));
        }
        Ok(LabeledSample { bags, labels })
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn bag(&self, i: usize) -> &Bag {
        &self.bags[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn has_both_classes(&self) -> bool {
        self.count(Label::Positive) > 0 && self.count(Label::Negative) > 0
    }

    /// Instance dimensions present in any bag, ascending.
    pub fn lengths(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.bags.iter().flat_map(Bag::lengths).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// The sub-sample at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        LabeledSample::new(
            indices.iter().map(|&i| self.bags[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Self> {
        LabeledSample::new(self.bags.clone(), labels)
    }
}

/// Where a pool instance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Bag { bag: usize, instance: usize },
    Centroid { label: Label, cluster: usize },
}

/// Ordered, deduplicated candidate expansion points of one length.
/// The position of an instance is its coefficient index and never changes.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePool {
    length: usize,
    data: Vec<f64>,
    sources: Vec<Source>,
}

impl InstancePool {
    /// Builds a pool from candidates, dropping exact duplicates (first
    /// occurrence wins).
    pub fn from_candidates<'a, I>(length: usize, candidates: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], Source)>,
    {
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        let mut data = Vec::new();
        let mut sources = Vec::new();
        for (values, source) in candidates {
            if values.len() != length {
                return Err(Error::DimensionMismatch {
                    expected: length,
                    found: values.len(),
                });
            }
            // +0.0 and -0.0 are the same point
            let key: Vec<u64> = values.iter().map(|v| (v + 0.0).to_bits()).collect();
            if seen.insert(key) {
                data.extend_from_slice(values);
                sources.push(source);
            }
        }
        if sources.is_empty() {
            return Err(Error::EmptyPool(length));
        }
        Ok(InstancePool {
            length,
            data,
            sources,
        })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn get(&self, a: usize) -> &[f64] {
        &self.data[a * self.length..(a + 1) * self.length]
    }

    pub fn source(&self, a: usize) -> Source {
        self.sources[a]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.length)
    }
}

/// Per-window normalization applied when cutting subsequences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowNorm {
    #[default]
    None,
    /// Subtract the window mean and divide by its standard deviation
    /// (constant windows become all zeros).
    ZNorm,
}

/// Converts a series into the bag of all its length-`ℓ` windows for every
/// `ℓ` in `lengths`.
pub fn make_bag_from_series(series: &[f64], lengths: &[usize]) -> Result<Bag> {
    make_bag_from_series_with(series, lengths, WindowNorm::None)
}

pub fn make_bag_from_series_with(
    series: &[f64],
    lengths: &[usize],
    norm: WindowNorm,
) -> Result<Bag> {
    if lengths.is_empty() {
        return Err(Error::InvalidInput("no subsequence lengths given".into()));
    }
    if let Some(v) = series.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite series value {v}")));
    }
    let total = series.len();
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut groups = Vec::with_capacity(sorted.len());
    for &length in &sorted {
        if length == 0 {
            return Err(Error::InvalidLength {
                length,
                reason: "must be at least 1".into(),
            });
        }
        if length > total {
            return Err(Error::InvalidLength {
                length,
                reason: format!("exceeds series length {total}"),
            });
        }
        let mut group = InstanceGroup::new(length);
        group.data.reserve((total - length + 1) * length);
        for window in series.windows(length) {
            match norm {
                WindowNorm::None => group.push(window),
                WindowNorm::ZNorm => group.push(&znorm(window)),
            }
        }
        groups.push(group);
    }
    Ok(Bag { groups })
}

fn znorm(window: &[f64]) -> Vec<f64> {
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 {
        vec![0.0; window.len()]
    } else {
        window.iter().map(|v| (v - mean) / sd).collect()
    }
}

/// The union of all length-`ℓ` instances across bags in (bag, instance)
/// order with exact duplicates removed.
pub fn build_pool(sample: &LabeledSample, length: usize) -> Result<InstancePool> {
    let candidates = sample.bags().iter().enumerate().flat_map(|(b, bag)| {
        bag.group(length).into_iter().flat_map(move |g| {
            g.iter()
                .enumerate()
                .map(move |(j, x)| (x, Source::Bag { bag: b, instance: j }))
        })
    });
    InstancePool::from_candidates(length, candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bag(rows: &[&[f64]]) -> Bag {
        Bag::from_instances(rows.iter().map(|r| Instance::new(r.to_vec()).unwrap()).collect())
            .unwrap()
    }

    #[test]
    fn windows_of_one_length() {
        let b = make_bag_from_series(&[1.0, 2.0, 3.0, 4.0, 5.0], &[3]).unwrap();
        assert_eq!(b.len(), 3);
        let g = b.group(3).unwrap();
        assert_eq!(g.get(0), &[1.0, 2.0, 3.0]);
        assert_eq!(g.get(2), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn windows_of_two_lengths() {
        let b = make_bag_from_series(&[1.0, 2.0, 3.0, 4.0], &[2, 3]).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(b.group(2).unwrap().len(), 3);
        assert_eq!(b.group(3).unwrap().len(), 2);
    }

    #[test]
    fn full_length_window() {
        let s = [0.5, -1.0, 2.0, 3.0, 0.0, 1.0, 7.0];
        let b = make_bag_from_series(&s, &[7]).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.group(7).unwrap().get(0), &s);
    }

    #[test]
    fn bad_lengths_rejected() {
        let s = [1.0, 2.0, 3.0];
        assert!(matches!(
            make_bag_from_series(&s, &[4]),
            Err(Error::InvalidLength { length: 4, .. })
        ));
        assert!(matches!(
            make_bag_from_series(&s, &[0]),
            Err(Error::InvalidLength { length: 0, .. })
        ));
        assert!(make_bag_from_series(&s, &[]).is_err());
    }

    #[test]
    fn znorm_windows() {
        let b = make_bag_from_series_with(&[1.0, 3.0, 5.0, 5.0], &[2], WindowNorm::ZNorm).unwrap();
        let g = b.group(2).unwrap();
        assert_eq!(g.get(0), &[-1.0, 1.0]);
        assert_eq!(g.get(2), &[0.0, 0.0]);
    }

    #[test]
    fn pool_of_distinct_instances() {
        let s = LabeledSample::new(
            vec![
                bag(&[&[1.0], &[2.0], &[3.0]]),
                bag(&[&[4.0], &[5.0], &[6.0]]),
            ],
            vec![Label::Positive, Label::Negative],
        )
        .unwrap();
        let pool = build_pool(&s, 1).unwrap();
        assert_eq!(pool.len(), 6);
        assert_eq!(pool.get(4), &[5.0]);
        assert_eq!(pool.source(4), Source::Bag { bag: 1, instance: 1 });
    }

    #[test]
    fn pool_dedups_keeping_first() {
        let s = LabeledSample::new(
            vec![bag(&[&[1.0, 2.0], &[0.0, 0.0]]), bag(&[&[-0.0, 0.0], &[1.0, 2.0]])],
            vec![Label::Positive, Label::Negative],
        )
        .unwrap();
        let pool = build_pool(&s, 2).unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool.source(1), Source::Bag { bag: 0, instance: 1 });
    }

    #[test]
    fn single_instance_pool_and_empty_pool() {
        let s = LabeledSample::new(vec![bag(&[&[3.0, 1.0]])], vec![Label::Positive]).unwrap();
        assert_eq!(build_pool(&s, 2).unwrap().len(), 1);
        assert!(matches!(build_pool(&s, 3), Err(Error::EmptyPool(3))));
    }

    #[test]
    fn bag_groups_by_dimension() {
        let b = bag(&[&[1.0], &[1.0, 2.0], &[3.0]]);
        assert_eq!(b.lengths(), vec![1, 2]);
        assert_eq!(b.group(1).unwrap().len(), 2);
        assert!(Bag::from_instances(vec![]).is_err());
        assert!(Instance::new(vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn window_counts_and_slices(
            series in prop::collection::vec(-10.0f64..10.0, 1..40),
            raw in prop::collection::btree_set(1usize..40, 1..5),
        ) {
            let lengths: Vec<usize> = raw.into_iter().filter(|&l| l <= series.len()).collect();
            prop_assume!(!lengths.is_empty());
            let b = make_bag_from_series(&series, &lengths).unwrap();
            let expected: usize = lengths.iter().map(|l| series.len() - l + 1).sum();
            prop_assert_eq!(b.len(), expected);
            for &l in &lengths {
                let g = b.group(l).unwrap();
                for j in 0..g.len() {
                    prop_assert_eq!(g.get(j), &series[j..j + l]);
                }
            }
        }

        #[test]
        fn pool_is_deterministic(values in prop::collection::vec(-3i32..3, 2..30)) {
            let bags: Vec<Bag> = values
                .chunks(2)
                .map(|c| Bag::from_instances(c.iter().map(|&v| Instance::new(vec![v as f64]).unwrap()).collect()).unwrap())
                .collect();
            let labels = vec![Label::Positive; bags.len()];
            let s = LabeledSample::new(bags, labels).unwrap();
            let a = build_pool(&s, 1).unwrap();
            let b = build_pool(&s, 1).unwrap();
            prop_assert_eq!(&a, &b);
            let mut distinct: Vec<i32> = values.clone();
            distinct.sort_unstable();
            distinct.dedup();
            prop_assert_eq!(a.len(), distinct.len());
        }
    }
}
