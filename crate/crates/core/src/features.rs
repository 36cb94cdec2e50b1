//! Combined per-step feature matrices `[A ‖ D ‖ H ‖ E]` and their inverse.
//!
//! Each user is one row: `N` adjacency columns, 4 demographic columns (age,
//! gender, occupation, location), 8 history columns, and 24 engagement
//! columns (reactions, shares, comments × 8 categories).

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::synthgen::{
    Adjacency, CategoryDistribution, Dataset, EngagementProfile, Gender, Occupation,
    TemporalSnapshot, UserProfile, CATEGORY_COUNT, LOCATION_COUNT, MAX_AGE, MIN_AGE,
};

pub const DEMOGRAPHIC_WIDTH: usize = 4;
pub const HISTORY_WIDTH: usize = CATEGORY_COUNT;
pub const ENGAGEMENT_WIDTH: usize = 3 * CATEGORY_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub users: usize,
    pub demographics: usize,
    pub history: usize,
    pub engagement: usize,
}

impl FeatureLayout {
    pub fn new(users: usize) -> Self {
        FeatureLayout {
            users,
            demographics: DEMOGRAPHIC_WIDTH,
            history: HISTORY_WIDTH,
            engagement: ENGAGEMENT_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.demographics == 0 || self.history == 0 || self.engagement == 0 {
            return Err(Error::Layout(alloc::format!("layout widths must be positive: {self:?}")));
        }
        if (self.demographics, self.history, self.engagement) != (DEMOGRAPHIC_WIDTH, HISTORY_WIDTH, ENGAGEMENT_WIDTH) {
            return Err(Error::Layout(alloc::format!(
                "unsupported block widths {}/{}/{}",
                self.demographics, self.history, self.engagement
            )));
        }
        Ok(())
    }

    /// Non-adjacency features per user.
    pub fn attribute_width(&self) -> usize {
        self.demographics + self.history + self.engagement
    }

    pub fn width(&self) -> usize {
        self.users + self.attribute_width()
    }

    /// Column ranges of the adjacency, demographic, history, and engagement
    /// blocks.
    pub fn blocks(&self) -> [core::ops::Range<usize>; 4] {
        let a = self.users;
        let d = a + self.demographics;
        let h = d + self.history;
        let e = h + self.engagement;
        [0..a, a..d, d..h, h..e]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub step: usize,
    pub values: Tensor,
    pub layout: FeatureLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    layout: FeatureLayout,
    matrices: Vec<FeatureMatrix>,
}

impl FeatureSequence {
    pub fn new(layout: FeatureLayout, matrices: Vec<FeatureMatrix>) -> Result<Self> {
        layout.validate()?;
        for m in &matrices {
            if m.layout != layout || m.values.shape() != [layout.users, layout.width()] {
                return Err(Error::Layout(alloc::format!("matrix for step {} does not match the sequence layout", m.step)));
            }
        }
        if matrices.windows(2).any(|w| w[1].step <= w[0].step) {
            return Err(Error::Layout("sequence steps must be strictly increasing".into()));
        }
        Ok(FeatureSequence { layout, matrices })
    }

    pub fn layout(&self) -> FeatureLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[FeatureMatrix] {
        &self.matrices
    }

    pub fn steps(&self) -> Vec<usize> {
        self.matrices.iter().map(|m| m.step).collect()
    }

    /// The first `len` matrices.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        if len > self.len() {
            return Err(Error::InsufficientHistory { needed: len, got: self.len() });
        }
        Ok(FeatureSequence {
            layout: self.layout,
            matrices: self.matrices[..len].to_vec(),
        })
    }

    pub fn push(&mut self, matrix: FeatureMatrix) -> Result<()> {
        let mut all = core::mem::take(&mut self.matrices);
        all.push(matrix);
        *self = Self::new(self.layout, all)?;
        Ok(())
    }
}

/// The four column blocks of one step's output.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBlocks {
    pub adjacency_scores: Tensor,
    pub demographics: Tensor,
    pub history: Tensor,
    pub engagement: Tensor,
}

fn ordinal(index: usize, cardinality: usize) -> f64 {
    index as f64 / (cardinality - 1) as f64
}

fn snap(value: f64, cardinality: usize) -> usize {
    let scaled = libm::round(value * (cardinality - 1) as f64);
    if scaled.is_nan() || scaled < 0.0 {
        0
    } else {
        (scaled as usize).min(cardinality - 1)
    }
}

/// Demographic row for one user.
pub fn encode_demographics(p: &UserProfile) -> [f64; DEMOGRAPHIC_WIDTH] {
    [
        f64::from(p.age - MIN_AGE) / f64::from(MAX_AGE - MIN_AGE),
        ordinal(p.gender.index(), Gender::ALL.len()),
        ordinal(p.occupation.index(), Occupation::ALL.len()),
        ordinal(usize::from(p.location), LOCATION_COUNT),
    ]
}

/// Inverse of [`encode_demographics`], snapping each value to its grid.
pub fn decode_demographics(user_id: usize, row: &[f64]) -> UserProfile {
    let ages = usize::from(MAX_AGE - MIN_AGE) + 1;
    UserProfile {
        user_id,
        age: MIN_AGE + snap(row[0], ages) as u8,
        gender: Gender::ALL[snap(row[1], Gender::ALL.len())],
        occupation: Occupation::ALL[snap(row[2], Occupation::ALL.len())],
        location: snap(row[3], LOCATION_COUNT) as u8,
    }
}

pub fn encode_snapshot(snapshot: &TemporalSnapshot, layout: &FeatureLayout) -> Result<FeatureMatrix> {
    layout.validate()?;
    let n = layout.users;
    if snapshot.users() != n {
        return Err(Error::Layout(alloc::format!("snapshot has {} users, layout expects {n}", snapshot.users())));
    }
    snapshot.validate()?;
    let mut data = Vec::with_capacity(n * layout.width());
    for i in 0..n {
        data.extend(snapshot.adjacency.row_values(i));
        data.extend(encode_demographics(&snapshot.profiles[i]));
        data.extend(snapshot.history[i].weights());
        data.extend(snapshot.engagement[i].flat());
    }
    Ok(FeatureMatrix {
        step: snapshot.step,
        values: Tensor::matrix(n, layout.width(), data)?,
        layout: *layout,
    })
}

/// Exact stored weights when they already form a distribution, otherwise
/// clamped and renormalized.
fn distribution(row: &[f64]) -> CategoryDistribution {
    let mut w = [0.0; CATEGORY_COUNT];
    w.copy_from_slice(row);
    CategoryDistribution::new(w).unwrap_or_else(|_| CategoryDistribution::normalized(&w))
}

fn decode_blocks(blocks: &PredictionBlocks, adjacency: Adjacency, step: usize) -> Result<TemporalSnapshot> {
    let n = adjacency.len();
    let mut profiles = Vec::with_capacity(n);
    let mut history = Vec::with_capacity(n);
    let mut engagement = Vec::with_capacity(n);
    for i in 0..n {
        profiles.push(decode_demographics(i, blocks.demographics.row(i)));
        history.push(distribution(blocks.history.row(i)));
        let e = blocks.engagement.row(i);
        engagement.push(EngagementProfile {
            reactions: distribution(&e[..CATEGORY_COUNT]),
            shares: distribution(&e[CATEGORY_COUNT..2 * CATEGORY_COUNT]),
            comments: distribution(&e[2 * CATEGORY_COUNT..]),
        });
    }
    let snapshot = TemporalSnapshot {
        step,
        adjacency,
        profiles,
        history,
        engagement,
        posts: alloc::vec![0; n],
    };
    snapshot.validate()?;
    Ok(snapshot)
}

/// Inverse of [`encode_snapshot`]. Post counts are not part of the feature
/// matrix and come back as zero.
pub fn decode_snapshot(matrix: &FeatureMatrix) -> Result<TemporalSnapshot> {
    let blocks = slice_prediction(&matrix.values, &matrix.layout)?;
    let adjacency = binarize_adjacency(&blocks.adjacency_scores, 0.5)?;
    decode_blocks(&blocks, adjacency, matrix.step)
}

/// Turns model output blocks (adjacency already mapped to probabilities)
/// into a snapshot: binarized links, snapped demographics, renormalized
/// distributions.
pub fn decode_prediction(blocks: &PredictionBlocks, step: usize, threshold: f64) -> Result<TemporalSnapshot> {
    let adjacency = binarize_adjacency(&blocks.adjacency_scores, threshold)?;
    decode_blocks(blocks, adjacency, step)
}

/// Encodes every snapshot, sorted by step.
pub fn build_sequence(dataset: &Dataset) -> Result<FeatureSequence> {
    if dataset.steps() < 2 {
        return Err(Error::InsufficientHistory { needed: 2, got: dataset.steps() });
    }
    let layout = FeatureLayout::new(dataset.user_count());
    let mut ordered: Vec<&TemporalSnapshot> = dataset.snapshots.iter().collect();
    ordered.sort_by_key(|s| s.step);
    let matrices = ordered
        .into_iter()
        .map(|s| encode_snapshot(s, &layout))
        .collect::<Result<Vec<_>>>()?;
    FeatureSequence::new(layout, matrices)
}

pub fn slice_prediction(pred: &Tensor, layout: &FeatureLayout) -> Result<PredictionBlocks> {
    let (_, cols) = pred.expect_matrix("slice_prediction")?;
    if cols != layout.width() {
        return Err(Error::Layout(alloc::format!("prediction has {cols} columns, layout expects {}", layout.width())));
    }
    let [a, d, h, e] = layout.blocks();
    Ok(PredictionBlocks {
        adjacency_scores: pred.slice_cols(a.start, a.end)?,
        demographics: pred.slice_cols(d.start, d.end)?,
        history: pred.slice_cols(h.start, h.end)?,
        engagement: pred.slice_cols(e.start, e.end)?,
    })
}

pub fn concatenate(blocks: &PredictionBlocks) -> Result<Tensor> {
    Tensor::concat_cols(&[
        &blocks.adjacency_scores,
        &blocks.demographics,
        &blocks.history,
        &blocks.engagement,
    ])
}

/// Symmetrizes `scores` by averaging with the transpose, keeps cells above
/// `threshold`, and clears the diagonal.
pub fn binarize_adjacency(scores: &Tensor, threshold: f64) -> Result<Adjacency> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param("threshold", "must lie in (0, 1)"));
    }
    let (n, cols) = scores.expect_matrix("binarize_adjacency")?;
    if n != cols {
        return Err(Error::Layout(alloc::format!("adjacency scores are {n}x{cols}, expected square")));
    }
    let s = scores.data();
    let mut a = Adjacency::empty(n);
    for i in 0..n {
        for j in i + 1..n {
            if 0.5 * (s[i * n + j] + s[j * n + i]) > threshold {
                a.add_edge(i, j);
            }
        }
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_dataset, GeneratorConfig};
    use alloc::vec;
    use proptest::prelude::*;

    fn small_dataset(users: usize, seed: u64) -> Dataset {
        let config = GeneratorConfig {
            users,
            steps: 3,
            initial_degree: 1,
            final_degree: Some(users - 1),
            ..GeneratorConfig::default()
        };
        generate_dataset(&config, seed).unwrap()
    }

    #[test]
    fn three_users_give_thirty_nine_columns() {
        let d = small_dataset(3, 1);
        let m = encode_snapshot(&d.snapshots[0], &FeatureLayout::new(3)).unwrap();
        assert_eq!(m.values.shape(), &[3, 39]);
        let b = slice_prediction(&m.values, &m.layout).unwrap();
        assert_eq!(
            [b.adjacency_scores.cols(), b.demographics.cols(), b.history.cols(), b.engagement.cols()],
            [3, 4, 8, 24]
        );
        assert!(encode_snapshot(&d.snapshots[0], &FeatureLayout::new(4)).is_err());
    }

    #[test]
    fn age_endpoints() {
        let mut p = UserProfile {
            user_id: 0,
            age: 15,
            gender: Gender::Female,
            occupation: Occupation::Banker,
            location: 7,
        };
        assert_eq!(encode_demographics(&p)[0], 0.0);
        p.age = 60;
        let row = encode_demographics(&p);
        assert_eq!(row, [1.0, 0.5, 1.0, 1.0]);
        assert_eq!(decode_demographics(0, &row), p);
    }

    #[test]
    fn build_sequence_sorts_and_requires_two_steps() {
        let mut d = small_dataset(4, 2);
        d.snapshots.reverse();
        let s = build_sequence(&d).unwrap();
        assert_eq!(s.steps(), vec![1, 2, 3]);
        assert!(s.matrices().iter().all(|m| m.layout == s.layout()));
        d.snapshots.truncate(1);
        assert!(matches!(build_sequence(&d), Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn slicing_rejects_wrong_width() {
        let t = Tensor::zeros(&[2, 37]);
        assert!(slice_prediction(&t, &FeatureLayout::new(2)).is_err());
    }

    #[test]
    fn binarize_examples() {
        let all = Tensor::filled(&[4, 4], 0.9);
        let a = binarize_adjacency(&all, 0.5).unwrap();
        assert_eq!(a.edge_count(), 6);
        assert!((0..4).all(|i| !a.has_edge(i, i)));
        let asym = Tensor::matrix(2, 2, vec![0.0, 1.0, 0.2, 0.0]).unwrap();
        let b = binarize_adjacency(&asym, 0.5).unwrap();
        assert!(b.has_edge(0, 1) && b.has_edge(1, 0));
        assert!(binarize_adjacency(&asym, 1.0).is_err());
        assert!(binarize_adjacency(&asym, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(users in 2usize..9, seed in 0u64..1000) {
            let d = small_dataset(users, seed);
            for s in &d.snapshots {
                let m = encode_snapshot(s, &FeatureLayout::new(users)).unwrap();
                let back = decode_snapshot(&m).unwrap();
                prop_assert_eq!(&back.adjacency, &s.adjacency);
                prop_assert_eq!(&back.profiles, &s.profiles);
                prop_assert_eq!(&back.history, &s.history);
                prop_assert_eq!(&back.engagement, &s.engagement);
            }
        }

        #[test]
        fn slice_concatenate_identity(users in 1usize..6, values in proptest::collection::vec(-5.0f64..5.0, 6 * 42)) {
            let layout = FeatureLayout::new(users);
            let width = layout.width();
            let rows = values.len() / width;
            let t = Tensor::matrix(rows, width, values[..rows * width].to_vec()).unwrap();
            let blocks = slice_prediction(&t, &layout).unwrap();
            prop_assert_eq!(concatenate(&blocks).unwrap(), t);
            prop_assert_eq!(slice_prediction(&concatenate(&blocks).unwrap(), &layout).unwrap(), blocks);
        }

        #[test]
        fn threshold_sweep_is_monotone(values in proptest::collection::vec(0.0f64..1.0, 36)) {
            let scores = Tensor::matrix(6, 6, values).unwrap();
            let mut last = usize::MAX;
            for k in 1..=9 {
                let edges = binarize_adjacency(&scores, k as f64 / 10.0).unwrap().edge_count();
                prop_assert!(edges <= last);
                last = edges;
            }
        }

        #[test]
        fn categorical_encodings_sit_on_the_grid(seed in 0u64..500) {
            let d = small_dataset(5, seed);
            let m = encode_snapshot(&d.snapshots[0], &FeatureLayout::new(5)).unwrap();
            let [_, demo, _, _] = m.layout.blocks();
            for i in 0..5 {
                let row = &m.values.row(i)[demo.clone()];
                for (v, k) in row[1..].iter().zip([3usize, 9, 8]) {
                    let scaled = v * (k - 1) as f64;
                    prop_assert_eq!(scaled, libm::round(scaled));
                }
            }
        }
    }
}
