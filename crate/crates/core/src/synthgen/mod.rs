//! Seeded generator for temporal social-network datasets.
//!
//! A dataset is `T` snapshots over a fixed user set. Each snapshot carries
//! the friendship graph, each user's posting history over eight categories,
//! and their engagement (reactions, shares, comments) over the same
//! categories. Graphs only grow. New ties are drawn with probability
//! proportional to `exp(score)`, where the score rewards shared occupation,
//! shared location, similar age, and open triangles. Assortativity in the
//! output is therefore planted on purpose.

mod adjacency;
mod attributes;

use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

pub use adjacency::Adjacency;
pub use attributes::{
    default_locations, Category, CategoryDistribution, EngagementProfile, Gender, Occupation,
    UserProfile, CATEGORY_COUNT, LOCATION_COUNT, MAX_AGE, MIN_AGE,
};

use crate::error::{Error, Result};
use crate::SeededRng;

/// Share of a base history given to the occupation's signature category.
pub const SIGNATURE_MASS: (f64, f64) = (0.6, 0.8);

/// Weight of a user's own history in each engagement kind (reactions,
/// shares, comments); the rest comes from the neighbors' mean history.
const OWN_HISTORY_SHARE: [f64; 3] = [0.5, 0.3, 0.4];

const SEED_NETWORK_ATTEMPTS: usize = 200;

/// Strength of each term in the tie-formation score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomophilyWeights {
    pub occupation: f64,
    pub location: f64,
    pub age: f64,
    /// Rewards candidates that already share neighbors with the user.
    pub triadic: f64,
}

impl Default for HomophilyWeights {
    fn default() -> Self {
        HomophilyWeights {
            occupation: 1.5,
            location: 1.0,
            age: 1.0,
            triadic: 0.5,
        }
    }
}

impl HomophilyWeights {
    pub fn none() -> Self {
        HomophilyWeights {
            occupation: 0.0,
            location: 0.0,
            age: 0.0,
            triadic: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("homophily.occupation", self.occupation),
            ("homophily.location", self.location),
            ("homophily.age", self.age),
            ("homophily.triadic", self.triadic),
        ] {
            if !w.is_finite() || w.abs() > 50.0 {
                return Err(Error::param(name, "must be finite with magnitude at most 50"));
            }
        }
        Ok(())
    }

    fn score(&self, a: &UserProfile, b: &UserProfile, closure: f64) -> f64 {
        let age_gap = f64::from(a.age.abs_diff(b.age)) / f64::from(MAX_AGE - MIN_AGE);
        self.occupation * f64::from(u8::from(a.occupation == b.occupation))
            + self.location * f64::from(u8::from(a.location == b.location))
            + self.age * (1.0 - age_gap)
            + self.triadic * closure
    }
}

/// Target mean degree for every step, non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeSchedule {
    targets: Vec<f64>,
}

impl DegreeSchedule {
    pub fn new(targets: Vec<f64>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::param("degree_schedule", "needs at least one step"));
        }
        if targets.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::param("degree_schedule", "targets must be finite and nonnegative"));
        }
        if targets.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::param("degree_schedule", "targets must be non-decreasing"));
        }
        Ok(DegreeSchedule { targets })
    }

    /// Linear interpolation from `start` at step 1 to `end` at step `steps`.
    pub fn linear(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 1 {
            return Self::new(alloc::vec![start]);
        }
        let span = (steps - 1) as f64;
        Self::new((0..steps).map(|k| start + (end - start) * k as f64 / span).collect())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Target for 1-based `step`.
    pub fn target(&self, step: usize) -> f64 {
        self.targets[step - 1]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub users: usize,
    pub steps: usize,
    /// Every user's degree at step 1 (capped at `users - 1`).
    pub initial_degree: usize,
    /// Mean degree at the last step. Defaults to `min(300, round(0.6·users))`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_degree: Option<usize>,
    pub homophily: HomophilyWeights,
    /// Per-step history drift at full posting intensity.
    pub drift: f64,
    /// Lifetime post total per user; recorded with the dataset.
    pub lifetime_posts: u32,
    /// Per-step post counts are drawn uniformly from `0..=max_posts_per_step`.
    pub max_posts_per_step: u8,
    /// Share of each engagement vector replaced by random noise.
    pub engagement_noise: f64,
    pub locations: Vec<String>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            users: 500,
            steps: 10,
            initial_degree: 10,
            final_degree: None,
            homophily: HomophilyWeights::default(),
            drift: 0.1,
            lifetime_posts: 2000,
            max_posts_per_step: 10,
            engagement_noise: 0.1,
            locations: default_locations(),
        }
    }
}

impl GeneratorConfig {
    pub fn with_users(mut self, users: usize) -> Self {
        self.users = users;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.users < 2 {
            return Err(Error::param("users", "need at least 2 users"));
        }
        if self.steps < 2 {
            return Err(Error::param("steps", "need at least 2 time steps"));
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return Err(Error::param("drift", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.engagement_noise) {
            return Err(Error::param("engagement_noise", "must lie in [0, 1]"));
        }
        if self.locations.len() != LOCATION_COUNT {
            return Err(Error::param("locations", alloc::format!("need exactly {LOCATION_COUNT} names")));
        }
        if self.locations.iter().any(|l| l.trim().is_empty() || l.contains(',')) {
            return Err(Error::param("locations", "names must be non-empty and comma-free"));
        }
        if let Some(f) = self.final_degree {
            if f >= self.users {
                return Err(Error::param("final_degree", "must be below the user count"));
            }
            if f < self.start_degree() {
                return Err(Error::param("final_degree", "must not be below the initial degree"));
            }
        }
        self.homophily.validate()
    }

    fn start_degree(&self) -> usize {
        self.initial_degree.min(self.users.saturating_sub(1))
    }

    pub fn end_degree(&self) -> usize {
        let fallback = libm::round(0.6 * self.users as f64) as usize;
        self.final_degree
            .unwrap_or_else(|| fallback.min(300))
            .min(self.users - 1)
            .max(self.start_degree())
    }

    pub fn degree_schedule(&self) -> Result<DegreeSchedule> {
        DegreeSchedule::linear(self.start_degree() as f64, self.end_degree() as f64, self.steps)
    }
}

/// One time step of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalSnapshot {
    /// 1-based.
    pub step: usize,
    pub adjacency: Adjacency,
    pub profiles: Vec<UserProfile>,
    pub history: Vec<CategoryDistribution>,
    pub engagement: Vec<EngagementProfile>,
    /// Posts made during this step; zero for predicted snapshots.
    pub posts: Vec<u8>,
}

impl TemporalSnapshot {
    pub fn users(&self) -> usize {
        self.profiles.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.users();
        if self.adjacency.len() != n || self.history.len() != n || self.engagement.len() != n || self.posts.len() != n {
            return Err(Error::Layout(alloc::format!("snapshot {} has inconsistent user counts", self.step)));
        }
        for p in &self.profiles {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GeneratorConfig,
    pub seed: u64,
    pub users: Vec<UserProfile>,
    pub snapshots: Vec<TemporalSnapshot>,
}

impl Dataset {
    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn steps(&self) -> usize {
        self.snapshots.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.snapshots.is_empty() {
            return Err(Error::InsufficientHistory { needed: 1, got: 0 });
        }
        for s in &self.snapshots {
            s.validate()?;
            if s.users() != self.users.len() {
                return Err(Error::Layout(alloc::format!("snapshot {} has {} users, dataset has {}", s.step, s.users(), self.users.len())));
            }
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` profiles with every attribute uniform over its range.
pub fn generate_profiles(n: usize, seed: u64) -> Result<Vec<UserProfile>> {
    if n < 2 {
        return Err(Error::param("users", "need at least 2 users"));
    }
    let mut rng = stream_rng(seed, 0);
    Ok((0..n)
        .map(|user_id| UserProfile {
            user_id,
            age: rng.random_range(MIN_AGE..=MAX_AGE),
            gender: *Gender::ALL.choose(&mut rng).expect("non-empty"),
            occupation: *Occupation::ALL.choose(&mut rng).expect("non-empty"),
            location: rng.random_range(0..LOCATION_COUNT as u8),
        })
        .collect())
}

/// Occupation-anchored starting history. The signature category takes a
/// share in [`SIGNATURE_MASS`]; the other seven split the rest. Depends only
/// on the profile.
pub fn base_history(profile: &UserProfile) -> CategoryDistribution {
    let key = (profile.user_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (u64::from(profile.age) << 8)
        ^ ((profile.gender.index() as u64) << 16)
        ^ ((profile.occupation.index() as u64) << 24)
        ^ (u64::from(profile.location) << 32);
    let mut rng = SeededRng::seed_from_u64(key);
    let (lo, hi) = SIGNATURE_MASS;
    let dominant = lo + (hi - lo) * rng.random::<f64>();
    let signature = profile.occupation.signature_category().index();
    let mut rest = [0.0; CATEGORY_COUNT];
    for (i, w) in rest.iter_mut().enumerate() {
        if i != signature {
            let e: f64 = rng.sample(Exp1);
            *w = e;
        }
    }
    let rest_total: f64 = rest.iter().sum();
    let mut weights = [0.0; CATEGORY_COUNT];
    for i in 0..CATEGORY_COUNT {
        weights[i] = if i == signature { dominant } else { (1.0 - dominant) * rest[i] / rest_total };
    }
    CategoryDistribution::normalized(&weights)
}

fn random_distribution<R: Rng + ?Sized>(rng: &mut R) -> CategoryDistribution {
    let mut w = [0.0; CATEGORY_COUNT];
    for v in &mut w {
        *v = rng.sample(Exp1);
    }
    CategoryDistribution::normalized(&w)
}

/// Moves `current` a `drift` fraction of the way toward a freshly drawn
/// random distribution.
pub fn evolve_history<R: Rng + ?Sized>(
    current: &CategoryDistribution,
    drift: f64,
    rng: &mut R,
) -> Result<CategoryDistribution> {
    if !(0.0..=1.0).contains(&drift) {
        return Err(Error::param("drift", "must lie in [0, 1]"));
    }
    if drift == 0.0 {
        return Ok(*current);
    }
    let target = random_distribution(rng);
    let mut mixed = [0.0; CATEGORY_COUNT];
    for (i, m) in mixed.iter_mut().enumerate() {
        *m = (1.0 - drift) * current.weights()[i] + drift * target.weights()[i];
    }
    Ok(CategoryDistribution::normalized(&mixed))
}

fn sample_weighted<R: Rng + ?Sized>(rng: &mut R, candidates: &[usize], weights: &[f64]) -> usize {
    let dist = WeightedIndex::new(weights).expect("positive finite weights");
    candidates[dist.sample(rng)]
}

/// Step-1 graph in which every user has `degree` neighbors (one user may
/// fall one short when `n·degree` is odd).
pub fn seed_network<R: Rng + ?Sized>(
    profiles: &[UserProfile],
    degree: usize,
    weights: &HomophilyWeights,
    rng: &mut R,
) -> Result<Adjacency> {
    let n = profiles.len();
    if degree >= n {
        return Err(Error::param("initial_degree", "must be below the user count"));
    }
    let mut best: Option<(usize, Adjacency)> = None;
    for _ in 0..SEED_NETWORK_ATTEMPTS {
        let mut adj = Adjacency::empty(n);
        let mut deficit = alloc::vec![degree; n];
        loop {
            let max_deficit = *deficit.iter().max().expect("n >= 2");
            if max_deficit == 0 {
                break;
            }
            let neediest: Vec<usize> = (0..n).filter(|&i| deficit[i] == max_deficit).collect();
            let i = *neediest.choose(rng).expect("non-empty");
            let candidates: Vec<usize> = (0..n)
                .filter(|&j| j != i && deficit[j] > 0 && !adj.has_edge(i, j))
                .collect();
            if candidates.is_empty() {
                break;
            }
            let w: Vec<f64> = candidates
                .iter()
                .map(|&j| {
                    let closure = closure_share(&adj, i, j);
                    libm::exp(weights.score(&profiles[i], &profiles[j], closure)) * deficit[j] as f64
                })
                .collect();
            let j = sample_weighted(rng, &candidates, &w);
            adj.add_edge(i, j);
            deficit[i] -= 1;
            deficit[j] -= 1;
        }
        let missing: usize = deficit.iter().sum();
        if missing <= (n * degree) % 2 {
            return Ok(adj);
        }
        if best.as_ref().is_none_or(|(m, _)| missing < *m) {
            best = Some((missing, adj));
        }
    }
    Ok(best.expect("at least one attempt").1)
}

fn closure_share(adj: &Adjacency, i: usize, j: usize) -> f64 {
    let deg = adj.degree(i);
    if deg == 0 {
        0.0
    } else {
        adj.common_neighbors(i, j) as f64 / deg as f64
    }
}

/// Grows `previous` until its mean degree reaches the schedule's target for
/// `step`. Edges are never removed. Each new tie starts at a user still
/// below the target (uniformly chosen) and picks a non-neighbor with
/// probability proportional to `exp(score)`, preferring partners that are
/// also below target.
pub fn evolve_network<R: Rng + ?Sized>(
    previous: &Adjacency,
    profiles: &[UserProfile],
    step: usize,
    schedule: &DegreeSchedule,
    weights: &HomophilyWeights,
    rng: &mut R,
) -> Result<Adjacency> {
    let n = profiles.len();
    if previous.len() != n {
        return Err(Error::Layout(alloc::format!("adjacency has {} nodes, {} profiles", previous.len(), n)));
    }
    if step < 2 || step > schedule.len() {
        return Err(Error::param("step", alloc::format!("{step} outside 2..={}", schedule.len())));
    }
    if schedule.target(step) < schedule.target(step - 1) {
        return Err(Error::param("degree_schedule", "targets must be non-decreasing"));
    }
    let target = schedule.target(step).min((n - 1) as f64);
    let cap = (libm::ceil(target) as usize).min(n - 1);
    let target_edges = (libm::round(n as f64 * target / 2.0) as usize).min(n * (n - 1) / 2);

    let mut adj = previous.clone();
    let mut degrees = adj.degrees();
    let mut edges = adj.edge_count();
    while edges < target_edges {
        let mut starters: Vec<usize> = (0..n).filter(|&i| degrees[i] < cap).collect();
        if starters.is_empty() {
            starters = (0..n).filter(|&i| degrees[i] < n - 1).collect();
        }
        let i = *starters.choose(rng).expect("graph is not complete");
        let open: Vec<usize> = (0..n).filter(|&j| j != i && !adj.has_edge(i, j)).collect();
        let below: Vec<usize> = open.iter().copied().filter(|&j| degrees[j] < cap).collect();
        let candidates = if below.is_empty() { open } else { below };
        let w: Vec<f64> = candidates
            .iter()
            .map(|&j| libm::exp(weights.score(&profiles[i], &profiles[j], closure_share(&adj, i, j))))
            .collect();
        let j = sample_weighted(rng, &candidates, &w);
        adj.add_edge(i, j);
        degrees[i] += 1;
        degrees[j] += 1;
        edges += 1;
    }
    Ok(adj)
}

fn engagement_for<R: Rng + ?Sized>(
    user: usize,
    adjacency: &Adjacency,
    history: &[CategoryDistribution],
    noise: f64,
    rng: &mut R,
) -> EngagementProfile {
    let own = history[user].weights();
    let mut neighbor_mean = [0.0; CATEGORY_COUNT];
    let mut count = 0usize;
    for j in adjacency.neighbors(user) {
        for (m, w) in neighbor_mean.iter_mut().zip(history[j].weights()) {
            *m += w;
        }
        count += 1;
    }
    if count == 0 {
        neighbor_mean = *own;
    } else {
        for m in &mut neighbor_mean {
            *m /= count as f64;
        }
    }
    let mut kinds = [CategoryDistribution::uniform(); 3];
    for (k, share) in OWN_HISTORY_SHARE.iter().enumerate() {
        let jitter = random_distribution(rng);
        let mut w = [0.0; CATEGORY_COUNT];
        for c in 0..CATEGORY_COUNT {
            let signal = share * own[c] + (1.0 - share) * neighbor_mean[c];
            w[c] = (1.0 - noise) * signal + noise * jitter.weights()[c];
        }
        kinds[k] = CategoryDistribution::normalized(&w);
    }
    EngagementProfile {
        reactions: kinds[0],
        shares: kinds[1],
        comments: kinds[2],
    }
}

/// Generates a full dataset. Identical `(config, seed)` pairs give identical
/// datasets.
pub fn generate_dataset(config: &GeneratorConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let n = config.users;
    let users = generate_profiles(n, seed)?;
    let schedule = config.degree_schedule()?;
    let mut net_rng = stream_rng(seed, 1);
    let mut activity_rng = stream_rng(seed, 2);
    let mut engagement_rng = stream_rng(seed, 3);

    let mut snapshots: Vec<TemporalSnapshot> = Vec::with_capacity(config.steps);
    let mut adjacency = seed_network(&users, config.start_degree(), &config.homophily, &mut net_rng)?;
    let mut history: Vec<CategoryDistribution> = users.iter().map(base_history).collect();
    for step in 1..=config.steps {
        if step > 1 {
            adjacency = evolve_network(&adjacency, &users, step, &schedule, &config.homophily, &mut net_rng)?;
        }
        let posts: Vec<u8> = (0..n)
            .map(|_| activity_rng.random_range(0..=config.max_posts_per_step))
            .collect();
        if step > 1 {
            let max_posts = f64::from(config.max_posts_per_step.max(1));
            for (h, &p) in history.iter_mut().zip(&posts) {
                let intensity = f64::from(p) / max_posts;
                *h = evolve_history(h, config.drift * intensity, &mut activity_rng)?;
            }
        }
        let engagement = (0..n)
            .map(|i| engagement_for(i, &adjacency, &history, config.engagement_noise, &mut engagement_rng))
            .collect();
        snapshots.push(TemporalSnapshot {
            step,
            adjacency: adjacency.clone(),
            profiles: users.clone(),
            history: history.clone(),
            engagement,
            posts,
        });
    }
    Ok(Dataset {
        config: config.clone(),
        seed,
        users,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphmetrics::assortativity_categorical;

    fn occupation_labels(users: &[UserProfile]) -> Vec<usize> {
        users.iter().map(|u| u.occupation.index()).collect()
    }

    #[test]
    fn profiles_are_in_range_and_deterministic() {
        let p = generate_profiles(500, 7).unwrap();
        assert_eq!(p.len(), 500);
        for u in &p {
            u.validate().unwrap();
        }
        assert_eq!(generate_profiles(2, 99).unwrap(), generate_profiles(2, 99).unwrap());
        assert!(generate_profiles(1, 0).is_err());
    }

    #[test]
    fn occupation_frequencies_are_uniform_within_three_sigma() {
        let n = 10_000;
        let p = generate_profiles(n, 3).unwrap();
        let k = Occupation::ALL.len() as f64;
        let mean = n as f64 / k;
        let sigma = (n as f64 * (1.0 / k) * (1.0 - 1.0 / k)).sqrt();
        for o in Occupation::ALL {
            let count = p.iter().filter(|u| u.occupation == *o).count() as f64;
            assert!((count - mean).abs() < 3.0 * sigma, "{o:?}: {count}");
        }
    }

    #[test]
    fn base_history_follows_occupation() {
        let profiles = generate_profiles(2000, 1).unwrap();
        let mut physician_weights = Vec::new();
        for p in &profiles {
            let h = base_history(p);
            assert!((h.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let sig = h.weight(p.occupation.signature_category());
            assert!((0.6..=0.8 + 1e-12).contains(&sig), "{sig}");
            assert_eq!(h.argmax(), p.occupation.signature_category());
            if p.occupation == Occupation::Physician {
                physician_weights.push(h.weight(Category::Health));
            }
        }
        // 0.71 sits inside the range of drawn shares.
        assert!(physician_weights.iter().any(|&w| w < 0.71));
        assert!(physician_weights.iter().any(|&w| w > 0.71));
    }

    #[test]
    fn evolve_history_edge_cases() {
        let mut rng = crate::seeded_rng(4);
        let base = base_history(&generate_profiles(2, 0).unwrap()[0]);
        assert_eq!(evolve_history(&base, 0.0, &mut rng).unwrap(), base);
        for drift in [0.05, 0.5, 1.0] {
            let next = evolve_history(&base, drift, &mut rng).unwrap();
            assert!((next.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(evolve_history(&base, 1.5, &mut rng).is_err());
        assert!(evolve_history(&base, -0.1, &mut rng).is_err());
    }

    #[test]
    fn stronger_drift_wanders_further() {
        let base = base_history(&generate_profiles(2, 5).unwrap()[1]);
        let mean_tv = |drift: f64| {
            let mut rng = crate::seeded_rng(77);
            let mut h = base;
            let mut total = 0.0;
            for _ in 0..100 {
                h = evolve_history(&h, drift, &mut rng).unwrap();
                total += h.total_variation(&base);
            }
            total / 100.0
        };
        assert!(mean_tv(1.0) > mean_tv(0.1));
    }

    #[test]
    fn schedule_must_be_monotone() {
        assert!(DegreeSchedule::new(alloc::vec![10.0, 5.0]).is_err());
        let s = DegreeSchedule::linear(10.0, 300.0, 10).unwrap();
        assert_eq!(s.target(1), 10.0);
        assert_eq!(s.target(10), 300.0);
    }

    #[test]
    fn seed_network_is_regular_at_paper_scale() {
        let profiles = generate_profiles(500, 2).unwrap();
        let mut rng = crate::seeded_rng(2);
        let a = seed_network(&profiles, 10, &HomophilyWeights::default(), &mut rng).unwrap();
        assert!(a.degrees().iter().all(|&d| d == 10));
    }

    #[test]
    fn evolve_network_only_adds_edges() {
        let profiles = generate_profiles(60, 8).unwrap();
        let schedule = DegreeSchedule::linear(5.0, 30.0, 4).unwrap();
        let mut rng = crate::seeded_rng(8);
        let w = HomophilyWeights::default();
        let mut a = seed_network(&profiles, 5, &w, &mut rng).unwrap();
        for step in 2..=4 {
            let next = evolve_network(&a, &profiles, step, &schedule, &w, &mut rng).unwrap();
            assert!(a.is_subgraph_of(&next));
            let mean = 2.0 * next.edge_count() as f64 / 60.0;
            assert!((mean - schedule.target(step)).abs() < 0.05, "{mean}");
            a = next;
        }
        assert!(evolve_network(&a, &profiles, 1, &schedule, &w, &mut rng).is_err());
        assert!(evolve_network(&a, &profiles, 5, &schedule, &w, &mut rng).is_err());
    }

    #[test]
    fn zero_homophily_plants_no_signal() {
        let config = GeneratorConfig {
            users: 200,
            steps: 4,
            final_degree: Some(30),
            homophily: HomophilyWeights::none(),
            ..GeneratorConfig::default()
        };
        let d = generate_dataset(&config, 13).unwrap();
        let last = &d.snapshots.last().unwrap().adjacency;
        let r = assortativity_categorical(last, &occupation_labels(&d.users)).unwrap();
        assert!(r.abs() < 0.1, "{r}");
    }

    #[test]
    fn default_dataset_shape_and_posts() {
        let d = generate_dataset(&GeneratorConfig::default(), 2024).unwrap();
        assert_eq!(d.user_count(), 500);
        assert_eq!(d.steps(), 10);
        assert!(d.snapshots[0].adjacency.degrees().iter().all(|&k| k == 10));
        for s in &d.snapshots {
            assert!(s.posts.iter().all(|&p| p <= 10));
        }
        let last = d.snapshots.last().unwrap();
        assert_eq!(2.0 * last.adjacency.edge_count() as f64 / 500.0, 300.0);
    }
}
