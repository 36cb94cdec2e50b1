//! Structural and homophily metrics over snapshot graphs.
//!
//! Undefined values (no connected triples, zero-variance endpoints, a single
//! label) are reported as `Err`/`None`, never as zero.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::synthgen::{Adjacency, TemporalSnapshot, CATEGORY_COUNT};

/// `2·|E| / (N·(N−1))`.
pub fn density(a: &Adjacency) -> Result<f64> {
    let n = a.len();
    if n < 2 {
        return Err(Error::UndefinedMetric {
            metric: "density",
            reason: "fewer than two nodes",
        });
    }
    Ok(2.0 * a.edge_count() as f64 / (n * (n - 1)) as f64)
}

/// Global transitivity: three times the triangle count over the number of
/// connected triples `Σᵢ C(deg(i), 2)`.
pub fn triadic_closure(a: &Adjacency) -> Result<f64> {
    let triples: usize = a.degrees().iter().map(|&d| d * d.saturating_sub(1) / 2).sum();
    if triples == 0 {
        return Err(Error::UndefinedMetric {
            metric: "triadic_closure",
            reason: "no connected triples",
        });
    }
    // Each triangle is seen once per edge: Σ_{(i,j)∈E} |N(i)∩N(j)| = 3·triangles.
    let closed: usize = a.edges().map(|(i, j)| a.common_neighbors(i, j)).sum();
    Ok(closed as f64 / triples as f64)
}

/// Newman's mixing-matrix coefficient over edge endpoint labels, with each
/// undirected edge counted in both orientations.
pub fn assortativity_categorical(a: &Adjacency, labels: &[usize]) -> Result<f64> {
    if labels.len() != a.len() {
        return Err(Error::Layout(alloc::format!("{} labels for {} nodes", labels.len(), a.len())));
    }
    let m = a.edge_count();
    if m == 0 {
        return Err(Error::UndefinedMetric {
            metric: "assortativity",
            reason: "graph has no edges",
        });
    }
    let k = labels.iter().max().map_or(0, |&l| l + 1);
    let mut within = 0usize;
    let mut ends = alloc::vec![0usize; k];
    for (i, j) in a.edges() {
        if labels[i] == labels[j] {
            within += 1;
        }
        ends[labels[i]] += 1;
        ends[labels[j]] += 1;
    }
    let total = 2.0 * m as f64;
    let trace = 2.0 * within as f64 / total;
    // Symmetric mixing matrix: row and column marginals coincide.
    let expected: f64 = ends.iter().map(|&e| (e as f64 / total) * (e as f64 / total)).sum();
    if (1.0 - expected).abs() < 1e-15 {
        return Err(Error::UndefinedMetric {
            metric: "assortativity",
            reason: "all edge endpoints share one label",
        });
    }
    Ok(((trace - expected) / (1.0 - expected)).clamp(-1.0, 1.0))
}

/// Pearson correlation of endpoint values over both orientations of every
/// edge.
pub fn assortativity_numeric(a: &Adjacency, values: &[f64]) -> Result<f64> {
    if values.len() != a.len() {
        return Err(Error::Layout(alloc::format!("{} values for {} nodes", values.len(), a.len())));
    }
    let m = a.edge_count();
    if m == 0 {
        return Err(Error::UndefinedMetric {
            metric: "assortativity",
            reason: "graph has no edges",
        });
    }
    // In the doubled pair list both coordinates share one marginal, so the
    // correlation is cov(x, y) / var(x).
    let total = 2.0 * m as f64;
    let mut sum = 0.0;
    for (i, j) in a.edges() {
        sum += values[i] + values[j];
    }
    let mean = sum / total;
    let mut var = 0.0;
    let mut cov = 0.0;
    for (i, j) in a.edges() {
        let (x, y) = (values[i] - mean, values[j] - mean);
        var += x * x + y * y;
        cov += 2.0 * x * y;
    }
    if var <= 1e-300 * total {
        return Err(Error::UndefinedMetric {
            metric: "assortativity",
            reason: "endpoint values have zero variance",
        });
    }
    Ok((cov / var).clamp(-1.0, 1.0))
}

/// Assortativity of each demographic attribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemographicAssortativity {
    pub age: Option<f64>,
    pub gender: Option<f64>,
    pub occupation: Option<f64>,
    pub location: Option<f64>,
}

/// Per-step structure plus final-snapshot homophily, one entry per table
/// column.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub steps: Vec<usize>,
    pub density: Vec<f64>,
    pub triadic_closure: Vec<Option<f64>>,
    /// Indexed by [`Category`](crate::synthgen::Category).
    pub history: [Option<f64>; CATEGORY_COUNT],
    /// Reactions, shares, comments; each indexed by category.
    pub engagement: [[Option<f64>; CATEGORY_COUNT]; 3],
    pub demographics: DemographicAssortativity,
}

/// Density and closure for every snapshot, homophily on the last one.
pub fn report(snapshots: &[TemporalSnapshot]) -> Result<MetricsReport> {
    let last = snapshots.last().ok_or(Error::InsufficientHistory { needed: 1, got: 0 })?;
    let mut density_row = Vec::with_capacity(snapshots.len());
    let mut closure_row = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        density_row.push(density(&s.adjacency)?);
        closure_row.push(triadic_closure(&s.adjacency).ok());
    }
    let a = &last.adjacency;
    let mut history = [None; CATEGORY_COUNT];
    for (c, slot) in history.iter_mut().enumerate() {
        let column: Vec<f64> = last.history.iter().map(|h| h.weights()[c]).collect();
        *slot = assortativity_numeric(a, &column).ok();
    }
    let mut engagement = [[None; CATEGORY_COUNT]; 3];
    for (k, kind) in engagement.iter_mut().enumerate() {
        for (c, slot) in kind.iter_mut().enumerate() {
            let column: Vec<f64> = last.engagement.iter().map(|e| e.parts()[k].weights()[c]).collect();
            *slot = assortativity_numeric(a, &column).ok();
        }
    }
    let p = &last.profiles;
    let ages: Vec<f64> = p.iter().map(|u| f64::from(u.age)).collect();
    let genders: Vec<usize> = p.iter().map(|u| u.gender.index()).collect();
    let occupations: Vec<usize> = p.iter().map(|u| u.occupation.index()).collect();
    let locations: Vec<usize> = p.iter().map(|u| usize::from(u.location)).collect();
    Ok(MetricsReport {
        steps: snapshots.iter().map(|s| s.step).collect(),
        density: density_row,
        triadic_closure: closure_row,
        history,
        engagement,
        demographics: DemographicAssortativity {
            age: assortativity_numeric(a, &ages).ok(),
            gender: assortativity_categorical(a, &genders).ok(),
            occupation: assortativity_categorical(a, &occupations).ok(),
            location: assortativity_categorical(a, &locations).ok(),
        },
    })
}
