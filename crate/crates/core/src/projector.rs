//! Per-layer cluster-orthogonal projector.
//!
//! Each trainable layer keeps a reservoir sample of the firing-rate vectors
//! it has received, clusters them by angle, and, for the current input,
//! projects updates onto the orthogonal complement of every cluster centre
//! except the one nearest the input:
//!
//! ```text
//! A = centres \ nearest(x),   P = I − A (AᵀA)⁻¹ Aᵀ
//! ```

use log::debug;

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, solve_spd, top_k_principal_components, Matrix, PrincipalComponents, Rng};

const MAX_KMEANS_ITERATIONS: usize = 100;
/// Columns of `A` whose |cosine| exceeds `1 - PARALLEL_TOL` are merged.
const PARALLEL_TOL: f64 = 1e-6;

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot(a, b) / denom
    }
}

/// Orthogonal projector onto the complement of `span(A)`, stored in factored
/// form so that applying it costs `O(n s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    dim: usize,
    /// Retained columns of `A`.
    columns: Vec<Vec<f64>>,
    /// `(AᵀA)⁻¹`, `s × s`.
    gram_inverse: Matrix,
}

impl Projection {
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            columns: Vec::new(),
            gram_inverse: Matrix::zeros(0, 0),
        }
    }

    /// Builds `P = I − A(AᵀA)⁻¹Aᵀ` from candidate columns of `A`.
    ///
    /// Zero and near-parallel columns are dropped first. If the Gram matrix
    /// is still singular the column at the collapsed pivot is removed and the
    /// factorisation retried, so the result always has full column rank.
    pub fn from_columns(dim: usize, candidates: Vec<Vec<f64>>) -> Result<Self> {
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(candidates.len());
        for c in candidates {
            if c.len() != dim {
                return Err(Error::Shape(format!("column of length {} in dimension {dim}", c.len())));
            }
            if norm(&c) == 0.0 {
                continue;
            }
            if columns.iter().any(|k| cosine(k, &c).abs() > 1.0 - PARALLEL_TOL) {
                debug!("dropping near-parallel projector column");
                continue;
            }
            columns.push(c);
        }
        loop {
            let s = columns.len();
            if s == 0 {
                return Ok(Self::identity(dim));
            }
            let mut gram = Matrix::zeros(s, s);
            for i in 0..s {
                for j in i..s {
                    let g = dot(&columns[i], &columns[j]);
                    gram[(i, j)] = g;
                    gram[(j, i)] = g;
                }
            }
            match solve_spd(&gram, &Matrix::identity(s)) {
                Ok(gram_inverse) => {
                    return Ok(Self {
                        dim,
                        columns,
                        gram_inverse,
                    })
                }
                Err(Error::DegenerateGram { pivot }) => {
                    debug!("degenerate Gram matrix, dropping column {pivot} of {s}");
                    columns.remove(pivot);
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of removed directions `s`.
    pub fn removed_rank(&self) -> usize {
        self.columns.len()
    }

    pub fn is_identity(&self) -> bool {
        self.columns.is_empty()
    }

    /// `P x`. Returns `x` unchanged (bit for bit) when `A` is empty.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        if self.columns.is_empty() {
            return x.to_vec();
        }
        let coords: Vec<f64> = self.columns.iter().map(|a| dot(a, x)).collect();
        let weights = self.gram_inverse.matvec(&coords).expect("square Gram inverse");
        let mut out = x.to_vec();
        for (a, w) in self.columns.iter().zip(&weights) {
            for (o, ai) in out.iter_mut().zip(a) {
                *o -= w * ai;
            }
        }
        out
    }

    /// `A` as an `n × s` matrix.
    pub fn a_matrix(&self) -> Matrix {
        if self.columns.is_empty() {
            Matrix::zeros(self.dim, 0)
        } else {
            Matrix::from_columns(&self.columns)
        }
    }

    /// Dense `n × n` projector.
    pub fn matrix(&self) -> Matrix {
        let mut p = Matrix::identity(self.dim);
        if self.columns.is_empty() {
            return p;
        }
        let a = self.a_matrix();
        let correction = a
            .matmul(&self.gram_inverse)
            .and_then(|m| m.matmul(&a.transpose()))
            .expect("conforming projector factors");
        for (pi, ci) in p.as_mut_slice().iter_mut().zip(correction.as_slice()) {
            *pi -= ci;
        }
        // Symmetrise away rounding so P = Pᵀ holds to machine precision.
        let t = p.transpose();
        for (pi, ti) in p.as_mut_slice().iter_mut().zip(t.as_slice()) {
            *pi = 0.5 * (*pi + ti);
        }
        p
    }
}

/// Output of angular k-means.
#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    /// Raw (unnormalised) means of the assigned vectors.
    pub centers: Vec<Vec<f64>>,
    /// Cluster index for each input column (zero columns get `usize::MAX`).
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

impl Clustering {
    /// Number of centres actually found; may be below the requested count.
    pub fn count(&self) -> usize {
        self.centers.len()
    }

    pub fn center_matrix(&self) -> Matrix {
        Matrix::from_columns(&self.centers)
    }
}

fn nearest_by_angle(x: &[f64], unit_centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, c) in unit_centers.iter().enumerate() {
        let s = dot(x, c);
        if s > best.1 {
            best = (j, s);
        }
    }
    best
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Lloyd's algorithm under cosine similarity.
///
/// Seeding is k-means++ with squared angular distance `1 − cos`. Each point
/// is assigned to the centre of largest cosine similarity; centres are the
/// plain means of their members. An emptied cluster is re-seeded at the point
/// farthest (by angle) from its own centre. Stops when assignments repeat or
/// after 100 iterations. If the data holds fewer than `c` distinct
/// directions, fewer centres are returned.
pub fn kmeans(columns: &[Vec<f64>], c: usize, rng: &mut Rng) -> Result<Clustering> {
    if c == 0 {
        return Err(Error::Config("k-means needs at least one cluster".into()));
    }
    let points: Vec<usize> = (0..columns.len()).filter(|&i| norm(&columns[i]) > 0.0).collect();
    if points.len() < c {
        return Err(Error::Config(format!(
            "k-means with {c} clusters needs at least {c} nonzero vectors, got {}",
            points.len()
        )));
    }
    let units: Vec<Vec<f64>> = columns.iter().map(|v| unit(v)).collect();

    // k-means++ seeding on angular distance.
    let first = points[rng.below(points.len() as u64) as usize];
    let mut seeds = vec![units[first].clone()];
    let mut dist: Vec<f64> = points.iter().map(|&i| (1.0 - dot(&units[i], &seeds[0])).max(0.0)).collect();
    while seeds.len() < c {
        let weights: Vec<f64> = dist.iter().map(|d| if *d > 1e-12 { d * d } else { 0.0 }).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.uniform() * total;
        let mut pick = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                pick = k;
                if target < *w {
                    break;
                }
                target -= w;
            }
        }
        let chosen = units[points[pick]].clone();
        for (d, &i) in dist.iter_mut().zip(&points) {
            *d = d.min((1.0 - dot(&units[i], &chosen)).max(0.0));
        }
        seeds.push(chosen);
    }

    let k = seeds.len();
    let dim = columns[points[0]].len();
    let mut unit_centers = seeds;
    let mut centers: Vec<Vec<f64>> = vec![vec![0.0; dim]; k];
    let mut assignments = vec![usize::MAX; columns.len()];
    let mut iterations = 0;

    for iter in 0..MAX_KMEANS_ITERATIONS {
        iterations = iter + 1;
        let mut changed = false;
        let mut similarity = vec![0.0; columns.len()];
        for &i in &points {
            let (j, s) = nearest_by_angle(&units[i], &unit_centers);
            similarity[i] = s;
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
        }
        if !changed && iter > 0 {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for &i in &points {
            let j = assignments[i];
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(&columns[i]) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Re-seed at the worst-fitting point.
                let far = points
                    .iter()
                    .copied()
                    .min_by(|&a, &b| similarity[a].total_cmp(&similarity[b]))
                    .expect("nonempty");
                debug!("k-means: re-seeding empty cluster {j}");
                similarity[far] = f64::INFINITY;
                centers[j] = columns[far].clone();
            } else {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
            unit_centers[j] = unit(&centers[j]);
        }
    }

    // Centres that coincide in direction are one effective centre.
    let mut kept: Vec<usize> = Vec::new();
    let mut remap = vec![0usize; k];
    for j in 0..k {
        match kept.iter().position(|&q| cosine(&centers[q], &centers[j]) > 1.0 - 1e-12) {
            Some(pos) => remap[j] = pos,
            None => {
                remap[j] = kept.len();
                kept.push(j);
            }
        }
    }
    let centers = kept.iter().map(|&j| centers[j].clone()).collect();
    for a in assignments.iter_mut().filter(|a| **a != usize::MAX) {
        *a = remap[*a];
    }
    Ok(Clustering {
        centers,
        assignments,
        iterations,
    })
}

/// Buffer size, cluster count and refresh schedule of a layer projector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProjectorParams {
    /// Reservoir capacity B.
    pub capacity: usize,
    /// Cluster count c.
    pub clusters: usize,
    /// Weight updates between centre recomputations.
    pub refresh_period: usize,
}

impl Default for ProjectorParams {
    fn default() -> Self {
        Self {
            capacity: 512,
            clusters: 10,
            refresh_period: 100,
        }
    }
}

impl ProjectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 || self.clusters == 0 || self.refresh_period == 0 {
            return Err(Error::Config(
                "projector buffer, cluster count and refresh period must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Reservoir buffer, cluster centres and cached projections for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerProjector {
    dim: usize,
    params: ProjectorParams,
    buffer: Vec<Vec<f64>>,
    seen: u64,
    skipped_zero: u64,
    refreshes: u64,
    centers: Vec<Vec<f64>>,
    /// `projections[j]` removes every centre except `j`.
    projections: Vec<Projection>,
    identity: Projection,
}

impl LayerProjector {
    pub fn new(dim: usize, params: ProjectorParams) -> Self {
        Self {
            dim,
            params,
            buffer: Vec::with_capacity(params.capacity),
            seen: 0,
            skipped_zero: 0,
            refreshes: 0,
            centers: Vec::new(),
            projections: Vec::new(),
            identity: Projection::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ProjectorParams {
        &self.params
    }

    /// Nonzero vectors observed so far.
    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn skipped_zero(&self) -> u64 {
        self.skipped_zero
    }

    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    pub fn buffer_fill(&self) -> usize {
        self.buffer.len()
    }

    pub fn buffer(&self) -> &[Vec<f64>] {
        &self.buffer
    }

    /// `n × fill` matrix whose columns are the retained vectors.
    pub fn buffer_matrix(&self) -> Matrix {
        if self.buffer.is_empty() {
            Matrix::zeros(self.dim, 0)
        } else {
            Matrix::from_columns(&self.buffer)
        }
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Offers `x` to the reservoir. The first B vectors fill the buffer in
    /// order; afterwards the `t`-th vector replaces a uniformly chosen slot
    /// with probability `B / t`. All-zero vectors are counted and skipped.
    pub fn observe(&mut self, x: &[f64], rng: &mut Rng) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!("observed vector of length {} in dimension {}", x.len(), self.dim)));
        }
        if x.iter().all(|&v| v == 0.0) {
            self.skipped_zero += 1;
            return Ok(());
        }
        self.seen += 1;
        if self.buffer.len() < self.params.capacity {
            self.buffer.push(x.to_vec());
        } else {
            let slot = rng.below(self.seen) as usize;
            if slot < self.params.capacity {
                self.buffer[slot].copy_from_slice(x);
            }
        }
        Ok(())
    }

    /// Re-clusters the buffer and rebuilds the cached projections. Returns
    /// `false` (and changes nothing) while the buffer holds fewer than `c`
    /// vectors.
    pub fn refresh(&mut self, rng: &mut Rng) -> Result<bool> {
        if self.buffer.len() < self.params.clusters {
            return Ok(false);
        }
        let clustering = kmeans(&self.buffer, self.params.clusters, rng)?;
        if clustering.count() < self.params.clusters {
            debug!(
                "projector refresh found {} of {} centres",
                clustering.count(),
                self.params.clusters
            );
        }
        self.set_centers(clustering.centers)?;
        self.refreshes += 1;
        Ok(true)
    }

    fn set_centers(&mut self, centers: Vec<Vec<f64>>) -> Result<()> {
        let projections = (0..centers.len())
            .map(|j| {
                let others = centers
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != j)
                    .map(|(_, c)| c.clone())
                    .collect();
                Projection::from_columns(self.dim, others)
            })
            .collect::<Result<Vec<_>>>()?;
        self.centers = centers;
        self.projections = projections;
        Ok(())
    }

    /// Index of the centre with the largest cosine similarity to `x`.
    pub fn nearest_center(&self, x: &[f64]) -> Option<usize> {
        if self.centers.is_empty() || norm(x) == 0.0 {
            return None;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (j, c) in self.centers.iter().enumerate() {
            let s = cosine(x, c);
            if s > best.1 {
                best = (j, s);
            }
        }
        Some(best.0)
    }

    /// Projection for the current input: every centre but the nearest one is
    /// removed. Identity before the first refresh.
    pub fn build_projection(&self, x_current: &[f64]) -> &Projection {
        match self.nearest_center(x_current) {
            Some(j) => &self.projections[j],
            None => &self.identity,
        }
    }

    /// Top-`k` principal components of the buffered vectors.
    pub fn principal_basis(&self, k: usize) -> PrincipalComponents {
        top_k_principal_components(&self.buffer_matrix(), k)
    }

    /// Rebuilds a projector from checkpointed state.
    pub(crate) fn restore(
        dim: usize,
        params: ProjectorParams,
        buffer: Vec<Vec<f64>>,
        seen: u64,
        skipped_zero: u64,
        refreshes: u64,
        centers: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if buffer.len() > params.capacity || buffer.iter().chain(&centers).any(|v| v.len() != dim) {
            return Err(Error::format("checkpoint", "projector state does not match its dimensions"));
        }
        let mut p = Self::new(dim, params);
        p.buffer = buffer;
        p.seen = seen;
        p.skipped_zero = skipped_zero;
        p.refreshes = refreshes;
        p.set_centers(centers)?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn projector_identities(p: &Matrix, a: &Matrix) -> (f64, f64, f64) {
        let idem = p.matmul(p).unwrap().sub(p).unwrap().frobenius_norm();
        let sym = p.sub(&p.transpose()).unwrap().frobenius_norm();
        let annihilate = if a.cols() == 0 { 0.0 } else { p.matmul(a).unwrap().frobenius_norm() };
        (idem, sym, annihilate)
    }

    #[test]
    fn cold_projector_is_identity() {
        let proj = LayerProjector::new(4, ProjectorParams { clusters: 3, ..Default::default() });
        let p = proj.build_projection(&[1.0, 0.0, 2.0, 0.0]);
        assert!(p.is_identity());
        assert_eq!(p.matrix(), Matrix::identity(4));
    }

    #[test]
    fn two_axis_centres() {
        let mut proj = LayerProjector::new(3, ProjectorParams { clusters: 2, ..Default::default() });
        proj.set_centers(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let projection = proj.build_projection(&[0.9, 0.1, 0.2]);
        assert_eq!(projection.removed_rank(), 1);
        let p = projection.matrix();
        let expected = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(p.max_abs_diff(&expected) < 1e-15);
        assert_eq!(projection.apply(&[0.0, 1.0, 0.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(projection.apply(&[1.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn projection_identities_on_random_centres() {
        let mut rng = Rng::new(8);
        for _ in 0..20 {
            let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..7).map(|_| rng.uniform()).collect()).collect();
            let projection = Projection::from_columns(7, cols).unwrap();
            let p = projection.matrix();
            let (idem, sym, ann) = projector_identities(&p, &projection.a_matrix());
            assert!(idem < 1e-6 && sym < 1e-8 && ann < 1e-6, "{idem} {sym} {ann}");
            let x: Vec<f64> = (0..7).map(|_| rng.normal()).collect();
            let dense = p.matvec(&x).unwrap();
            let fast = projection.apply(&x);
            assert!(dense.iter().zip(&fast).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn parallel_and_dependent_columns_are_dropped() {
        let cols = vec![
            vec![1.0, 0.0, 0.0],
            vec![2.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ];
        let projection = Projection::from_columns(3, cols).unwrap();
        assert_eq!(projection.removed_rank(), 2);
        let p = projection.matrix();
        assert!((p[(2, 2)] - 1.0).abs() < 1e-12);
        assert!(p[(0, 0)].abs() < 1e-12 && p[(1, 1)].abs() < 1e-12);
    }

    #[test]
    fn too_many_centres_cap_rank_at_dimension() {
        let mut rng = Rng::new(3);
        let cols: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.uniform()).collect()).collect();
        let projection = Projection::from_columns(3, cols).unwrap();
        assert!(projection.removed_rank() <= 3);
    }

    #[test]
    fn reservoir_fill_phase_keeps_order() {
        let mut proj = LayerProjector::new(2, ProjectorParams { capacity: 3, ..Default::default() });
        let mut rng = Rng::new(0);
        for i in 1..=3 {
            proj.observe(&[i as f64, 0.0], &mut rng).unwrap();
        }
        assert_eq!(proj.buffer(), &[vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]);
    }

    #[test]
    fn zero_vectors_are_skipped() {
        let mut proj = LayerProjector::new(2, ProjectorParams::default());
        let mut rng = Rng::new(0);
        proj.observe(&[0.0, 0.0], &mut rng).unwrap();
        assert_eq!(proj.buffer_fill(), 0);
        assert_eq!(proj.skipped_zero(), 1);
        assert!(proj.observe(&[1.0], &mut rng).is_err());
    }

    #[test]
    fn reservoir_retention_is_uniform() {
        // 1000 repetitions of a 40-long stream into a 10-slot reservoir; each
        // position should survive with probability 1/4.
        let (capacity, stream_len, reps) = (10usize, 40usize, 1000usize);
        let mut counts = vec![0u32; stream_len];
        for rep in 0..reps {
            let mut proj = LayerProjector::new(1, ProjectorParams { capacity, ..Default::default() });
            let mut rng = Rng::new(rep as u64);
            for t in 0..stream_len {
                proj.observe(&[(t + 1) as f64], &mut rng).unwrap();
            }
            for v in proj.buffer() {
                counts[v[0] as usize - 1] += 1;
            }
        }
        let expected = reps as f64 * capacity as f64 / stream_len as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 39 degrees of freedom; the 0.999 quantile is about 72.1.
        assert!(chi2 < 72.1, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn single_cluster_is_mean() {
        let cols = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let c = kmeans(&cols, 1, &mut Rng::new(1)).unwrap();
        assert_eq!(c.count(), 1);
        assert!((c.centers[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.centers[0][1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_columns_collapse() {
        let cols = vec![vec![0.5, 0.5, 0.1]; 6];
        let c = kmeans(&cols, 3, &mut Rng::new(5)).unwrap();
        assert_eq!(c.count(), 1);
    }

    #[test]
    fn too_few_vectors_is_config_error() {
        let cols = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        assert!(matches!(kmeans(&cols, 2, &mut Rng::new(0)), Err(Error::Config(_))));
    }

    /// Sum over points of angular distance to the mean of their group.
    fn partition_cost(points: &[Vec<f64>], groups: &[Vec<usize>]) -> f64 {
        groups
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| {
                let dim = points[0].len();
                let mean: Vec<f64> = (0..dim).map(|d| g.iter().map(|&i| points[i][d]).sum::<f64>() / g.len() as f64).collect();
                g.iter().map(|&i| 1.0 - cosine(&points[i], &mean)).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn two_bundles_match_exhaustive_partition() {
        let points = vec![
            vec![1.0, 0.05],
            vec![0.95, 0.0],
            vec![0.02, 1.0],
            vec![0.0, 0.9],
        ];
        // Brute force over every split into two nonempty groups.
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << points.len()) - 1 {
            let a: Vec<usize> = (0..4).filter(|i| mask >> i & 1 == 1).collect();
            let b: Vec<usize> = (0..4).filter(|i| mask >> i & 1 == 0).collect();
            let cost = partition_cost(&points, &[a.clone(), b]);
            if cost < best.0 {
                best = (cost, a);
            }
        }
        let c = kmeans(&points, 2, &mut Rng::new(17)).unwrap();
        let a = &c.assignments;
        assert_eq!(a[0], a[1]);
        assert_eq!(a[2], a[3]);
        assert_ne!(a[0], a[2]);
        let found: Vec<usize> = (0..4).filter(|&i| a[i] == a[best.1[0]]).collect();
        assert_eq!(found, best.1);
        for center in &c.centers {
            let members: Vec<usize> = (0..4).filter(|&i| c.centers[a[i]] == *center).collect();
            let mean0 = members.iter().map(|&i| points[i][0]).sum::<f64>() / members.len() as f64;
            assert!((center[0] - mean0).abs() < 1e-15);
        }
    }

    #[test]
    fn refresh_is_deterministic_and_needs_c_vectors() {
        let mut rng = Rng::new(2);
        let mut proj = LayerProjector::new(5, ProjectorParams { clusters: 3, capacity: 50, refresh_period: 1 });
        proj.observe(&[1.0, 0.0, 0.0, 0.0, 0.0], &mut rng).unwrap();
        assert!(!proj.refresh(&mut Rng::new(0)).unwrap());
        for _ in 0..40 {
            let x: Vec<f64> = (0..5).map(|_| rng.uniform()).collect();
            proj.observe(&x, &mut rng).unwrap();
        }
        let mut a = proj.clone();
        let mut b = proj.clone();
        assert!(a.refresh(&mut Rng::new(9)).unwrap());
        assert!(b.refresh(&mut Rng::new(9)).unwrap());
        assert_eq!(a.centers(), b.centers());
        assert!(a.centers().len() <= 3);
    }
}
