//! Self-checks run by `loco verify`: projector algebra on random buffers,
//! estimator alignment on the smooth surrogate, and variance reduction.

use crate::error::Result;
use crate::numerics::{symmetric_eigenvalues, Matrix, Rng};
use crate::oracle::{np_bias_check, variance_report, SurrogateNet};
use crate::projector::{LayerProjector, Projection, ProjectorParams};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Worst-case errors over the projector instances.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProjectorAlgebra {
    pub instances: usize,
    pub max_idempotence: f64,
    pub max_asymmetry: f64,
    pub max_annihilation: f64,
    pub rank_mismatches: usize,
}

impl ProjectorAlgebra {
    pub fn passed(&self) -> bool {
        self.max_idempotence < 1e-6 && self.max_asymmetry < 1e-8 && self.max_annihilation < 1e-6 && self.rank_mismatches == 0
    }
}

/// Random clustered buffer and query: nonnegative rate-like vectors around
/// `c` prototypes, some of them near-duplicates.
fn random_instance(rng: &mut Rng) -> Result<(LayerProjector, Vec<f64>)> {
    let n = 4 + rng.below(37) as usize;
    let c = 2 + rng.below(9) as usize;
    let m = c + rng.below(60) as usize;
    let mut prototypes: Vec<Vec<f64>> = (0..c).map(|_| (0..n).map(|_| rng.uniform()).collect()).collect();
    if rng.bernoulli(0.2) {
        prototypes[1] = prototypes[0].iter().map(|v| v * 1.0001).collect();
    }
    let noise = 0.05 + 0.3 * rng.uniform();
    let mut projector = LayerProjector::new(
        n,
        ProjectorParams {
            capacity: 64,
            clusters: c,
            refresh_period: 1,
        },
    );
    for i in 0..m {
        let p = &prototypes[i % c];
        let x: Vec<f64> = p.iter().map(|v| (v + noise * rng.normal()).clamp(0.0, 1.0)).collect();
        projector.observe(&x, rng)?;
    }
    projector.refresh(rng)?;
    let query: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    Ok((projector, query))
}

pub fn projector_algebra(instances: usize, seed: u64) -> Result<ProjectorAlgebra> {
    let mut out = ProjectorAlgebra {
        instances,
        ..Default::default()
    };
    for i in 0..instances {
        let mut rng = Rng::substream(seed, &[i as u64]);
        let (projector, query) = random_instance(&mut rng)?;
        let projection = projector.build_projection(&query);
        let p = projection.matrix();
        let a = projection.a_matrix();
        let idem = p.matmul(&p)?.sub(&p)?.frobenius_norm();
        let sym = p.sub(&p.transpose())?.frobenius_norm();
        let ann = if a.cols() == 0 { 0.0 } else { p.matmul(&a)?.frobenius_norm() };
        let rank = symmetric_eigenvalues(&p)?.iter().filter(|&&e| e > 0.5).count();
        out.max_idempotence = out.max_idempotence.max(idem);
        out.max_asymmetry = out.max_asymmetry.max(sym);
        out.max_annihilation = out.max_annihilation.max(ann);
        if rank != projection.dim() - projection.removed_rank() {
            out.rank_mismatches += 1;
        }
    }
    Ok(out)
}

/// Alignment of the trial-mean update with the descent direction on a small
/// two-layer surrogate.
pub fn estimator_alignment(sigma: f64, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::substream(seed, &[0]);
    let net = SurrogateNet::random(&[5, 4, 3], &mut rng)?;
    let input: Vec<f64> = (0..5).map(|_| rng.uniform()).collect();
    np_bias_check(&net, &input, &[1.0, 0.0, 0.0], sigma, trials, seed)
}

/// Counts ensembles whose projected variance does not exceed the raw one.
pub fn variance_reduction(cases: usize, ensemble: usize, seed: u64) -> Result<usize> {
    let mut ok = 0;
    for case in 0..cases {
        let mut rng = Rng::substream(seed, &[case as u64]);
        let n = 3 + rng.below(20) as usize;
        let rows = 1 + rng.below(6) as usize;
        let k = 1 + rng.below(n as u64 - 1) as usize;
        let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
        let p = Projection::from_columns(n, cols)?.matrix();
        let deltas: Vec<Matrix> = (0..ensemble)
            .map(|_| Matrix::from_vec(rows, n, (0..rows * n).map(|_| rng.normal()).collect()))
            .collect::<Result<_>>()?;
        let (raw, projected) = variance_report(&deltas, &p)?;
        if projected <= raw {
            ok += 1;
        }
    }
    Ok(ok)
}

pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let algebra = projector_algebra(1000, seed)?;
    let alignment = estimator_alignment(0.01, 10_000, seed)?;
    let variance_ok = variance_reduction(100, 200, seed)?;
    Ok(vec![
        Check {
            name: "projector algebra",
            passed: algebra.passed(),
            detail: format!(
                "{} instances: |P^2-P| {:.1e}, |P-P^T| {:.1e}, |PA| {:.1e}, rank mismatches {}",
                algebra.instances,
                algebra.max_idempotence,
                algebra.max_asymmetry,
                algebra.max_annihilation,
                algebra.rank_mismatches
            ),
        },
        Check {
            name: "estimator alignment",
            passed: alignment > 0.9,
            detail: format!("cosine {alignment:.4} (needs > 0.9)"),
        },
        Check {
            name: "variance reduction",
            passed: variance_ok == 100,
            detail: format!("{variance_ok}/100 ensembles"),
        },
    ])
}
