//! Weight-update rules: node perturbation, its cluster-orthogonal projection,
//! and the PCA rank-constrained ablation.

use crate::error::{Error, Result};
use crate::numerics::{norm, Matrix};
use crate::snn::{Network, TrialRecord};

/// How the perturbation scale enters the node-perturbation update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NpVariant {
    /// `-(eta/sigma) (sigma xi) td xᵀ`: the sigma factors cancel.
    #[default]
    Paper,
    /// `-eta xi (td/sigma) xᵀ`, the usual unbiased estimator scaling.
    Classic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    Np,
    Loco,
    /// Node perturbation with the input side restricted to the top `k`
    /// principal components of the layer's input buffer.
    RankConstrained { k: usize },
}

impl RuleKind {
    pub fn name(&self) -> String {
        match self {
            RuleKind::Np => "np".into(),
            RuleKind::Loco => "loco".into(),
            RuleKind::RankConstrained { k } => format!("rank{k}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateRule {
    pub kind: RuleKind,
    pub eta: f64,
    pub sigma: f64,
    pub variant: NpVariant,
}

impl UpdateRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if let RuleKind::RankConstrained { k: 0 } = self.kind {
            return Err(Error::Config("rank_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Scalar multiplying `xi ⊗ x` in the node-perturbation update.
    fn coefficient(&self, td_error: f64) -> f64 {
        match self.variant {
            NpVariant::Paper => -(self.eta / self.sigma) * self.sigma * td_error,
            NpVariant::Classic => -self.eta * td_error / self.sigma,
        }
    }
}

/// Rank-one weight change `post ⊗ pre`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOne {
    pub post: Vec<f64>,
    pub pre: Vec<f64>,
}

impl RankOne {
    pub fn to_matrix(&self) -> Matrix {
        Matrix::outer(&self.post, &self.pre)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.post) * norm(&self.pre)
    }

    /// Same update with the input side replaced.
    pub fn with_pre(&self, pre: Vec<f64>) -> Self {
        Self {
            post: self.post.clone(),
            pre,
        }
    }
}

/// A per-layer weight change, kept factored when it is rank one.
#[derive(Clone, Debug, PartialEq)]
pub enum Delta {
    Dense(Matrix),
    Outer(RankOne),
}

impl Delta {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Delta::Dense(m) => m.shape(),
            Delta::Outer(r) => (r.post.len(), r.pre.len()),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            Delta::Dense(m) => m.frobenius_norm(),
            Delta::Outer(r) => r.frobenius_norm(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Delta::Dense(m) => m.is_finite(),
            Delta::Outer(r) => r.post.iter().chain(&r.pre).all(|v| v.is_finite()),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        match self {
            Delta::Dense(m) => m.clone(),
            Delta::Outer(r) => r.to_matrix(),
        }
    }

    fn add_to(&self, w: &mut Matrix) -> Result<()> {
        match self {
            Delta::Dense(m) => w.add_assign(m),
            Delta::Outer(r) => w.add_outer(1.0, &r.post, &r.pre),
        }
    }
}

/// Factored node-perturbation update for weight layer `layer` (1-based, so
/// `layer = 1` updates the input-to-first-hidden weights).
///
/// The input side is the clean-run firing rate of the layer below, or the
/// perturbed-run rate when `use_perturbed_rates` is set.
pub fn np_factors(
    rule: &UpdateRule,
    trial: &TrialRecord,
    layer: usize,
    use_perturbed_rates: bool,
) -> Result<RankOne> {
    let depth = trial.xi.len();
    if layer == 0 || layer > depth {
        return Err(Error::Shape(format!("layer {layer} outside 1..={depth}")));
    }
    let rates = if use_perturbed_rates {
        &trial.perturbed.rates
    } else {
        &trial.clean.rates
    };
    let coef = rule.coefficient(trial.td_error);
    Ok(RankOne {
        post: trial.xi[layer - 1].iter().map(|x| coef * x).collect(),
        pre: rates[layer - 1].clone(),
    })
}

/// Dense node-perturbation update `-eta xi td xᵀ` for weight layer `layer`
/// (1-based), using clean-run input rates.
pub fn np_delta(rule: &UpdateRule, trial: &TrialRecord, layer: usize) -> Result<Matrix> {
    Ok(np_factors(rule, trial, layer, false)?.to_matrix())
}

/// Projects the input side of an update: `(P · Dᵀ)ᵀ = D · Pᵀ`.
pub fn loco_delta(np_dw: &Matrix, p: &Matrix) -> Result<Matrix> {
    if p.rows() != p.cols() || p.rows() != np_dw.cols() {
        return Err(Error::Shape(format!(
            "projector {:?} for update {:?}",
            p.shape(),
            np_dw.shape()
        )));
    }
    np_dw.matmul(&p.transpose())
}

/// Restricts the input side of an update to `span(v_k)`: `D · V Vᵀ`.
pub fn rank_constrained_delta(np_dw: &Matrix, v_k: &Matrix) -> Result<Matrix> {
    if v_k.rows() != np_dw.cols() {
        return Err(Error::Shape(format!(
            "basis {:?} for update {:?}",
            v_k.shape(),
            np_dw.shape()
        )));
    }
    if v_k.cols() == 0 {
        return Err(Error::Config("rank-constrained update needs at least one basis vector".into()));
    }
    check_orthonormal(v_k)?;
    np_dw.matmul(v_k)?.matmul(&v_k.transpose())
}

/// Rank-one form of [`rank_constrained_delta`]: projects `pre` onto `span(v_k)`.
pub fn project_onto_basis(pre: &[f64], v_k: &Matrix) -> Result<Vec<f64>> {
    let coords = v_k.transpose().matvec(pre)?;
    v_k.matvec(&coords)
}

fn check_orthonormal(v: &Matrix) -> Result<()> {
    let gram = v.transpose().matmul(v)?;
    let err = gram.sub(&Matrix::identity(v.cols()))?.frobenius_norm();
    if err > 1e-6 {
        return Err(Error::Config(format!("basis is not orthonormal (‖VᵀV − I‖ = {err:.3e})")));
    }
    Ok(())
}

/// Norms recorded for one applied update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateReport {
    /// Frobenius norm of the change actually added to each layer.
    pub applied_norms: Vec<f64>,
    /// Norm of each layer's raw node-perturbation change before projection.
    pub pre_projection_norms: Vec<f64>,
    pub td_error: f64,
}

impl UpdateReport {
    pub fn total_applied(&self) -> f64 {
        self.applied_norms.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn total_pre_projection(&self) -> f64 {
        self.pre_projection_norms.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Adds `deltas[l]` to `weights[l]` for every layer. Nothing is written
/// unless every delta has the right shape and is finite.
pub fn apply_update(
    net: &mut Network,
    deltas: &[Delta],
    pre_projection_norms: Option<Vec<f64>>,
    td_error: f64,
) -> Result<UpdateReport> {
    if deltas.len() != net.depth() {
        return Err(Error::Shape(format!(
            "{} deltas for {} layers",
            deltas.len(),
            net.depth()
        )));
    }
    for (l, (d, w)) in deltas.iter().zip(net.weights()).enumerate() {
        if d.shape() != w.shape() {
            return Err(Error::Shape(format!(
                "delta for layer {} has shape {:?}, weights {:?}",
                l + 1,
                d.shape(),
                w.shape()
            )));
        }
        if !d.is_finite() {
            return Err(Error::NumericBlowup { layer: l + 1 });
        }
    }
    let applied_norms: Vec<f64> = deltas.iter().map(Delta::frobenius_norm).collect();
    for (d, w) in deltas.iter().zip(net.weights_mut()) {
        d.add_to(w)?;
    }
    Ok(UpdateReport {
        pre_projection_norms: pre_projection_norms.unwrap_or_else(|| applied_norms.clone()),
        applied_norms,
        td_error,
    })
}

/// Outcome of one short training run in a learning-rate sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityProbe {
    pub eta: f64,
    pub initial_loss: f64,
    /// `None` when the run blew up numerically.
    pub final_loss: Option<f64>,
}

impl StabilityProbe {
    /// Finite final loss strictly below the initial loss.
    pub fn is_stable(&self) -> bool {
        matches!(self.final_loss, Some(l) if l.is_finite() && l < self.initial_loss)
    }
}

/// Result of a learning-rate sweep: every probe plus the threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityTable {
    pub probes: Vec<StabilityProbe>,
}

impl StabilityTable {
    /// Largest stable learning rate, or `None` when no grid point is stable.
    pub fn max_stable(&self) -> Option<f64> {
        self.probes
            .iter()
            .filter(|p| p.is_stable())
            .map(|p| p.eta)
            .fold(None, |acc: Option<f64>, eta| Some(acc.map_or(eta, |a| a.max(eta))))
    }
}

/// Runs `probe` at every grid point and collects the stability table.
/// The grid must be ascending with at least three points.
pub fn max_stable_lr<F>(grid: &[f64], mut probe: F) -> Result<StabilityTable>
where
    F: FnMut(f64) -> Result<StabilityProbe>,
{
    if grid.len() < 3 {
        return Err(Error::Config(format!(
            "learning-rate grid needs at least 3 points, got {}",
            grid.len()
        )));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("learning-rate grid must be strictly ascending".into()));
    }
    let probes = grid.iter().map(|&eta| probe(eta)).collect::<Result<Vec<_>>>()?;
    Ok(StabilityTable { probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use crate::snn::{ForwardRun, LifParams};

    fn trial(xi: Vec<Vec<f64>>, rates: Vec<Vec<f64>>, td: f64, sigma: f64) -> TrialRecord {
        let run = ForwardRun {
            rates,
            spike_counts: Vec::new(),
        };
        TrialRecord {
            clean: run.clone(),
            perturbed: run,
            clean_loss: 0.0,
            perturbed_loss: td,
            td_error: td,
            xi,
            sigma,
        }
    }

    fn rule(eta: f64, sigma: f64) -> UpdateRule {
        UpdateRule {
            kind: RuleKind::Np,
            eta,
            sigma,
            variant: NpVariant::Paper,
        }
    }

    #[test]
    fn zero_td_gives_zero_update() {
        let t = trial(vec![vec![1.0, 2.0]], vec![vec![0.3, 0.4, 0.5], vec![0.0, 0.0]], 0.0, 0.1);
        let d = np_delta(&rule(1.0, 0.1), &t, 1).unwrap();
        assert!(d.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_update() {
        let t = trial(vec![vec![1.0, -1.0]], vec![vec![0.2, 0.0, 0.4], vec![0.0, 0.0]], 0.5, 0.3);
        let d = np_delta(&rule(1.0, 0.3), &t, 1).unwrap();
        let expected = Matrix::from_rows(&[[-0.1, 0.0, -0.2], [0.1, 0.0, 0.2]]);
        assert!(d.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn paper_variant_is_sigma_free() {
        let xi = vec![vec![0.7, -1.3, 0.2]];
        let rates = vec![vec![0.1, 0.9], vec![0.0; 3]];
        let a = np_delta(&rule(0.05, 0.01), &trial(xi.clone(), rates.clone(), 0.2, 0.01), 1).unwrap();
        let b = np_delta(&rule(0.05, 2.0), &trial(xi, rates, 0.2, 2.0), 1).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn classic_variant_divides_by_sigma() {
        let xi = vec![vec![1.0]];
        let rates = vec![vec![1.0], vec![0.0]];
        let mut r = rule(1.0, 0.5);
        r.variant = NpVariant::Classic;
        let d = np_delta(&r, &trial(xi, rates, 0.25, 0.5), 1).unwrap();
        assert!((d[(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn layer_index_out_of_range() {
        let t = trial(vec![vec![1.0]], vec![vec![1.0], vec![0.0]], 0.1, 0.1);
        assert!(np_delta(&rule(1.0, 0.1), &t, 0).is_err());
        assert!(np_delta(&rule(1.0, 0.1), &t, 2).is_err());
    }

    #[test]
    fn identity_and_zero_projectors() {
        let d = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]]);
        assert_eq!(loco_delta(&d, &Matrix::identity(3)).unwrap(), d);
        assert_eq!(loco_delta(&d, &Matrix::zeros(3, 3)).unwrap(), Matrix::zeros(2, 3));
    }

    #[test]
    fn projector_removing_first_axis_zeroes_first_column() {
        let d = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]]);
        let mut p = Matrix::identity(3);
        p[(0, 0)] = 0.0;
        let expected = Matrix::from_rows(&[[0.0, 2.0, 3.0], [0.0, 0.5, 4.0]]);
        assert_eq!(loco_delta(&d, &p).unwrap(), expected);
        assert!(loco_delta(&d, &Matrix::identity(2)).is_err());
    }

    #[test]
    fn full_basis_leaves_update_unchanged() {
        let d = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]]);
        let out = rank_constrained_delta(&d, &Matrix::identity(3)).unwrap();
        assert!(out.max_abs_diff(&d) < 1e-15);
    }

    #[test]
    fn single_axis_basis_matches_dense_projector() {
        let d = Matrix::from_rows(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]]);
        let e1 = Matrix::from_columns(&[[1.0, 0.0, 0.0]]);
        let projector = e1.matmul(&e1.transpose()).unwrap();
        let out = rank_constrained_delta(&d, &e1).unwrap();
        assert!(out.max_abs_diff(&d.matmul(&projector).unwrap()) < 1e-15);
        assert_eq!(out.column(1), vec![0.0, 0.0]);
        assert_eq!(out.column(2), vec![0.0, 0.0]);
    }

    #[test]
    fn non_orthonormal_basis_rejected() {
        let d = Matrix::zeros(2, 2);
        let v = Matrix::from_columns(&[[2.0, 0.0]]);
        assert!(matches!(rank_constrained_delta(&d, &v), Err(Error::Config(_))));
        assert!(rank_constrained_delta(&d, &Matrix::zeros(2, 0)).is_err());
    }

    fn small_net() -> Network {
        Network::initialize(vec![3, 2], LifParams::default(), 1.0, &mut Rng::new(1)).unwrap()
    }

    #[test]
    fn zero_update_leaves_weights() {
        let mut net = small_net();
        let before = net.clone();
        let report = apply_update(&mut net, &[Delta::Dense(Matrix::zeros(2, 3))], None, 0.0).unwrap();
        assert_eq!(net, before);
        assert_eq!(report.applied_norms, vec![0.0]);
    }

    #[test]
    fn single_entry_update() {
        let mut net = small_net();
        let before = net.clone();
        let mut d = Matrix::zeros(2, 3);
        d[(0, 0)] = 0.5;
        let report = apply_update(&mut net, &[Delta::Dense(d)], None, 0.1).unwrap();
        let diff = net.weights()[0].sub(&before.weights()[0]).unwrap();
        assert_eq!(diff[(0, 0)], 0.5);
        assert_eq!(diff.as_slice().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(report.applied_norms, vec![0.5]);
    }

    #[test]
    fn non_finite_update_is_rejected_atomically() {
        let mut net = Network::initialize(vec![3, 2, 2], LifParams::default(), 1.0, &mut Rng::new(1)).unwrap();
        let before = net.clone();
        let mut bad = Matrix::zeros(2, 2);
        bad[(1, 1)] = f64::NAN;
        let deltas = [Delta::Dense(Matrix::from_rows(&[[1.0; 3], [1.0; 3]])), Delta::Dense(bad)];
        assert!(matches!(apply_update(&mut net, &deltas, None, 0.0), Err(Error::NumericBlowup { layer: 2 })));
        assert_eq!(net, before);
    }

    #[test]
    fn stability_threshold_picks_largest_stable() {
        let table = max_stable_lr(&[0.0, 0.1, 1.0, 1e6], |eta| {
            Ok(StabilityProbe {
                eta,
                initial_loss: 1.0,
                final_loss: if eta == 0.0 {
                    Some(1.0)
                } else if eta < 10.0 {
                    Some(0.5)
                } else {
                    None
                },
            })
        })
        .unwrap();
        assert!(!table.probes[0].is_stable());
        assert!(!table.probes[3].is_stable());
        assert_eq!(table.max_stable(), Some(1.0));
    }

    #[test]
    fn all_diverging_grid_has_no_threshold() {
        let table = max_stable_lr(&[1.0, 2.0, 3.0], |eta| {
            Ok(StabilityProbe { eta, initial_loss: 0.1, final_loss: Some(0.2) })
        })
        .unwrap();
        assert_eq!(table.max_stable(), None);
    }

    #[test]
    fn short_or_unsorted_grid_rejected() {
        let probe = |eta| Ok(StabilityProbe { eta, initial_loss: 1.0, final_loss: Some(0.0) });
        assert!(max_stable_lr(&[1.0, 2.0], probe).is_err());
        assert!(max_stable_lr(&[1.0, 3.0, 2.0], probe).is_err());
    }
}
