//! Curvature-aware latent regularizers and the regularized training loss.
//!
//! For a loss `L(z)` over a latent vector `z` the regularizer is
//!
//! ```text
//! R(z) = ‖∇z L‖² + β ‖H‖_F² + γ σ_max(H),     H = ∇z² L
//! ```
//!
//! and the training objective is `L_base + λ · mean_batch R(z)`: the integral
//! over the latent domain is taken as the empirical mean over the latents of
//! the current batch.
//!
//! The graph-level functions (`*_node`) work on a caller-owned [`Graph`] in
//! which the loss was built from the latent nodes, so the returned nodes stay
//! differentiable w.r.t. whatever produced `z`. The closure-based functions
//! are conveniences that build a private graph at a fixed `z`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{hvp_nodes, Graph, NodeId};
use crate::error::{Error, Result};
use crate::rng::{SeededRng, Stream};

pub const DENSE_HESSIAN_MAX_DIM: usize = 64;
pub const FULL_MODE_MAX_DIM: usize = 16;

/// Builds a scalar loss from latent nodes.
pub type LatentLoss<'a> = &'a dyn Fn(&mut Graph, &[NodeId]) -> NodeId;

/// A finite, non-empty latent vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidLatent("dimension must be ≥ 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidLatent(format!("entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrobeniusMode {
    Exact,
    Hutchinson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegMode {
    /// Curvature terms are computed and reported but carry no parameter gradient.
    Analysis,
    /// Curvature terms are differentiable (latent dimension ≤ 16).
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegConfig {
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub frobenius_mode: FrobeniusMode,
    pub hutchinson_samples: usize,
    pub power_iters: usize,
    pub power_tol: f64,
    pub reg_mode: RegMode,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            beta: 0.0,
            gamma: 0.0,
            delta: 0.0,
            frobenius_mode: FrobeniusMode::Exact,
            hutchinson_samples: 16,
            power_iters: 100,
            power_tol: 1e-10,
            reg_mode: RegMode::Analysis,
        }
    }
}

impl RegConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a finite value ≥ 0, got {v}"
                )));
            }
        }
        if self.hutchinson_samples == 0 {
            return Err(Error::InvalidConfig("hutchinson_samples must be ≥ 1".into()));
        }
        if self.power_iters == 0 {
            return Err(Error::InvalidConfig("power_iters must be ≥ 1".into()));
        }
        if !(self.power_tol > 0.0 && self.power_tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "power_tol must lie in (0, 1), got {}",
                self.power_tol
            )));
        }
        Ok(())
    }
}

/// Regularizer of one latent: the differentiable total plus the component values.
#[derive(Clone, Debug)]
pub struct PenaltyTerms {
    pub total: NodeId,
    pub grad_penalty: f64,
    pub frobenius_sq: Option<f64>,
    pub sigma_max: Option<f64>,
}

/// `‖∇z L‖²` as a node, together with the gradient nodes.
pub fn grad_penalty_node(g: &mut Graph, loss: NodeId, z: &[NodeId]) -> Result<(NodeId, Vec<NodeId>)> {
    let grad = g.gradient(loss, z)?;
    let penalty = g.squared_norm(&grad);
    if !g.value(penalty).is_finite() {
        return Err(Error::NumericalOverflow("gradient penalty"));
    }
    Ok((penalty, grad))
}

/// Hessian rows `∂(∇z L)_i / ∂z` as nodes.
pub fn hessian_rows(g: &mut Graph, grad: &[NodeId], z: &[NodeId]) -> Result<Vec<Vec<NodeId>>> {
    if z.len() > DENSE_HESSIAN_MAX_DIM {
        return Err(Error::DenseHessianTooLarge {
            dim: z.len(),
            max: DENSE_HESSIAN_MAX_DIM,
        });
    }
    grad.iter().map(|&gi| g.gradient(gi, z)).collect()
}

fn symmetrized(g: &Graph, rows: &[Vec<NodeId>]) -> Array2<f64> {
    let d = rows.len();
    Array2::from_shape_fn((d, d), |(i, j)| 0.5 * (g.value(rows[i][j]) + g.value(rows[j][i])))
}

/// `‖H‖_F²` as a node: exact from the Hessian rows, or Hutchinson's estimate
/// `(1/k) Σ ‖H v_k‖²` over Rademacher probes.
pub fn frobenius_sq_node(
    g: &mut Graph,
    grad: &[NodeId],
    z: &[NodeId],
    cfg: &RegConfig,
    rng: &mut SeededRng,
) -> Result<NodeId> {
    match cfg.frobenius_mode {
        FrobeniusMode::Exact => {
            let rows = hessian_rows(g, grad, z)?;
            let flat: Vec<NodeId> = rows.into_iter().flatten().collect();
            Ok(g.squared_norm(&flat))
        }
        FrobeniusMode::Hutchinson => {
            let k = cfg.hutchinson_samples;
            let mut terms = Vec::with_capacity(k);
            for _ in 0..k {
                let v: Vec<f64> = (0..z.len()).map(|_| rng.rademacher()).collect();
                let hv = hvp_nodes(g, grad, z, &v)?;
                terms.push(g.squared_norm(&hv));
            }
            Ok(g.mean(&terms))
        }
    }
}

fn start_vector(d: usize, rng: &mut SeededRng) -> Result<Vec<f64>> {
    for _ in 0..d.max(1) {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 && n.is_finite() {
            return Ok(v.into_iter().map(|x| x / n).collect());
        }
    }
    Err(Error::DegenerateStart)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Power iteration on `H²` through a matrix-vector product.
///
/// Returns `sqrt` of the converged Rayleigh quotient of `H²` (the largest
/// `|eigenvalue|` of a symmetric `H`) and the unit iterate.
pub fn power_iteration<M>(mut matvec: M, d: usize, cfg: &RegConfig, rng: &mut SeededRng) -> Result<(f64, Vec<f64>)>
where
    M: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut w = start_vector(d, rng)?;
    let mut prev: Option<f64> = None;
    for _ in 0..cfg.power_iters {
        let u = matvec(&w)?;
        let rho = u.iter().map(|x| x * x).sum::<f64>();
        if rho == 0.0 {
            return Ok((0.0, w));
        }
        let y = matvec(&u)?;
        let ny = norm(&y);
        if !ny.is_finite() || ny == 0.0 {
            return Err(Error::NumericalOverflow("power iteration"));
        }
        w = y.into_iter().map(|x| x / ny).collect();
        if let Some(p) = prev {
            if (rho - p).abs() <= cfg.power_tol * rho {
                break;
            }
        }
        prev = Some(rho);
    }
    let u = matvec(&w)?;
    let rho = u.iter().map(|x| x * x).sum::<f64>();
    Ok((rho.sqrt(), w))
}

/// Spectral norm of the Hessian at the graph's current point.
///
/// Uses the dense Hessian for `d ≤ 64` and fresh Hessian-vector products
/// otherwise.
pub fn spectral_norm_graph(
    g: &mut Graph,
    grad: &[NodeId],
    z: &[NodeId],
    cfg: &RegConfig,
    rng: &mut SeededRng,
) -> Result<(f64, Vec<f64>)> {
    let d = z.len();
    if d <= DENSE_HESSIAN_MAX_DIM {
        let rows = hessian_rows(g, grad, z)?;
        let h = symmetrized(g, &rows);
        power_iteration(|v| Ok(h.dot(&ndarray::ArrayView1::from(v)).to_vec()), d, cfg, rng)
    } else {
        power_iteration(
            |v| {
                let hv = hvp_nodes(g, grad, z, v)?;
                Ok(g.values(&hv))
            },
            d,
            cfg,
            rng,
        )
    }
}

/// Differentiable spectral term `|v*ᵀ H v*|` with the eigenvector held fixed.
pub fn spectral_node(g: &mut Graph, grad: &[NodeId], z: &[NodeId], eigvec: &[f64]) -> Result<NodeId> {
    let hv = hvp_nodes(g, grad, z, eigvec)?;
    let q = g.dot_const(&hv, eigvec);
    let sign = if g.value(q) >= 0.0 { 1.0 } else { -1.0 };
    Ok(g.scale(q, sign))
}

/// Full regularizer of one latent.
pub fn regularizer_node(
    g: &mut Graph,
    loss: NodeId,
    z: &[NodeId],
    cfg: &RegConfig,
    rng: &mut SeededRng,
) -> Result<PenaltyTerms> {
    let full = cfg.reg_mode == RegMode::Full && (cfg.beta > 0.0 || cfg.gamma > 0.0);
    if full && z.len() > FULL_MODE_MAX_DIM {
        return Err(Error::FullModeTooLarge {
            dim: z.len(),
            max: FULL_MODE_MAX_DIM,
        });
    }
    let (gp, grad) = grad_penalty_node(g, loss, z)?;
    let mut terms = vec![gp];
    let mut out = PenaltyTerms {
        total: gp,
        grad_penalty: g.value(gp),
        frobenius_sq: None,
        sigma_max: None,
    };
    if cfg.beta > 0.0 {
        let f = frobenius_sq_node(g, &grad, z, cfg, rng)?;
        let value = g.value(f);
        if !value.is_finite() {
            return Err(Error::NumericalOverflow("Hessian Frobenius term"));
        }
        out.frobenius_sq = Some(value);
        let f = if full { f } else { g.constant(value) };
        terms.push(g.scale(f, cfg.beta));
    }
    if cfg.gamma > 0.0 {
        let (sigma, eigvec) = spectral_norm_graph(g, &grad, z, cfg, rng)?;
        out.sigma_max = Some(sigma);
        let s = if full {
            spectral_node(g, &grad, z, &eigvec)?
        } else {
            g.constant(sigma)
        };
        terms.push(g.scale(s, cfg.gamma));
    }
    out.total = g.sum(&terms);
    Ok(out)
}

/// `base + λ · mean_i R(z_i)` where item `i` is `(loss_i, z_i)`.
///
/// With `λ = 0` the base node is returned unchanged and no regularizer is built.
pub fn grlsm_loss_node(
    g: &mut Graph,
    base: NodeId,
    items: &[(NodeId, Vec<NodeId>)],
    cfg: &RegConfig,
    rng: &mut SeededRng,
) -> Result<(NodeId, Vec<PenaltyTerms>)> {
    if items.is_empty() {
        return Err(Error::EmptyOmega);
    }
    if cfg.lambda == 0.0 {
        return Ok((base, Vec::new()));
    }
    let mut terms = Vec::with_capacity(items.len());
    for (loss, z) in items {
        terms.push(regularizer_node(g, *loss, z, cfg, rng)?);
    }
    let totals: Vec<NodeId> = terms.iter().map(|t| t.total).collect();
    let mean = g.mean(&totals);
    let weighted = g.scale(mean, cfg.lambda);
    Ok((g.add(base, weighted), terms))
}

fn build(loss: LatentLoss<'_>, z: &LatentVector) -> (Graph, Vec<NodeId>, NodeId) {
    let mut g = Graph::new();
    let zn: Vec<NodeId> = z.as_slice().iter().map(|&x| g.variable(x)).collect();
    let l = loss(&mut g, &zn);
    (g, zn, l)
}

pub fn grad_penalty(loss: LatentLoss<'_>, z: &LatentVector) -> Result<f64> {
    let (mut g, zn, l) = build(loss, z);
    let (p, _) = grad_penalty_node(&mut g, l, &zn)?;
    Ok(g.value(p))
}

/// Dense symmetrized Hessian, column `i` being `H e_i`.
pub fn hessian_dense(loss: LatentLoss<'_>, z: &LatentVector) -> Result<Array2<f64>> {
    if z.dim() > DENSE_HESSIAN_MAX_DIM {
        return Err(Error::DenseHessianTooLarge {
            dim: z.dim(),
            max: DENSE_HESSIAN_MAX_DIM,
        });
    }
    let (mut g, zn, l) = build(loss, z);
    let grad = g.gradient(l, &zn)?;
    let rows = hessian_rows(&mut g, &grad, &zn)?;
    Ok(symmetrized(&g, &rows))
}

pub fn hessian_frobenius_sq(loss: LatentLoss<'_>, z: &LatentVector, cfg: &RegConfig, seed: u64) -> Result<f64> {
    let (mut g, zn, l) = build(loss, z);
    let grad = g.gradient(l, &zn)?;
    let mut rng = SeededRng::new(seed, Stream::Probes, 0);
    let f = frobenius_sq_node(&mut g, &grad, &zn, cfg, &mut rng)?;
    Ok(g.value(f))
}

/// `(σ_max, unit eigenvector)` of the Hessian by power iteration on `H²`.
pub fn spectral_norm(loss: LatentLoss<'_>, z: &LatentVector, cfg: &RegConfig, seed: u64) -> Result<(f64, Vec<f64>)> {
    let (mut g, zn, l) = build(loss, z);
    let grad = g.gradient(l, &zn)?;
    let mut rng = SeededRng::new(seed, Stream::Probes, 0);
    spectral_norm_graph(&mut g, &grad, &zn, cfg, &mut rng)
}

pub fn regularizer(loss: LatentLoss<'_>, z: &LatentVector, cfg: &RegConfig, seed: u64) -> Result<f64> {
    let (mut g, zn, l) = build(loss, z);
    let mut rng = SeededRng::new(seed, Stream::Probes, 0);
    let terms = regularizer_node(&mut g, l, &zn, cfg, &mut rng)?;
    Ok(g.value(terms.total))
}

/// `base + λ · mean_i R_i(z_i)` for per-latent losses.
pub fn grlsm_loss(
    base: f64,
    latents: &[LatentVector],
    losses: &[LatentLoss<'_>],
    cfg: &RegConfig,
    seed: u64,
) -> Result<f64> {
    if latents.is_empty() {
        return Err(Error::EmptyOmega);
    }
    if losses.len() != latents.len() {
        return Err(Error::Shape {
            expected: latents.len(),
            got: losses.len(),
        });
    }
    if cfg.lambda == 0.0 {
        return Ok(base);
    }
    let mut regs = Vec::with_capacity(latents.len());
    for (i, (z, loss)) in latents.iter().zip(losses).enumerate() {
        regs.push(regularizer(*loss, z, cfg, seed.wrapping_add(i as u64))?);
    }
    Ok(combine_loss(base, &regs, cfg.lambda))
}

/// `base + λ · mean(regs)`.
pub fn combine_loss(base: f64, regs: &[f64], lambda: f64) -> f64 {
    if lambda == 0.0 {
        return base;
    }
    base + lambda * regs.iter().sum::<f64>() / regs.len() as f64
}
