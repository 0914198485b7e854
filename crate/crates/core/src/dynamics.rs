//! Latent gradient flow `dz/dt = -∇z L - λ ∇z R(z)` and the energy functional
//! `E = L_grlsm + δ ∫ ‖d²z/dt²‖² dt` along a trajectory.
//!
//! The flow is integrated with explicit Euler. `∇z R` uses the first-order
//! penalty `‖∇z L‖²` differentiated through the graph; when the regularizer is
//! in full mode the β/γ curvature terms add a central-difference gradient.

use crate::autodiff::{finite_diff_gradient, Graph, NodeId};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::regularizer::{self, LatentLoss, LatentVector, RegConfig, RegMode};

/// Growth factor of `‖z‖` over the start point that counts as divergence.
pub const DIVERGENCE_GROWTH: f64 = 1e6;

const CURVATURE_FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dt: f64,
    points: Vec<(f64, LatentVector)>,
}

impl Trajectory {
    /// Points are placed at `t = 0, dt, 2·dt, …`.
    pub fn new(dt: f64, zs: Vec<LatentVector>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
        }
        if let Some(first) = zs.first() {
            if zs.iter().any(|z| z.dim() != first.dim()) {
                return Err(Error::InvalidLatent("trajectory points differ in dimension".into()));
            }
        }
        let points = zs.into_iter().enumerate().map(|(k, z)| (k as f64 * dt, z)).collect();
        Ok(Self { dt, points })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(f64, LatentVector)] {
        &self.points
    }

    pub fn last(&self) -> Option<&LatentVector> {
        self.points.last().map(|(_, z)| z)
    }

    /// Same points in reverse order, re-timed from 0.
    pub fn reversed(&self) -> Self {
        let zs = self.points.iter().rev().map(|(_, z)| z.clone()).collect();
        Self::new(self.dt, zs).expect("validated on construction")
    }

    /// Trajectory starting at point `k`, re-timed from 0.
    pub fn suffix(&self, k: usize) -> Self {
        let zs = self.points[k..].iter().map(|(_, z)| z.clone()).collect();
        Self::new(self.dt, zs).expect("validated on construction")
    }

    /// CSV with header `t,z0,…,z{d-1}` and 17-significant-digit floats.
    pub fn to_csv(&self) -> String {
        let d = self.points.first().map_or(0, |(_, z)| z.dim());
        let mut out = String::from("t");
        for i in 0..d {
            out.push_str(&format!(",z{i}"));
        }
        out.push('\n');
        for (t, z) in &self.points {
            out.push_str(&fmt_f64(*t));
            for v in z.as_slice() {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// `∇z L + λ ∇z R(z)` at `z`.
pub fn flow_field(z: &[f64], loss: LatentLoss<'_>, cfg: &RegConfig) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let zn: Vec<NodeId> = z.iter().map(|&x| g.variable(x)).collect();
    let l = loss(&mut g, &zn);
    let grad = g.gradient(l, &zn)?;
    let mut field = g.values(&grad);
    if cfg.lambda != 0.0 {
        let penalty = g.squared_norm(&grad);
        let dpen = g.gradient(penalty, &zn)?;
        for (f, d) in field.iter_mut().zip(g.values(&dpen)) {
            *f += cfg.lambda * d;
        }
        if cfg.reg_mode == RegMode::Full && (cfg.beta > 0.0 || cfg.gamma > 0.0) {
            let curvature = finite_diff_gradient(|p| curvature_terms(loss, p, cfg), z, CURVATURE_FD_STEP)?;
            for (f, c) in field.iter_mut().zip(curvature) {
                *f += cfg.lambda * c;
            }
        }
    }
    Ok(field)
}

fn curvature_terms(loss: LatentLoss<'_>, z: &[f64], cfg: &RegConfig) -> Result<f64> {
    let zv = LatentVector::new(z.to_vec())?;
    let mut total = 0.0;
    if cfg.beta > 0.0 {
        total += cfg.beta * regularizer::hessian_frobenius_sq(loss, &zv, cfg, 0)?;
    }
    if cfg.gamma > 0.0 {
        total += cfg.gamma * regularizer::spectral_norm(loss, &zv, cfg, 0)?.0;
    }
    Ok(total)
}

fn euler(z: &LatentVector, loss: LatentLoss<'_>, cfg: &RegConfig, dt: f64, step: usize) -> Result<LatentVector> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
    }
    let field = flow_field(z.as_slice(), loss, cfg)?;
    let next: Vec<f64> = z.as_slice().iter().zip(&field).map(|(x, f)| x - dt * f).collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::FlowDivergence { step });
    }
    LatentVector::new(next)
}

/// One explicit Euler step `z - dt·(∇z L + λ ∇z R)`.
pub fn flow_step(z: &LatentVector, loss: LatentLoss<'_>, cfg: &RegConfig, dt: f64) -> Result<LatentVector> {
    euler(z, loss, cfg, dt, 0)
}

/// Applies `steps` Euler steps; the trajectory holds `steps + 1` points.
pub fn integrate_flow(
    z0: &LatentVector,
    loss: LatentLoss<'_>,
    cfg: &RegConfig,
    dt: f64,
    steps: usize,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidConfig("steps must be ≥ 1".into()));
    }
    let limit = DIVERGENCE_GROWTH * z0.norm().max(1.0);
    let mut zs = Vec::with_capacity(steps + 1);
    zs.push(z0.clone());
    for step in 1..=steps {
        let next = euler(zs.last().expect("non-empty"), loss, cfg, dt, step)?;
        if next.norm() > limit {
            return Err(Error::FlowDivergence { step });
        }
        zs.push(next);
    }
    Trajectory::new(dt, zs)
}

/// `Σ_k ‖(z_{k+1} - 2 z_k + z_{k-1}) / dt²‖² · dt` over interior points.
pub fn acceleration_penalty(traj: &Trajectory) -> Result<f64> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::TrajectoryTooShort(n));
    }
    let dt = traj.dt;
    let inv = 1.0 / (dt * dt);
    let mut total = 0.0;
    for k in 1..n - 1 {
        let prev = traj.points[k - 1].1.as_slice();
        let cur = traj.points[k].1.as_slice();
        let next = traj.points[k + 1].1.as_slice();
        let sq: f64 = (0..cur.len())
            .map(|i| {
                let a = (next[i] - 2.0 * cur[i] + prev[i]) * inv;
                a * a
            })
            .sum();
        total += sq * dt;
    }
    Ok(total)
}

/// `loss_value + δ · acceleration_penalty(traj)`.
pub fn energy(traj: &Trajectory, grlsm_loss_value: f64, cfg: &RegConfig) -> Result<f64> {
    let penalty = acceleration_penalty(traj)?;
    if cfg.delta == 0.0 {
        return Ok(grlsm_loss_value);
    }
    Ok(grlsm_loss_value + cfg.delta * penalty)
}

/// `½‖z‖²`, the unit quadratic bowl.
pub fn unit_bowl(g: &mut Graph, z: &[NodeId]) -> NodeId {
    let s = g.squared_norm(z);
    g.scale(s, 0.5)
}
