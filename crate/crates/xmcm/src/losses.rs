//! Training objectives: softmax, CosFace, ArcFace, the dual-branch lifting
//! loss against the shared prototype, two similarity-loss variants, and the
//! combined objective. Every function returns the loss value together with
//! exact gradients for all of its differentiable arguments.
//!
//! All cross-entropy denominators go through `log_sum_exp`, so large scale
//! factors cannot overflow.

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, log_sum_exp, Matrix, Vector};

/// Which per-branch classification loss lifts features onto the prototype.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftKind {
    /// Plain cross-entropy on raw dot-product logits (no scale, no margin).
    Softmax,
    /// Cross-entropy on scaled cosines with an additive cosine margin on the
    /// target class: target logit s*(cos(theta_y) - mu).
    CosFace,
    /// Cross-entropy on scaled cosines with an additive angular margin:
    /// target logit s*cos(theta_y + mu).
    ArcFace,
}

/// Which modality-to-modality similarity term is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    /// max(tau, cos(v, m_neg)) - cos(v, m_pos)
    Difference,
    /// (1 - cos(v, m_pos)) + max(0, cos(v, m_neg) - tau)
    Piecewise,
    /// Term disabled.
    Off,
}

/// All scalars of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Logit scale on the hyper-sphere.
    pub s: f64,
    /// Margin of the lifting loss (cosine units for CosFace, radians for
    /// ArcFace).
    pub mu_lift: f64,
    /// Margin of the similarity loss.
    pub tau: f64,
    /// Weight of the music branch inside the lifting loss.
    pub alpha: f64,
    /// Weight of the similarity loss in the combined objective.
    pub beta: f64,
    pub lift_kind: LiftKind,
    pub sim_kind: SimilarityKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            s: 30.0,
            mu_lift: 0.2,
            tau: 0.2,
            alpha: 0.38,
            beta: 2.0,
            lift_kind: LiftKind::CosFace,
            sim_kind: SimilarityKind::Difference,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::Config(format!("scale s must be positive, got {}", self.s)));
        }
        if self.mu_lift < 0.0 {
            return Err(Error::Config(format!("margin mu must be >= 0, got {}", self.mu_lift)));
        }
        match self.lift_kind {
            LiftKind::CosFace if self.mu_lift >= 1.0 => {
                return Err(Error::Config(format!(
                    "CosFace margin must satisfy 0 <= mu < 1, got {}",
                    self.mu_lift
                )));
            }
            LiftKind::ArcFace if self.mu_lift >= std::f64::consts::FRAC_PI_2 => {
                return Err(Error::Config(format!(
                    "ArcFace margin must satisfy 0 <= mu < pi/2, got {}",
                    self.mu_lift
                )));
            }
            _ => {}
        }
        if !(-1.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [-1, 1], got {}", self.tau)));
        }
        if self.alpha < 0.0 {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.beta < 0.0 {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Value and gradients of a single-feature classification loss.
#[derive(Debug, Clone)]
pub struct ClassLoss {
    pub value: f64,
    pub d_feature: Vector,
    pub d_prototype: Matrix,
}

/// Value and gradients of the dual-branch lifting loss.
#[derive(Debug, Clone)]
pub struct LiftingLoss {
    pub value: f64,
    pub d_video: Vector,
    pub d_music: Vector,
    pub d_prototype: Matrix,
}

/// Value and gradients of the similarity loss (no prototype involvement).
#[derive(Debug, Clone)]
pub struct SimilarityLoss {
    pub value: f64,
    pub d_video: Vector,
    pub d_music_pos: Vector,
    pub d_music_neg: Vector,
}

/// Value and gradients of the combined objective.
#[derive(Debug, Clone)]
pub struct TotalLoss {
    pub value: f64,
    pub d_video: Vector,
    pub d_music_pos: Vector,
    pub d_music_neg: Vector,
    pub d_prototype: Matrix,
}

fn check_class_args(x: &Vector, y: usize, w: &Matrix) -> Result<()> {
    if y >= w.rows() {
        return Err(Error::IndexOutOfRange(format!(
            "class {y} not in [0, {})",
            w.rows()
        )));
    }
    if x.dim() != w.cols() {
        return Err(Error::DimMismatch(format!(
            "feature dim {} vs prototype cols {}",
            x.dim(),
            w.cols()
        )));
    }
    Ok(())
}

/// Cross-entropy over raw dot-product logits W_j . x.
pub fn softmax_loss(x: &Vector, y: usize, w: &Matrix) -> Result<ClassLoss> {
    check_class_args(x, y, w)?;
    let n = w.rows();
    let mut logits = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = 0.0;
        for (wv, xv) in w.row(j).iter().zip(x.iter()) {
            acc += wv * xv;
        }
        logits.push(acc);
    }
    let lse = log_sum_exp(&logits)?;
    let value = lse - logits[y];

    let mut d_feature = Vector::zeros(x.dim());
    let mut d_prototype = Matrix::zeros(n, x.dim());
    for (j, &logit) in logits.iter().enumerate() {
        let g = (logit - lse).exp() - if j == y { 1.0 } else { 0.0 };
        for (df, wv) in d_feature.as_mut_slice().iter_mut().zip(w.row(j)) {
            *df += g * wv;
        }
        for (dw, xv) in d_prototype.row_mut(j).iter_mut().zip(x.iter()) {
            *dw = g * xv;
        }
    }
    Ok(ClassLoss {
        value,
        d_feature,
        d_prototype,
    })
}

enum MarginKind {
    Cos,
    Arc,
}

/// Shared core of the two angular-margin losses.
///
/// Logits are s*cos(theta_j) for non-target classes; the target logit is
/// s*(cos(theta_y) - mu) for CosFace and s*cos(theta_y + mu) for ArcFace,
/// the latter expanded as s*(c*cos(mu) - sin(theta_y)*sin(mu)) with c
/// clamped into [-1+1e-12, 1-1e-12] before the sine.
#[allow(clippy::needless_range_loop)]
fn margin_loss(
    x: &Vector,
    y: usize,
    w: &Matrix,
    s: f64,
    mu: f64,
    kind: MarginKind,
) -> Result<ClassLoss> {
    check_class_args(x, y, w)?;
    let n = w.rows();
    let nx = l2_norm(x);
    if nx == 0.0 {
        return Err(Error::Degenerate("zero-norm feature".into()));
    }
    let mut norms = Vec::with_capacity(n);
    let mut cos = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = 0.0;
        let mut nw = 0.0;
        for (wv, xv) in w.row(j).iter().zip(x.iter()) {
            acc += wv * xv;
            nw += wv * wv;
        }
        let nw = nw.sqrt();
        if nw == 0.0 {
            return Err(Error::Degenerate(format!("zero-norm prototype row {j}")));
        }
        norms.push(nw);
        cos.push((acc / (nw * nx)).clamp(-1.0, 1.0));
    }

    let mut logits: Vec<f64> = cos.iter().map(|c| s * c).collect();
    // d(target logit)/d(cos_y)
    let target_chain;
    match kind {
        MarginKind::Cos => {
            logits[y] = s * (cos[y] - mu);
            target_chain = s;
        }
        MarginKind::Arc => {
            let c = cos[y].clamp(-1.0 + 1e-12, 1.0 - 1e-12);
            let sin = (1.0 - c * c).sqrt();
            logits[y] = s * (c * mu.cos() - sin * mu.sin());
            target_chain = s * (mu.cos() + mu.sin() * c / sin);
        }
    }

    let lse = log_sum_exp(&logits)?;
    let value = lse - logits[y];

    let mut d_feature = Vector::zeros(x.dim());
    let mut d_prototype = Matrix::zeros(n, x.dim());
    for j in 0..n {
        let g = (logits[j] - lse).exp() - if j == y { 1.0 } else { 0.0 };
        let chain = if j == y { target_chain } else { s };
        let dcos = g * chain;
        // d cos_j / dx = w_j/(|w_j||x|) - cos_j * x/|x|^2
        let inv = dcos / (norms[j] * nx);
        for (df, wv) in d_feature.as_mut_slice().iter_mut().zip(w.row(j)) {
            *df += inv * wv;
        }
        let back = dcos * cos[j] / (nx * nx);
        for (df, xv) in d_feature.as_mut_slice().iter_mut().zip(x.iter()) {
            *df -= back * xv;
        }
        // d cos_j / dw_j = x/(|w_j||x|) - cos_j * w_j/|w_j|^2
        let wrow = dcos * cos[j] / (norms[j] * norms[j]);
        let winv = dcos / (norms[j] * nx);
        for ((dw, xv), wv) in d_prototype
            .row_mut(j)
            .iter_mut()
            .zip(x.iter())
            .zip(w.row(j).iter())
        {
            *dw = winv * xv - wrow * wv;
        }
    }
    Ok(ClassLoss {
        value,
        d_feature,
        d_prototype,
    })
}

/// CosFace: additive cosine margin on the target class.
pub fn cosface_loss(x: &Vector, y: usize, w: &Matrix, s: f64, mu: f64) -> Result<ClassLoss> {
    margin_loss(x, y, w, s, mu, MarginKind::Cos)
}

/// ArcFace: additive angular margin on the target class.
pub fn arcface_loss(x: &Vector, y: usize, w: &Matrix, s: f64, mu: f64) -> Result<ClassLoss> {
    margin_loss(x, y, w, s, mu, MarginKind::Arc)
}

fn class_loss_by_kind(x: &Vector, y: usize, w: &Matrix, cfg: &LossConfig) -> Result<ClassLoss> {
    match cfg.lift_kind {
        LiftKind::Softmax => softmax_loss(x, y, w),
        LiftKind::CosFace => cosface_loss(x, y, w, cfg.s, cfg.mu_lift),
        LiftKind::ArcFace => arcface_loss(x, y, w, cfg.s, cfg.mu_lift),
    }
}

/// Both modality branches against the shared prototype:
/// L(video) + alpha * L(music), with the prototype gradient summed across
/// branches.
pub fn lifting_loss(
    v_emb: &Vector,
    m_emb: &Vector,
    y: usize,
    w: &Matrix,
    cfg: &LossConfig,
) -> Result<LiftingLoss> {
    if v_emb.dim() != m_emb.dim() {
        return Err(Error::DimMismatch(format!(
            "video dim {} vs music dim {}",
            v_emb.dim(),
            m_emb.dim()
        )));
    }
    let video = class_loss_by_kind(v_emb, y, w, cfg)?;
    let music = class_loss_by_kind(m_emb, y, w, cfg)?;
    let mut d_prototype = video.d_prototype;
    d_prototype.add_scaled(&music.d_prototype, cfg.alpha);
    Ok(LiftingLoss {
        value: video.value + cfg.alpha * music.value,
        d_video: video.d_feature,
        d_music: music.d_feature.scaled(cfg.alpha),
        d_prototype,
    })
}

/// Gradient of cos(a, b) with respect to a: b/(|a||b|) - cos * a/|a|^2.
fn cos_grad(a: &Vector, b: &Vector, cos: f64) -> Vector {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    let mut g = b.scaled(1.0 / (na * nb));
    g.add_scaled(a, -cos / (na * na));
    g
}

/// Modality-to-modality term pulling the positive music toward the video
/// and hinging the sampled negative away.
///
/// At the hinge (cos(v, m_neg) == tau exactly) the gradient follows the
/// constant branch, so the negative receives no gradient.
pub fn similarity_loss(
    v_emb: &Vector,
    m_pos: &Vector,
    m_neg: &Vector,
    tau: f64,
    kind: SimilarityKind,
) -> Result<SimilarityLoss> {
    let dim = v_emb.dim();
    if kind == SimilarityKind::Off {
        return Ok(SimilarityLoss {
            value: 0.0,
            d_video: Vector::zeros(dim),
            d_music_pos: Vector::zeros(dim),
            d_music_neg: Vector::zeros(dim),
        });
    }
    let cp = crate::numerics::cosine(v_emb, m_pos)?;
    let cn = crate::numerics::cosine(v_emb, m_neg)?;
    let active = cn > tau;
    let value = match kind {
        SimilarityKind::Difference => cn.max(tau) - cp,
        SimilarityKind::Piecewise => (1.0 - cp) + (cn - tau).max(0.0),
        SimilarityKind::Off => unreachable!(),
    };

    // dL/dcp = -1 in both variants; dL/dcn = 1 when the hinge is active.
    let mut d_video = cos_grad(v_emb, m_pos, cp).scaled(-1.0);
    let d_music_pos = cos_grad(m_pos, v_emb, cp).scaled(-1.0);
    let d_music_neg = if active {
        d_video.add_scaled(&cos_grad(v_emb, m_neg, cn), 1.0);
        cos_grad(m_neg, v_emb, cn)
    } else {
        Vector::zeros(dim)
    };
    Ok(SimilarityLoss {
        value,
        d_video,
        d_music_pos,
        d_music_neg,
    })
}

/// Combined objective: lifting + beta * similarity. The prototype gradient
/// comes from the lifting term only. With beta == 0 or the similarity kind
/// set to Off, the similarity term is skipped entirely (its inputs are not
/// touched).
pub fn total_loss(
    v_emb: &Vector,
    m_pos: &Vector,
    m_neg: &Vector,
    y: usize,
    w: &Matrix,
    cfg: &LossConfig,
) -> Result<TotalLoss> {
    let lift = lifting_loss(v_emb, m_pos, y, w, cfg)?;
    if cfg.beta == 0.0 || cfg.sim_kind == SimilarityKind::Off {
        return Ok(TotalLoss {
            value: lift.value,
            d_video: lift.d_video,
            d_music_pos: lift.d_music,
            d_music_neg: Vector::zeros(v_emb.dim()),
            d_prototype: lift.d_prototype,
        });
    }
    let sim = similarity_loss(v_emb, m_pos, m_neg, cfg.tau, cfg.sim_kind)?;
    let mut d_video = lift.d_video;
    d_video.add_scaled(&sim.d_video, cfg.beta);
    let mut d_music_pos = lift.d_music;
    d_music_pos.add_scaled(&sim.d_music_pos, cfg.beta);
    Ok(TotalLoss {
        value: lift.value + cfg.beta * sim.value,
        d_video,
        d_music_pos,
        d_music_neg: sim.d_music_neg.scaled(cfg.beta),
        d_prototype: lift.d_prototype,
    })
}
