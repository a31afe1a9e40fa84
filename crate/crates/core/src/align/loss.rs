//! Alignment losses and their analytic gradients through the adapter.
//!
//! `L_JSD` compares `softmax` views of the raw adapter outputs of a parallel
//! document pair. `L_NCE` is InfoNCE over cosine similarities of the
//! L2-normalized outputs: each target passage is the anchor, its English query
//! the positive, and the other queries of the batch the negatives.
//!
//! Backward pass, per piece:
//!
//! * `d sqrt(J + eps) / dJ = 1 / (2 sqrt(J + eps))`
//! * `dJ / dP_i = 0.5 ln(P_i / M_i)`
//! * softmax: `dL/dz = (P * (g - <g, P>)) / T`
//! * cosine: `dL/dy = (g - <g, u> u) / |y|` with `u = y / |y|`
//! * adapter: `dL/dW += g x^T`, `dL/db += g`

use super::adapter::{AdapterGrads, AdapterParams};
use super::divergence::{jsd, softmax_t};
use super::{AlignError, LossMode, TrainConfig};

/// Frozen base embeddings of one training example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTriplet {
    pub q_en: Vec<f64>,
    pub p_en: Vec<f64>,
    pub p_tgt: Vec<f64>,
}

impl TrainTriplet {
    pub fn dim(&self) -> usize {
        self.q_en.len()
    }

    fn check(&self, dim: usize) -> Result<(), AlignError> {
        for v in [&self.q_en, &self.p_en, &self.p_tgt] {
            if v.len() != dim {
                return Err(AlignError::DimensionMismatch {
                    left: v.len(),
                    right: dim,
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(AlignError::NonFiniteInput);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Batch mean of `sqrt(JSD(P(p_en), P(p_tgt)) + eps)`.
    pub l_jsd: f64,
    pub l_nce: f64,
    pub l_nce_psg: f64,
    /// Weighted sum of the terms selected by the loss mode.
    pub total: f64,
}

/// `sqrt(jsd(softmax(z_en), softmax(z_tgt)) + eps)`.
pub fn loss_jsd(z_en: &[f64], z_tgt: &[f64], eps: f64) -> Result<f64, AlignError> {
    Ok(jsd_term(z_en, z_tgt, eps, 1.0, false)?.0)
}

type PairGrad = Option<(Vec<f64>, Vec<f64>)>;

fn jsd_term(
    z_en: &[f64],
    z_tgt: &[f64],
    eps: f64,
    temperature: f64,
    want_grad: bool,
) -> Result<(f64, PairGrad), AlignError> {
    if z_en.len() != z_tgt.len() {
        return Err(AlignError::DimensionMismatch {
            left: z_en.len(),
            right: z_tgt.len(),
        });
    }
    let p = softmax_t(z_en, temperature)?.into_inner();
    let q = softmax_t(z_tgt, temperature)?.into_inner();
    let j = jsd(&p, &q)?;
    let loss = (j + eps).sqrt();
    if !want_grad {
        return Ok((loss, None));
    }
    let dl_dj = if loss > 0.0 { 0.5 / loss } else { 0.0 };
    let side = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let g: Vec<f64> = a
            .iter()
            .zip(b)
            .map(|(&ai, &bi)| {
                if ai > 0.0 {
                    dl_dj * 0.5 * (ai / (0.5 * (ai + bi))).ln()
                } else {
                    0.0
                }
            })
            .collect();
        softmax_backward(a, &g, temperature)
    };
    Ok((loss, Some((side(&p, &q), side(&q, &p)))))
}

fn softmax_backward(p: &[f64], g: &[f64], temperature: f64) -> Vec<f64> {
    let inner: f64 = p.iter().zip(g).map(|(pi, gi)| pi * gi).sum();
    p.iter()
        .zip(g)
        .map(|(pi, gi)| pi * (gi - inner) / temperature)
        .collect()
}

fn unit(y: &[f64]) -> Result<(Vec<f64>, f64), AlignError> {
    let n = y.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(AlignError::ZeroVector);
    }
    Ok((y.iter().map(|x| x / n).collect(), n))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// InfoNCE with anchor `i` scored against every candidate; candidate `i` is
/// the positive. Gradients (scaled by `scale`) are added to `ga` / `gc`
/// when provided.
type GradSink<'a> = Option<(f64, &'a mut [Vec<f64>], &'a mut [Vec<f64>])>;

fn contrastive(
    anchors: &[Vec<f64>],
    cands: &[Vec<f64>],
    temperature: f64,
    grads: GradSink<'_>,
) -> Result<f64, AlignError> {
    let n = anchors.len();
    let ua = anchors
        .iter()
        .map(|y| unit(y))
        .collect::<Result<Vec<_>, _>>()?;
    let uc = cands
        .iter()
        .map(|y| unit(y))
        .collect::<Result<Vec<_>, _>>()?;
    let mut du_a = vec![vec![0.0; anchors[0].len()]; n];
    let mut du_c = vec![vec![0.0; anchors[0].len()]; n];
    let mut total = 0.0;
    for i in 0..n {
        let logits: Vec<f64> = (0..n)
            .map(|j| dot(&ua[i].0, &uc[j].0) / temperature)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        total += lse - logits[i];
        if grads.is_some() {
            for j in 0..n {
                let pj = (logits[j] - lse).exp();
                let dl = (pj - if i == j { 1.0 } else { 0.0 }) / (n as f64 * temperature);
                for k in 0..du_a[i].len() {
                    du_a[i][k] += dl * uc[j].0[k];
                    du_c[j][k] += dl * ua[i].0[k];
                }
            }
        }
    }
    if let Some((scale, ga, gc)) = grads {
        for (i, (u, norm)) in ua.iter().enumerate() {
            add_normalize_backward(&mut ga[i], &du_a[i], u, *norm, scale);
        }
        for (j, (u, norm)) in uc.iter().enumerate() {
            add_normalize_backward(&mut gc[j], &du_c[j], u, *norm, scale);
        }
    }
    Ok(total / n as f64)
}

fn add_normalize_backward(out: &mut [f64], du: &[f64], u: &[f64], norm: f64, scale: f64) {
    let proj = dot(du, u);
    for k in 0..out.len() {
        out[k] += scale * (du[k] - proj * u[k]) / norm;
    }
}

struct Outputs {
    q_en: Vec<Vec<f64>>,
    p_en: Vec<Vec<f64>>,
    p_tgt: Vec<Vec<f64>>,
}

fn forward(batch: &[TrainTriplet], adapter: &AdapterParams) -> Result<Outputs, AlignError> {
    if batch.is_empty() {
        return Err(AlignError::EmptyBatch);
    }
    for t in batch {
        t.check(adapter.dim())?;
    }
    Ok(Outputs {
        q_en: batch.iter().map(|t| adapter.apply(&t.q_en)).collect(),
        p_en: batch.iter().map(|t| adapter.apply(&t.p_en)).collect(),
        p_tgt: batch.iter().map(|t| adapter.apply(&t.p_tgt)).collect(),
    })
}

/// InfoNCE anchored on adapted target passages with adapted English queries
/// as candidates; no temperature.
pub fn loss_nce(batch: &[TrainTriplet], adapter: &AdapterParams) -> Result<f64, AlignError> {
    let out = forward(batch, adapter)?;
    contrastive(&out.p_tgt, &out.q_en, 1.0, None)
}

/// Passage-level variant: positives `(p_tgt_i, p_en_i)`, negatives `p_en_j`.
pub fn loss_nce_psg(batch: &[TrainTriplet], adapter: &AdapterParams) -> Result<f64, AlignError> {
    let out = forward(batch, adapter)?;
    contrastive(&out.p_tgt, &out.p_en, 1.0, None)
}

/// Term weights `(jsd-slot, nce)` implied by the loss mode.
fn mode_weights(cfg: &TrainConfig) -> (f64, f64, f64) {
    let (wj, wn) = (cfg.loss_weights[0], cfg.loss_weights[1]);
    match cfg.loss_mode {
        LossMode::Combined => (wj, wn, 0.0),
        LossMode::JsdOnly => (wj, 0.0, 0.0),
        LossMode::NceOnly => (0.0, wn, 0.0),
        // the passage contrastive term takes the alignment slot
        LossMode::NcePsg => (0.0, wn, wj),
    }
}

fn evaluate(
    batch: &[TrainTriplet],
    adapter: &AdapterParams,
    cfg: &TrainConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<AdapterGrads>), AlignError> {
    let out = forward(batch, adapter)?;
    let n = batch.len();
    let d = adapter.dim();
    let (w_jsd, w_nce, w_psg) = mode_weights(cfg);

    let mut g_q = vec![vec![0.0; d]; n];
    let mut g_pe = vec![vec![0.0; d]; n];
    let mut g_pt = vec![vec![0.0; d]; n];

    let mut l_jsd = 0.0;
    for i in 0..n {
        let grad_here = want_grad && w_jsd != 0.0;
        let (l, g) = jsd_term(
            &out.p_en[i],
            &out.p_tgt[i],
            cfg.eps_jsd,
            cfg.softmax_temperature,
            grad_here,
        )?;
        l_jsd += l;
        if let Some((ge, gt)) = g {
            let s = w_jsd / n as f64;
            for k in 0..d {
                g_pe[i][k] += s * ge[k];
                g_pt[i][k] += s * gt[k];
            }
        }
    }
    l_jsd /= n as f64;

    let tau = cfg.nce_temperature;
    let grad_nce = want_grad && w_nce != 0.0;
    let l_nce = if cfg.nce_symmetric {
        let half = 0.5 * w_nce;
        let forward_dir = contrastive(
            &out.p_tgt,
            &out.q_en,
            tau,
            grad_nce.then_some((half, g_pt.as_mut_slice(), g_q.as_mut_slice())),
        )?;
        let backward_dir = contrastive(
            &out.q_en,
            &out.p_tgt,
            tau,
            grad_nce.then_some((half, g_q.as_mut_slice(), g_pt.as_mut_slice())),
        )?;
        0.5 * (forward_dir + backward_dir)
    } else {
        contrastive(
            &out.p_tgt,
            &out.q_en,
            tau,
            grad_nce.then_some((w_nce, g_pt.as_mut_slice(), g_q.as_mut_slice())),
        )?
    };

    let grad_psg = want_grad && w_psg != 0.0;
    let l_nce_psg = contrastive(
        &out.p_tgt,
        &out.p_en,
        tau,
        grad_psg.then_some((w_psg, g_pt.as_mut_slice(), g_pe.as_mut_slice())),
    )?;

    let total = w_jsd * l_jsd + w_nce * l_nce + w_psg * l_nce_psg;
    let breakdown = LossBreakdown {
        l_jsd,
        l_nce,
        l_nce_psg,
        total,
    };
    if !want_grad {
        return Ok((breakdown, None));
    }
    let mut grads = AdapterGrads::zeros(d);
    for (i, t) in batch.iter().enumerate() {
        grads.add_outer(&g_q[i], &t.q_en);
        grads.add_outer(&g_pe[i], &t.p_en);
        grads.add_outer(&g_pt[i], &t.p_tgt);
    }
    Ok((breakdown, Some(grads)))
}

pub fn loss_combined(
    batch: &[TrainTriplet],
    adapter: &AdapterParams,
    cfg: &TrainConfig,
) -> Result<LossBreakdown, AlignError> {
    Ok(evaluate(batch, adapter, cfg, false)?.0)
}

/// Loss breakdown and the exact gradient of `total` with respect to `W`, `b`.
pub fn grad_adapter(
    batch: &[TrainTriplet],
    adapter: &AdapterParams,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, AdapterGrads), AlignError> {
    let (b, g) = evaluate(batch, adapter, cfg, true)?;
    Ok((b, g.expect("gradient requested")))
}
