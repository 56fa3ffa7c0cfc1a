//! Forward pass, the four-term objective and its hand-written gradient.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::{PrototypeModel, TrainData};
use crate::error::{Error, Result};
use crate::walk::encoder::{backward_batch, forward_batch};
use crate::walk::WalkBundle;

/// Log-ratio similarity between a latent vector and a prototype.
pub fn similarity(h: ArrayView1<f64>, p: ArrayView1<f64>, eps: f64) -> f64 {
    let d: f64 = h.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    ((d + 1.0) / (d + eps)).ln()
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    out
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub latent: Array2<f64>,
    /// n × 2q: spatial prototypes then OD prototypes.
    pub sims: Array2<f64>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    /// Per view, per layer: (pre-activation, activation).
    layers: [Vec<(Array2<f64>, Array2<f64>)>; 2],
    concat: Array2<f64>,
    /// Per view squared distances, n × q.
    dist: [Array2<f64>; 2],
}

pub fn forward(model: &PrototypeModel, data: &TrainData) -> Result<Forward> {
    let enc = &model.encoder;
    if enc.layers[0].is_empty() || enc.layers[0].len() != enc.layers[1].len() {
        return Err(Error::DimensionMismatch(
            "both encoders need the same positive layer count".into(),
        ));
    }
    if enc.layers[0][0].nrows() != data.x.ncols() || enc.layers[1][0].nrows() != data.x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "encoder expects {} input features, data has {}",
            enc.layers[0][0].nrows(),
            data.x.ncols()
        )));
    }
    let mut layers: [Vec<(Array2<f64>, Array2<f64>)>; 2] = [Vec::new(), Vec::new()];
    for v in 0..2 {
        for (l, w) in enc.layers[v].iter().enumerate() {
            let z = if l == 0 {
                data.ax[v].dot(w)
            } else {
                data.a_hat[v].mul_dense(&layers[v][l - 1].1.dot(w))
            };
            let h = z.mapv(|x| x.max(0.0));
            layers[v].push((z, h));
        }
    }
    let parts: Vec<_> = layers
        .iter()
        .flat_map(|ls| ls.iter().map(|(_, h)| h.view()))
        .collect();
    let concat =
        concatenate(Axis(1), &parts).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    if concat.ncols() != enc.fuse_w.nrows() {
        return Err(Error::DimensionMismatch(
            "fusion map does not match concatenated layer widths".into(),
        ));
    }
    let latent = concat.dot(&enc.fuse_w) + &enc.fuse_b;
    let eps = model.config.epsilon;
    let n = latent.nrows();
    let q = model.prototype_count();
    let mut sims = Array2::zeros((n, 2 * q));
    let mut dist = [Array2::zeros((n, q)), Array2::zeros((n, q))];
    for v in 0..2 {
        let p = &model.prototypes[v].p;
        for i in 0..n {
            for k in 0..q {
                let d = sq_dist(latent.row(i), p.row(k));
                dist[v][[i, k]] = d;
                sims[[i, v * q + k]] = ((d + 1.0) / (d + eps)).ln();
            }
        }
    }
    let logits = sims.dot(&model.fc);
    let probs = softmax_rows(&logits);
    Ok(Forward {
        latent,
        sims,
        logits,
        probs,
        layers,
        concat,
        dist,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub clst: f64,
    pub sprt: f64,
    pub enc: f64,
    pub total: f64,
}

/// Candidate bundles for the encoding loss, aligned with `nodes`.
pub(crate) struct Candidates<'a> {
    pub nodes: &'a [usize],
    pub bundles: [&'a [WalkBundle]; 2],
}

/// Nearest candidate per prototype among nodes of the prototype's class.
pub(crate) fn nearest_candidates(
    p: &Array2<f64>,
    class_of: &[usize],
    cand_latent: &Array2<f64>,
    cand_nodes: &[usize],
    labels: &[usize],
) -> Result<Vec<(usize, f64)>> {
    (0..p.nrows())
        .map(|k| {
            let mut best: Option<(usize, f64)> = None;
            for (j, &node) in cand_nodes.iter().enumerate() {
                if labels[node] != class_of[k] {
                    continue;
                }
                let d = sq_dist(cand_latent.row(j), p.row(k));
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((j, d));
                }
            }
            best.ok_or_else(|| {
                crate::error::invalid(format!("class {} has no candidate nodes", class_of[k]))
            })
        })
        .collect()
}

/// Objective over the training nodes, and optionally its gradient.
pub(crate) fn objective(
    model: &PrototypeModel,
    data: &TrainData,
    cand: &Candidates<'_>,
    want_grad: bool,
) -> Result<(LossBreakdown, Forward, Option<PrototypeModel>)> {
    let cfg = &model.config;
    let fwd = forward(model, data)?;
    let train = &data.split.train;
    if train.is_empty() {
        return Err(crate::error::invalid("no training nodes"));
    }
    if !fwd
        .latent
        .iter()
        .chain(fwd.logits.iter())
        .all(|v| v.is_finite())
    {
        let nan = f64::NAN;
        return Ok((
            LossBreakdown {
                ce: nan,
                clst: nan,
                sprt: nan,
                enc: nan,
                total: nan,
            },
            fwd,
            None,
        ));
    }
    let m = train.len() as f64;
    let q = model.prototype_count();
    let views = 2.0;
    let mut grad = want_grad.then(|| model.zeros_like());

    let mut ce = 0.0;
    for &i in train {
        let row = fwd.logits.row(i);
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        ce -= row[data.labels[i]] - lse;
    }
    ce /= m;

    // Per view: argmin same-class and other-class prototype per train node.
    let mut clst = 0.0;
    let mut sprt = 0.0;
    let mut picks: [Vec<(usize, usize)>; 2] = [Vec::new(), Vec::new()];
    for v in 0..2 {
        let class_of = &model.prototypes[v].class_of;
        for &i in train {
            let y = data.labels[i];
            let (mut same, mut other) = ((usize::MAX, f64::INFINITY), (usize::MAX, f64::INFINITY));
            for k in 0..q {
                let d = fwd.dist[v][[i, k]];
                let slot = if class_of[k] == y {
                    &mut same
                } else {
                    &mut other
                };
                if d < slot.1 {
                    *slot = (k, d);
                }
            }
            if same.0 == usize::MAX || other.0 == usize::MAX {
                return Err(crate::error::invalid("every class needs prototypes"));
            }
            clst += same.1;
            sprt -= other.1;
            picks[v].push((same.0, other.0));
        }
    }
    clst /= m * views;
    sprt /= m * views;

    let mut enc = 0.0;
    let mut enc_terms: [Vec<(usize, Array1<f64>)>; 2] = [Vec::new(), Vec::new()];
    let mut xw: [Option<Array2<f64>>; 2] = [None, None];
    for v in 0..2 {
        let refs: Vec<&WalkBundle> = cand.bundles[v].iter().collect();
        let w = &model.local[v];
        let proj = data.x.dot(&w.w_in);
        let (cl, _) = forward_batch(w, proj.view(), &refs, false)?;
        let near = nearest_candidates(
            &model.prototypes[v].p,
            &model.prototypes[v].class_of,
            &cl,
            cand.nodes,
            &data.labels,
        )?;
        for (k, &(j, d)) in near.iter().enumerate() {
            enc += d;
            enc_terms[v].push((j, &cl.row(j) - &model.prototypes[v].p.row(k)));
        }
        xw[v] = Some(proj);
    }
    enc /= q as f64 * views;
    let total = ce + cfg.lambda1 * clst + cfg.lambda2 * sprt + cfg.lambda3 * enc;
    let losses = LossBreakdown {
        ce,
        clst,
        sprt,
        enc,
        total,
    };
    if !total.is_finite() {
        return Ok((losses, fwd, None));
    }
    let Some(mut g) = grad.take() else {
        return Ok((losses, fwd, None));
    };

    let n = data.node_count();
    let mut dlogits = Array2::zeros((n, model.class_count));
    for &i in train {
        let mut row = dlogits.row_mut(i);
        row.assign(&fwd.probs.row(i));
        row[data.labels[i]] -= 1.0;
        row /= m;
    }
    g.fc = fwd.sims.t().dot(&dlogits);
    let dsims = dlogits.dot(&model.fc.t());
    let eps = cfg.epsilon;
    let mut dlat = Array2::<f64>::zeros(fwd.latent.dim());
    for v in 0..2 {
        let mut dd = Array2::<f64>::zeros((n, q));
        for &i in train {
            for k in 0..q {
                let d = fwd.dist[v][[i, k]];
                dd[[i, k]] = dsims[[i, v * q + k]] * (1.0 / (d + 1.0) - 1.0 / (d + eps));
            }
        }
        for (t, &i) in train.iter().enumerate() {
            let (same, other) = picks[v][t];
            dd[[i, same]] += cfg.lambda1 / (m * views);
            dd[[i, other]] -= cfg.lambda2 / (m * views);
        }
        let p = &model.prototypes[v].p;
        let gp = &mut g.prototypes[v].p;
        for &i in train {
            for k in 0..q {
                let c = 2.0 * dd[[i, k]];
                if c == 0.0 {
                    continue;
                }
                let diff = &fwd.latent.row(i) - &p.row(k);
                dlat.row_mut(i).scaled_add(c, &diff);
                gp.row_mut(k).scaled_add(-c, &diff);
            }
        }
        if let Some(proj) = &xw[v] {
            let scale = 2.0 * cfg.lambda3 / (q as f64 * views);
            let mut winners: Vec<&WalkBundle> = Vec::new();
            let mut d_out = Array2::zeros((q, cfg.latent_dim));
            for (k, (j, diff)) in enc_terms[v].iter().enumerate() {
                gp.row_mut(k).scaled_add(-scale, diff);
                d_out.row_mut(k).scaled_add(scale, diff);
                winners.push(&cand.bundles[v][*j]);
            }
            if cfg.lambda3 > 0.0 {
                let w = &model.local[v];
                let (_, trace) = forward_batch(w, proj.view(), &winners, true)?;
                let mut d_xw = Array2::zeros(proj.dim());
                backward_batch(
                    w,
                    &trace.expect("trace kept"),
                    d_out.view(),
                    &mut g.local[v],
                    &mut d_xw,
                );
                g.local[v].w_in = data.x.t().dot(&d_xw);
            }
        }
    }

    let enc_w = &model.encoder;
    g.encoder.fuse_w = fwd.concat.t().dot(&dlat);
    g.encoder.fuse_b = dlat.sum_axis(Axis(0));
    let dconcat = dlat.dot(&enc_w.fuse_w.t());
    let hidden = enc_w.layers[0][0].ncols();
    let nl = enc_w.layers[0].len();
    for v in 0..2 {
        let mut carry: Option<Array2<f64>> = None;
        for l in (0..nl).rev() {
            let off = (v * nl + l) * hidden;
            let mut dh = dconcat.slice(s![.., off..off + hidden]).to_owned();
            if let Some(c) = carry.take() {
                dh += &c;
            }
            let (z, _) = &fwd.layers[v][l];
            ndarray::Zip::from(&mut dh).and(z).for_each(|d, &zz| {
                if zz <= 0.0 {
                    *d = 0.0;
                }
            });
            if l == 0 {
                g.encoder.layers[v][0] = data.ax[v].t().dot(&dh);
            } else {
                let back = data.a_hat[v].mul_dense(&dh);
                g.encoder.layers[v][l] = fwd.layers[v][l - 1].1.t().dot(&back);
                carry = Some(back.dot(&enc_w.layers[v][l].t()));
            }
        }
    }
    Ok((losses, fwd, Some(g)))
}

/// Objective over the training nodes with the encoding loss taken over
/// `bundles` (one per training node and view), plus its gradient in the
/// shape of the model.
pub fn loss_and_gradient(
    model: &PrototypeModel,
    data: &TrainData,
    bundles: [&[WalkBundle]; 2],
) -> Result<(LossBreakdown, PrototypeModel)> {
    let cand = Candidates {
        nodes: &data.split.train,
        bundles,
    };
    let (losses, _, grad) = objective(model, data, &cand, true)?;
    let grad = grad.ok_or_else(|| Error::Divergence {
        epoch: 0,
        msg: "non-finite loss".into(),
    })?;
    Ok((losses, grad))
}

pub fn loss(
    model: &PrototypeModel,
    data: &TrainData,
    bundles: [&[WalkBundle]; 2],
) -> Result<LossBreakdown> {
    let cand = Candidates {
        nodes: &data.split.train,
        bundles,
    };
    Ok(objective(model, data, &cand, false)?.0)
}
