use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::objective::{nearest_candidates, objective, Candidates};
use super::{forward, Optimizer, PrototypeModel, Split, TrainConfig, TrainData};
use rand::seq::IndexedRandom;

use crate::error::{invalid, Error, Result};
use crate::graph::{GraphView, NodeTable, UrbanGraph};
use crate::rng::RngState;
use crate::walk::encoder::forward_batch;
use crate::walk::{walks_for_roots, WalkBundle};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub ce: f64,
    pub clst: f64,
    pub sprt: f64,
    pub enc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PrototypeModel,
    pub log: Vec<LogRow>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// The projection that produced the returned prototypes.
    pub projection: Vec<ProjectionRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub view: GraphView,
    pub prototype: usize,
    pub class: usize,
    pub root: usize,
    pub distance: f64,
    pub bundle: WalkBundle,
}

impl TrainData {
    /// Data for `cfg`: features and labels from the table, split drawn from
    /// the config seed.
    pub fn from_table(graph: &UrbanGraph, table: &NodeTable, cfg: &TrainConfig) -> Result<Self> {
        let split = Split::stratified(
            &table.seg_label,
            cfg.train_frac,
            cfg.val_frac,
            RngState::new(cfg.seed).named("split"),
        );
        TrainData::new(
            graph,
            table.features.clone(),
            table.seg_label.clone(),
            split,
        )
    }
}

/// One bundle per training node and view, in `split.train` order.
pub fn training_bundles(
    data: &TrainData,
    cfg: &TrainConfig,
    rng: RngState,
) -> Result<[Vec<WalkBundle>; 2]> {
    let roots = &data.split.train;
    let make = |v: GraphView| {
        walks_for_roots(
            data.graph(v),
            roots,
            cfg.walks,
            cfg.walk_length,
            rng.child(v.index() as u64),
        )
    };
    Ok([make(GraphView::Spatial)?, make(GraphView::Od)?])
}

/// Replaces every prototype with the nearest encoded candidate bundle of its
/// class. `bundles[v][j]` must be rooted at `nodes[j]`.
pub fn project_with(
    model: &mut PrototypeModel,
    data: &TrainData,
    nodes: &[usize],
    bundles: [&[WalkBundle]; 2],
) -> Result<Vec<ProjectionRecord>> {
    let mut records = Vec::new();
    for view in GraphView::ALL {
        let v = view.index();
        if bundles[v].len() != nodes.len() {
            return Err(invalid("one walk bundle per candidate node is required"));
        }
        if nodes.is_empty() {
            return Err(invalid("no candidate nodes for projection"));
        }
        let refs: Vec<&WalkBundle> = bundles[v].iter().collect();
        let w = &model.local[v];
        let (latent, _) = forward_batch(w, data.x.dot(&w.w_in).view(), &refs, false)?;
        let set = &model.prototypes[v];
        let near = nearest_candidates(&set.p, &set.class_of, &latent, nodes, &data.labels)?;
        for (k, &(j, d)) in near.iter().enumerate() {
            records.push(ProjectionRecord {
                view,
                prototype: k,
                class: model.prototypes[v].class_of[k],
                root: nodes[j],
                distance: d,
                bundle: bundles[v][j].clone(),
            });
            model.prototypes[v].p.row_mut(k).assign(&latent.row(j));
            model.roots[v][k] = Some(nodes[j]);
        }
    }
    Ok(records)
}

/// Sets every prototype to the encoding of a random training node of its
/// class, drawing `n_proto` distinct nodes where the class is large enough.
pub(crate) fn seed_prototypes(
    model: &mut PrototypeModel,
    data: &TrainData,
    rng: RngState,
) -> Result<Vec<ProjectionRecord>> {
    let cfg = model.config.clone();
    let mut records = Vec::new();
    for view in GraphView::ALL {
        let v = view.index();
        let stream = rng.child(v as u64);
        let mut r = stream.rng();
        for cls in 0..model.class_count {
            let pool = data.train_nodes_of(cls);
            if pool.is_empty() {
                return Err(invalid(format!("class {cls} has no training nodes")));
            }
            let mut picks: Vec<usize> =
                pool.choose_multiple(&mut r, cfg.n_proto).copied().collect();
            while picks.len() < cfg.n_proto {
                picks.push(*pool.choose(&mut r).expect("nonempty pool"));
            }
            let walk_rng = stream.named("walks").child(cls as u64);
            let bundles = walks_for_roots(
                data.graph(view),
                &picks,
                cfg.walks,
                cfg.walk_length,
                walk_rng,
            )?;
            let refs: Vec<&WalkBundle> = bundles.iter().collect();
            let w = &model.local[v];
            let (enc, _) = forward_batch(w, data.x.dot(&w.w_in).view(), &refs, false)?;
            for (j, bundle) in bundles.into_iter().enumerate() {
                let k = cls * cfg.n_proto + j;
                model.prototypes[v].p.row_mut(k).assign(&enc.row(j));
                model.roots[v][k] = Some(picks[j]);
                records.push(ProjectionRecord {
                    view,
                    prototype: k,
                    class: cls,
                    root: picks[j],
                    distance: 0.0,
                    bundle,
                });
            }
        }
    }
    Ok(records)
}

/// Projects onto fresh bundles rooted at the training nodes.
pub fn project_prototypes(
    model: &mut PrototypeModel,
    data: &TrainData,
    rng: RngState,
) -> Result<Vec<ProjectionRecord>> {
    let bundles = training_bundles(data, &model.config, rng)?;
    project_with(model, data, &data.split.train, [&bundles[0], &bundles[1]])
}

fn accuracy_on(probs: &Array2<f64>, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let hits = nodes
        .iter()
        .filter(|&&i| argmax(probs.row(i).as_slice().expect("row")) == labels[i])
        .count();
    hits as f64 / nodes.len() as f64
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn predict(model: &PrototypeModel, data: &TrainData) -> Result<Vec<usize>> {
    let fwd = forward(model, data)?;
    Ok(fwd
        .probs
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("row")))
        .collect())
}

/// Accuracy and macro-F1 over `nodes`; classes absent from both truth and
/// prediction are left out of the average.
pub fn evaluate(model: &PrototypeModel, data: &TrainData, nodes: &[usize]) -> Result<Metrics> {
    let pred = predict(model, data)?;
    let c = model.class_count;
    let (mut tp, mut fp, mut fnn) = (vec![0usize; c], vec![0usize; c], vec![0usize; c]);
    for &i in nodes {
        let (y, p) = (data.labels[i], pred[i]);
        if y == p {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fnn[y] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let accuracy = if nodes.is_empty() {
        0.0
    } else {
        correct as f64 / nodes.len() as f64
    };
    let f1s: Vec<f64> = (0..c)
        .filter(|&k| tp[k] + fp[k] + fnn[k] > 0)
        .map(|k| 2.0 * tp[k] as f64 / (2 * tp[k] + fp[k] + fnn[k]) as f64)
        .collect();
    let macro_f1 = if f1s.is_empty() {
        0.0
    } else {
        f1s.iter().sum::<f64>() / f1s.len() as f64
    };
    Ok(Metrics { accuracy, macro_f1 })
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, shaped like the model.
struct AdamState {
    m: PrototypeModel,
    v: PrototypeModel,
    t: i32,
}

fn step(
    model: &mut PrototypeModel,
    grad: &mut PrototypeModel,
    adam: &mut Option<AdamState>,
    lr: f64,
) {
    match adam {
        None => {
            for ((_, mut w), (_, g)) in model.tensors_mut().into_iter().zip(grad.tensors_mut()) {
                w.scaled_add(-lr, &g);
            }
        }
        Some(st) => {
            st.t += 1;
            let c1 = 1.0 - ADAM_BETA1.powi(st.t);
            let c2 = 1.0 - ADAM_BETA2.powi(st.t);
            let tensors = model
                .tensors_mut()
                .into_iter()
                .zip(grad.tensors_mut())
                .zip(st.m.tensors_mut())
                .zip(st.v.tensors_mut());
            for ((((_, mut w), (_, g)), (_, mut m)), (_, mut v)) in tensors {
                ndarray::Zip::from(&mut w)
                    .and(&g)
                    .and(&mut m)
                    .and(&mut v)
                    .for_each(|w, &g, m, v| {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                    });
            }
        }
    }
    if model.config.nonneg_class_weights {
        let q = model.prototype_count();
        for row in 0..model.fc.nrows() {
            let cls = model.prototypes[row / q].class_of[row % q];
            let w = &mut model.fc[[row, cls]];
            *w = w.max(0.0);
        }
    }
}

/// Full-batch training with projection every `projection_interval` epochs.
/// Candidate walk bundles are redrawn after each projection.
///
/// With `patience > 0` the returned parameters are those of the projected
/// state (epoch 0 or a projection epoch) with the best validation accuracy,
/// so the prototypes are always encodings of real local structures. With
/// `patience == 0` the final parameters are returned.
pub fn train(cfg: &TrainConfig, data: &TrainData) -> Result<TrainOutcome> {
    let (mut model, mut records) = PrototypeModel::init_with_records(cfg, data)?;
    let walk_rng = RngState::new(cfg.seed).named("walks");
    let mut round = 0u64;
    let mut bundles = training_bundles(data, cfg, walk_rng.child(round))?;
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, PrototypeModel, Vec<ProjectionRecord>)> = None;
    let mut epochs_run = 0;
    let mut adam = match cfg.optimizer {
        Optimizer::Sgd => None,
        Optimizer::Adam => Some(AdamState {
            m: model.zeros_like(),
            v: model.zeros_like(),
            t: 0,
        }),
    };
    for epoch in 0..cfg.max_epochs {
        let projected = epoch % cfg.projection_interval == 0;
        if projected && epoch > 0 {
            records = project_with(
                &mut model,
                data,
                &data.split.train,
                [&bundles[0], &bundles[1]],
            )?;
            round += 1;
            bundles = training_bundles(data, cfg, walk_rng.child(round))?;
        }
        let cand = Candidates {
            nodes: &data.split.train,
            bundles: [&bundles[0], &bundles[1]],
        };
        let (losses, fwd, grad) = objective(&model, data, &cand, true)?;
        if !losses.total.is_finite() {
            return Err(Error::Divergence {
                epoch,
                msg: format!(
                    "non-finite loss (ce {}, clst {}, sprt {}, enc {})",
                    losses.ce, losses.clst, losses.sprt, losses.enc
                ),
            });
        }
        let val_acc = accuracy_on(&fwd.probs, &data.labels, &data.split.val);
        log.push(LogRow {
            epoch,
            ce: losses.ce,
            clst: losses.clst,
            sprt: losses.sprt,
            enc: losses.enc,
            val_acc,
        });
        if projected && best.as_ref().is_none_or(|b| val_acc > b.0) {
            best = Some((val_acc, epoch, model.clone(), records.clone()));
        }
        let mut grad = grad.expect("gradient requested");
        step(&mut model, &mut grad, &mut adam, cfg.lr);
        epochs_run = epoch + 1;
        if cfg.patience > 0 {
            let since = epoch - best.as_ref().map_or(0, |b| b.1);
            if since >= cfg.patience {
                break;
            }
        }
    }
    let (model, best_epoch, projection) = match best {
        Some((_, e, m, r)) if cfg.patience > 0 => (m, e, r),
        _ => (model, epochs_run, records),
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        epochs_run,
        projection,
    })
}

/// Writes the training log as `epoch,ce,clst,sprt,enc,val_acc`.
pub fn write_log<W: std::io::Write>(log: &[LogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
