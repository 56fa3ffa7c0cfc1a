//! Gated recurrent encoder for walk bundles.
//!
//! Each walk is read as a sequence of node feature rows; the bundle embedding
//! is the mean final hidden state over its walks, mapped to the latent space.
//! Gates are packed `[reset | update | candidate]` along the last axis.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::WalkBundle;
use crate::error::{Error, Result};
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEncoderWeights {
    /// d_in × 3g input projection.
    pub w_in: Array2<f64>,
    /// g × 3g recurrent projection.
    pub u: Array2<f64>,
    pub b: Array1<f64>,
    /// g × latent output map.
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

pub(crate) fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LocalEncoderWeights {
    pub fn init(d_in: usize, hidden: usize, latent: usize, rng: RngState) -> Self {
        let mut r = rng.rng();
        Self {
            w_in: glorot(d_in, 3 * hidden, &mut r),
            u: glorot(hidden, 3 * hidden, &mut r),
            b: Array1::zeros(3 * hidden),
            w_out: glorot(hidden, latent, &mut r),
            b_out: Array1::zeros(latent),
        }
    }

    pub fn zeros(d_in: usize, hidden: usize, latent: usize) -> Self {
        Self {
            w_in: Array2::zeros((d_in, 3 * hidden)),
            u: Array2::zeros((hidden, 3 * hidden)),
            b: Array1::zeros(3 * hidden),
            w_out: Array2::zeros((hidden, latent)),
            b_out: Array1::zeros(latent),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_out.ncols()
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<(&'static str, ndarray::ArrayViewMut2<'_, f64>)> {
        let b = self.b.len();
        let bo = self.b_out.len();
        vec![
            ("w_in", self.w_in.view_mut()),
            ("u", self.u.view_mut()),
            (
                "b",
                self.b
                    .view_mut()
                    .into_shape_with_order((1, b))
                    .expect("bias view"),
            ),
            ("w_out", self.w_out.view_mut()),
            (
                "b_out",
                self.b_out
                    .view_mut()
                    .into_shape_with_order((1, bo))
                    .expect("bias view"),
            ),
        ]
    }

    fn check(&self, d_in: usize) -> Result<()> {
        let g = self.hidden_dim();
        if self.w_in.dim() != (d_in, 3 * g) || self.u.ncols() != 3 * g || self.b.len() != 3 * g {
            return Err(Error::DimensionMismatch(format!(
                "local encoder expects {} input features and hidden size {g}, got features of width {d_in}",
                self.w_in.nrows()
            )));
        }
        if self.w_out.nrows() != g || self.b_out.len() != self.w_out.ncols() {
            return Err(Error::DimensionMismatch(
                "local encoder output map shape".into(),
            ));
        }
        Ok(())
    }
}

/// Per-step activations kept for the backward pass.
struct Step {
    nodes: Vec<usize>,
    h_prev: Array2<f64>,
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    hu_n: Array2<f64>,
}

/// Forward pass over a batch of bundles that share walk count and length.
pub(crate) struct BatchTrace {
    walks_per_bundle: usize,
    steps: Vec<Step>,
    pooled: Array2<f64>,
}

fn batch_shape(bundles: &[&WalkBundle]) -> Result<(usize, usize)> {
    let first = bundles
        .first()
        .ok_or_else(|| crate::error::invalid("no walk bundles to encode"))?;
    let (r, t) = (first.walk_count(), first.walk_length());
    if r == 0 || t == 0 {
        return Err(crate::error::invalid(
            "walk bundles must hold at least one nonempty walk",
        ));
    }
    for b in bundles {
        if b.walk_count() != r || b.walks.iter().any(|w| w.len() != t) {
            return Err(crate::error::invalid(
                "walk bundles in a batch must share shape",
            ));
        }
    }
    Ok((r, t))
}

/// Encodes bundles given precomputed `xw = x · w_in` (n × 3g). Returns the
/// latent rows and, when `keep` is set, the trace for [`backward_batch`].
pub(crate) fn forward_batch(
    w: &LocalEncoderWeights,
    xw: ArrayView2<f64>,
    bundles: &[&WalkBundle],
    keep: bool,
) -> Result<(Array2<f64>, Option<BatchTrace>)> {
    let (r, t) = batch_shape(bundles)?;
    let g = w.hidden_dim();
    let rows = bundles.len() * r;
    let mut h = Array2::<f64>::zeros((rows, g));
    let mut steps = Vec::new();
    for step in 0..t {
        let nodes: Vec<usize> = bundles
            .iter()
            .flat_map(|b| b.walks.iter().map(move |wk| wk[step]))
            .collect();
        let hu = h.dot(&w.u);
        let mut rg = Array2::zeros((rows, g));
        let mut zg = Array2::zeros((rows, g));
        let mut ng = Array2::zeros((rows, g));
        let mut h_next = Array2::zeros((rows, g));
        for (row, &v) in nodes.iter().enumerate() {
            let a = xw.row(v);
            for k in 0..g {
                let rk = sigmoid(a[k] + hu[[row, k]] + w.b[k]);
                let zk = sigmoid(a[g + k] + hu[[row, g + k]] + w.b[g + k]);
                let nk = (a[2 * g + k] + w.b[2 * g + k] + rk * hu[[row, 2 * g + k]]).tanh();
                rg[[row, k]] = rk;
                zg[[row, k]] = zk;
                ng[[row, k]] = nk;
                h_next[[row, k]] = (1.0 - zk) * nk + zk * h[[row, k]];
            }
        }
        if keep {
            let hu_n = hu.slice(s![.., 2 * g..]).to_owned();
            steps.push(Step {
                nodes,
                h_prev: h,
                r: rg,
                z: zg,
                n: ng,
                hu_n,
            });
        }
        h = h_next;
    }
    let mut pooled = Array2::zeros((bundles.len(), g));
    for (i, chunk) in h.axis_chunks_iter(Axis(0), r).enumerate() {
        pooled
            .row_mut(i)
            .assign(&chunk.mean_axis(Axis(0)).expect("nonempty bundle"));
    }
    let out = pooled.dot(&w.w_out) + &w.b_out;
    let trace = keep.then_some(BatchTrace {
        walks_per_bundle: r,
        steps,
        pooled,
    });
    Ok((out, trace))
}

/// Accumulates parameter gradients for upstream gradient `d_out` (one row
/// per bundle). The input-projection gradient is returned as `d_xw`
/// (n × 3g) for the caller to fold into `w_in` against its features.
pub(crate) fn backward_batch(
    w: &LocalEncoderWeights,
    trace: &BatchTrace,
    d_out: ArrayView2<f64>,
    grad: &mut LocalEncoderWeights,
    d_xw: &mut Array2<f64>,
) {
    let g = w.hidden_dim();
    let r = trace.walks_per_bundle;
    grad.w_out += &trace.pooled.t().dot(&d_out);
    grad.b_out += &d_out.sum_axis(Axis(0));
    let d_pooled = d_out.dot(&w.w_out.t());
    let rows = d_pooled.nrows() * r;
    let mut dh = Array2::zeros((rows, g));
    for (row, mut out) in dh.rows_mut().into_iter().enumerate() {
        out.assign(&(&d_pooled.row(row / r) / r as f64));
    }
    for st in trace.steps.iter().rev() {
        let mut d_gates = Array2::zeros((rows, 3 * g));
        let mut d_hu = Array2::zeros((rows, 3 * g));
        let mut dh_prev = Array2::zeros((rows, g));
        for row in 0..rows {
            for k in 0..g {
                let (rk, zk, nk) = (st.r[[row, k]], st.z[[row, k]], st.n[[row, k]]);
                let d = dh[[row, k]];
                let dn = d * (1.0 - zk) * (1.0 - nk * nk);
                let dz = d * (st.h_prev[[row, k]] - nk) * zk * (1.0 - zk);
                let dr = dn * st.hu_n[[row, k]] * rk * (1.0 - rk);
                d_gates[[row, k]] = dr;
                d_gates[[row, g + k]] = dz;
                d_gates[[row, 2 * g + k]] = dn;
                d_hu[[row, k]] = dr;
                d_hu[[row, g + k]] = dz;
                d_hu[[row, 2 * g + k]] = dn * rk;
                dh_prev[[row, k]] = d * zk;
            }
        }
        grad.b += &d_gates.sum_axis(Axis(0));
        grad.u += &st.h_prev.t().dot(&d_hu);
        dh_prev += &d_hu.dot(&w.u.t());
        for (row, &v) in st.nodes.iter().enumerate() {
            let mut acc = d_xw.row_mut(v);
            acc += &d_gates.row(row);
        }
        dh = dh_prev;
    }
}

/// Latent embedding `l` of one bundle.
pub fn encode_local(
    bundle: &WalkBundle,
    w: &LocalEncoderWeights,
    x: &Array2<f64>,
) -> Result<Array1<f64>> {
    Ok(encode_bundles(&[bundle], w, x)?.row(0).to_owned())
}

/// Latent embeddings of several bundles, one row each.
pub fn encode_bundles(
    bundles: &[&WalkBundle],
    w: &LocalEncoderWeights,
    x: &Array2<f64>,
) -> Result<Array2<f64>> {
    w.check(x.ncols())?;
    for b in bundles {
        if b.walks.iter().flatten().any(|&v| v >= x.nrows()) {
            return Err(crate::error::invalid(format!(
                "bundle rooted at {} visits a node without features",
                b.root
            )));
        }
    }
    let xw = x.dot(&w.w_in);
    Ok(forward_batch(w, xw.view(), bundles, false)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::walk::random_walks;
    use rand::seq::SliceRandom;

    fn setup() -> (Array2<f64>, Vec<WalkBundle>, LocalEncoderWeights) {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5)]).unwrap();
        let mut r = RngState::new(3).rng();
        let x = Array2::from_shape_fn((6, 4), |_| r.random_range(-1.0..1.0));
        let bundles = (0..6)
            .map(|v| random_walks(&g, v, 3, 4, RngState::new(v as u64)).unwrap())
            .collect();
        (
            x,
            bundles,
            LocalEncoderWeights::init(4, 5, 3, RngState::new(8)),
        )
    }

    #[test]
    fn zero_weights_give_bias() {
        let (x, bundles, _) = setup();
        let mut w = LocalEncoderWeights::zeros(4, 5, 3);
        assert_eq!(
            encode_local(&bundles[0], &w, &x).unwrap(),
            Array1::<f64>::zeros(3)
        );
        w.b_out = Array1::from(vec![1.0, -2.0, 0.5]);
        assert_eq!(encode_local(&bundles[2], &w, &x).unwrap(), w.b_out);
    }

    #[test]
    fn walk_order_does_not_matter() {
        let (x, bundles, w) = setup();
        let base = encode_local(&bundles[1], &w, &x).unwrap();
        let mut shuffled = bundles[1].clone();
        shuffled.walks.reverse();
        shuffled.walks.shuffle(&mut RngState::new(1).rng());
        let other = encode_local(&shuffled, &w, &x).unwrap();
        for (a, b) in base.iter().zip(other.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_matches_single() {
        let (x, bundles, w) = setup();
        let refs: Vec<&WalkBundle> = bundles.iter().collect();
        let all = encode_bundles(&refs, &w, &x).unwrap();
        for (i, b) in bundles.iter().enumerate() {
            assert_eq!(all.row(i), encode_local(b, &w, &x).unwrap());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, bundles, w) = setup();
        let refs: Vec<&WalkBundle> = bundles.iter().take(3).collect();
        let mut r = RngState::new(5).rng();
        let probe = Array2::from_shape_fn((3, 3), |_| r.random_range(-1.0..1.0));
        let f = |w: &LocalEncoderWeights| (encode_bundles(&refs, w, &x).unwrap() * &probe).sum();
        let xw = x.dot(&w.w_in);
        let (_, trace) = forward_batch(&w, xw.view(), &refs, true).unwrap();
        let mut grad = LocalEncoderWeights::zeros(4, 5, 3);
        let mut d_xw = Array2::zeros(xw.dim());
        backward_batch(&w, &trace.unwrap(), probe.view(), &mut grad, &mut d_xw);
        grad.w_in = x.t().dot(&d_xw);
        let h = 1e-6;
        let mut wp = w.clone();
        let names: Vec<&str> = wp.tensors_mut().iter().map(|(n, _)| *n).collect();
        for (ti, name) in names.iter().enumerate() {
            let shape = wp.tensors_mut()[ti].1.dim();
            for i in 0..shape.0 {
                for j in 0..shape.1 {
                    let orig = wp.tensors_mut()[ti].1[[i, j]];
                    wp.tensors_mut()[ti].1[[i, j]] = orig + h;
                    let up = f(&wp);
                    wp.tensors_mut()[ti].1[[i, j]] = orig - h;
                    let down = f(&wp);
                    wp.tensors_mut()[ti].1[[i, j]] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grad.tensors_mut()[ti].1[[i, j]];
                    assert!(
                        (numeric - analytic).abs() / analytic.abs().max(1.0) < 1e-6,
                        "{name}[{i},{j}]: {analytic} vs {numeric}"
                    );
                }
            }
        }
    }
}
