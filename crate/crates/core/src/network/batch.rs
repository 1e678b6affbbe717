//! Batched jet propagation with reverse accumulation over parameters.
//!
//! A chunk of `b` points is propagated as one matrix per layer with
//! `C·b` columns: the value block, then one block per first partial, then
//! one block per upper-triangular second partial (`C` from [`JetOrder`]).
//! Affine layers act on every block with the same weights, so a layer is a
//! single GEMM plus a bias on the value block. Loss terms read the output
//! block, write adjoints for it, and the engine pulls those back through
//! the tanh jets and the GEMMs.
//!
//! Chunks are independent. Each one owns a zeroed gradient buffer and the
//! buffers are summed in chunk order, so results do not depend on how many
//! threads ran them.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use crate::autodiff::{hess_pairs, tanh};
use crate::error::{Error, Result};

use super::{LayerLayout, Network};

/// Target number of points per chunk.
pub const CHUNK_POINTS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum JetOrder {
    Value,
    First,
    Second,
}

impl JetOrder {
    pub const fn components(self, dim: usize) -> usize {
        match self {
            JetOrder::Value => 1,
            JetOrder::First => 1 + dim,
            JetOrder::Second => 1 + dim + dim * (dim + 1) / 2,
        }
    }
}

/// Read access to output jet components: point `p`, output `o`, component `c`.
pub trait OutputBlock {
    fn len(&self) -> usize;
    fn get(&self, p: usize, o: usize, c: usize) -> f64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Accumulates `∂loss/∂(output component)`.
pub trait AdjointBlock {
    fn add(&mut self, p: usize, o: usize, c: usize, v: f64);
}

pub struct ChunkOutputs<'a> {
    data: &'a [f64],
    points: usize,
    comps: usize,
}

impl OutputBlock for ChunkOutputs<'_> {
    fn len(&self) -> usize {
        self.points
    }

    #[inline]
    fn get(&self, p: usize, o: usize, c: usize) -> f64 {
        self.data[(o * self.comps + c) * self.points + p]
    }
}

pub struct ChunkAdjoints<'a> {
    data: &'a mut [f64],
    points: usize,
    comps: usize,
}

impl AdjointBlock for ChunkAdjoints<'_> {
    #[inline]
    fn add(&mut self, p: usize, o: usize, c: usize, v: f64) {
        self.data[(o * self.comps + c) * self.points + p] += v;
    }
}

/// Output components stored `[point][output][component]`, as returned by
/// [`super::Evaluator::evaluate`].
pub struct PointOutputs<'a> {
    data: &'a [f64],
    outputs: usize,
    comps: usize,
}

impl<'a> PointOutputs<'a> {
    pub fn new(data: &'a [f64], outputs: usize, comps: usize) -> Self {
        Self {
            data,
            outputs,
            comps,
        }
    }
}

impl OutputBlock for PointOutputs<'_> {
    fn len(&self) -> usize {
        self.data.len() / (self.outputs * self.comps)
    }

    #[inline]
    fn get(&self, p: usize, o: usize, c: usize) -> f64 {
        self.data[(p * self.outputs + o) * self.comps + c]
    }
}

/// Sum of a term's per-sample losses over a set of samples.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TermStats {
    pub sum: f64,
    /// Samples that contributed to `sum`.
    pub count: usize,
    /// Samples left out because the geometry was degenerate there.
    pub skipped: usize,
}

impl TermStats {
    pub fn merge(&mut self, other: TermStats) {
        self.sum += other.sum;
        self.count += other.count;
        self.skipped += other.skipped;
    }

    /// Mean over contributing samples; zero when nothing contributed.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

#[derive(Default)]
struct Workspace {
    /// `acts[l]` is the input of layer `l`.
    acts: Vec<Vec<f64>>,
    /// `pre[l]` is the affine output of layer `l`.
    pre: Vec<Vec<f64>>,
    dz: Vec<f64>,
    da: Vec<f64>,
}

struct Plan<'a> {
    net: &'a Network,
    layout: Vec<LayerLayout>,
    dim: usize,
    order: JetOrder,
    pairs: Vec<(usize, usize)>,
}

impl<'a> Plan<'a> {
    fn new(net: &'a Network, order: JetOrder) -> Self {
        let dim = net.shape().input_dim;
        Self {
            net,
            layout: net.shape().layout(),
            dim,
            order,
            pairs: hess_pairs(dim),
        }
    }

    fn comps(&self) -> usize {
        self.order.components(self.dim)
    }

    fn forward(&self, coords: &[f64], ws: &mut Workspace) -> Result<()> {
        let dim = self.dim;
        let b = coords.len() / dim;
        let ncol = self.comps() * b;
        let nl = self.layout.len();
        ws.acts.resize_with(nl, Vec::new);
        ws.pre.resize_with(nl, Vec::new);

        let map = &self.net.input_map;
        let a0 = &mut ws.acts[0];
        a0.clear();
        a0.resize(dim * ncol, 0.0);
        for k in 0..dim {
            let row = &mut a0[k * ncol..(k + 1) * ncol];
            for p in 0..b {
                row[p] = map.scale[k] * coords[p * dim + k] + map.shift[k];
            }
            if self.order >= JetOrder::First {
                row[(1 + k) * b..(2 + k) * b].fill(map.scale[k]);
            }
        }

        let params = self.net.params.values();
        for (l, layer) in self.layout.iter().enumerate() {
            let (rows, cols) = (layer.rows, layer.cols);
            let w = ArrayView2::from_shape(
                (rows, cols),
                &params[layer.weight_offset..layer.bias_offset],
            )
            .expect("layout matches parameter vector");
            let z_buf = &mut ws.pre[l];
            z_buf.clear();
            z_buf.resize(rows * ncol, 0.0);
            {
                let a = ArrayView2::from_shape((cols, ncol), &ws.acts[l][..cols * ncol])
                    .expect("activation buffer sized");
                let mut z = ArrayViewMut2::from_shape((rows, ncol), &mut z_buf[..])
                    .expect("pre-activation buffer sized");
                general_mat_mul(1.0, &w, &a, 0.0, &mut z);
            }
            let bias = &params[layer.bias_offset..layer.bias_offset + rows];
            for i in 0..rows {
                z_buf[i * ncol..i * ncol + b]
                    .iter_mut()
                    .for_each(|v| *v += bias[i]);
            }
            if !z_buf.iter().all(|v| v.is_finite()) {
                return Err(Error::NumericOverflow { layer: l });
            }
            if l + 1 < nl {
                let (pre, acts) = (&ws.pre[l], &mut ws.acts[l + 1]);
                acts.clear();
                acts.resize(rows * ncol, 0.0);
                for i in 0..rows {
                    self.tanh_forward(
                        &pre[i * ncol..(i + 1) * ncol],
                        &mut acts[i * ncol..(i + 1) * ncol],
                        b,
                    );
                }
            }
        }
        Ok(())
    }

    fn tanh_forward(&self, z: &[f64], a: &mut [f64], b: usize) {
        for p in 0..b {
            a[p] = tanh(z[p]);
        }
        if self.order == JetOrder::Value {
            return;
        }
        let (t, rest) = a.split_at_mut(b);
        for k in 0..self.dim {
            let off = (1 + k) * b;
            let (zg, ag) = (&z[off..off + b], &mut rest[k * b..(k + 1) * b]);
            for p in 0..b {
                ag[p] = (1.0 - t[p] * t[p]) * zg[p];
            }
        }
        if self.order == JetOrder::Second {
            for (q, &(i, j)) in self.pairs.iter().enumerate() {
                let off = (1 + self.dim + q) * b;
                let zi = &z[(1 + i) * b..(2 + i) * b];
                let zj = &z[(1 + j) * b..(2 + j) * b];
                let zh = &z[off..off + b];
                let ah = &mut rest[off - b..off];
                for p in 0..b {
                    let s = 1.0 - t[p] * t[p];
                    ah[p] = s * zh[p] - 2.0 * t[p] * s * zi[p] * zj[p];
                }
            }
        }
    }

    /// Pulls the adjoint `da` of a tanh layer's output back to its input.
    fn tanh_backward(&self, da: &[f64], z: &[f64], t: &[f64], dz: &mut [f64], b: usize) {
        for p in 0..b {
            dz[p] = (1.0 - t[p] * t[p]) * da[p];
        }
        if self.order == JetOrder::Value {
            return;
        }
        let (dzv, dzr) = dz.split_at_mut(b);
        for k in 0..self.dim {
            let off = (1 + k) * b;
            let (zg, dag) = (&z[off..off + b], &da[off..off + b]);
            let dzg = &mut dzr[k * b..(k + 1) * b];
            for p in 0..b {
                let s = 1.0 - t[p] * t[p];
                let s1 = -2.0 * t[p] * s;
                dzg[p] = s * dag[p];
                dzv[p] += s1 * zg[p] * dag[p];
            }
        }
        if self.order == JetOrder::Second {
            for (q, &(i, j)) in self.pairs.iter().enumerate() {
                let off = (1 + self.dim + q) * b;
                let zi = &z[(1 + i) * b..(2 + i) * b];
                let zj = &z[(1 + j) * b..(2 + j) * b];
                let (zh, dah) = (&z[off..off + b], &da[off..off + b]);
                for p in 0..b {
                    let s = 1.0 - t[p] * t[p];
                    let s1 = -2.0 * t[p] * s;
                    let s2 = -2.0 * s * s + 4.0 * t[p] * t[p] * s;
                    dzr[off - b + p] = s * dah[p];
                    dzv[p] += (s1 * zh[p] + s2 * zi[p] * zj[p]) * dah[p];
                    dzr[i * b + p] += s1 * zj[p] * dah[p];
                    dzr[j * b + p] += s1 * zi[p] * dah[p];
                }
            }
        }
    }

    /// Backward pass from the output adjoint in `ws.dz`, accumulating into
    /// `grad`.
    fn backward(&self, b: usize, ws: &mut Workspace, grad: &mut [f64]) {
        let ncol = self.comps() * b;
        let params = self.net.params.values();
        for (l, layer) in self.layout.iter().enumerate().rev() {
            let (rows, cols) = (layer.rows, layer.cols);
            {
                let dz = ArrayView2::from_shape((rows, ncol), &ws.dz[..rows * ncol])
                    .expect("adjoint buffer sized");
                let a = ArrayView2::from_shape((cols, ncol), &ws.acts[l][..cols * ncol])
                    .expect("activation buffer sized");
                let mut gw = ArrayViewMut2::from_shape(
                    (rows, cols),
                    &mut grad[layer.weight_offset..layer.bias_offset],
                )
                .expect("gradient layout");
                general_mat_mul(1.0, &dz, &a.t(), 1.0, &mut gw);
            }
            for i in 0..rows {
                grad[layer.bias_offset + i] += ws.dz[i * ncol..i * ncol + b].iter().sum::<f64>();
            }
            if l == 0 {
                break;
            }
            ws.da.clear();
            ws.da.resize(cols * ncol, 0.0);
            {
                let w = ArrayView2::from_shape(
                    (rows, cols),
                    &params[layer.weight_offset..layer.bias_offset],
                )
                .expect("layout matches parameter vector");
                let dz = ArrayView2::from_shape((rows, ncol), &ws.dz[..rows * ncol])
                    .expect("adjoint buffer sized");
                let mut da = ArrayViewMut2::from_shape((cols, ncol), &mut ws.da[..])
                    .expect("adjoint buffer sized");
                general_mat_mul(1.0, &w.t(), &dz, 0.0, &mut da);
            }
            ws.dz.clear();
            ws.dz.resize(cols * ncol, 0.0);
            let (pre, act) = (&ws.pre[l - 1], &ws.acts[l]);
            for i in 0..cols {
                let r = i * ncol..(i + 1) * ncol;
                self.tanh_backward(
                    &ws.da[r.clone()],
                    &pre[r.clone()],
                    &act[r.clone()],
                    &mut ws.dz[r],
                    b,
                );
            }
        }
    }

    fn outputs<'w>(&self, b: usize, ws: &'w Workspace) -> ChunkOutputs<'w> {
        ChunkOutputs {
            data: &ws.pre[self.layout.len() - 1],
            points: b,
            comps: self.comps(),
        }
    }
}

/// Splits `n` points into chunks whose sizes are multiples of `unit`.
pub fn chunk_ranges(n: usize, unit: usize) -> Vec<std::ops::Range<usize>> {
    let unit = unit.max(1);
    let size = (CHUNK_POINTS / unit).max(1) * unit;
    (0..n)
        .step_by(size)
        .map(|s| s..(s + size).min(n))
        .collect()
}

#[cfg(feature = "parallel")]
fn map_chunks<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut Workspace) -> T + Sync,
{
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map_init(Workspace::default, |ws, i| f(i, ws))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn map_chunks<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize, &mut Workspace) -> T,
{
    let mut ws = Workspace::default();
    (0..count).map(|i| f(i, &mut ws)).collect()
}

/// Forward pass only, handing each chunk's outputs to `sink` in order.
pub fn for_each_chunk(
    net: &Network,
    points: &[f64],
    order: JetOrder,
    sink: &mut dyn FnMut(usize, &ChunkOutputs<'_>),
) -> Result<()> {
    let plan = Plan::new(net, order);
    let dim = plan.dim;
    if !points.len().is_multiple_of(dim) {
        return Err(Error::ShapeMismatch(format!(
            "point buffer length {} is not a multiple of {dim}",
            points.len()
        )));
    }
    let mut ws = Workspace::default();
    for range in chunk_ranges(points.len() / dim, 1) {
        plan.forward(&points[range.start * dim..range.end * dim], &mut ws)?;
        sink(range.start, &plan.outputs(range.len(), &ws));
    }
    Ok(())
}

/// Evaluates a loss term over all points and, when `grad` is given, adds
/// the gradient of the term's summed loss with respect to every parameter.
///
/// `term(start, outputs, adjoints)` sees one chunk beginning at global point
/// index `start`; chunks never split a group of `unit` consecutive points.
pub fn accumulate<F>(
    net: &Network,
    points: &[f64],
    order: JetOrder,
    unit: usize,
    grad: Option<&mut [f64]>,
    term: F,
) -> Result<TermStats>
where
    F: Fn(usize, &ChunkOutputs<'_>, Option<&mut ChunkAdjoints<'_>>) -> Result<TermStats> + Sync,
{
    let plan = Plan::new(net, order);
    let dim = plan.dim;
    let n = points.len() / dim;
    if !points.len().is_multiple_of(dim) || !n.is_multiple_of(unit.max(1)) {
        return Err(Error::ShapeMismatch(format!(
            "{} coordinates do not form whole groups of {unit} points",
            points.len()
        )));
    }
    let want_grad = grad.is_some();
    let param_count = net.params.len();
    let out_dim = net.shape().output_dim;
    let ranges = chunk_ranges(n, unit);

    let results = map_chunks(ranges.len(), |ci, ws| -> Result<(TermStats, Vec<f64>)> {
        let range = ranges[ci].clone();
        let b = range.len();
        plan.forward(&points[range.start * dim..range.end * dim], ws)?;
        if !want_grad {
            let stats = term(range.start, &plan.outputs(b, ws), None)?;
            return Ok((stats, Vec::new()));
        }
        let mut dz = std::mem::take(&mut ws.dz);
        dz.clear();
        dz.resize(out_dim * plan.comps() * b, 0.0);
        let stats = {
            let mut adj = ChunkAdjoints {
                data: &mut dz,
                points: b,
                comps: plan.comps(),
            };
            term(range.start, &plan.outputs(b, ws), Some(&mut adj))?
        };
        ws.dz = dz;
        let mut g = vec![0.0; param_count];
        plan.backward(b, ws, &mut g);
        Ok((stats, g))
    });

    let mut total = TermStats::default();
    let mut grad = grad;
    for r in results {
        let (stats, g) = r?;
        total.merge(stats);
        if let Some(out) = grad.as_deref_mut() {
            out.iter_mut().zip(&g).for_each(|(o, v)| *o += v);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ScalarJet2;
    use crate::network::{init_xavier, InputMap, NetworkShape};

    fn points2(n: usize) -> Vec<f64> {
        (0..n)
            .flat_map(|i| {
                let x = i as f64 / n as f64;
                [6.0 * x, 1.1 * (1.0 - x * x)]
            })
            .collect()
    }

    #[test]
    fn chunk_ranges_respect_unit() {
        let r = chunk_ranges(300, 8);
        assert!(r.iter().all(|c| c.start % 8 == 0));
        assert_eq!(r.last().unwrap().end, 300);
        assert_eq!(chunk_ranges(0, 1).len(), 0);
        assert_eq!(chunk_ranges(5, 400), vec![0..5]);
    }

    #[test]
    fn batched_jets_match_per_point_jets() {
        let shape = NetworkShape::curve(3, 9);
        let net = Network::with_input_map(
            init_xavier(shape, 5),
            InputMap::normalizing(&[(0.0, 6.3), (0.0, 1.1)]),
        )
        .unwrap();
        let pts = points2(300);
        let out = net.evaluate(&pts, JetOrder::Second).unwrap();
        for p in [0, 17, 128, 299] {
            let jets = net.forward_jets::<2>([pts[2 * p], pts[2 * p + 1]]).unwrap();
            for o in 0..2 {
                for c in 0..6 {
                    let got = out[p * 12 + o * 6 + c];
                    let want = jets[o].component(c);
                    assert!((got - want).abs() < 1e-12, "p{p} o{o} c{c}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn surface_batched_jets_match() {
        let shape = NetworkShape::surface(2, 7);
        let net = Network::new(init_xavier(shape, 9));
        let pts: Vec<f64> = (0..40)
            .flat_map(|i| {
                let x = i as f64 * 0.07;
                [x, 2.0 * x, 0.3 * x]
            })
            .collect();
        let out = net.evaluate(&pts, JetOrder::Second).unwrap();
        for p in [0, 39] {
            let jets = net
                .forward_jets::<3>([pts[3 * p], pts[3 * p + 1], pts[3 * p + 2]])
                .unwrap();
            for o in 0..3 {
                for c in 0..10 {
                    let got = out[p * 30 + o * 10 + c];
                    assert!((got - jets[o].component(c)).abs() < 1e-12);
                }
            }
        }
    }

    /// Loss: sum over points, outputs and all second-order components of
    /// `0.5 * weight(c) * comp²`. Its gradient is compared with central
    /// differences of the per-point reference path.
    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let shape = NetworkShape::curve(2, 6);
        let mut net = Network::new(init_xavier(shape, 21));
        let pts = points2(10);
        let weight = |c: usize| 1.0 + 0.3 * c as f64;

        let term = |_: usize, out: &ChunkOutputs<'_>, adj: Option<&mut ChunkAdjoints<'_>>| {
            let mut sum = 0.0;
            let mut adj = adj;
            for p in 0..out.len() {
                for o in 0..2 {
                    for c in 0..6 {
                        let v = out.get(p, o, c);
                        sum += 0.5 * weight(c) * v * v;
                        if let Some(a) = adj.as_deref_mut() {
                            a.add(p, o, c, weight(c) * v);
                        }
                    }
                }
            }
            Ok(TermStats {
                sum,
                count: out.len(),
                skipped: 0,
            })
        };

        let mut grad = vec![0.0; net.params.len()];
        let stats = accumulate(&net, &pts, JetOrder::Second, 1, Some(&mut grad), term).unwrap();

        let reference = |net: &Network| -> f64 {
            pts.chunks(2)
                .map(|x| {
                    let jets: Vec<ScalarJet2<2>> = net.forward_jets([x[0], x[1]]).unwrap();
                    jets.iter()
                        .map(|j| (0..6).map(|c| 0.5 * weight(c) * j.component(c).powi(2)).sum::<f64>())
                        .sum::<f64>()
                })
                .sum()
        };
        assert!((reference(&net) - stats.sum).abs() < 1e-10 * stats.sum.abs().max(1.0));

        let h = 1e-6;
        for k in 0..net.params.len() {
            let orig = net.params.values()[k];
            net.params.values_mut()[k] = orig + h;
            let fp = reference(&net);
            net.params.values_mut()[k] = orig - h;
            let fm = reference(&net);
            net.params.values_mut()[k] = orig;
            let fd = (fp - fm) / (2.0 * h);
            let err = (fd - grad[k]).abs() / fd.abs().max(1.0);
            assert!(err < 1e-6, "param {k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn value_and_first_order_gradients() {
        let shape = NetworkShape::curve(2, 5);
        let mut net = Network::new(init_xavier(shape, 4));
        let pts = points2(7);
        for order in [JetOrder::Value, JetOrder::First] {
            let comps = order.components(2);
            let term = move |_: usize, out: &ChunkOutputs<'_>, adj: Option<&mut ChunkAdjoints<'_>>| {
                let mut adj = adj;
                let mut sum = 0.0;
                for p in 0..out.len() {
                    for c in 0..comps {
                        let v = out.get(p, 1, c);
                        sum += v * v * v;
                        if let Some(a) = adj.as_deref_mut() {
                            a.add(p, 1, c, 3.0 * v * v);
                        }
                    }
                }
                Ok(TermStats { sum, count: 1, skipped: 0 })
            };
            let mut grad = vec![0.0; net.params.len()];
            accumulate(&net, &pts, order, 1, Some(&mut grad), term).unwrap();
            let h = 1e-6;
            for k in (0..net.params.len()).step_by(3) {
                let orig = net.params.values()[k];
                net.params.values_mut()[k] = orig + h;
                let fp = accumulate(&net, &pts, order, 1, None, term).unwrap().sum;
                net.params.values_mut()[k] = orig - h;
                let fm = accumulate(&net, &pts, order, 1, None, term).unwrap().sum;
                net.params.values_mut()[k] = orig;
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - grad[k]).abs() < 1e-6 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn rejects_partial_groups() {
        let net = Network::new(init_xavier(NetworkShape::curve(1, 3), 0));
        let pts = points2(5);
        let term = |_: usize, _: &ChunkOutputs<'_>, _: Option<&mut ChunkAdjoints<'_>>| {
            Ok(TermStats::default())
        };
        assert!(accumulate(&net, &pts, JetOrder::Value, 2, None, term).is_err());
        assert!(accumulate(&net, &pts[..9], JetOrder::Value, 1, None, term).is_err());
    }
}
