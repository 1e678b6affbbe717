//! Mean-squared loss components and their weighted total.

pub mod terms;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FlowParams;
use crate::network::{
    batch, ChunkAdjoints, Evaluator, JetOrder, Network, OutputBlock, PointOutputs, TermStats,
};
use crate::sampling::SampleBatch;

/// `(w_f, w_0, w_b, w_p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pde: f64,
    pub ic: f64,
    pub bc: f64,
    pub pole: f64,
}

impl LossWeights {
    pub const UNIT: LossWeights = LossWeights {
        pde: 1.0,
        ic: 1.0,
        bc: 1.0,
        pole: 1.0,
    };

    /// `w_f = 1` and every condition term weighted by `w`.
    pub fn conditions(w: f64) -> Self {
        Self {
            pde: 1.0,
            ic: w,
            bc: w,
            pole: w,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub flow: FlowParams,
    /// Couple the two pole anchors as `±r`.
    pub antipodal: bool,
    /// Penalize `X_u1` at the poles as well as `X_u2`.
    pub pole_u1_terms: bool,
}

impl LossOptions {
    pub fn new(flow: FlowParams) -> Self {
        Self {
            flow,
            antipodal: true,
            pole_u1_terms: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub pde: f64,
    pub ic: f64,
    /// Sum over periodic sets (two for the torus).
    pub bc: f64,
    /// Absent unless the batch carries pole samples.
    pub pole: Option<f64>,
    pub weights: LossWeights,
    pub total: f64,
    /// Interior points left out of `pde` because the geometry degenerated.
    pub skipped: usize,
}

impl LossReport {
    fn assemble(pde: TermStats, ic: TermStats, bc: &[TermStats], pole: Option<TermStats>, w: LossWeights) -> Self {
        let pde_mean = pde.mean();
        let ic_mean = ic.mean();
        let bc_mean: f64 = bc.iter().map(TermStats::mean).sum();
        let pole_mean = pole.map(|p| p.mean());
        let mut total = w.pde * pde_mean + w.ic * ic_mean + w.bc * bc_mean;
        if let Some(p) = pole_mean {
            total += w.pole * p;
        }
        Self {
            pde: pde_mean,
            ic: ic_mean,
            bc: bc_mean,
            pole: pole_mean,
            weights: w,
            total,
            skipped: pde.skipped,
        }
    }
}

/// One loss term: which points it reads and how it scores them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Term {
    Pde,
    Initial,
    Periodic(usize),
    Pole,
}

impl Term {
    fn list(batch: &SampleBatch) -> Vec<Term> {
        let mut v = vec![Term::Pde, Term::Initial];
        v.extend((0..batch.boundary.len()).map(Term::Periodic));
        if !batch.pole.is_empty() {
            v.push(Term::Pole);
        }
        v
    }

    fn points(self, batch: &SampleBatch) -> &[f64] {
        match self {
            Term::Pde => &batch.interior,
            Term::Initial => &batch.initial,
            Term::Periodic(i) => &batch.boundary[i].points,
            Term::Pole => &batch.pole,
        }
    }

    fn order(self) -> JetOrder {
        match self {
            Term::Pde => JetOrder::Second,
            _ => JetOrder::First,
        }
    }

    fn unit(self, batch: &SampleBatch) -> usize {
        match self {
            Term::Pde | Term::Initial => 1,
            Term::Periodic(_) => 2,
            Term::Pole => 2 * batch.pole_group,
        }
    }

    fn weight(self, w: &LossWeights) -> f64 {
        match self {
            Term::Pde => w.pde,
            Term::Initial => w.ic,
            Term::Periodic(_) => w.bc,
            Term::Pole => w.pole,
        }
    }

    fn eval<O: OutputBlock, A: crate::network::AdjointBlock>(
        self,
        batch: &SampleBatch,
        opts: &LossOptions,
        start: usize,
        out: &O,
        adj: Option<&mut A>,
    ) -> TermStats {
        let dim = batch.dim;
        match self {
            Term::Pde if dim == 2 => terms::curve_pde(out, adj, &opts.flow),
            Term::Pde => terms::surface_pde(out, adj, &opts.flow),
            Term::Initial => terms::initial(
                out,
                adj,
                dim,
                start,
                &batch.initial_position,
                &batch.initial_velocity,
            ),
            Term::Periodic(i) => terms::periodic(out, adj, dim, batch.boundary[i].coord),
            Term::Pole => {
                terms::pole(out, adj, batch.pole_group, opts.antipodal, opts.pole_u1_terms)
            }
        }
    }
}

fn collect(batch: &SampleBatch, w: LossWeights, stats: &[(Term, TermStats)]) -> LossReport {
    let get = |t: Term| stats.iter().find(|(k, _)| *k == t).map(|(_, s)| *s);
    let bc: Vec<TermStats> = stats
        .iter()
        .filter(|(k, _)| matches!(k, Term::Periodic(_)))
        .map(|(_, s)| *s)
        .collect();
    LossReport::assemble(
        get(Term::Pde).unwrap_or_default(),
        get(Term::Initial).unwrap_or_default(),
        &bc,
        if batch.pole.is_empty() { None } else { get(Term::Pole) },
        w,
    )
}

fn check_dims(batch: &SampleBatch, input_dim: usize, output_dim: usize) -> Result<()> {
    if batch.dim != input_dim || output_dim != input_dim {
        return Err(Error::ShapeMismatch(format!(
            "batch points have {} coordinates, model maps {input_dim} inputs to {output_dim} outputs",
            batch.dim
        )));
    }
    Ok(())
}

/// Loss of `net` on `batch`. When `grad` is given it receives the gradient
/// of `total` with respect to the network parameters (overwritten, not
/// added to).
pub fn loss_and_gradient(
    net: &Network,
    batch: &SampleBatch,
    opts: &LossOptions,
    weights: LossWeights,
    mut grad: Option<&mut [f64]>,
) -> Result<LossReport> {
    let shape = net.shape();
    check_dims(batch, shape.input_dim, shape.output_dim)?;
    let n_params = net.params.len();
    if let Some(g) = grad.as_deref_mut() {
        if g.len() != n_params {
            return Err(Error::ShapeMismatch(format!(
                "gradient buffer holds {}, network has {n_params} parameters",
                g.len()
            )));
        }
        g.fill(0.0);
    }
    let mut scratch = if grad.is_some() { vec![0.0; n_params] } else { Vec::new() };
    let mut stats = Vec::new();
    for term in Term::list(batch) {
        let want = grad.is_some();
        if want {
            scratch.fill(0.0);
        }
        let s = batch::accumulate(
            net,
            term.points(batch),
            term.order(),
            term.unit(batch),
            want.then_some(scratch.as_mut_slice()),
            |start, out, adj: Option<&mut ChunkAdjoints<'_>>| {
                Ok(term.eval(batch, opts, start, out, adj))
            },
        )?;
        if let Some(g) = grad.as_deref_mut() {
            if s.count > 0 {
                let k = term.weight(&weights) / s.count as f64;
                g.iter_mut().zip(&scratch).for_each(|(g, v)| *g += k * v);
            }
        }
        stats.push((term, s));
    }
    Ok(collect(batch, weights, &stats))
}

/// Loss of any evaluator on `batch`, without gradients. Used for exact
/// closures standing in for the network.
pub fn loss_report<E: Evaluator + ?Sized>(
    eval: &E,
    batch: &SampleBatch,
    opts: &LossOptions,
    weights: LossWeights,
) -> Result<LossReport> {
    check_dims(batch, eval.input_dim(), eval.output_dim())?;
    let mut stats = Vec::new();
    for term in Term::list(batch) {
        let order = term.order();
        let values = eval.evaluate(term.points(batch), order)?;
        let out = PointOutputs::new(&values, eval.output_dim(), order.components(batch.dim));
        let s = term.eval(batch, opts, 0, &out, None::<&mut ChunkAdjoints<'_>>);
        stats.push((term, s));
    }
    Ok(collect(batch, weights, &stats))
}

/// Pole positions at one time sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoleAnchor {
    pub t: f64,
    pub north: [f64; 3],
    pub south: [f64; 3],
}

fn mean3(points: &[[f64; 3]]) -> [f64; 3] {
    let n = points.len().max(1) as f64;
    std::array::from_fn(|o| points.iter().map(|p| p[o]).sum::<f64>() / n)
}

/// Anchor for one time sample from the model's outputs at the two poles:
/// the mean at each pole, or with `antipodal` the pair `±(m_N − m_S)/2`.
pub fn anchor_from_outputs(t: f64, north: &[[f64; 3]], south: &[[f64; 3]], antipodal: bool) -> PoleAnchor {
    let (m_n, m_s) = (mean3(north), mean3(south));
    if antipodal {
        let r: [f64; 3] = std::array::from_fn(|o| 0.5 * (m_n[o] - m_s[o]));
        PoleAnchor {
            t,
            north: r,
            south: r.map(|x| -x),
        }
    } else {
        PoleAnchor {
            t,
            north: m_n,
            south: m_s,
        }
    }
}

/// `Σ|X_N − anchor_N|² + Σ|X_S − anchor_S|²`.
pub fn pole_position_penalty(anchor: &PoleAnchor, north: &[[f64; 3]], south: &[[f64; 3]]) -> f64 {
    let sq = |x: &[f64; 3], a: &[f64; 3]| (0..3).map(|o| (x[o] - a[o]).powi(2)).sum::<f64>();
    north.iter().map(|x| sq(x, &anchor.north)).sum::<f64>()
        + south.iter().map(|x| sq(x, &anchor.south)).sum::<f64>()
}

/// One anchor per pole group of `batch`, computed from `eval`.
pub fn pole_anchors<E: Evaluator + ?Sized>(
    eval: &E,
    batch: &SampleBatch,
    antipodal: bool,
) -> Result<Vec<PoleAnchor>> {
    if batch.pole.is_empty() {
        return Ok(Vec::new());
    }
    check_dims(batch, eval.input_dim(), eval.output_dim())?;
    let values = eval.evaluate(&batch.pole, JetOrder::Value)?;
    let k = batch.pole_group;
    let as_points = |v: &[f64]| -> Vec<[f64; 3]> {
        v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    };
    Ok(values
        .chunks_exact(6 * k)
        .zip(batch.pole.chunks_exact(6 * k))
        .map(|(v, pts)| {
            anchor_from_outputs(pts[2], &as_points(&v[..3 * k]), &as_points(&v[3 * k..]), antipodal)
        })
        .collect())
}

#[cfg(test)]
mod tests;
