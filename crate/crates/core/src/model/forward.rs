//! Forward pass of the operator stack, recorded on a [`Tape`].
//!
//! Per layer:
//!
//! ```text
//! A_h  = softmax_rows((P Wqp_h)(P Wkp_h)ᵀ + (F Wqf_h)(F Wkf_h)ᵀ) / √(d_A/H))
//! O_C  = [A_1 P Wv_1 | … | A_H P Wv_H]
//! P'   = P + Dropout(tanh(O_C W1 + b1)) W2 + b2
//! M_i  = softmax_rows((p_i Wqg)(p_i Wkg)ᵀ / √d_A)          p_i: d×1 column of P'
//! p̂_i  = p_i + Dropout(tanh(M_i p_i Wvg W3 + b3)) W4 + b4
//! ```
//!
//! The mutation is evaluated for all individuals at once by stacking the
//! `d×·` blocks of every individual into `(N·d)×·` matrices.

use super::config::ModelConfig;
use super::params::{LayerParams, ModelParams};
use crate::error::{Error, Result};
use crate::evolution::normalize_fitness;
use crate::gradengine::{DropoutMask, NodeId, Tape, Tensor2};
use crate::model::config::FitnessNorm;
use crate::rng;

/// Where in a layer a dropout mask is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Site {
    Crossover,
    Mutation,
}

/// Supplies the dropout mask belonging to one population row.
///
/// Crossover rows are `1×d_M`; mutation rows are `d×d_M` (one individual).
pub trait MaskSource {
    fn row_mask(
        &mut self,
        layer: usize,
        site: Site,
        row: usize,
        shape: (usize, usize),
        keep_prob: f64,
    ) -> Result<DropoutMask>;
}

/// Counter-based masks: row `r` of layer `l` draws from a stream keyed by
/// `(seed, stream, l, site, r)`, independent of evaluation order.
#[derive(Clone, Debug)]
pub struct KeyedMasks {
    seed: u64,
    stream: u64,
}

impl KeyedMasks {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }
}

impl MaskSource for KeyedMasks {
    fn row_mask(
        &mut self,
        layer: usize,
        site: Site,
        row: usize,
        (rows, cols): (usize, usize),
        keep_prob: f64,
    ) -> Result<DropoutMask> {
        if keep_prob >= 1.0 {
            return Ok(DropoutMask::all_kept(rows, cols));
        }
        let site_key = match site {
            Site::Crossover => 1,
            Site::Mutation => 2,
        };
        let mut r = rng::keyed(
            self.seed,
            &[self.stream, layer as u64, site_key, row as u64],
        );
        DropoutMask::sample(rows, cols, keep_prob, &mut r)
    }
}

/// Masks actually used by one layer of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerMasks {
    /// `N×d_M`, absent when the variant skips crossover.
    pub crossover: Option<DropoutMask>,
    /// `(N·d)×d_M`, absent when the variant skips mutation.
    pub mutation: Option<DropoutMask>,
}

/// Replays previously recorded masks.
#[derive(Clone, Debug)]
pub struct FrozenMasks {
    layers: Vec<LayerMasks>,
}

impl FrozenMasks {
    pub fn new(layers: Vec<LayerMasks>) -> Self {
        Self { layers }
    }

    /// Same masks reassigned to a permuted population: row `i` of the new
    /// population is row `order[i]` of the recorded one.
    pub fn permuted(&self, order: &[usize], dim: usize) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| LayerMasks {
                crossover: l.crossover.as_ref().map(|m| {
                    let rows: Vec<_> = order.iter().map(|&r| m.row_block(r, 1)).collect();
                    DropoutMask::vstack(&rows).expect("uniform parts")
                }),
                mutation: l.mutation.as_ref().map(|m| {
                    let rows: Vec<_> = order.iter().map(|&r| m.row_block(r * dim, dim)).collect();
                    DropoutMask::vstack(&rows).expect("uniform parts")
                }),
            })
            .collect();
        Self { layers }
    }
}

impl MaskSource for FrozenMasks {
    fn row_mask(
        &mut self,
        layer: usize,
        site: Site,
        row: usize,
        (rows, cols): (usize, usize),
        _keep_prob: f64,
    ) -> Result<DropoutMask> {
        let l = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::Usage(format!("no frozen masks for layer {layer}")))?;
        let m = match site {
            Site::Crossover => l.crossover.as_ref(),
            Site::Mutation => l.mutation.as_ref(),
        }
        .ok_or_else(|| Error::Usage(format!("no frozen {site:?} mask for layer {layer}")))?;
        if m.shape().1 != cols || (row + 1) * rows > m.shape().0 {
            return Err(Error::shape(
                "FrozenMasks",
                format!(
                    "mask {:?} cannot supply row {row} of {rows}x{cols}",
                    m.shape()
                ),
            ));
        }
        Ok(m.row_block(row * rows, rows))
    }
}

/// Per-layer matrices kept for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    /// Selection matrix averaged over heads (`N×N`).
    pub selection: Option<Tensor2>,
    /// Mutation matrix averaged over individuals (`d×d`).
    pub mutation: Option<Tensor2>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InspectionTrace {
    /// Raw fitness of the input population, used to rank individuals.
    pub fitness: Vec<f64>,
    pub layers: Vec<LayerTrace>,
}

/// A recorded forward pass. The tape stays alive so losses on the output
/// can be differentiated back to the parameters.
#[derive(Debug)]
pub struct ForwardPass {
    pub tape: Tape,
    pub output: NodeId,
    pub masks: Vec<LayerMasks>,
    pub trace: InspectionTrace,
}

impl ForwardPass {
    pub fn offspring(&self) -> &Tensor2 {
        self.tape.value(self.output)
    }
}

/// Parameter nodes of one layer, in canonical order.
pub(crate) struct LayerNodes {
    ids: Vec<NodeId>,
    heads: usize,
}

impl LayerNodes {
    fn bind(tape: &mut Tape, layer: &LayerParams, base: usize) -> Self {
        let ids = layer
            .tensors()
            .into_iter()
            .enumerate()
            .map(|(i, t)| tape.param(t.clone(), base + i))
            .collect();
        Self {
            ids,
            heads: layer.heads.len(),
        }
    }

    fn head(&self, h: usize) -> [NodeId; 5] {
        let s = &self.ids[h * 5..h * 5 + 5];
        [s[0], s[1], s[2], s[3], s[4]]
    }

    fn tail(&self, k: usize) -> NodeId {
        self.ids[self.heads * 5 + k]
    }
}

const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;
const QG: usize = 4;
const KG: usize = 5;
const VG: usize = 6;
const W3: usize = 7;
const B3: usize = 8;
const W4: usize = 9;
const B4: usize = 10;

fn selection_nodes(
    tape: &mut Tape,
    pop: NodeId,
    fit: NodeId,
    nodes: &LayerNodes,
    head_dim: usize,
) -> Result<Vec<NodeId>> {
    let scale = 1.0 / (head_dim as f64).sqrt();
    (0..nodes.heads)
        .map(|h| {
            let [qp, kp, qf, kf, _] = nodes.head(h);
            let q = tape.affine(pop, qp, None)?;
            let k = tape.affine(pop, kp, None)?;
            let a_pop = tape.matmul_nt(q, k)?;
            let qf = tape.affine(fit, qf, None)?;
            let kf = tape.affine(fit, kf, None)?;
            let a_fit = tape.matmul_nt(qf, kf)?;
            let scores = tape.add(a_pop, a_fit)?;
            let scores = tape.scale(scores, scale);
            Ok(tape.row_softmax(scores))
        })
        .collect()
}

fn crossover_nodes(
    tape: &mut Tape,
    pop: NodeId,
    selections: &[NodeId],
    nodes: &LayerNodes,
    mask: DropoutMask,
) -> Result<NodeId> {
    let mut heads = Vec::with_capacity(selections.len());
    for (h, &a) in selections.iter().enumerate() {
        let v = tape.affine(pop, nodes.head(h)[4], None)?;
        heads.push(tape.affine(a, v, None)?);
    }
    let oc = tape.concat_cols(&heads)?;
    let hidden = tape.affine(oc, nodes.tail(W1), Some(nodes.tail(B1)))?;
    let hidden = tape.tanh(hidden);
    let hidden = tape.dropout(hidden, mask)?;
    let delta = tape.affine(hidden, nodes.tail(W2), Some(nodes.tail(B2)))?;
    tape.add(pop, delta)
}

/// Returns the mutated population and the stacked `(N·d)×d` mutation matrices.
fn mutation_nodes(
    tape: &mut Tape,
    pop: NodeId,
    nodes: &LayerNodes,
    embed_dim: usize,
    mask: DropoutMask,
) -> Result<(NodeId, NodeId)> {
    let (n, d) = tape.value(pop).shape();
    let genes = tape.reshape(pop, n * d, 1)?;
    let q = tape.affine(genes, nodes.tail(QG), None)?;
    let k = tape.affine(genes, nodes.tail(KG), None)?;
    let scores = tape.block_matmul_nt(q, k, d)?;
    let scores = tape.scale(scores, 1.0 / (embed_dim as f64).sqrt());
    let m = tape.row_softmax(scores);
    let v = tape.affine(genes, nodes.tail(VG), None)?;
    let om = tape.block_matmul(m, v, d)?;
    let hidden = tape.affine(om, nodes.tail(W3), Some(nodes.tail(B3)))?;
    let hidden = tape.tanh(hidden);
    let hidden = tape.dropout(hidden, mask)?;
    let delta = tape.affine(hidden, nodes.tail(W4), Some(nodes.tail(B4)))?;
    let delta = tape.reshape(delta, n, d)?;
    Ok((tape.add(pop, delta)?, m))
}

fn collect_masks(
    source: &mut dyn MaskSource,
    layer: usize,
    site: Site,
    n: usize,
    shape: (usize, usize),
    keep: f64,
) -> Result<DropoutMask> {
    let rows = (0..n)
        .map(|r| {
            let m = source.row_mask(layer, site, r, shape, keep)?;
            if m.shape() != shape {
                return Err(Error::shape(
                    "mask source",
                    format!("expected {shape:?}, got {:?}", m.shape()),
                ));
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    DropoutMask::vstack(&rows)
}

fn mean_of_heads(tape: &Tape, heads: &[NodeId]) -> Tensor2 {
    let first = tape.value(heads[0]);
    let mut data = vec![0.0; first.len()];
    for &h in heads {
        for (acc, v) in data.iter_mut().zip(tape.value(h).data()) {
            *acc += v;
        }
    }
    let k = heads.len() as f64;
    Tensor2::from_raw(
        first.rows(),
        first.cols(),
        data.into_iter().map(|v| v / k).collect(),
    )
}

fn mean_of_blocks(stacked: &Tensor2, block: usize) -> Tensor2 {
    let count = stacked.rows() / block;
    let mut data = vec![0.0; block * block];
    for chunk in stacked.data().chunks_exact(block * block) {
        for (acc, v) in data.iter_mut().zip(chunk) {
            *acc += v;
        }
    }
    Tensor2::from_raw(
        block,
        block,
        data.into_iter().map(|v| v / count as f64).collect(),
    )
}

pub(crate) fn prepare_fitness(fitness: &Tensor2, cfg: &ModelConfig) -> Tensor2 {
    match cfg.fitness_norm {
        FitnessNorm::ZScore => normalize_fitness(fitness),
        FitnessNorm::Raw => fitness.clone(),
    }
}

fn check_inputs(pop: &Tensor2, fitness: &Tensor2, cfg: &ModelConfig) -> Result<()> {
    if pop.cols() != cfg.dim || pop.rows() == 0 {
        return Err(Error::shape(
            "forward",
            format!(
                "population {:?} for model dimension {}",
                pop.shape(),
                cfg.dim
            ),
        ));
    }
    if fitness.shape() != (pop.rows(), 1) {
        return Err(Error::shape(
            "forward",
            format!(
                "fitness {:?} for population {:?}",
                fitness.shape(),
                pop.shape()
            ),
        ));
    }
    Ok(())
}

/// Records the full `L`-layer forward pass onto `tape`.
///
/// Every layer sees the same normalised fitness; only the population flows
/// from one layer to the next.
pub fn record_forward(
    tape: &mut Tape,
    pop: &Tensor2,
    fitness: &Tensor2,
    params: &ModelParams,
    masks: &mut dyn MaskSource,
) -> Result<(NodeId, Vec<LayerMasks>, InspectionTrace)> {
    let cfg = params.config();
    check_inputs(pop, fitness, cfg)?;
    let n = pop.rows();
    let d = cfg.dim;
    let fit = tape.constant(prepare_fitness(fitness, cfg));
    let mut current = tape.constant(pop.clone());
    let per_layer = params.layers().first().map_or(0, |l| l.tensors().len());

    let mut used = Vec::with_capacity(cfg.layers);
    let mut traces = Vec::with_capacity(cfg.layers);
    for (li, layer) in params.layers().iter().enumerate() {
        let nodes = LayerNodes::bind(tape, layer, li * per_layer);
        let mut lm = LayerMasks {
            crossover: None,
            mutation: None,
        };
        let mut lt = LayerTrace {
            selection: None,
            mutation: None,
        };
        if cfg.variant.uses_crossover() {
            let sel = selection_nodes(tape, current, fit, &nodes, cfg.head_dim())?;
            lt.selection = Some(mean_of_heads(tape, &sel));
            let mask = collect_masks(
                masks,
                li,
                Site::Crossover,
                n,
                (1, cfg.hidden_dim),
                cfg.crossover_keep,
            )?;
            lm.crossover = Some(mask.clone());
            current = crossover_nodes(tape, current, &sel, &nodes, mask)?;
        }
        if cfg.variant.uses_mutation() {
            let mask = collect_masks(
                masks,
                li,
                Site::Mutation,
                n,
                (d, cfg.hidden_dim),
                cfg.mutation_keep,
            )?;
            lm.mutation = Some(mask.clone());
            let (out, m) = mutation_nodes(tape, current, &nodes, cfg.embed_dim, mask)?;
            lt.mutation = Some(mean_of_blocks(tape.value(m), d));
            current = out;
        }
        used.push(lm);
        traces.push(lt);
    }
    let trace = InspectionTrace {
        fitness: fitness.data().to_vec(),
        layers: traces,
    };
    Ok((current, used, trace))
}

/// `P̂ = OKAEM_W(P, F)` on a fresh tape.
pub fn forward(
    pop: &Tensor2,
    fitness: &Tensor2,
    params: &ModelParams,
    masks: &mut dyn MaskSource,
) -> Result<ForwardPass> {
    let mut tape = Tape::new();
    let (output, masks, trace) = record_forward(&mut tape, pop, fitness, params, masks)?;
    Ok(ForwardPass {
        tape,
        output,
        masks,
        trace,
    })
}

fn layer_cfg_check(layer: &LayerParams, cfg: &ModelConfig) -> Result<()> {
    let expected = super::params::layer_shapes(cfg);
    let got: Vec<_> = layer.tensors().iter().map(|t| t.shape()).collect();
    if got != expected {
        return Err(Error::shape("layer", "parameters do not match config"));
    }
    Ok(())
}

/// Selection matrices `A_h` (one `N×N` matrix per head) for an already
/// normalised fitness column.
pub fn selection_matrices(
    pop: &Tensor2,
    fitness_norm: &Tensor2,
    layer: &LayerParams,
    cfg: &ModelConfig,
) -> Result<Vec<Tensor2>> {
    layer_cfg_check(layer, cfg)?;
    check_inputs(pop, fitness_norm, cfg)?;
    let mut tape = Tape::new();
    let p = tape.constant(pop.clone());
    let f = tape.constant(fitness_norm.clone());
    let nodes = LayerNodes::bind(&mut tape, layer, 0);
    let sel = selection_nodes(&mut tape, p, f, &nodes, cfg.head_dim())?;
    Ok(sel.into_iter().map(|id| tape.value(id).clone()).collect())
}

/// Selection plus crossover of one layer with an explicit `N×d_M` mask.
pub fn crossover(
    pop: &Tensor2,
    fitness_norm: &Tensor2,
    layer: &LayerParams,
    cfg: &ModelConfig,
    mask: &DropoutMask,
) -> Result<Tensor2> {
    layer_cfg_check(layer, cfg)?;
    check_inputs(pop, fitness_norm, cfg)?;
    let mut tape = Tape::new();
    let p = tape.constant(pop.clone());
    let f = tape.constant(fitness_norm.clone());
    let nodes = LayerNodes::bind(&mut tape, layer, 0);
    let sel = selection_nodes(&mut tape, p, f, &nodes, cfg.head_dim())?;
    let out = crossover_nodes(&mut tape, p, &sel, &nodes, mask.clone())?;
    Ok(tape.value(out).clone())
}

/// Gene-level mutation of every row with an explicit `(N·d)×d_M` mask.
/// Also returns the per-individual mutation matrices stacked `(N·d)×d`.
pub fn mutate(
    pop: &Tensor2,
    layer: &LayerParams,
    cfg: &ModelConfig,
    mask: &DropoutMask,
) -> Result<(Tensor2, Tensor2)> {
    layer_cfg_check(layer, cfg)?;
    if pop.cols() != cfg.dim {
        return Err(Error::shape(
            "mutate",
            "population width differs from model dim",
        ));
    }
    let mut tape = Tape::new();
    let p = tape.constant(pop.clone());
    let nodes = LayerNodes::bind(&mut tape, layer, 0);
    let (out, m) = mutation_nodes(&mut tape, p, &nodes, cfg.embed_dim, mask.clone())?;
    Ok((tape.value(out).clone(), tape.value(m).clone()))
}
