use rand::Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::gradengine::Tensor2;
use crate::rng;

/// Query/key/value projections of one selection head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    /// `d × d_A/H`
    pub query_pop: Tensor2,
    /// `d × d_A/H`
    pub key_pop: Tensor2,
    /// `1 × d_A/H`
    pub query_fit: Tensor2,
    /// `1 × d_A/H`
    pub key_fit: Tensor2,
    /// `d × d_A/H`
    pub value: Tensor2,
}

/// All weights of a single layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
    /// Crossover MLP: `d_A × d_M`, `1 × d_M`, `d_M × d`, `1 × d`.
    pub cross_w1: Tensor2,
    pub cross_b1: Tensor2,
    pub cross_w2: Tensor2,
    pub cross_b2: Tensor2,
    /// Gene attention projections, each `1 × d_A`.
    pub query_gene: Tensor2,
    pub key_gene: Tensor2,
    pub value_gene: Tensor2,
    /// Mutation MLP: `d_A × d_M`, `1 × d_M`, `d_M × 1`, `1 × 1`.
    pub mut_w3: Tensor2,
    pub mut_b3: Tensor2,
    pub mut_w4: Tensor2,
    pub mut_b4: Tensor2,
}

/// How the output projections (`W₂, b₂, W₄, b₄`) start out.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum OutputInit {
    /// Zero output layers: the model starts as the identity map.
    #[default]
    Zero,
    /// Output weights drawn like every other weight matrix, times `gain`.
    Xavier { gain: f64 },
}

impl LayerParams {
    pub fn tensors(&self) -> Vec<&Tensor2> {
        let mut out = Vec::with_capacity(self.heads.len() * 5 + 11);
        for h in &self.heads {
            out.extend([&h.query_pop, &h.key_pop, &h.query_fit, &h.key_fit, &h.value]);
        }
        out.extend([
            &self.cross_w1,
            &self.cross_b1,
            &self.cross_w2,
            &self.cross_b2,
            &self.query_gene,
            &self.key_gene,
            &self.value_gene,
            &self.mut_w3,
            &self.mut_b3,
            &self.mut_w4,
            &self.mut_b4,
        ]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        let mut out = Vec::with_capacity(self.heads.len() * 5 + 11);
        for h in &mut self.heads {
            out.extend([
                &mut h.query_pop,
                &mut h.key_pop,
                &mut h.query_fit,
                &mut h.key_fit,
                &mut h.value,
            ]);
        }
        out.extend([
            &mut self.cross_w1,
            &mut self.cross_b1,
            &mut self.cross_w2,
            &mut self.cross_b2,
            &mut self.query_gene,
            &mut self.key_gene,
            &mut self.value_gene,
            &mut self.mut_w3,
            &mut self.mut_b3,
            &mut self.mut_w4,
            &mut self.mut_b4,
        ]);
        out
    }
}

/// Expected shape of every tensor of one layer, in canonical order.
pub fn layer_shapes(cfg: &ModelConfig) -> Vec<(usize, usize)> {
    let (d, da, dm, hd) = (cfg.dim, cfg.embed_dim, cfg.hidden_dim, cfg.head_dim());
    let mut shapes = Vec::with_capacity(cfg.heads * 5 + 11);
    for _ in 0..cfg.heads {
        shapes.extend([(d, hd), (d, hd), (1, hd), (1, hd), (d, hd)]);
    }
    shapes.extend([
        (da, dm),
        (1, dm),
        (dm, d),
        (1, d),
        (1, da),
        (1, da),
        (1, da),
        (da, dm),
        (1, dm),
        (dm, 1),
        (1, 1),
    ]);
    shapes
}

/// Learnable weights of all `L` layers plus the architecture they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    layers: Vec<LayerParams>,
}

impl ModelParams {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    /// Flattened view in canonical order (layer-major).
    pub fn tensors(&self) -> Vec<&Tensor2> {
        self.layers.iter().flat_map(LayerParams::tensors).collect()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|t| t.shape()).collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_tensors(&self) -> Vec<Tensor2> {
        self.tensors().into_iter().cloned().collect()
    }

    /// Applies `f(param, index)` to every tensor in canonical order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut Tensor2, usize)) {
        let mut i = 0;
        for layer in &mut self.layers {
            for t in layer.tensors_mut() {
                f(t, i);
                i += 1;
            }
        }
    }

    /// Rebuilds parameters from a flat tensor list in canonical order.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor2>) -> Result<Self> {
        config.validate()?;
        let per_layer = layer_shapes(&config);
        if tensors.len() != per_layer.len() * config.layers {
            return Err(Error::shape(
                "ModelParams::from_tensors",
                format!(
                    "expected {} tensors, got {}",
                    per_layer.len() * config.layers,
                    tensors.len()
                ),
            ));
        }
        let mut it = tensors.into_iter();
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let mut take = |shape: (usize, usize)| -> Result<Tensor2> {
                let t = it.next().expect("length checked above");
                if t.shape() != shape {
                    return Err(Error::shape(
                        "ModelParams::from_tensors",
                        format!("expected {shape:?}, got {:?}", t.shape()),
                    ));
                }
                Ok(t)
            };
            let mut shapes = per_layer.iter().copied();
            let mut next = || take(shapes.next().expect("shape list matches layout"));
            let mut heads = Vec::with_capacity(config.heads);
            for _ in 0..config.heads {
                heads.push(HeadParams {
                    query_pop: next()?,
                    key_pop: next()?,
                    query_fit: next()?,
                    key_fit: next()?,
                    value: next()?,
                });
            }
            layers.push(LayerParams {
                heads,
                cross_w1: next()?,
                cross_b1: next()?,
                cross_w2: next()?,
                cross_b2: next()?,
                query_gene: next()?,
                key_gene: next()?,
                value_gene: next()?,
                mut_w3: next()?,
                mut_b3: next()?,
                mut_w4: next()?,
                mut_b4: next()?,
            });
        }
        Ok(Self { config, layers })
    }
}

fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor2::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound))
}

/// Identity-initialised parameters: Xavier-uniform weights, zero biases and
/// zero output projections, so `forward(P, F) = P` exactly.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    init_params_with(cfg, seed, OutputInit::Zero)
}

pub fn init_params_with(cfg: &ModelConfig, seed: u64, output: OutputInit) -> Result<ModelParams> {
    cfg.validate()?;
    let (d, da, dm, hd) = (cfg.dim, cfg.embed_dim, cfg.hidden_dim, cfg.head_dim());
    let mut rng = rng::keyed(seed, &[0x1417]);
    let out_weight = |rows: usize, cols: usize, rng: &mut rng::StdRng| match output {
        OutputInit::Zero => Tensor2::zeros(rows, cols),
        OutputInit::Xavier { gain } => xavier(rows, cols, rng).map(|v| v * gain),
    };
    let layers = (0..cfg.layers)
        .map(|_| {
            let heads = (0..cfg.heads)
                .map(|_| HeadParams {
                    query_pop: xavier(d, hd, &mut rng),
                    key_pop: xavier(d, hd, &mut rng),
                    query_fit: xavier(1, hd, &mut rng),
                    key_fit: xavier(1, hd, &mut rng),
                    value: xavier(d, hd, &mut rng),
                })
                .collect();
            let cross_w1 = xavier(da, dm, &mut rng);
            let cross_w2 = out_weight(dm, d, &mut rng);
            let query_gene = xavier(1, da, &mut rng);
            let key_gene = xavier(1, da, &mut rng);
            let value_gene = xavier(1, da, &mut rng);
            let mut_w3 = xavier(da, dm, &mut rng);
            let mut_w4 = out_weight(dm, 1, &mut rng);
            LayerParams {
                heads,
                cross_w1,
                cross_b1: Tensor2::zeros(1, dm),
                cross_w2,
                cross_b2: Tensor2::zeros(1, d),
                query_gene,
                key_gene,
                value_gene,
                mut_w3,
                mut_b3: Tensor2::zeros(1, dm),
                mut_w4,
                mut_b4: Tensor2::zeros(1, 1),
            }
        })
        .collect();
    Ok(ModelParams {
        config: cfg.clone(),
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            dim: 6,
            embed_dim: 8,
            heads: 2,
            hidden_dim: 5,
            layers: 2,
            ..ModelConfig::scratch_preset(6)
        }
    }

    #[test]
    fn shapes_follow_layout() {
        let p = init_params(&cfg(), 3).unwrap();
        let shapes = p.shapes();
        assert_eq!(shapes.len(), 2 * (2 * 5 + 11));
        assert_eq!(&shapes[..21], layer_shapes(&cfg()).as_slice());
        assert_eq!(shapes[0], (6, 4));
        assert_eq!(shapes[2], (1, 4));
    }

    #[test]
    fn same_seed_same_params() {
        assert_eq!(
            init_params(&cfg(), 7).unwrap(),
            init_params(&cfg(), 7).unwrap()
        );
        assert_ne!(
            init_params(&cfg(), 7).unwrap(),
            init_params(&cfg(), 8).unwrap()
        );
    }

    #[test]
    fn output_layers_and_biases_start_at_zero() {
        let p = init_params(&cfg(), 1).unwrap();
        for l in p.layers() {
            for t in [
                &l.cross_w2,
                &l.cross_b2,
                &l.mut_w4,
                &l.mut_b4,
                &l.cross_b1,
                &l.mut_b3,
            ] {
                assert!(t.data().iter().all(|&v| v == 0.0));
            }
        }
        let q = init_params_with(&cfg(), 1, OutputInit::Xavier { gain: 1.0 }).unwrap();
        assert!(q.layers()[0].cross_w2.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn weight_variance_matches_xavier() {
        // U(-a, a) with a = sqrt(6/(fan_in+fan_out)) has variance 2/(fan_in+fan_out).
        let c = ModelConfig {
            dim: 40,
            embed_dim: 64,
            heads: 1,
            hidden_dim: 48,
            layers: 1,
            ..ModelConfig::scratch_preset(40)
        };
        let p = init_params(&c, 11).unwrap();
        let l = &p.layers()[0];
        for (t, fan) in [
            (&l.heads[0].query_pop, 40 + 64),
            (&l.heads[0].value, 40 + 64),
            (&l.cross_w1, 64 + 48),
            (&l.mut_w3, 64 + 48),
        ] {
            let n = t.len() as f64;
            let mean = t.mean();
            let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let want = 2.0 / fan as f64;
            assert!((var / want - 1.0).abs() < 0.2, "variance {var} vs {want}");
        }
    }

    #[test]
    fn from_tensors_round_trip_and_errors() {
        let p = init_params(&cfg(), 5).unwrap();
        let back = ModelParams::from_tensors(cfg(), p.to_tensors()).unwrap();
        assert_eq!(back, p);
        let mut ts = p.to_tensors();
        ts.pop();
        assert!(ModelParams::from_tensors(cfg(), ts).is_err());
        let mut ts = p.to_tensors();
        ts[0] = Tensor2::zeros(1, 1);
        assert!(ModelParams::from_tensors(cfg(), ts).is_err());
    }
}
