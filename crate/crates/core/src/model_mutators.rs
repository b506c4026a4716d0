//! Model-level mutation operators: eight operators applied directly to a
//! trained model, no retraining.
//!
//! Weight level: GF (Gaussian fuzz). Neuron level: WS (shuffle incoming
//! weights), NEB (block a neuron's effect on following layers), NAI
//! (invert activation status by negating the pre-activation), NS (switch
//! two neurons of a layer). Layer level: LD (drop a shape-preserving
//! layer), LA (duplicate a layer in place), AFR (remove a layer's
//! activation function).
//!
//! Every operator is a pure function of (model, parameters, seed); the
//! original model is never touched and non-selected parameters stay
//! bitwise identical.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::mutant::{GenerationOutcome, MutantFailure, MutantMeta, MutantRecord, MutationLevel};
use crate::nncore::{
    model_checksum, ActivationFn, LayerKind, ModelSpec, ParamPair, TrainedModel,
};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelOpKind {
    GaussianFuzz,
    WeightShuffle,
    NeuronBlock,
    NeuronInvert,
    NeuronSwap,
    LayerDeactivate,
    LayerDuplicate,
    ActivationRemove,
}

impl ModelOpKind {
    pub fn code(self) -> &'static str {
        match self {
            ModelOpKind::GaussianFuzz => "GF",
            ModelOpKind::WeightShuffle => "WS",
            ModelOpKind::NeuronBlock => "NEB",
            ModelOpKind::NeuronInvert => "NAI",
            ModelOpKind::NeuronSwap => "NS",
            ModelOpKind::LayerDeactivate => "LD",
            ModelOpKind::LayerDuplicate => "LA",
            ModelOpKind::ActivationRemove => "AFR",
        }
    }

    pub fn is_layer_level(self) -> bool {
        matches!(
            self,
            ModelOpKind::LayerDeactivate
                | ModelOpKind::LayerDuplicate
                | ModelOpKind::ActivationRemove
        )
    }

    pub const WEIGHT_NEURON_LEVEL: [ModelOpKind; 5] = [
        ModelOpKind::GaussianFuzz,
        ModelOpKind::WeightShuffle,
        ModelOpKind::NeuronBlock,
        ModelOpKind::NeuronInvert,
        ModelOpKind::NeuronSwap,
    ];

    pub const LAYER_LEVEL: [ModelOpKind; 3] = [
        ModelOpKind::LayerDeactivate,
        ModelOpKind::LayerDuplicate,
        ModelOpKind::ActivationRemove,
    ];
}

/// A fully-specified model-level mutation.
#[derive(Debug, Clone)]
pub struct ModelOp {
    pub kind: ModelOpKind,
    /// Fraction of weights (GF) or neurons (WS/NEB/NAI/NS) to select.
    pub ratio: Option<f64>,
    /// GF standard deviation.
    pub gf_sigma: Option<f64>,
    pub seed: u64,
    /// Layer-level kinds: explicit target layer; drawn uniformly among
    /// eligible layers when unset.
    pub target_layer: Option<usize>,
}

impl ModelOp {
    pub fn validate(&self) -> Result<()> {
        let needs_ratio = !self.kind.is_layer_level();
        match (needs_ratio, self.ratio) {
            (true, None) => {
                return Err(Error::InvalidOperator(format!(
                    "{} requires a ratio",
                    self.kind.code()
                )))
            }
            (true, Some(r)) if !(r > 0.0 && r <= 1.0) => {
                return Err(Error::InvalidOperator(format!(
                    "{} ratio {r} must lie in (0, 1]",
                    self.kind.code()
                )))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidOperator(format!(
                    "{} does not take a ratio",
                    self.kind.code()
                )))
            }
            _ => {}
        }
        match (self.kind, self.gf_sigma) {
            (ModelOpKind::GaussianFuzz, None) => {
                return Err(Error::InvalidOperator("GF requires gf_sigma".into()))
            }
            (ModelOpKind::GaussianFuzz, Some(s)) if !(s >= 0.0) => {
                return Err(Error::InvalidOperator(format!(
                    "GF sigma {s} must be >= 0"
                )))
            }
            (k, Some(_)) if k != ModelOpKind::GaussianFuzz => {
                return Err(Error::InvalidOperator(format!(
                    "{} does not take gf_sigma",
                    k.code()
                )))
            }
            _ => {}
        }
        if self.target_layer.is_some() && !self.kind.is_layer_level() {
            return Err(Error::InvalidOperator(format!(
                "{} does not take a target layer",
                self.kind.code()
            )));
        }
        Ok(())
    }
}

/// Outcome of applying one operator: the mutant plus provenance detail.
#[derive(Debug, Clone)]
pub struct OpOutcome {
    pub model: TrainedModel,
    /// Affected positions: weights for GF/NEB, neurons for WS/NAI/NS,
    /// 1 for layer-level operators.
    pub affected: usize,
    pub detail: Option<String>,
}

/// Identity of one neuron: a parameterized layer and an output unit
/// (Dense row / Conv output channel).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct NeuronRef {
    layer: usize,
    unit: usize,
}

/// Per-layer output-unit counts for parameterized layers.
fn neuron_layers(spec: &ModelSpec) -> Vec<(usize, usize)> {
    spec.layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match l.kind {
            LayerKind::Dense { output, .. } => Some((i, output)),
            LayerKind::Conv2D { out_channels, .. } => Some((i, out_channels)),
            _ => None,
        })
        .collect()
}

/// Incoming-weight count of one unit in a parameterized layer.
fn incoming_len(kind: LayerKind) -> usize {
    match kind {
        LayerKind::Dense { input, .. } => input,
        LayerKind::Conv2D {
            in_channels,
            kernel_h,
            kernel_w,
            ..
        } => in_channels * kernel_h * kernel_w,
        _ => 0,
    }
}

fn collect_neurons(spec: &ModelSpec, filter: impl Fn(usize, LayerKind) -> bool) -> Vec<NeuronRef> {
    let mut out = Vec::new();
    for (layer, units) in neuron_layers(spec) {
        if filter(layer, spec.layers[layer].kind) {
            for unit in 0..units {
                out.push(NeuronRef { layer, unit });
            }
        }
    }
    out
}

fn ceil_count(ratio: f64, pool: usize) -> usize {
    if pool == 0 {
        return 0;
    }
    ((ratio * pool as f64).ceil() as usize).clamp(1, pool)
}

/// GF: replace each selected weight w by a draw from Normal(w, sigma^2).
/// Bias values are not connection weights and are never selected.
pub fn mutate_gf(model: &TrainedModel, ratio: f64, sigma: f64, seed: u64) -> Result<TrainedModel> {
    gf_op(model, ratio, sigma, seed).map(|o| o.model)
}

fn gf_op(model: &TrainedModel, ratio: f64, sigma: f64, seed: u64) -> Result<OpOutcome> {
    let weight_lens: Vec<usize> = model
        .params()
        .iter()
        .map(|p| p.as_ref().map_or(0, |pair| pair.weights.numel()))
        .collect();
    let total: usize = weight_lens.iter().sum();
    if total == 0 {
        return Err(Error::NoEligibleTarget {
            op: "GF".into(),
            reason: "model has no weights".into(),
        });
    }
    if sigma == 0.0 {
        // Normal(w, 0) is the point mass at w; keep the model bit-identical.
        return Ok(OpOutcome {
            model: model.clone(),
            affected: 0,
            detail: None,
        });
    }
    let k = ceil_count(ratio, total);
    let mut rng = stream(seed, "gf");
    let mut picks: Vec<usize> = index::sample(&mut rng, total, k).into_iter().collect();
    picks.sort_unstable();

    let (spec, mut params) = model.clone().into_parts();
    for flat in picks {
        let (layer, offset) = locate(&weight_lens, flat);
        let w = params[layer]
            .as_mut()
            .expect("weight index maps to a parameterized layer");
        let old = w.weights.data()[offset];
        let z: f64 = rng.sample(StandardNormal);
        w.weights.data_mut()[offset] = (f64::from(old) + sigma * z) as f32;
    }
    Ok(OpOutcome {
        model: TrainedModel::new(spec, params)?,
        affected: k,
        detail: None,
    })
}

fn locate(lens: &[usize], mut flat: usize) -> (usize, usize) {
    for (i, &len) in lens.iter().enumerate() {
        if flat < len {
            return (i, flat);
        }
        flat -= len;
    }
    unreachable!("flat index within total length");
}

/// WS: permute the incoming-weight vector of each selected neuron.
pub fn mutate_ws(model: &TrainedModel, ratio: f64, seed: u64) -> Result<TrainedModel> {
    ws_op(model, ratio, seed).map(|o| o.model)
}

fn ws_op(model: &TrainedModel, ratio: f64, seed: u64) -> Result<OpOutcome> {
    let pool = collect_neurons(model.spec(), |_, kind| incoming_len(kind) >= 2);
    if pool.is_empty() {
        return Err(Error::NoEligibleTarget {
            op: "WS".into(),
            reason: "no neuron has at least two incoming weights".into(),
        });
    }
    let k = ceil_count(ratio, pool.len());
    let mut rng = stream(seed, "ws");
    let picks = index::sample(&mut rng, pool.len(), k);
    let (spec, mut params) = model.clone().into_parts();
    for pick in picks {
        let NeuronRef { layer, unit } = pool[pick];
        let len = incoming_len(spec.layers[layer].kind);
        let pair = params[layer].as_mut().expect("neuron layer has params");
        let row = &mut pair.weights.data_mut()[unit * len..(unit + 1) * len];
        // Fisher-Yates on the incoming weights.
        for i in (1..len).rev() {
            let j = rng.random_range(0..=i);
            row.swap(i, j);
        }
    }
    Ok(OpOutcome {
        model: TrainedModel::new(spec, params)?,
        affected: k,
        detail: None,
    })
}

/// How a neuron's output reaches the next parameterized layer.
enum Influence {
    /// A conv output channel.
    Channel(usize),
    /// A contiguous run of flat positions (after a Flatten or from a
    /// Dense unit).
    Flat(std::ops::Range<usize>),
}

/// NEB: zero every next-layer weight that consumes the neuron's output.
/// Neurons of the last parameterized layer have no next layer and are
/// excluded from selection; a model with no eligible neuron is returned
/// unchanged.
pub fn mutate_neb(model: &TrainedModel, ratio: f64, seed: u64) -> Result<TrainedModel> {
    neb_op(model, ratio, seed).map(|o| o.model)
}

fn neb_op(model: &TrainedModel, ratio: f64, seed: u64) -> Result<OpOutcome> {
    let spec = model.spec();
    let param_layers: Vec<usize> = neuron_layers(spec).iter().map(|&(i, _)| i).collect();
    let last_param = param_layers.last().copied();
    let pool = collect_neurons(spec, |layer, _| Some(layer) != last_param);
    if pool.is_empty() {
        return Ok(OpOutcome {
            model: model.clone(),
            affected: 0,
            detail: None,
        });
    }
    let k = ceil_count(ratio, pool.len());
    let mut rng = stream(seed, "neb");
    let picks = index::sample(&mut rng, pool.len(), k);
    let (spec, mut params) = model.clone().into_parts();
    let input_shapes = spec.layer_input_shapes()?;
    let mut zeroed = 0usize;
    for pick in picks {
        let n = pool[pick];
        zeroed += block_downstream(&spec, &mut params, &input_shapes, n)?;
    }
    Ok(OpOutcome {
        model: TrainedModel::new(spec, params)?,
        affected: zeroed,
        detail: None,
    })
}

/// Zero the next parameterized layer's weights that read `neuron`'s
/// output; returns how many weight positions were written.
fn block_downstream(
    spec: &ModelSpec,
    params: &mut [Option<ParamPair>],
    input_shapes: &[Vec<usize>],
    neuron: NeuronRef,
) -> Result<usize> {
    let mut influence = match spec.layers[neuron.layer].kind {
        LayerKind::Dense { .. } => Influence::Flat(neuron.unit..neuron.unit + 1),
        LayerKind::Conv2D { .. } => Influence::Channel(neuron.unit),
        _ => unreachable!("neuron layers are parameterized"),
    };
    for i in neuron.layer + 1..spec.layers.len() {
        match spec.layers[i].kind {
            LayerKind::Activation(_) | LayerKind::MaxPool2x2 => {}
            LayerKind::Flatten => {
                if let Influence::Channel(c) = influence {
                    let [_, h, w] = *input_shapes[i].as_slice() else {
                        unreachable!("flatten after conv sees rank-3 input");
                    };
                    influence = Influence::Flat(c * h * w..(c + 1) * h * w);
                }
            }
            LayerKind::Dense { input, output } => {
                let Influence::Flat(range) = influence else {
                    unreachable!("dense input is rank 1, so influence is flat");
                };
                let pair = params[i].as_mut().expect("dense has params");
                let w = pair.weights.data_mut();
                for o in 0..output {
                    for p in range.clone() {
                        w[o * input + p] = 0.0;
                    }
                }
                return Ok(output * range.len());
            }
            LayerKind::Conv2D {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
            } => {
                let Influence::Channel(c) = influence else {
                    unreachable!("conv input is rank 3, so influence is a channel");
                };
                let pair = params[i].as_mut().expect("conv has params");
                let w = pair.weights.data_mut();
                let k_area = kernel_h * kernel_w;
                for o in 0..out_channels {
                    let start = (o * in_channels + c) * k_area;
                    for v in &mut w[start..start + k_area] {
                        *v = 0.0;
                    }
                }
                return Ok(out_channels * k_area);
            }
        }
    }
    unreachable!("eligible neurons have a following parameterized layer");
}

/// NAI: negate the selected neuron's incoming weights and bias, so its
/// pre-activation becomes exactly the negation of the original.
pub fn mutate_nai(model: &TrainedModel, ratio: f64, seed: u64) -> Result<TrainedModel> {
    nai_op(model, ratio, seed).map(|o| o.model)
}

fn nai_op(model: &TrainedModel, ratio: f64, seed: u64) -> Result<OpOutcome> {
    let pool = collect_neurons(model.spec(), |_, _| true);
    if pool.is_empty() {
        return Err(Error::NoEligibleTarget {
            op: "NAI".into(),
            reason: "model has no parameterized layer".into(),
        });
    }
    let k = ceil_count(ratio, pool.len());
    let mut rng = stream(seed, "nai");
    let picks = index::sample(&mut rng, pool.len(), k);
    let (spec, mut params) = model.clone().into_parts();
    for pick in picks {
        let NeuronRef { layer, unit } = pool[pick];
        let len = incoming_len(spec.layers[layer].kind);
        let pair = params[layer].as_mut().expect("neuron layer has params");
        for v in &mut pair.weights.data_mut()[unit * len..(unit + 1) * len] {
            *v = -*v;
        }
        let b = &mut pair.bias.data_mut()[unit];
        *b = -*b;
    }
    Ok(OpOutcome {
        model: TrainedModel::new(spec, params)?,
        affected: k,
        detail: None,
    })
}

/// NS: swap the incoming-weight rows and biases of disjoint neuron pairs
/// within single layers, exchanging the neurons' influence on the next
/// layer. ceil(ratio * eligible) neurons form ceil(k/2) pairs; layers with
/// fewer than two neurons are ineligible, and a model with no capacity is
/// returned unchanged.
pub fn mutate_ns(model: &TrainedModel, ratio: f64, seed: u64) -> Result<TrainedModel> {
    ns_op(model, ratio, seed).map(|o| o.model)
}

fn ns_op(model: &TrainedModel, ratio: f64, seed: u64) -> Result<OpOutcome> {
    let spec = model.spec();
    let eligible_layers: Vec<(usize, usize)> = neuron_layers(spec)
        .into_iter()
        .filter(|&(_, units)| units >= 2)
        .collect();
    let eligible_neurons: usize = eligible_layers.iter().map(|&(_, u)| u).sum();
    if eligible_neurons == 0 {
        return Ok(OpOutcome {
            model: model.clone(),
            affected: 0,
            detail: None,
        });
    }
    let k = ceil_count(ratio, eligible_neurons);
    let pairs_wanted = k.div_ceil(2);
    let mut rng = stream(seed, "ns");
    let (spec, mut params) = model.clone().into_parts();

    // Per-layer pools of not-yet-swapped units.
    let mut pools: Vec<(usize, Vec<usize>)> = eligible_layers
        .iter()
        .map(|&(layer, units)| (layer, (0..units).collect()))
        .collect();
    let mut swapped = 0usize;
    for _ in 0..pairs_wanted {
        let live: Vec<usize> = (0..pools.len()).filter(|&i| pools[i].1.len() >= 2).collect();
        let Some(&pool_idx) = pick_uniform(&live, &mut rng) else {
            break;
        };
        let (layer, units) = &mut pools[pool_idx];
        let a = units.swap_remove(rng.random_range(0..units.len()));
        let b = units.swap_remove(rng.random_range(0..units.len()));
        let len = incoming_len(spec.layers[*layer].kind);
        let pair = params[*layer].as_mut().expect("neuron layer has params");
        swap_rows(pair.weights.data_mut(), len, a, b);
        pair.bias.data_mut().swap(a, b);
        swapped += 2;
    }
    Ok(OpOutcome {
        model: TrainedModel::new(spec, params)?,
        affected: swapped,
        detail: None,
    })
}

fn pick_uniform<'a, T>(items: &'a [T], rng: &mut impl Rng) -> Option<&'a T> {
    if items.is_empty() {
        None
    } else {
        Some(&items[rng.random_range(0..items.len())])
    }
}

fn swap_rows(data: &mut [f32], row_len: usize, a: usize, b: usize) {
    for i in 0..row_len {
        data.swap(a * row_len + i, b * row_len + i);
    }
}

/// LD: remove one shape-preserving, non-output layer.
pub fn mutate_ld(model: &TrainedModel, target_layer: Option<usize>, seed: u64) -> Result<TrainedModel> {
    ld_op(model, target_layer, seed).map(|o| o.model)
}

fn ld_op(model: &TrainedModel, target_layer: Option<usize>, seed: u64) -> Result<OpOutcome> {
    let target = choose_layer_target(
        "LD",
        &model.spec().shape_preserving_layers()?,
        target_layer,
        seed,
    )?;
    let (mut spec, mut params) = model.clone().into_parts();
    spec.layers.remove(target);
    params.remove(target);
    Ok(OpOutcome {
        model: TrainedModel::new(spec, params)?,
        affected: 1,
        detail: Some(format!("removed layer {target}")),
    })
}

/// LA: duplicate one shape-preserving layer (parameters copied) and insert
/// the copy immediately after its original.
pub fn mutate_la(model: &TrainedModel, target_layer: Option<usize>, seed: u64) -> Result<TrainedModel> {
    la_op(model, target_layer, seed).map(|o| o.model)
}

fn la_op(model: &TrainedModel, target_layer: Option<usize>, seed: u64) -> Result<OpOutcome> {
    let target = choose_layer_target(
        "LA",
        &model.spec().shape_preserving_layers()?,
        target_layer,
        seed,
    )?;
    let (mut spec, mut params) = model.clone().into_parts();
    let layer_copy = spec.layers[target];
    let param_copy = params[target].clone();
    spec.layers.insert(target + 1, layer_copy);
    params.insert(target + 1, param_copy);
    Ok(OpOutcome {
        model: TrainedModel::new(spec, params)?,
        affected: 1,
        detail: Some(format!("duplicated layer {target}")),
    })
}

/// AFR: set one hidden layer's activation attribute to Identity. The
/// softmax output layer and layers already at Identity are ineligible.
pub fn mutate_afr(model: &TrainedModel, target_layer: Option<usize>, seed: u64) -> Result<TrainedModel> {
    afr_op(model, target_layer, seed).map(|o| o.model)
}

fn afr_op(model: &TrainedModel, target_layer: Option<usize>, seed: u64) -> Result<OpOutcome> {
    let eligible = afr_eligible(model.spec());
    let target = choose_layer_target("AFR", &eligible, target_layer, seed)?;
    let (mut spec, params) = model.clone().into_parts();
    spec.layers[target].activation = ActivationFn::Identity;
    Ok(OpOutcome {
        model: TrainedModel::new(spec, params)?,
        affected: 1,
        detail: Some(format!("activation removed from layer {target}")),
    })
}

pub(crate) fn afr_eligible(spec: &ModelSpec) -> Vec<usize> {
    spec.layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.has_params() && l.activation == ActivationFn::Relu)
        .map(|(i, _)| i)
        .collect()
}

fn choose_layer_target(
    op: &str,
    eligible: &[usize],
    requested: Option<usize>,
    seed: u64,
) -> Result<usize> {
    if eligible.is_empty() {
        return Err(Error::NoEligibleTarget {
            op: op.into(),
            reason: "no eligible layer".into(),
        });
    }
    match requested {
        Some(t) if eligible.contains(&t) => Ok(t),
        Some(t) => Err(Error::NoEligibleTarget {
            op: op.into(),
            reason: format!("layer {t} is not eligible (eligible: {eligible:?})"),
        }),
        None => {
            let mut rng = stream(seed, "layer-target");
            Ok(eligible[rng.random_range(0..eligible.len())])
        }
    }
}

/// Apply one operator, returning the mutant plus provenance detail.
pub fn apply_model_op(model: &TrainedModel, op: &ModelOp) -> Result<OpOutcome> {
    op.validate()?;
    match op.kind {
        ModelOpKind::GaussianFuzz => gf_op(
            model,
            op.ratio.expect("validated"),
            op.gf_sigma.expect("validated"),
            op.seed,
        ),
        ModelOpKind::WeightShuffle => ws_op(model, op.ratio.expect("validated"), op.seed),
        ModelOpKind::NeuronBlock => neb_op(model, op.ratio.expect("validated"), op.seed),
        ModelOpKind::NeuronInvert => nai_op(model, op.ratio.expect("validated"), op.seed),
        ModelOpKind::NeuronSwap => ns_op(model, op.ratio.expect("validated"), op.seed),
        ModelOpKind::LayerDeactivate => ld_op(model, op.target_layer, op.seed),
        ModelOpKind::LayerDuplicate => la_op(model, op.target_layer, op.seed),
        ModelOpKind::ActivationRemove => afr_op(model, op.target_layer, op.seed),
    }
}

/// Half the standard deviation of the model's own weights; the GF default
/// when no sigma is configured.
pub fn default_gf_sigma(model: &TrainedModel) -> f64 {
    let mut n = 0usize;
    let mut mean = 0.0f64;
    for p in model.params().iter().flatten() {
        for &w in p.weights.data() {
            n += 1;
            mean += f64::from(w);
        }
    }
    if n == 0 {
        return 0.0;
    }
    mean /= n as f64;
    let mut var = 0.0f64;
    for p in model.params().iter().flatten() {
        for &w in p.weights.data() {
            let d = f64::from(w) - mean;
            var += d * d;
        }
    }
    0.5 * (var / n as f64).sqrt()
}

/// Generation settings for [`generate_model_mutants`].
#[derive(Debug, Clone)]
pub struct ModelMutantConfig {
    /// Mutants per operator (weight/neuron level produce exactly this
    /// many; layer level caps at the number of eligible targets).
    pub budget_per_op: usize,
    pub ratio: f64,
    /// GF sigma; `None` uses [`default_gf_sigma`].
    pub gf_sigma: Option<f64>,
    pub seed: u64,
}

impl Default for ModelMutantConfig {
    fn default() -> Self {
        Self {
            budget_per_op: 50,
            ratio: 0.01,
            gf_sigma: None,
            seed: 0,
        }
    }
}

/// Generate up to `budget_per_op` mutants for each of the eight operators.
///
/// Weight/neuron-level operators draw fresh seeds per mutant; layer-level
/// operators enumerate eligible targets (one mutant per target) and stop
/// early when targets run out. Mutants that come out bit-identical to the
/// original (empty selections) are skipped and counted as shortfalls.
pub fn generate_model_mutants(
    model: &TrainedModel,
    cfg: &ModelMutantConfig,
) -> GenerationOutcome {
    let mut outcome = GenerationOutcome::default();
    let parent = model_checksum(model);
    let sigma = cfg.gf_sigma.unwrap_or_else(|| default_gf_sigma(model));

    for kind in ModelOpKind::WEIGHT_NEURON_LEVEL {
        let mut produced = 0usize;
        for i in 0..cfg.budget_per_op {
            let label = format!("model-op/{}/{i}", kind.code());
            let op = ModelOp {
                kind,
                ratio: Some(cfg.ratio),
                gf_sigma: (kind == ModelOpKind::GaussianFuzz).then_some(sigma),
                seed: derive_seed(cfg.seed, &label),
                target_layer: None,
            };
            match apply_model_op(model, &op) {
                Ok(out) => {
                    if out.model.params_bit_eq(model) {
                        continue;
                    }
                    produced += 1;
                    outcome.mutants.push(make_record(
                        kind, i, &op, out, parent, cfg.ratio,
                    ));
                }
                Err(e) => outcome.failures.push(MutantFailure {
                    operator: kind.code().into(),
                    seed: op.seed,
                    reason: e.to_string(),
                }),
            }
        }
        if produced < cfg.budget_per_op {
            outcome
                .shortfalls
                .push((kind.code().into(), cfg.budget_per_op - produced));
        }
    }

    for kind in ModelOpKind::LAYER_LEVEL {
        let eligible = match kind {
            ModelOpKind::ActivationRemove => afr_eligible(model.spec()),
            _ => model
                .spec()
                .shape_preserving_layers()
                .unwrap_or_default(),
        };
        let take = eligible.len().min(cfg.budget_per_op);
        let mut produced = 0usize;
        for (i, &target) in eligible.iter().take(take).enumerate() {
            let label = format!("model-op/{}/{i}", kind.code());
            let op = ModelOp {
                kind,
                ratio: None,
                gf_sigma: None,
                seed: derive_seed(cfg.seed, &label),
                target_layer: Some(target),
            };
            match apply_model_op(model, &op) {
                Ok(out) => {
                    produced += 1;
                    outcome.mutants.push(make_record(
                        kind, i, &op, out, parent, cfg.ratio,
                    ));
                }
                Err(e) => outcome.failures.push(MutantFailure {
                    operator: kind.code().into(),
                    seed: op.seed,
                    reason: e.to_string(),
                }),
            }
        }
        if produced < cfg.budget_per_op {
            outcome
                .shortfalls
                .push((kind.code().into(), cfg.budget_per_op - produced));
        }
    }
    outcome
}

fn make_record(
    kind: ModelOpKind,
    index: usize,
    op: &ModelOp,
    out: OpOutcome,
    parent: u32,
    ratio: f64,
) -> MutantRecord {
    MutantRecord::new(
        MutantMeta {
            id: format!("{}-{index:03}", kind.code()),
            level: MutationLevel::Model,
            operator: kind.code().into(),
            scope: None,
            ratio: (!kind.is_layer_level()).then_some(ratio),
            sigma: op.gf_sigma,
            seed: op.seed,
            parent_checksum: parent,
            checksum: 0,
            affected: out.affected,
            detail: out.detail,
        },
        out.model,
    )
}
