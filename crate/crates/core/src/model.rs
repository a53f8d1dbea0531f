//! The multi-path restoration network and its weight-shared pathfinder.
//!
//! Layout: start conv (image → F), `blocks` dynamic blocks, end conv
//! (F → image) added onto the input. Each dynamic block runs a shared
//! conv + ReLU and then exactly one of `paths` branches: index 0 is the
//! parameter-free bypass, every other index a residual block of two 3×3
//! convs whose first conv is dilated by the path index.
//!
//! Path indices are 0-based throughout: 0 is the bypass.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::nn::{Conv2dOpts, ParamId, ParamStore, Tape, Tensor, Var};

pub const BYPASS: usize = 0;
const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Number of dynamic blocks.
    pub blocks: usize,
    /// Paths per block, bypass included.
    pub paths: usize,
    /// Conv layers in the pathfinder.
    pub pathfinder_convs: usize,
    /// Feature channels of the restoration trunk.
    pub features: usize,
    /// Recurrent hidden size of the pathfinder.
    pub hidden: usize,
    /// Channels of each pathfinder conv.
    pub pathfinder_width: usize,
    /// Image channels (1 or 3).
    pub channels: usize,
    /// Region edge length the FLOPs accountant reports for.
    pub patch: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::denoising()
    }
}

impl ModelConfig {
    /// Architecture for Gaussian denoising: 6 blocks, 2 paths, 2 pathfinder convs.
    pub fn denoising() -> Self {
        ModelConfig {
            blocks: 6,
            paths: 2,
            pathfinder_convs: 2,
            features: 32,
            hidden: 32,
            pathfinder_width: 8,
            channels: 1,
            patch: 63,
        }
    }

    /// Architecture for mixed blur/noise/compression: 5 blocks, 4 paths, 4 pathfinder convs.
    pub fn mixed() -> Self {
        ModelConfig {
            blocks: 5,
            paths: 4,
            pathfinder_convs: 4,
            channels: 3,
            ..ModelConfig::denoising()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::config(msg.to_string()));
        if self.blocks < 1 {
            return fail("at least one dynamic block is required");
        }
        if self.paths < 2 {
            return fail("each block needs the bypass plus at least one residual path");
        }
        if self.pathfinder_convs < 1 || self.features < 1 || self.hidden < 1 || self.pathfinder_width < 1 {
            return fail("pathfinder convs, features, hidden and pathfinder width must be positive");
        }
        if !matches!(self.channels, 1 | 3) {
            return fail("images must have 1 or 3 channels");
        }
        if self.patch < 9 {
            return fail("patch edge must be at least 9 pixels");
        }
        Ok(())
    }

    /// Dilation of the first conv on residual path `path` (1-based among residual paths).
    pub fn path_dilation(&self, path: usize) -> usize {
        path.max(1)
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvIds {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct ResidualIds {
    first: ConvIds,
    second: ConvIds,
    dilation: usize,
}

#[derive(Clone, Debug)]
struct BlockIds {
    shared: ConvIds,
    /// `paths[0]` is the bypass and owns nothing.
    paths: Vec<Option<ResidualIds>>,
}

#[derive(Clone, Debug)]
struct PathfinderIds {
    convs: Vec<ConvIds>,
    fc1: ConvIds,
    w_ih: ParamId,
    w_hh: ParamId,
    lstm_b: ParamId,
    fc2: ConvIds,
}

#[derive(Clone, Debug)]
struct Layout {
    start: ConvIds,
    blocks: Vec<BlockIds>,
    end: ConvIds,
    pathfinder: PathfinderIds,
}

/// Recurrent state threaded through the pathfinder across blocks.
#[derive(Clone, Copy, Debug)]
pub struct PathfinderState {
    pub h: Var,
    pub c: Var,
}

/// Per-block record of the policy and the action it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteStep {
    pub action: usize,
    pub probs: Vec<f32>,
    pub log_prob: f32,
}

/// The trajectory of one region through the network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RouteTrace {
    pub steps: Vec<RouteStep>,
}

impl RouteTrace {
    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// How actions are chosen during a forward pass.
pub enum RouteMode<'a> {
    /// Sample each action from the pathfinder's distribution.
    Train(&'a mut dyn RngCore),
    /// Take the most probable path, lowest index on ties.
    Test,
    /// Use the given actions; the pathfinder is not run.
    Forced(&'a [usize]),
    /// Use the given actions, still running the pathfinder to score them.
    Replay(&'a [usize]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectMode {
    Train,
    Test,
}

pub struct ForwardPass {
    pub restored: Var,
    pub actions: Vec<usize>,
    /// Present whenever the pathfinder ran.
    pub trace: Option<RouteTrace>,
    /// `log π(a_i | s_i)` nodes, one per block, when the pathfinder ran.
    pub log_probs: Vec<Var>,
    /// Block inputs `x_1..x_N`.
    pub block_inputs: Vec<Var>,
}

fn argmax(probs: &[f32]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

fn check_probs(probs: &[f32]) -> Result<f32> {
    if probs.is_empty() {
        return Err(Error::numeric("empty probability vector"));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::numeric(format!("invalid probabilities {probs:?}")));
    }
    let total: f32 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-4 {
        return Err(Error::numeric(format!("probabilities sum to {total}")));
    }
    Ok(total)
}

/// Picks a path index from a probability vector.
pub fn select_action(probs: &[f32], mode: SelectMode, rng: &mut dyn RngCore) -> Result<usize> {
    let total = check_probs(probs)?;
    Ok(match mode {
        SelectMode::Test => argmax(probs),
        SelectMode::Train => {
            let u: f32 = rng.random::<f32>() * total;
            let mut acc = 0.0;
            let mut last_nonzero = 0;
            for (i, p) in probs.iter().enumerate() {
                if *p > 0.0 {
                    last_nonzero = i;
                }
                acc += p;
                if u < acc {
                    return Ok(i);
                }
            }
            last_nonzero
        }
    })
}

fn uniform(rng: &mut dyn RngCore, n: usize, bound: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn init_conv(
    store: &mut ParamStore,
    rng: &mut dyn RngCore,
    name: &str,
    cin: usize,
    cout: usize,
    zero: bool,
) -> Result<ConvIds> {
    let n = cout * cin * KERNEL * KERNEL;
    let data = if zero {
        vec![0.0; n]
    } else {
        uniform(rng, n, (3.0 / (cin * KERNEL * KERNEL) as f32).sqrt())
    };
    let w = store.add(
        format!("{name}.weight"),
        Tensor::new([cout, cin, KERNEL, KERNEL], data)?,
    )?;
    let b = store.add(format!("{name}.bias"), Tensor::zeros([1, cout, 1, 1]))?;
    Ok(ConvIds { w, b })
}

fn init_dense(
    store: &mut ParamStore,
    rng: &mut dyn RngCore,
    name: &str,
    fin: usize,
    fout: usize,
    zero: bool,
) -> Result<ConvIds> {
    let data = if zero {
        vec![0.0; fin * fout]
    } else {
        uniform(rng, fin * fout, (3.0 / fin as f32).sqrt())
    };
    let w = store.add(format!("{name}.weight"), Tensor::new([fout, fin, 1, 1], data)?)?;
    let b = store.add(format!("{name}.bias"), Tensor::zeros([1, fout, 1, 1]))?;
    Ok(ConvIds { w, b })
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    layout: Layout,
}

impl Model {
    /// Fan-in scaled uniform init; the end conv and the pathfinder's output
    /// layer start at zero, so the model begins as the identity with a
    /// uniform policy.
    pub fn new(config: ModelConfig, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let f = config.features;
        let ch = config.channels;

        let start = init_conv(&mut store, rng, "start", ch, f, false)?;
        let mut blocks = Vec::with_capacity(config.blocks);
        for i in 0..config.blocks {
            let shared = init_conv(&mut store, rng, &format!("block{i}.shared"), f, f, false)?;
            let mut paths = vec![None];
            for p in 1..config.paths {
                let first = init_conv(&mut store, rng, &format!("block{i}.path{p}.conv1"), f, f, false)?;
                let second = init_conv(&mut store, rng, &format!("block{i}.path{p}.conv2"), f, f, false)?;
                paths.push(Some(ResidualIds {
                    first,
                    second,
                    dilation: config.path_dilation(p),
                }));
            }
            blocks.push(BlockIds { shared, paths });
        }
        let end = init_conv(&mut store, rng, "end", f, ch, true)?;

        let width = config.pathfinder_width;
        let mut pf_convs = Vec::with_capacity(config.pathfinder_convs);
        for c in 0..config.pathfinder_convs {
            let cin = if c == 0 { f } else { width };
            pf_convs.push(init_conv(
                &mut store,
                rng,
                &format!("pathfinder.conv{c}"),
                cin,
                width,
                false,
            )?);
        }
        let hidden = config.hidden;
        let fc1 = init_dense(&mut store, rng, "pathfinder.fc1", width, hidden, false)?;
        let lstm = init_dense(&mut store, rng, "pathfinder.lstm", hidden, 4 * hidden, false)?;
        let bound = (3.0 / hidden as f32).sqrt();
        let recurrent = uniform(rng, 4 * hidden * hidden, bound);
        let w_hh = store.add(
            "pathfinder.lstm.recurrent",
            Tensor::new([4 * hidden, hidden, 1, 1], recurrent)?,
        )?;
        let fc2 = init_dense(&mut store, rng, "pathfinder.fc2", hidden, config.paths, true)?;

        let layout = Layout {
            start,
            blocks,
            end,
            pathfinder: PathfinderIds {
                convs: pf_convs,
                fc1,
                w_ih: lstm.w,
                w_hh,
                lstm_b: lstm.b,
                fc2,
            },
        };
        Ok(Model { config, store, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Replaces every parameter from `store`, matching by name and extents.
    pub fn load_params(&mut self, store: ParamStore) -> Result<()> {
        if store.len() != self.store.len() {
            return Err(Error::config(format!(
                "checkpoint holds {} parameters, model has {}",
                store.len(),
                self.store.len()
            )));
        }
        for (_, p) in self.store.iter() {
            let other = store
                .by_name(&p.name)
                .ok_or_else(|| Error::config(format!("checkpoint lacks parameter `{}`", p.name)))?;
            if other.shape() != p.shape() {
                return Err(Error::config(format!(
                    "parameter `{}` has extents {:?}, expected {:?}",
                    p.name,
                    other.shape(),
                    p.shape()
                )));
            }
        }
        let mut ordered = ParamStore::new();
        for (_, p) in self.store.iter() {
            ordered.insert(store.by_name(&p.name).expect("checked above").clone())?;
        }
        self.store = ordered;
        Ok(())
    }

    /// Parameters of the pathfinder (θ).
    pub fn pathfinder_ids(&self) -> Vec<ParamId> {
        self.store
            .iter()
            .filter(|(_, p)| p.name.starts_with("pathfinder."))
            .map(|(id, _)| id)
            .collect()
    }

    /// Parameters of the restoration trunk.
    pub fn cnn_ids(&self) -> Vec<ParamId> {
        self.store
            .iter()
            .filter(|(_, p)| !p.name.starts_with("pathfinder."))
            .map(|(id, _)| id)
            .collect()
    }

    fn conv(&self, tape: &mut Tape, x: Var, ids: ConvIds, opts: Conv2dOpts) -> Result<Var> {
        let w = tape.param(&self.store, ids.w);
        let b = tape.param(&self.store, ids.b);
        tape.conv2d(x, w, b, opts)
    }

    fn dense(&self, tape: &mut Tape, x: Var, ids: ConvIds) -> Result<Var> {
        let w = tape.param(&self.store, ids.w);
        let b = tape.param(&self.store, ids.b);
        tape.linear(x, w, b)
    }

    /// Zero recurrent state for one region.
    pub fn initial_state(&self, tape: &mut Tape) -> PathfinderState {
        let shape = [1, self.config.hidden, 1, 1];
        PathfinderState {
            h: tape.leaf(Tensor::zeros(shape)),
            c: tape.leaf(Tensor::zeros(shape)),
        }
    }

    /// Policy over paths for block input `x`, as log-probabilities.
    pub fn pathfinder_policy(&self, tape: &mut Tape, x: Var, state: PathfinderState) -> Result<(Var, PathfinderState)> {
        let [n, c, _, _] = tape.shape(x);
        if n != 1 || c != self.config.features {
            return Err(Error::config(format!(
                "pathfinder expects (1, {}, h, w) features, got {:?}",
                self.config.features,
                tape.shape(x)
            )));
        }
        let pf = &self.layout.pathfinder;
        let stride2 = Conv2dOpts {
            stride: 2,
            padding: 1,
            dilation: 1,
        };
        let mut h = x;
        for ids in &pf.convs {
            let y = self.conv(tape, h, *ids, stride2)?;
            h = tape.relu(y);
        }
        let pooled = tape.global_avg_pool(h);
        let z = self.dense(tape, pooled, pf.fc1)?;
        let z = tape.relu(z);
        let w_ih = tape.param(&self.store, pf.w_ih);
        let w_hh = tape.param(&self.store, pf.w_hh);
        let b = tape.param(&self.store, pf.lstm_b);
        let (h_next, c_next) = tape.lstm_step(z, state.h, state.c, w_ih, w_hh, b)?;
        let logits = self.dense(tape, h_next, pf.fc2)?;
        let log_probs = tape.log_softmax(logits)?;
        Ok((log_probs, PathfinderState { h: h_next, c: c_next }))
    }

    /// `x_{i+1} = path_a(shared(x_i))` for block `block`.
    pub fn dynamic_block_forward(&self, tape: &mut Tape, x: Var, block: usize, action: usize) -> Result<Var> {
        let ids = self
            .layout
            .blocks
            .get(block)
            .ok_or_else(|| Error::usage(format!("block {block} out of range")))?;
        let path = ids
            .paths
            .get(action)
            .ok_or_else(|| Error::usage(format!("action {action} out of range for {} paths", self.config.paths)))?;
        let s = self.conv(tape, x, ids.shared, Conv2dOpts::same(KERNEL))?;
        let s = tape.relu(s);
        match path {
            None => Ok(s),
            Some(res) => {
                let r = self.conv(tape, s, res.first, Conv2dOpts::dilated(KERNEL, res.dilation))?;
                let r = tape.relu(r);
                let r = self.conv(tape, r, res.second, Conv2dOpts::same(KERNEL))?;
                tape.add(s, r)
            }
        }
    }

    fn start(&self, tape: &mut Tape, patch: Var) -> Result<Var> {
        let [n, c, h, w] = tape.shape(patch);
        if n != 1 || c != self.config.channels {
            return Err(Error::config(format!(
                "model expects (1, {}, h, w) patches, got {:?}",
                self.config.channels,
                tape.shape(patch)
            )));
        }
        if h < 9 || w < 9 {
            return Err(Error::config(format!("{h}x{w} patch is below the 9x9 minimum")));
        }
        self.conv(tape, patch, self.layout.start, Conv2dOpts::same(KERNEL))
    }

    /// `patch + end_conv(features)`.
    pub fn decode(&self, tape: &mut Tape, patch: Var, features: Var) -> Result<Var> {
        let correction = self.conv(tape, features, self.layout.end, Conv2dOpts::same(KERNEL))?;
        tape.add(patch, correction)
    }

    /// Full forward pass over one `(1, channels, h, w)` patch.
    pub fn forward(&self, tape: &mut Tape, patch: Var, mode: RouteMode<'_>) -> Result<ForwardPass> {
        let n_blocks = self.config.blocks;
        if let RouteMode::Forced(route) | RouteMode::Replay(route) = &mode {
            if route.len() != n_blocks {
                return Err(Error::usage(format!(
                    "route of length {} for {n_blocks} blocks",
                    route.len()
                )));
            }
            if let Some(a) = route.iter().find(|a| **a >= self.config.paths) {
                return Err(Error::usage(format!(
                    "action {a} out of range for {} paths",
                    self.config.paths
                )));
            }
        }
        let mut x = self.start(tape, patch)?;
        let mut block_inputs = Vec::with_capacity(n_blocks);
        let mut actions = Vec::with_capacity(n_blocks);
        let mut steps = Vec::new();
        let mut log_probs = Vec::new();

        let mut rng_slot: Option<&mut dyn RngCore> = None;
        let (fixed, scored) = match mode {
            RouteMode::Forced(route) => (Some(route), false),
            RouteMode::Replay(route) => (Some(route), true),
            RouteMode::Train(rng) => {
                rng_slot = Some(rng);
                (None, true)
            }
            RouteMode::Test => (None, true),
        };
        let mut state = scored.then(|| self.initial_state(tape));

        for i in 0..n_blocks {
            block_inputs.push(x);
            let action = match state.as_mut() {
                None => fixed.expect("unscored passes carry a route")[i],
                Some(st) => {
                    let observed = tape.detach(x);
                    let (logp, next) = self.pathfinder_policy(tape, observed, *st)?;
                    *st = next;
                    let lp = tape.value(logp).data().to_vec();
                    let probs: Vec<f32> = lp.iter().map(|v| v.exp()).collect();
                    let action = match (fixed, rng_slot.as_deref_mut()) {
                        (Some(route), _) => {
                            check_probs(&probs)?;
                            route[i]
                        }
                        (None, Some(rng)) => select_action(&probs, SelectMode::Train, rng)?,
                        (None, None) => {
                            check_probs(&probs)?;
                            argmax(&probs)
                        }
                    };
                    log_probs.push(tape.pick(logp, 0, action)?);
                    steps.push(RouteStep {
                        action,
                        log_prob: lp[action],
                        probs,
                    });
                    action
                }
            };
            actions.push(action);
            x = self.dynamic_block_forward(tape, x, i, action)?;
        }
        let restored = self.decode(tape, patch, x)?;
        tape.value(restored).ensure_finite("restored patch")?;
        Ok(ForwardPass {
            restored,
            actions,
            trace: scored.then_some(RouteTrace { steps }),
            log_probs,
            block_inputs,
        })
    }

    /// Restores a single patch tensor without keeping the tape.
    pub fn restore_patch(
        &self,
        patch: &Tensor,
        mode: RouteMode<'_>,
    ) -> Result<(Tensor, Vec<usize>, Option<RouteTrace>)> {
        let mut tape = Tape::new();
        let x = tape.leaf(patch.clone());
        let pass = self.forward(&mut tape, x, mode)?;
        Ok((tape.value(pass.restored).clone(), pass.actions, pass.trace))
    }

    /// Forward pass under a supplied route, also returning `x_1..x_N`.
    pub fn forward_intermediate(&self, tape: &mut Tape, patch: Var, route: &[usize]) -> Result<(Var, Vec<Var>)> {
        let pass = self.forward(tape, patch, RouteMode::Forced(route))?;
        Ok((pass.restored, pass.block_inputs))
    }

    pub fn count_flops(&self, route: &[usize]) -> Result<FlopCount> {
        count_flops(route, &self.config)
    }
}

/// Floating-point operations for one region, split by component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlopCount {
    pub cnn: u64,
    pub pathfinder: u64,
}

impl FlopCount {
    pub fn total(&self) -> u64 {
        self.cnn + self.pathfinder
    }
}

/// Multiply and add each counted once.
pub fn conv_flops(kernel: usize, c_in: usize, c_out: usize, out_h: usize, out_w: usize) -> u64 {
    2 * (kernel * kernel * c_in * c_out * out_h * out_w) as u64
}

pub fn linear_flops(f_in: usize, f_out: usize) -> u64 {
    2 * (f_in * f_out) as u64
}

/// Gate products of one recurrent update.
pub fn lstm_flops(f_in: usize, hidden: usize) -> u64 {
    2 * ((f_in + hidden) * 4 * hidden) as u64
}

fn stride2_extent(size: usize) -> usize {
    (size + 2 - KERNEL) / 2 + 1
}

/// Cost of one pathfinder invocation on a `patch × patch` region.
pub fn pathfinder_flops(config: &ModelConfig) -> u64 {
    let mut size = config.patch;
    let mut cin = config.features;
    let mut total = 0;
    for _ in 0..config.pathfinder_convs {
        size = stride2_extent(size);
        total += conv_flops(KERNEL, cin, config.pathfinder_width, size, size);
        cin = config.pathfinder_width;
    }
    total
        + linear_flops(config.pathfinder_width, config.hidden)
        + lstm_flops(config.hidden, config.hidden)
        + linear_flops(config.hidden, config.paths)
}

/// FLOPs of a residual path's two convs at region size.
pub fn residual_path_flops(config: &ModelConfig) -> u64 {
    let p = config.patch;
    2 * conv_flops(KERNEL, config.features, config.features, p, p)
}

/// Cost of restoring one region along `route`, counting the pathfinder at
/// every block. Elementwise work (ReLU, skip additions, pooling) is not counted.
pub fn count_flops(route: &[usize], config: &ModelConfig) -> Result<FlopCount> {
    if route.len() != config.blocks {
        return Err(Error::usage(format!(
            "route of length {} for {} blocks",
            route.len(),
            config.blocks
        )));
    }
    if let Some(a) = route.iter().find(|a| **a >= config.paths) {
        return Err(Error::usage(format!(
            "action {a} out of range for {} paths",
            config.paths
        )));
    }
    let p = config.patch;
    let (f, ch) = (config.features, config.channels);
    let mut cnn = conv_flops(KERNEL, ch, f, p, p) + conv_flops(KERNEL, f, ch, p, p);
    for a in route {
        cnn += conv_flops(KERNEL, f, f, p, p);
        if *a != BYPASS {
            cnn += residual_path_flops(config);
        }
    }
    Ok(FlopCount {
        cnn,
        pathfinder: config.blocks as u64 * pathfinder_flops(config),
    })
}

/// Cheapest and most expensive per-region counts for a configuration.
pub fn flop_bounds(config: &ModelConfig) -> (u64, u64) {
    let min = count_flops(&vec![BYPASS; config.blocks], config)
        .expect("valid route")
        .total();
    let max = count_flops(&vec![1; config.blocks], config)
        .expect("valid route")
        .total();
    (min, max)
}
