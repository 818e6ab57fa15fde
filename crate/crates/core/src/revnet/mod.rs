//! Reversible MLP built from additive coupling blocks.
//!
//! Each block splits the activation `X` (`d × n`) into halves `X¹`, `X²` and
//! applies
//!
//! ```text
//! X¹ ← X¹ + W¹ σ(Va X²)
//! X² ← X² + W² σ(Vb X¹)
//! ```
//!
//! where `W¹`, `W²` (`d/2 × d′`) are trained and `Va`, `Vb` (`d′ × d/2`) are
//! frozen projections into a wider bottleneck. The block is inverted by
//! running the two updates backwards with the signs flipped.
//!
//! Block indices are zero-based. "Layer `b`" in the differentiation routines
//! means the activation produced by block `b`, so layer `L − 1` is the output.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Mat};

#[derive(Debug, Error)]
pub enum RevnetError {
    #[error("activation width d = {0} must be even and positive")]
    OddWidth(usize),
    #[error("bottleneck width must be at least 1")]
    ZeroBottleneck,
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("logit count d_y = {d_y} exceeds width d = {d}")]
    OutputWidth { d_y: usize, d: usize },
    #[error("invalid init scheme: {0}")]
    InvalidInit(String),
    #[error("input has {got} rows, model expects {expected}")]
    Rows { expected: usize, got: usize },
    #[error("block index {index} out of range for depth {depth}")]
    BlockIndex { index: usize, depth: usize },
    #[error("activation cache is stale (cache step {cache_step}, model step {model_step})")]
    StaleCache { cache_step: u64, model_step: u64 },
    #[error("activation cache does not match the model or batch: {0}")]
    CacheShape(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

type Result<T> = std::result::Result<T, RevnetError>;

/// Elementwise nonlinearity. `Linear` exists so tests can compare against
/// closed forms; training always uses `Relu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Linear,
}

impl Activation {
    pub fn apply(self, a: &Mat) -> Mat {
        match self {
            Activation::Relu => a.map(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Linear => a.clone(),
        }
    }

    /// `σ′(a) ⊙ x`, with `σ′(0) = 0` for ReLU.
    pub fn grad_mul(self, a: &Mat, x: &Mat) -> Result<Mat> {
        match self {
            Activation::Relu => {
                let mask = a.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                Ok(mask.hadamard(x)?)
            }
            Activation::Linear => {
                if a.shape() != x.shape() {
                    return Err(LinalgError::Shape { op: "grad_mul", lhs: a.shape(), rhs: x.shape() }.into());
                }
                Ok(x.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    /// Uniform with variance `2 / (fan_in + fan_out)`.
    Xavier,
    /// `N(0, sigma²)`.
    Gaussian { sigma: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Gaussian { sigma: 1e-3 }
    }
}

impl InitScheme {
    fn validate(&self) -> Result<()> {
        match *self {
            InitScheme::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(RevnetError::InvalidInit(format!("gaussian sigma must be positive, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    fn sample(&self, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
        match *self {
            InitScheme::Xavier => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                let dist = Uniform::new_inclusive(-a, a);
                Mat::from_fn(rows, cols, |_, _| dist.sample(rng))
            }
            InitScheme::Gaussian { sigma } => {
                let dist = Normal::new(0.0, sigma).expect("validated sigma");
                Mat::from_fn(rows, cols, |_, _| dist.sample(rng))
            }
        }
    }
}

/// One coupling block. `va` and `vb` are frozen after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock {
    w1: Mat,
    w2: Mat,
    va: Mat,
    vb: Mat,
}

impl CouplingBlock {
    /// Builds a block from explicit matrices; shapes must be `w: h × d′`,
    /// `v: d′ × h`.
    pub fn new(w1: Mat, w2: Mat, va: Mat, vb: Mat) -> Result<Self> {
        let (h, dp) = w1.shape();
        let ok = w2.shape() == (h, dp) && va.shape() == (dp, h) && vb.shape() == (dp, h);
        if !ok {
            return Err(RevnetError::CacheShape(format!(
                "block shapes w1 {:?} w2 {:?} va {:?} vb {:?}",
                w1.shape(),
                w2.shape(),
                va.shape(),
                vb.shape()
            )));
        }
        for (m, name) in [(&w1, "w1"), (&w2, "w2"), (&va, "va"), (&vb, "vb")] {
            m.check_finite(name)?;
        }
        Ok(Self { w1, w2, va, vb })
    }

    pub fn w1(&self) -> &Mat {
        &self.w1
    }
    pub fn w2(&self) -> &Mat {
        &self.w2
    }
    pub fn va(&self) -> &Mat {
        &self.va
    }
    pub fn vb(&self) -> &Mat {
        &self.vb
    }
}

/// Trainable matrices of one block, or anything shaped like them
/// (gradients, GN directions, optimizer moments).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    pub w1: Mat,
    pub w2: Mat,
}

impl WeightPair {
    pub fn zeros_like(block: &CouplingBlock) -> Self {
        let (h, dp) = block.w1.shape();
        Self { w1: Mat::zeros(h, dp), w2: Mat::zeros(h, dp) }
    }

    pub fn frobenius_norm(&self) -> f64 {
        (self.w1.frobenius_norm().powi(2) + self.w2.frobenius_norm().powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevMlp {
    blocks: Vec<CouplingBlock>,
    d: usize,
    d_prime: usize,
    d_y: usize,
    seed: u32,
    init: InitScheme,
    activation: Activation,
    no_bottleneck: bool,
    step: u64,
}

/// Build parameters for [`RevMlp::from_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub d: usize,
    pub d_prime: usize,
    pub depth: usize,
    pub d_y: usize,
    pub seed: u32,
    pub init: InitScheme,
    /// Replace the bottleneck projections with identities (`d′ = d/2`).
    pub no_bottleneck: bool,
    pub activation: Activation,
}

/// `RevMlp::from_spec` with ReLU and bottlenecks enabled.
pub fn init(d: usize, d_prime: usize, depth: usize, d_y: usize, seed: u32, scheme: InitScheme) -> Result<RevMlp> {
    RevMlp::from_spec(&ModelSpec {
        d,
        d_prime,
        depth,
        d_y,
        seed,
        init: scheme,
        no_bottleneck: false,
        activation: Activation::Relu,
    })
}

impl RevMlp {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let ModelSpec { d, depth, d_y, seed, init, no_bottleneck, activation, .. } = *spec;
        if d == 0 || d % 2 != 0 {
            return Err(RevnetError::OddWidth(d));
        }
        if depth == 0 {
            return Err(RevnetError::ZeroDepth);
        }
        if d_y > d {
            return Err(RevnetError::OutputWidth { d_y, d });
        }
        init.validate()?;
        let h = d / 2;
        let d_prime = if no_bottleneck { h } else { spec.d_prime };
        if d_prime == 0 {
            return Err(RevnetError::ZeroBottleneck);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let v_dist = Normal::new(0.0, (1.0 / h as f64).sqrt()).expect("positive variance");
        let mut blocks = Vec::with_capacity(depth);
        for _ in 0..depth {
            let w1 = init.sample(h, d_prime, &mut rng);
            let w2 = init.sample(h, d_prime, &mut rng);
            let (va, vb) = if no_bottleneck {
                (Mat::identity(h), Mat::identity(h))
            } else {
                let va = Mat::from_fn(d_prime, h, |_, _| v_dist.sample(&mut rng));
                let vb = Mat::from_fn(d_prime, h, |_, _| v_dist.sample(&mut rng));
                (va, vb)
            };
            blocks.push(CouplingBlock { w1, w2, va, vb });
        }
        Ok(Self { blocks, d, d_prime, d_y, seed, init, activation, no_bottleneck, step: 0 })
    }

    /// Assembles a model from hand-built blocks (all must share shapes).
    pub fn from_blocks(blocks: Vec<CouplingBlock>, d_y: usize, activation: Activation) -> Result<Self> {
        let first = blocks.first().ok_or(RevnetError::ZeroDepth)?;
        let (h, d_prime) = first.w1.shape();
        if blocks.iter().any(|b| b.w1.shape() != (h, d_prime)) {
            return Err(RevnetError::CacheShape("blocks disagree on shape".into()));
        }
        let d = 2 * h;
        if d == 0 {
            return Err(RevnetError::OddWidth(d));
        }
        if d_y > d {
            return Err(RevnetError::OutputWidth { d_y, d });
        }
        Ok(Self {
            blocks,
            d,
            d_prime,
            d_y,
            seed: 0,
            init: InitScheme::default(),
            activation,
            no_bottleneck: false,
            step: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn half(&self) -> usize {
        self.d / 2
    }
    pub fn d_prime(&self) -> usize {
        self.d_prime
    }
    pub fn d_y(&self) -> usize {
        self.d_y
    }
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }
    pub fn seed(&self) -> u32 {
        self.seed
    }
    pub fn init_scheme(&self) -> InitScheme {
        self.init
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }
    pub fn no_bottleneck(&self) -> bool {
        self.no_bottleneck
    }
    pub fn blocks(&self) -> &[CouplingBlock] {
        &self.blocks
    }
    /// Number of parameter updates applied so far.
    pub fn step(&self) -> u64 {
        self.step
    }
    pub fn num_trainable(&self) -> usize {
        2 * self.depth() * self.half() * self.d_prime
    }

    pub fn weights(&self) -> Vec<WeightPair> {
        self.blocks.iter().map(|b| WeightPair { w1: b.w1.clone(), w2: b.w2.clone() }).collect()
    }

    /// Mutable access to the trainable matrices. Counts as a parameter
    /// update: caches taken before this call become stale.
    pub fn trainable_mut(&mut self) -> Vec<(&mut Mat, &mut Mat)> {
        self.step += 1;
        self.blocks.iter_mut().map(|b| (&mut b.w1, &mut b.w2)).collect()
    }

    /// `W ← W + scale · delta` for every block, as a single update.
    pub fn apply_delta(&mut self, delta: &[WeightPair], scale: f64) -> Result<()> {
        if delta.len() != self.depth() {
            return Err(RevnetError::BlockIndex { index: delta.len(), depth: self.depth() });
        }
        for (b, dw) in self.blocks.iter().zip(delta) {
            if dw.w1.shape() != b.w1.shape() || dw.w2.shape() != b.w2.shape() {
                return Err(LinalgError::Shape { op: "apply_delta", lhs: b.w1.shape(), rhs: dw.w1.shape() }.into());
            }
        }
        for ((w1, w2), dw) in self.trainable_mut().into_iter().zip(delta) {
            w1.axpy(scale, &dw.w1)?;
            w2.axpy(scale, &dw.w2)?;
        }
        Ok(())
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    fn check_rows(&self, x: &Mat) -> Result<()> {
        if x.rows() != self.d {
            return Err(RevnetError::Rows { expected: self.d, got: x.rows() });
        }
        Ok(())
    }

    fn block(&self, index: usize) -> Result<&CouplingBlock> {
        self.blocks.get(index).ok_or(RevnetError::BlockIndex { index, depth: self.depth() })
    }

    pub fn forward(&self, x: &Mat) -> Result<(Mat, ActivationCache)> {
        self.check_rows(x)?;
        x.check_finite("forward input")?;
        let h = self.half();
        let mut x1 = x.row_block(0, h);
        let mut x2 = x.row_block(h, self.d);
        let mut caches = Vec::with_capacity(self.depth());
        for b in &self.blocks {
            let a1 = b.va.matmul(&x2)?;
            let s1 = self.activation.apply(&a1);
            x1.axpy(1.0, &b.w1.matmul(&s1)?)?;
            let a2 = b.vb.matmul(&x1)?;
            let s2 = self.activation.apply(&a2);
            let x2_in = x2.clone();
            x2.axpy(1.0, &b.w2.matmul(&s2)?)?;
            caches.push(BlockCache { x2_in, x1_out: x1.clone(), a1, a2, s1, s2 });
        }
        let y = Mat::vstack(&x1, &x2)?;
        y.check_finite("forward output")?;
        let cache = ActivationCache { step: self.step, x0: x.clone(), xl: y.clone(), blocks: caches };
        Ok((y, cache))
    }

    /// Output only; skips building the cache.
    pub fn predict(&self, x: &Mat) -> Result<Mat> {
        self.check_rows(x)?;
        let h = self.half();
        let mut x1 = x.row_block(0, h);
        let mut x2 = x.row_block(h, self.d);
        for b in &self.blocks {
            x1.axpy(1.0, &b.w1.matmul(&self.activation.apply(&b.va.matmul(&x2)?))?)?;
            x2.axpy(1.0, &b.w2.matmul(&self.activation.apply(&b.vb.matmul(&x1)?))?)?;
        }
        let y = Mat::vstack(&x1, &x2)?;
        y.check_finite("forward output")?;
        Ok(y)
    }

    pub fn inverse(&self, y: &Mat) -> Result<Mat> {
        self.check_rows(y)?;
        let h = self.half();
        let mut x1 = y.row_block(0, h);
        let mut x2 = y.row_block(h, self.d);
        for b in self.blocks.iter().rev() {
            x2.axpy(-1.0, &b.w2.matmul(&self.activation.apply(&b.vb.matmul(&x1)?))?)?;
            x1.axpy(-1.0, &b.w1.matmul(&self.activation.apply(&b.va.matmul(&x2)?))?)?;
        }
        let x = Mat::vstack(&x1, &x2)?;
        x.check_finite("inverse output")?;
        Ok(x)
    }

    fn check_cache(&self, cache: &ActivationCache) -> Result<()> {
        if cache.step != self.step {
            return Err(RevnetError::StaleCache { cache_step: cache.step, model_step: self.step });
        }
        if cache.blocks.len() != self.depth() || cache.x0.rows() != self.d {
            return Err(RevnetError::CacheShape(format!(
                "cache has {} blocks of width {}, model has {} of width {}",
                cache.blocks.len(),
                cache.x0.rows(),
                self.depth(),
                self.d
            )));
        }
        Ok(())
    }

    fn check_direction(&self, cache: &ActivationCache, m: &Mat, what: &str) -> Result<()> {
        if m.shape() != (self.d, cache.batch_size()) {
            return Err(RevnetError::CacheShape(format!(
                "{what} is {:?}, expected {:?}",
                m.shape(),
                (self.d, cache.batch_size())
            )));
        }
        Ok(())
    }

    /// Pulls a tangent at one block output back through the inverse of that
    /// block, giving the tangent at the block input.
    fn inverse_block_jvp(&self, b: usize, cache: &ActivationCache, t1: &Mat, t2: &Mat) -> Result<(Mat, Mat)> {
        let blk = &self.blocks[b];
        let c = &cache.blocks[b];
        let act = self.activation;
        let mut t2p = t2.clone();
        t2p.axpy(-1.0, &blk.w2.matmul(&act.grad_mul(&c.a2, &blk.vb.matmul(t1)?)?)?)?;
        let mut t1p = t1.clone();
        t1p.axpy(-1.0, &blk.w1.matmul(&act.grad_mul(&c.a1, &blk.va.matmul(&t2p)?)?)?)?;
        Ok((t1p, t2p))
    }

    /// `(∂x_b/∂x_L) · eps` for every block output `b`, split into halves.
    ///
    /// One pass down the inverse network; entry `L − 1` is `eps` itself.
    pub fn inverse_jvp_all(&self, cache: &ActivationCache, eps: &Mat) -> Result<Vec<(Mat, Mat)>> {
        self.check_cache(cache)?;
        self.check_direction(cache, eps, "eps")?;
        let h = self.half();
        let depth = self.depth();
        let mut out = vec![(Mat::zeros(0, 0), Mat::zeros(0, 0)); depth];
        let mut t = (eps.row_block(0, h), eps.row_block(h, self.d));
        for b in (0..depth).rev() {
            let next = if b > 0 { Some(self.inverse_block_jvp(b, cache, &t.0, &t.1)?) } else { None };
            out[b] = t;
            match next {
                Some(n) => t = n,
                None => break,
            }
        }
        Ok(out)
    }

    /// One half of `(∂x_b/∂x_L) · eps`. `half` is 1 or 2.
    pub fn inverse_jvp(&self, cache: &ActivationCache, block: usize, half: u8, eps: &Mat) -> Result<Mat> {
        self.block(block)?;
        self.check_cache(cache)?;
        self.check_direction(cache, eps, "eps")?;
        let h = self.half();
        let mut t = (eps.row_block(0, h), eps.row_block(h, self.d));
        for b in ((block + 1)..self.depth()).rev() {
            t = self.inverse_block_jvp(b, cache, &t.0, &t.1)?;
        }
        match half {
            1 => Ok(t.0),
            2 => Ok(t.1),
            _ => Err(RevnetError::CacheShape(format!("half must be 1 or 2, got {half}"))),
        }
    }

    /// Change of `x²_b` caused by perturbing `W¹_b` by `delta1`:
    /// `W²(σ′(a2) ⊙ (Vb Δ¹ s1))`.
    pub fn weight_jvp_x2(&self, cache: &ActivationCache, block: usize, delta1: &Mat) -> Result<Mat> {
        let blk = self.block(block)?;
        self.check_cache(cache)?;
        if delta1.shape() != blk.w1.shape() {
            return Err(LinalgError::Shape { op: "weight_jvp_x2", lhs: blk.w1.shape(), rhs: delta1.shape() }.into());
        }
        let c = &cache.blocks[block];
        let dx1 = delta1.matmul(&c.s1)?;
        Ok(blk.w2.matmul(&self.activation.grad_mul(&c.a2, &blk.vb.matmul(&dx1)?)?)?)
    }

    /// Forward-mode derivative of the output along an input tangent `dx`
    /// (zero if `None`) and parameter directions `dirs` (one pair per block).
    pub fn forward_jvp(&self, cache: &ActivationCache, dx: Option<&Mat>, dirs: &[WeightPair]) -> Result<Mat> {
        self.check_cache(cache)?;
        if dirs.len() != self.depth() {
            return Err(RevnetError::BlockIndex { index: dirs.len(), depth: self.depth() });
        }
        let h = self.half();
        let n = cache.batch_size();
        let (mut t1, mut t2) = match dx {
            Some(dx) => {
                self.check_direction(cache, dx, "input tangent")?;
                (dx.row_block(0, h), dx.row_block(h, self.d))
            }
            None => (Mat::zeros(h, n), Mat::zeros(h, n)),
        };
        let act = self.activation;
        for ((blk, c), dir) in self.blocks.iter().zip(&cache.blocks).zip(dirs) {
            t1.axpy(1.0, &dir.w1.matmul(&c.s1)?)?;
            t1.axpy(1.0, &blk.w1.matmul(&act.grad_mul(&c.a1, &blk.va.matmul(&t2)?)?)?)?;
            t2.axpy(1.0, &dir.w2.matmul(&c.s2)?)?;
            t2.axpy(1.0, &blk.w2.matmul(&act.grad_mul(&c.a2, &blk.vb.matmul(&t1)?)?)?)?;
        }
        Ok(Mat::vstack(&t1, &t2)?)
    }

    /// Reverse-mode gradients of `⟨u, f(θ)⟩` with respect to every trainable
    /// matrix.
    pub fn vjp(&self, cache: &ActivationCache, u: &Mat) -> Result<Vec<WeightPair>> {
        Ok(self.vjp_full(cache, u)?.grads)
    }

    /// [`RevMlp::vjp`] plus the intermediate cotangents: per block, the
    /// cotangent reaching the output of each residual branch (the factors
    /// `C` in `∂/∂W = C sᵀ`), and the cotangent at the network input.
    pub fn vjp_full(&self, cache: &ActivationCache, u: &Mat) -> Result<VjpOutput> {
        self.check_cache(cache)?;
        self.check_direction(cache, u, "cotangent")?;
        let h = self.half();
        let act = self.activation;
        let depth = self.depth();
        let mut u1 = u.row_block(0, h);
        let mut u2 = u.row_block(h, self.d);
        let mut grads = Vec::with_capacity(depth);
        let mut branch = Vec::with_capacity(depth);
        for b in (0..depth).rev() {
            let blk = &self.blocks[b];
            let c = &cache.blocks[b];
            let g2 = u2.matmul_t(&c.s2)?;
            u1.axpy(1.0, &blk.vb.t_matmul(&act.grad_mul(&c.a2, &blk.w2.t_matmul(&u2)?)?)?)?;
            let g1 = u1.matmul_t(&c.s1)?;
            branch.push((u1.clone(), u2.clone()));
            u2.axpy(1.0, &blk.va.t_matmul(&act.grad_mul(&c.a1, &blk.w1.t_matmul(&u1)?)?)?)?;
            grads.push(WeightPair { w1: g1, w2: g2 });
        }
        grads.reverse();
        branch.reverse();
        Ok(VjpOutput { grads, branch_cotangents: branch, input: Mat::vstack(&u1, &u2)? })
    }
}

#[derive(Debug, Clone)]
pub struct VjpOutput {
    pub grads: Vec<WeightPair>,
    /// Per block `(C¹, C²)`, each `d/2 × n`; `∂/∂W¹ = C¹ s1ᵀ`.
    pub branch_cotangents: Vec<(Mat, Mat)>,
    pub input: Mat,
}

/// Activations of one block retained from a forward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    /// `X²` entering the block.
    pub x2_in: Mat,
    /// `X¹` after the first update.
    pub x1_out: Mat,
    /// `Va · x2_in`.
    pub a1: Mat,
    /// `Vb · x1_out`.
    pub a2: Mat,
    pub s1: Mat,
    pub s2: Mat,
}

#[derive(Debug, Clone)]
pub struct ActivationCache {
    step: u64,
    x0: Mat,
    xl: Mat,
    blocks: Vec<BlockCache>,
}

impl ActivationCache {
    /// Model step at which the cache was recorded.
    pub fn step(&self) -> u64 {
        self.step
    }
    pub fn input(&self) -> &Mat {
        &self.x0
    }
    pub fn output(&self) -> &Mat {
        &self.xl
    }
    pub fn blocks(&self) -> &[BlockCache] {
        &self.blocks
    }
    pub fn batch_size(&self) -> usize {
        self.x0.cols()
    }

    /// Output of block `b` as a full `d × n` activation.
    pub fn block_output(&self, b: usize) -> Mat {
        let x1 = &self.blocks[b].x1_out;
        let x2 = match self.blocks.get(b + 1) {
            Some(next) => next.x2_in.clone(),
            None => self.xl.row_block(x1.rows(), self.xl.rows()),
        };
        Mat::vstack(x1, &x2).expect("halves share batch size")
    }
}

/// First `d_y` rows of the network output.
pub fn logits(y: &Mat, d_y: usize) -> Mat {
    y.row_block(0, d_y.min(y.rows()))
}
