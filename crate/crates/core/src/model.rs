//! The three-part network: feature encoder F (two-layer MLP), classifier
//! head C (single linear layer), and domain discriminator D (three-layer
//! MLP), with hand-derived backprop, gradient reversal into the encoder,
//! SGD with momentum and weight decay, and the training-progress schedules
//! for learning rate and reversal strength.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::losses::DiscriminationMode;
use crate::numerics::{matvec, matvec_t, relu, relu_grad, Matrix, Vector};
use crate::rng::Rng;

/// Training phase; it decides the gradient-reversal weight schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Active,
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelArch {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub n_classes: usize,
    pub disc_hidden: usize,
    pub n_targets: usize,
    pub mode: DiscriminationMode,
    /// Discriminator dropout rate; 0.0 disables (the default). When on,
    /// masks are drawn from the training stream, keeping runs seeded.
    pub disc_dropout: f64,
}

impl ModelArch {
    pub fn domain_logit_count(&self) -> usize {
        self.mode.logit_count(self.n_targets)
    }
}

/// y = W x + b
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer {
    pub w: Matrix,
    pub b: Vector,
}

impl LinearLayer {
    fn init(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Self {
        // Uniform in +-1/sqrt(fan_in), weights drawn row-major; biases zero
        // so discriminator heads of different arity share every draw that
        // precedes the extra output rows.
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut w = Matrix::zeros(out_dim, in_dim);
        for v in w.as_mut_slice() {
            *v = rng.uniform_in(-bound, bound);
        }
        LinearLayer {
            w,
            b: Vector::zeros(out_dim),
        }
    }

    fn apply(&self, x: &Vector) -> Vector {
        let mut y = matvec(&self.w, x);
        for i in 0..y.len() {
            y[i] += self.b[i];
        }
        y
    }
}

/// Gradient (or momentum) storage for one linear layer.
#[derive(Clone, Debug)]
pub struct LayerGrad {
    pub w: Matrix,
    pub b: Vector,
}

impl LayerGrad {
    fn zeros_like(layer: &LinearLayer) -> Self {
        LayerGrad {
            w: Matrix::zeros(layer.w.rows(), layer.w.cols()),
            b: Vector::zeros(layer.b.len()),
        }
    }
}

/// Gradients for every parameter block of the model.
#[derive(Clone, Debug)]
pub struct Grads {
    pub encoder: Vec<LayerGrad>,
    pub classifier: LayerGrad,
    pub discriminator: Vec<LayerGrad>,
}

impl Grads {
    pub fn zeros_like(model: &ModelState) -> Self {
        Grads {
            encoder: model.encoder.iter().map(LayerGrad::zeros_like).collect(),
            classifier: LayerGrad::zeros_like(&model.classifier),
            discriminator: model
                .discriminator
                .iter()
                .map(LayerGrad::zeros_like)
                .collect(),
        }
    }
}

/// Full model: parameters, momentum buffers, and the training-progress
/// counter p in [0, 1].
#[derive(Clone, Debug)]
pub struct ModelState {
    pub arch: ModelArch,
    pub encoder: Vec<LinearLayer>,
    pub classifier: LinearLayer,
    pub discriminator: Vec<LinearLayer>,
    pub momentum: Grads,
    pub progress: f64,
}

/// SGD hyperparameters and the inverse-decay learning-rate schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub decay_exponent: f64,
    pub decay_factor_q: f64,
    /// Relative learning rate of the encoder; 1.0 at desk scale (no
    /// pretrained backbone to protect), kept as a knob for fidelity.
    pub backbone_lr_ratio: f64,
}

impl OptimizerConfig {
    pub fn pretrain() -> Self {
        OptimizerConfig {
            base_lr: 0.001,
            momentum: 0.9,
            weight_decay: 0.005,
            decay_exponent: 0.75,
            decay_factor_q: 10.0,
            backbone_lr_ratio: 1.0,
        }
    }

    pub fn active() -> Self {
        OptimizerConfig {
            base_lr: 0.0003,
            momentum: 0.9,
            weight_decay: 0.005,
            decay_exponent: 0.75,
            decay_factor_q: 1.0,
            backbone_lr_ratio: 1.0,
        }
    }
}

/// Learning rate at progress p: base_lr * (1 + q p)^(-decay_exponent).
pub fn lr_at(cfg: &OptimizerConfig, p: f64) -> f64 {
    cfg.base_lr * (1.0 + cfg.decay_factor_q * p).powf(-cfg.decay_exponent)
}

/// Gradient-reversal weight. Pretraining ramps 2/(1+exp(-10p)) - 1 from 0
/// toward 1; active stages hold it at 1.0 (they continue pretraining).
/// p outside [0, 1] is clamped with a warning.
pub fn grl_weight(p: f64, phase: Phase) -> f64 {
    let p = if (0.0..=1.0).contains(&p) {
        p
    } else {
        log::warn!("grl_weight: progress {p} outside [0,1], clamping");
        p.clamp(0.0, 1.0)
    };
    match phase {
        Phase::Pretrain => 2.0 / (1.0 + (-10.0 * p).exp()) - 1.0,
        Phase::Active => 1.0,
    }
}

/// Everything the backward pass needs from one sample's forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub x: Vector,
    enc_pre: Vec<Vector>,
    enc_act: Vec<Vector>,
    pub z: Vector,
    pub class_logits: Vector,
    disc_pre: Vec<Vector>,
    disc_act: Vec<Vector>,
    /// Multiplicative dropout masks actually applied to disc activations
    /// (empty when dropout is off).
    disc_masks: Vec<Vector>,
    pub domain_logits: Vector,
}

/// Per-sample loss attachment: optional (target, weight) for the
/// classification and domain losses. Weights implement batch averaging and
/// the 0.5/0.5 source/target blend.
#[derive(Clone, Copy, Debug)]
pub struct LossTargets {
    pub cls: Option<(usize, f64)>,
    pub dom: Option<(usize, f64)>,
}

impl ModelState {
    /// Initialize with per-layer uniform(+-1/sqrt(fan_in)) weights and zero
    /// biases, drawing from `rng` in a fixed block order with the
    /// discriminator output layer last.
    pub fn init(arch: ModelArch, rng: &mut Rng) -> Self {
        let encoder = vec![
            LinearLayer::init(arch.hidden_dim, arch.input_dim, rng),
            LinearLayer::init(arch.embed_dim, arch.hidden_dim, rng),
        ];
        let classifier = LinearLayer::init(arch.n_classes, arch.embed_dim, rng);
        let discriminator = vec![
            LinearLayer::init(arch.disc_hidden, arch.embed_dim, rng),
            LinearLayer::init(arch.disc_hidden, arch.disc_hidden, rng),
            LinearLayer::init(arch.domain_logit_count(), arch.disc_hidden, rng),
        ];
        let mut state = ModelState {
            arch,
            encoder,
            classifier,
            discriminator,
            momentum: Grads {
                encoder: Vec::new(),
                classifier: LayerGrad {
                    w: Matrix::zeros(0, 0),
                    b: Vector::zeros(0),
                },
                discriminator: Vec::new(),
            },
            progress: 0.0,
        };
        state.momentum = Grads::zeros_like(&state);
        state
    }

    /// Encoder output z = F(x).
    pub fn encode(&self, x: &Vector) -> Vector {
        let h = relu(&self.encoder[0].apply(x));
        self.encoder[1].apply(&h)
    }

    /// Class logits from an encoded feature.
    pub fn class_logits_from(&self, z: &Vector) -> Vector {
        self.classifier.apply(z)
    }

    /// Domain logits from an encoded feature (eval mode, no dropout).
    pub fn domain_logits_from(&self, z: &Vector) -> Vector {
        let h1 = relu(&self.discriminator[0].apply(z));
        let h2 = relu(&self.discriminator[1].apply(&h1));
        self.discriminator[2].apply(&h2)
    }

    /// Eval-mode forward pass: (z, class logits, domain logits).
    pub fn forward(&self, x: &Vector) -> (Vector, Vector, Vector) {
        let t = self.forward_trace(x, None);
        (t.z, t.class_logits, t.domain_logits)
    }

    /// Forward pass retaining every intermediate needed by backprop.
    /// `dropout` draws seeded masks for the discriminator's hidden
    /// activations (training only).
    pub fn forward_trace(&self, x: &Vector, dropout: Option<&mut Rng>) -> ForwardTrace {
        assert_eq!(x.len(), self.arch.input_dim, "forward: input dim mismatch");
        let pre0 = self.encoder[0].apply(x);
        let act0 = relu(&pre0);
        let z = self.encoder[1].apply(&act0);
        let class_logits = self.classifier.apply(&z);

        let rate = self.arch.disc_dropout;
        let mut rng = dropout;
        let mut disc_pre = Vec::with_capacity(2);
        let mut disc_act = Vec::with_capacity(2);
        let mut disc_masks = Vec::new();
        let mut h = z.clone();
        for layer in &self.discriminator[..2] {
            let pre = layer.apply(&h);
            let mut act = relu(&pre);
            if rate > 0.0 {
                if let Some(r) = rng.as_deref_mut() {
                    let keep = 1.0 - rate;
                    let mask: Vector = (0..act.len())
                        .map(|_| if r.next_f64() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    for i in 0..act.len() {
                        act[i] *= mask[i];
                    }
                    disc_masks.push(mask);
                }
            }
            disc_pre.push(pre);
            disc_act.push(act.clone());
            h = act;
        }
        let domain_logits = self.discriminator[2].apply(&h);

        ForwardTrace {
            x: x.clone(),
            enc_pre: vec![pre0],
            enc_act: vec![act0],
            z,
            class_logits,
            disc_pre,
            disc_act,
            disc_masks,
            domain_logits,
        }
    }

    /// Backprop the domain loss through D only, down to its input z. No
    /// reversal is applied; callers negate as needed.
    pub fn domain_loss_feature_grad(&self, trace: &ForwardTrace, g_dom: &Vector) -> Vector {
        let mut upstream = g_dom.clone();
        // Output layer.
        let mut g_input = matvec_t(&self.discriminator[2].w, &upstream);
        // Hidden layers in reverse.
        for l in (0..2).rev() {
            if let Some(mask) = trace.disc_masks.get(l) {
                for i in 0..g_input.len() {
                    g_input[i] *= mask[i];
                }
            }
            upstream = relu_grad(&trace.disc_pre[l], &g_input);
            g_input = matvec_t(&self.discriminator[l].w, &upstream);
        }
        g_input
    }

    /// Classifier-head gradient w.r.t. its input z.
    pub fn class_loss_feature_grad(&self, g_cls: &Vector) -> Vector {
        matvec_t(&self.classifier.w, g_cls)
    }

    /// Accumulate parameter gradients for one sample. Classification
    /// gradients flow normally; domain gradients reaching the encoder are
    /// multiplied by -eta (gradient reversal); D's own gradients are not
    /// reversed.
    pub fn accumulate_backward(
        &self,
        trace: &ForwardTrace,
        g_cls: Option<(&Vector, f64)>,
        g_dom: Option<(&Vector, f64)>,
        eta: f64,
        grads: &mut Grads,
    ) {
        let mut gz = Vector::zeros(self.arch.embed_dim);

        if let Some((g, w)) = g_cls {
            let mut u = g.clone();
            u.scale(w);
            grads.classifier.w.add_outer(1.0, &u, &trace.z);
            grads.classifier.b.axpy(1.0, &u);
            gz.axpy(1.0, &matvec_t(&self.classifier.w, &u));
        }

        if let Some((g, w)) = g_dom {
            let mut upstream = g.clone();
            upstream.scale(w);
            // Discriminator output layer.
            grads.discriminator[2]
                .w
                .add_outer(1.0, &upstream, &trace.disc_act[1]);
            grads.discriminator[2].b.axpy(1.0, &upstream);
            let mut g_input = matvec_t(&self.discriminator[2].w, &upstream);
            // Hidden layers in reverse; layer l consumed act[l-1] (or z).
            for l in (0..2).rev() {
                if let Some(mask) = trace.disc_masks.get(l) {
                    for i in 0..g_input.len() {
                        g_input[i] *= mask[i];
                    }
                }
                let u = relu_grad(&trace.disc_pre[l], &g_input);
                let input = if l == 0 { &trace.z } else { &trace.disc_act[l - 1] };
                grads.discriminator[l].w.add_outer(1.0, &u, input);
                grads.discriminator[l].b.axpy(1.0, &u);
                g_input = matvec_t(&self.discriminator[l].w, &u);
            }
            // Gradient reversal on the way into the encoder.
            gz.axpy(-eta, &g_input);
        }

        // Encoder backprop.
        grads.encoder[1].w.add_outer(1.0, &gz, &trace.enc_act[0]);
        grads.encoder[1].b.axpy(1.0, &gz);
        let t = matvec_t(&self.encoder[1].w, &gz);
        let u0 = relu_grad(&trace.enc_pre[0], &t);
        grads.encoder[0].w.add_outer(1.0, &u0, &trace.x);
        grads.encoder[0].b.axpy(1.0, &u0);
    }

    /// One loss evaluation + gradient accumulation over a weighted batch.
    /// Returns (grads, l_cls, l_dom) where the loss values are the
    /// weight-blended scalars that the gradients correspond to.
    pub fn forward_backward(
        &self,
        items: &[(&Vector, LossTargets)],
        eta: f64,
        mut dropout_rng: Option<&mut Rng>,
    ) -> (Grads, f64, f64) {
        let mut grads = Grads::zeros_like(self);
        let mut l_cls = 0.0;
        let mut l_dom = 0.0;
        for (x, targets) in items {
            let trace = self.forward_trace(x, dropout_rng.as_deref_mut());
            let cls_bundle = targets
                .cls
                .map(|(y, w)| (crate::losses::cls_loss(&trace.class_logits, y), w));
            let dom_bundle = targets.dom.map(|(m, w)| {
                (
                    crate::losses::dom_loss(self.arch.mode, &trace.domain_logits, m),
                    w,
                )
            });
            if let Some((ref b, w)) = cls_bundle {
                l_cls += w * b.value;
            }
            if let Some((ref b, w)) = dom_bundle {
                l_dom += w * b.value;
            }
            self.accumulate_backward(
                &trace,
                cls_bundle.as_ref().map(|(b, w)| (&b.grad_logits, *w)),
                dom_bundle.as_ref().map(|(b, w)| (&b.grad_logits, *w)),
                eta,
                &mut grads,
            );
        }
        (grads, l_cls, l_dom)
    }

    // ── parameter plumbing ───────────────────────────────────────────

    fn layers(&self) -> Vec<(&str, &LinearLayer)> {
        let mut v: Vec<(&str, &LinearLayer)> = Vec::new();
        v.push(("encoder.0", &self.encoder[0]));
        v.push(("encoder.1", &self.encoder[1]));
        v.push(("classifier", &self.classifier));
        v.push(("discriminator.0", &self.discriminator[0]));
        v.push(("discriminator.1", &self.discriminator[1]));
        v.push(("discriminator.2", &self.discriminator[2]));
        v
    }

    /// All parameters flattened in block order (test and oracle plumbing).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, l) in self.layers() {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(l.b.as_slice());
        }
        out
    }

    /// Overwrite all parameters from a flat slice in block order.
    pub fn set_params(&mut self, flat: &[f64]) {
        let mut pos = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[pos..pos + dst.len()]);
            pos += dst.len();
        };
        for layer in self
            .encoder
            .iter_mut()
            .chain(std::iter::once(&mut self.classifier))
            .chain(self.discriminator.iter_mut())
        {
            take(layer.w.as_mut_slice());
            take(layer.b.as_mut_slice());
        }
        assert_eq!(pos, flat.len(), "set_params: length mismatch");
    }

    /// Flatten a gradient set in the same order as `flatten_params`.
    pub fn flatten_grads(grads: &Grads) -> Vec<f64> {
        let mut out = Vec::new();
        for g in grads
            .encoder
            .iter()
            .chain(std::iter::once(&grads.classifier))
            .chain(grads.discriminator.iter())
        {
            out.extend_from_slice(g.w.as_slice());
            out.extend_from_slice(g.b.as_slice());
        }
        out
    }
}

/// SGD with momentum and weight decay:
/// v <- momentum*v + (grad + wd*param); param <- param - lr_eff*v.
/// The encoder uses lr * backbone_lr_ratio. Non-finite gradients abort with
/// the offending block named.
pub fn sgd_step(
    model: &mut ModelState,
    grads: &Grads,
    cfg: &OptimizerConfig,
    p: f64,
) -> Result<()> {
    let lr = lr_at(cfg, p);

    fn update(
        name: &str,
        layer: &mut LinearLayer,
        grad: &LayerGrad,
        vel: &mut LayerGrad,
        lr: f64,
        cfg: &OptimizerConfig,
    ) -> Result<()> {
        if !grad.w.all_finite() || !grad.b.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient in parameter block {name}"
            )));
        }
        for ((w, g), v) in layer
            .w
            .as_mut_slice()
            .iter_mut()
            .zip(grad.w.as_slice())
            .zip(vel.w.as_mut_slice())
        {
            *v = cfg.momentum * *v + (*g + cfg.weight_decay * *w);
            *w -= lr * *v;
        }
        for ((b, g), v) in layer
            .b
            .as_mut_slice()
            .iter_mut()
            .zip(grad.b.as_slice())
            .zip(vel.b.as_mut_slice())
        {
            *v = cfg.momentum * *v + (*g + cfg.weight_decay * *b);
            *b -= lr * *v;
        }
        Ok(())
    }

    let enc_lr = lr * cfg.backbone_lr_ratio;
    for i in 0..model.encoder.len() {
        // Split borrows: momentum lives beside the parameters.
        let (layer, vel) = (&mut model.encoder[i], &mut model.momentum.encoder[i]);
        update(&format!("encoder.{i}"), layer, grads.encoder.get(i).unwrap(), vel, enc_lr, cfg)?;
    }
    update(
        "classifier",
        &mut model.classifier,
        &grads.classifier,
        &mut model.momentum.classifier,
        lr,
        cfg,
    )?;
    for i in 0..model.discriminator.len() {
        let (layer, vel) = (
            &mut model.discriminator[i],
            &mut model.momentum.discriminator[i],
        );
        update(
            &format!("discriminator.{i}"),
            layer,
            grads.discriminator.get(i).unwrap(),
            vel,
            lr,
            cfg,
        )?;
    }
    Ok(())
}

// ── checkpoint io ────────────────────────────────────────────────────────
// Text format, one line per parameter block:
//   block,<name>,<rows>,<cols>,v0,v1,...
// Floats print shortest-round-trip, so save/load is exact.

pub fn model_to_string(model: &ModelState) -> String {
    let mut out = String::new();
    let arch = &model.arch;
    let (mode, alpha) = match arch.mode {
        DiscriminationMode::Binary => ("binary", 0.0),
        DiscriminationMode::AllWay => ("all-way", 0.0),
        DiscriminationMode::Decomposed { alpha } => ("decomposed", alpha),
    };
    let _ = writeln!(
        out,
        "arch,{},{},{},{},{},{},{},{},{}",
        arch.input_dim,
        arch.hidden_dim,
        arch.embed_dim,
        arch.n_classes,
        arch.disc_hidden,
        arch.n_targets,
        mode,
        alpha,
        arch.disc_dropout
    );
    let _ = writeln!(out, "progress,{}", model.progress);

    let mut emit_mat = |name: &str, m: &Matrix| {
        let _ = write!(out, "block,{name},{},{}", m.rows(), m.cols());
        for v in m.as_slice() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    };
    let layers: Vec<(&str, &LinearLayer)> = vec![
        ("encoder.0", &model.encoder[0]),
        ("encoder.1", &model.encoder[1]),
        ("classifier", &model.classifier),
        ("discriminator.0", &model.discriminator[0]),
        ("discriminator.1", &model.discriminator[1]),
        ("discriminator.2", &model.discriminator[2]),
    ];
    for (name, l) in &layers {
        emit_mat(&format!("{name}.w"), &l.w);
        let bm = Matrix::from_rows(&[l.b.as_slice()]);
        emit_mat(&format!("{name}.b"), &bm);
    }
    let moms: Vec<(&str, &LayerGrad)> = vec![
        ("momentum.encoder.0", &model.momentum.encoder[0]),
        ("momentum.encoder.1", &model.momentum.encoder[1]),
        ("momentum.classifier", &model.momentum.classifier),
        ("momentum.discriminator.0", &model.momentum.discriminator[0]),
        ("momentum.discriminator.1", &model.momentum.discriminator[1]),
        ("momentum.discriminator.2", &model.momentum.discriminator[2]),
    ];
    for (name, g) in &moms {
        emit_mat(&format!("{name}.w"), &g.w);
        let bm = Matrix::from_rows(&[g.b.as_slice()]);
        emit_mat(&format!("{name}.b"), &bm);
    }
    out
}

pub fn save_model(model: &ModelState, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn model_from_string(text: &str) -> Result<ModelState> {
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, msg: String| Error::Parse { line: line + 1, msg };

    let (i0, arch_line) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty checkpoint".into()))?;
    let f: Vec<&str> = arch_line.split(',').collect();
    if f.len() != 10 || f[0] != "arch" {
        return Err(parse_err(i0, "expected arch line".into()));
    }
    let num = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| parse_err(i0, format!("bad integer {s:?}")))
    };
    let alpha: f64 = f[8]
        .parse()
        .map_err(|_| parse_err(i0, format!("bad alpha {:?}", f[8])))?;
    let mode = match f[7] {
        "binary" => DiscriminationMode::Binary,
        "all-way" => DiscriminationMode::AllWay,
        "decomposed" => DiscriminationMode::Decomposed { alpha },
        other => return Err(parse_err(i0, format!("unknown mode {other:?}"))),
    };
    let arch = ModelArch {
        input_dim: num(f[1])?,
        hidden_dim: num(f[2])?,
        embed_dim: num(f[3])?,
        n_classes: num(f[4])?,
        disc_hidden: num(f[5])?,
        n_targets: num(f[6])?,
        mode,
        disc_dropout: f[9]
            .parse()
            .map_err(|_| parse_err(i0, format!("bad dropout {:?}", f[9])))?,
    };

    let (i1, prog_line) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing progress line".into()))?;
    let pf: Vec<&str> = prog_line.split(',').collect();
    if pf.len() != 2 || pf[0] != "progress" {
        return Err(parse_err(i1, "expected progress line".into()));
    }
    let progress: f64 = pf[1]
        .parse()
        .map_err(|_| parse_err(i1, format!("bad progress {:?}", pf[1])))?;

    let mut rng = Rng::seed_from_u64(0);
    let mut model = ModelState::init(arch, &mut rng);
    model.progress = progress;

    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 4 || f[0] != "block" {
            return Err(parse_err(i, "expected block line".into()));
        }
        let name = f[1];
        let rows: usize = f[2]
            .parse()
            .map_err(|_| parse_err(i, format!("bad rows {:?}", f[2])))?;
        let cols: usize = f[3]
            .parse()
            .map_err(|_| parse_err(i, format!("bad cols {:?}", f[3])))?;
        if f.len() != 4 + rows * cols {
            return Err(parse_err(
                i,
                format!("block {name}: expected {} values, got {}", rows * cols, f.len() - 4),
            ));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for s in &f[4..] {
            values.push(
                s.parse::<f64>()
                    .map_err(|_| parse_err(i, format!("bad float {s:?}")))?,
            );
        }
        write_block(&mut model, name, rows, cols, &values)
            .map_err(|msg| parse_err(i, msg))?;
    }
    Ok(model)
}

fn write_block(
    model: &mut ModelState,
    name: &str,
    rows: usize,
    cols: usize,
    values: &[f64],
) -> std::result::Result<(), String> {
    let (is_momentum, rest) = match name.strip_prefix("momentum.") {
        Some(r) => (true, r),
        None => (false, name),
    };
    let (layer_name, field) = rest
        .rsplit_once('.')
        .ok_or_else(|| format!("bad block name {name:?}"))?;

    let (w, b): (&mut Matrix, &mut Vector) = {
        let idx = |s: &str| -> std::result::Result<usize, String> {
            s.parse().map_err(|_| format!("bad layer index in {name:?}"))
        };
        if is_momentum {
            let g: &mut LayerGrad = match layer_name {
                "classifier" => &mut model.momentum.classifier,
                _ if layer_name.starts_with("encoder.") => {
                    &mut model.momentum.encoder[idx(&layer_name[8..])?]
                }
                _ if layer_name.starts_with("discriminator.") => {
                    &mut model.momentum.discriminator[idx(&layer_name[14..])?]
                }
                _ => return Err(format!("unknown block {name:?}")),
            };
            (&mut g.w, &mut g.b)
        } else {
            let l: &mut LinearLayer = match layer_name {
                "classifier" => &mut model.classifier,
                _ if layer_name.starts_with("encoder.") => {
                    &mut model.encoder[idx(&layer_name[8..])?]
                }
                _ if layer_name.starts_with("discriminator.") => {
                    &mut model.discriminator[idx(&layer_name[14..])?]
                }
                _ => return Err(format!("unknown block {name:?}")),
            };
            (&mut l.w, &mut l.b)
        }
    };
    match field {
        "w" => {
            if (w.rows(), w.cols()) != (rows, cols) {
                return Err(format!(
                    "block {name}: shape {rows}x{cols} does not match {}x{}",
                    w.rows(),
                    w.cols()
                ));
            }
            w.as_mut_slice().copy_from_slice(values);
        }
        "b" => {
            if rows != 1 || cols != b.len() {
                return Err(format!(
                    "block {name}: shape {rows}x{cols} does not match 1x{}",
                    b.len()
                ));
            }
            b.as_mut_slice().copy_from_slice(values);
        }
        other => return Err(format!("unknown field {other:?} in {name:?}")),
    }
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelState> {
    let text = std::fs::read_to_string(path)?;
    model_from_string(&text)
}
