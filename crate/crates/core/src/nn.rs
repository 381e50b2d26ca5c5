//! A small fully connected network with hand-written forward and backward
//! passes: rectified hidden layers, linear output. It serves both as the
//! hyperbolic encoder (2-D output pushed through the exponential map) and as
//! the downstream classifier backbone, so the backward pass accepts an
//! arbitrary cotangent on the output and returns the input cotangent.

use crate::error::{Error, Result};
use crate::geometry::{
    clip_to_radius, clip_to_radius_vjp, exp_map0, exp_map0_vjp, hyp_distance_grad_u, BallParams,
    BallPoint,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Architecture description: `layer_sizes[0]` is the input dimension, the
/// last entry the output dimension. Hidden activations are rectifiers; the
/// output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(
                "an encoder needs at least an input and an output layer".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidSpec("layer sizes must be positive".into()));
        }
        Ok(Self { layer_sizes, seed })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// One affine layer; `w` is row-major `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// All trainable state of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

/// Gradients in the same shape as [`EncoderParams`].
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub layers: Vec<Layer>,
}

/// Intermediate activations of one forward pass: `acts[l]` is the input to
/// layer `l` (post-rectifier for l ≥ 1), `acts[L]` the linear output.
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl EncoderParams {
    /// Glorot-uniform initialization: each weight uniform in
    /// ±√(6/(fan_in+fan_out)), biases zero, seeded.
    pub fn glorot(spec: MlpSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|io| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                Layer { w, b: vec![0.0; fan_out] }
            })
            .collect();
        Self { spec, layers }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|io| Layer { w: vec![0.0; io[0] * io[1]], b: vec![0.0; io[1]] })
            .collect();
        Self { spec, layers }
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        if layers.len() + 1 != spec.layer_sizes.len() {
            return Err(Error::ShapeMismatch {
                context: "layer count vs spec",
                expected: spec.layer_sizes.len() - 1,
                found: layers.len(),
            });
        }
        for (l, layer) in layers.iter().enumerate() {
            let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
            if layer.w.len() != n_in * n_out {
                return Err(Error::ShapeMismatch {
                    context: "weight matrix size",
                    expected: n_in * n_out,
                    found: layer.w.len(),
                });
            }
            if layer.b.len() != n_out {
                return Err(Error::ShapeMismatch {
                    context: "bias size",
                    expected: n_out,
                    found: layer.b.len(),
                });
            }
            if layer.w.iter().chain(&layer.b).any(|x| !x.is_finite()) {
                return Err(Error::InvalidSpec(format!("layer {l} has non-finite entries")));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn zeros_like_grads(&self) -> EncoderGrads {
        EncoderGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Layer { w: vec![0.0; l.w.len()], b: vec![0.0; l.b.len()] })
                .collect(),
        }
    }

    /// Plain SGD step: θ ← θ − lr·g.
    pub fn sgd_step(&mut self, grads: &EncoderGrads, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in layer.w.iter_mut().zip(&g.w) {
                *w -= lr * gw;
            }
            for (b, gb) in layer.b.iter_mut().zip(&g.b) {
                *b -= lr * gb;
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.acts.pop().unwrap())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.spec.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "forward input dimension",
                expected: self.spec.input_dim(),
                found: x.len(),
            });
        }
        let l_count = self.layers.len();
        let mut acts = Vec::with_capacity(l_count + 1);
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let n_in = self.spec.layer_sizes[l];
            let input = &acts[l];
            let mut y = layer.b.clone();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &layer.w[o * n_in..(o + 1) * n_in];
                let mut acc = 0.0;
                for i in 0..n_in {
                    acc += row[i] * input[i];
                }
                *yo += acc;
            }
            if l < l_count - 1 {
                for v in &mut y {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(y);
        }
        Ok(Trace { acts })
    }

    /// Backward pass from a cotangent on the network output. Accumulates
    /// parameter gradients into `grads` and returns the input cotangent.
    /// Rectifier kinks take subgradient 0.
    pub fn backprop(&self, trace: &Trace, out_cot: &[f64], grads: &mut EncoderGrads) -> Vec<f64> {
        let l_count = self.layers.len();
        let mut cot = out_cot.to_vec();
        for l in (0..l_count).rev() {
            if l < l_count - 1 {
                for (c, &a) in cot.iter_mut().zip(&trace.acts[l + 1]) {
                    if a <= 0.0 {
                        *c = 0.0;
                    }
                }
            }
            let n_in = self.spec.layer_sizes[l];
            let input = &trace.acts[l];
            let layer = &self.layers[l];
            let g = &mut grads.layers[l];
            let mut down = vec![0.0; n_in];
            for (o, &co) in cot.iter().enumerate() {
                g.b[o] += co;
                if co != 0.0 {
                    let row = &layer.w[o * n_in..(o + 1) * n_in];
                    let grow = &mut g.w[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        grow[i] += co * input[i];
                        down[i] += co * row[i];
                    }
                }
            }
            cot = down;
        }
        cot
    }
}

impl EncoderGrads {
    pub fn scale(&mut self, f: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.w {
                *w *= f;
            }
            for b in &mut layer.b {
                *b *= f;
            }
        }
    }
}

/// Encoder output mapped into the ball:
/// clip_to_radius(exp_map0(forward(params, x)), r_clip).
pub fn embed(params: &EncoderParams, x: &[f64], ball: &BallParams, r_clip: f64) -> Result<BallPoint> {
    let v = params.forward(x)?;
    Ok(clip_to_radius(exp_map0(&v, ball).coords(), r_clip))
}

/// Mean hyperbolic distance loss over a batch and its exact gradient.
///
/// loss = (1/B)·Σ_i hyp_distance(embed(x_i), target_i); the gradient chains
/// through the distance, the clip (pass-through inside the radius, tangential
/// rescale outside), the exponential map, and the affine layers.
pub fn hyperbolic_grad(
    params: &EncoderParams,
    batch: &[&[f64]],
    targets: &[BallPoint],
    ball: &BallParams,
    r_clip: f64,
) -> Result<(EncoderGrads, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidSpec("empty batch".into()));
    }
    if batch.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            context: "batch vs targets",
            expected: batch.len(),
            found: targets.len(),
        });
    }
    let mut grads = params.zeros_like_grads();
    let mut loss = 0.0;
    let out_dim = params.spec().output_dim();
    let mut grad_pt = vec![0.0; out_dim];
    let mut cot_raw = vec![0.0; out_dim];
    let mut cot_v = vec![0.0; out_dim];
    for (x, target) in batch.iter().zip(targets) {
        let trace = params.forward_trace(x)?;
        let v = trace.output();
        let raw = exp_map0(v, ball);
        let point = clip_to_radius(raw.coords(), r_clip);
        let d = hyp_distance_grad_u(point.coords(), target.coords(), &mut grad_pt);
        loss += d;
        clip_to_radius_vjp(raw.coords(), r_clip, &grad_pt, &mut cot_raw);
        exp_map0_vjp(v, &cot_raw, ball, &mut cot_v);
        params.backprop(&trace, &cot_v, &mut grads);
    }
    let inv_b = 1.0 / batch.len() as f64;
    grads.scale(inv_b);
    Ok((grads, loss * inv_b))
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    version: u32,
    spec: MlpSpec,
    layers: Vec<CheckpointLayer>,
}

/// Writes the versioned checkpoint JSON {version, spec, layers:[{W, b}]}.
pub fn save_checkpoint(params: &EncoderParams, path: &Path) -> Result<()> {
    let spec = params.spec();
    let layers = params
        .layers()
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let n_in = spec.layer_sizes[l];
            CheckpointLayer {
                w: layer.w.chunks(n_in).map(|r| r.to_vec()).collect(),
                b: layer.b.clone(),
            }
        })
        .collect();
    let doc = CheckpointDoc { version: CHECKPOINT_VERSION, spec: spec.clone(), layers };
    let mut body = serde_json::to_vec_pretty(&doc)?;
    body.push(b'\n');
    std::fs::write(path, body)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let bytes = std::fs::read(path)?;
    let doc: CheckpointDoc = serde_json::from_slice(&bytes)?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(Error::BadDocument {
            path: path.display().to_string(),
            reason: format!("unsupported version {}", doc.version),
        });
    }
    let layers = doc
        .layers
        .into_iter()
        .map(|cl| Layer { w: cl.w.into_iter().flatten().collect(), b: cl.b })
        .collect();
    EncoderParams::from_layers(doc.spec, layers)
}

/// Loss history CSV with header `epoch,loss`, one row per epoch.
pub fn write_loss_csv(losses: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss"])?;
    for (epoch, loss) in losses.iter().enumerate() {
        w.write_record([epoch.to_string(), format!("{loss:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball() -> BallParams {
        BallParams::unit()
    }

    #[test]
    fn zero_network_maps_to_zero_and_origin() {
        let spec = MlpSpec::new(vec![3, 4, 2], 0).unwrap();
        let params = EncoderParams::zeros(spec);
        let y = params.forward(&[0.3, -0.7, 1.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
        let p = embed(&params, &[0.3, -0.7, 1.0], &ball(), 0.9).unwrap();
        assert_eq!(p.coords(), &[0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        let spec = MlpSpec::new(vec![2, 2], 0).unwrap();
        let layers = vec![Layer { w: vec![1.0, 0.0, 0.0, 1.0], b: vec![0.0, 0.0] }];
        let params = EncoderParams::from_layers(spec, layers).unwrap();
        assert_eq!(params.forward(&[0.25, -3.5]).unwrap(), vec![0.25, -3.5]);
    }

    #[test]
    fn two_two_two_matches_hand_arithmetic() {
        // Layer 1: W=[[1,2],[3,4]], b=[0.5,−1]; ReLU; layer 2: W=[[1,−1],[2,0]], b=[0,1].
        // x=(1,1): pre=(3.5,6) → ReLU same → out=(3.5−6, 2·3.5+1) = (−2.5, 8).
        let spec = MlpSpec::new(vec![2, 2, 2], 0).unwrap();
        let layers = vec![
            Layer { w: vec![1.0, 2.0, 3.0, 4.0], b: vec![0.5, -1.0] },
            Layer { w: vec![1.0, -1.0, 2.0, 0.0], b: vec![0.0, 1.0] },
        ];
        let params = EncoderParams::from_layers(spec, layers).unwrap();
        assert_eq!(params.forward(&[1.0, 1.0]).unwrap(), vec![-2.5, 8.0]);
        // x=(1,−1): pre=(−0.5,−2) → ReLU zeroes both → out = b2 = (0,1).
        assert_eq!(params.forward(&[1.0, -1.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn forward_rejects_wrong_input_dimension() {
        let spec = MlpSpec::new(vec![3, 2], 0).unwrap();
        let params = EncoderParams::zeros(spec);
        assert!(matches!(
            params.forward(&[1.0, 2.0]),
            Err(Error::ShapeMismatch { expected: 3, found: 2, .. })
        ));
    }

    #[test]
    fn embed_clips_unit_forward_output() {
        // forward output (1,0) → exp_map0 norm tanh(1) = 0.761594… > 0.76, so
        // the clip pulls it to exactly 0.75999.
        let spec = MlpSpec::new(vec![2, 2], 0).unwrap();
        let layers = vec![Layer { w: vec![1.0, 0.0, 0.0, 1.0], b: vec![0.0, 0.0] }];
        let params = EncoderParams::from_layers(spec, layers).unwrap();
        let p = embed(&params, &[1.0, 0.0], &ball(), 0.76).unwrap();
        assert!((p.norm() - 0.75999).abs() < 1e-12);
        assert!((p.coords()[0] - 0.75999).abs() < 1e-12);
        assert_eq!(p.coords()[1], 0.0);
    }

    #[test]
    fn glorot_respects_bound_and_seed() {
        let spec = MlpSpec::new(vec![4, 3], 9).unwrap();
        let a = EncoderParams::glorot(spec.clone());
        let b = EncoderParams::glorot(spec);
        assert_eq!(a, b);
        let bound = (6.0 / 7.0f64).sqrt();
        assert!(a.layers()[0].w.iter().all(|w| w.abs() < bound));
        assert!(a.layers()[0].b.iter().all(|&b| b == 0.0));
        let other = EncoderParams::glorot(MlpSpec::new(vec![4, 3], 10).unwrap());
        assert_ne!(a, other);
    }

    #[test]
    fn loss_zero_at_exact_match() {
        // Zero network embeds everything at the origin; targets at the origin
        // give zero loss and zero distance-path gradient.
        let spec = MlpSpec::new(vec![2, 2], 0).unwrap();
        let params = EncoderParams::zeros(spec);
        let x = [0.4, 0.2];
        let targets = vec![BallPoint::origin(2)];
        let (grads, loss) = hyperbolic_grad(&params, &[&x], &targets, &ball(), 0.9).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.layers[0].w.iter().all(|&g| g == 0.0));
        assert!(grads.layers[0].b.iter().all(|&g| g == 0.0));
    }

    fn fd_check(params: &EncoderParams, x: &[f64], target: &BallPoint, tol: f64) {
        let b = ball();
        let r_clip = 0.9;
        let (grads, _) = hyperbolic_grad(params, &[x], std::slice::from_ref(target), &b, r_clip).unwrap();
        let h = 1e-5;
        let mut probe = params.clone();
        for l in 0..params.layers().len() {
            for idx in 0..params.layers()[l].w.len() {
                let orig = params.layers()[l].w[idx];
                probe.layers[l].w[idx] = orig + h;
                let (_, lp) =
                    hyperbolic_grad(&probe, &[x], std::slice::from_ref(target), &b, r_clip).unwrap();
                probe.layers[l].w[idx] = orig - h;
                let (_, lm) =
                    hyperbolic_grad(&probe, &[x], std::slice::from_ref(target), &b, r_clip).unwrap();
                probe.layers[l].w[idx] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads.layers[l].w[idx];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    (fd - an).abs() / denom < tol,
                    "layer {l} w[{idx}]: fd {fd} vs analytic {an}"
                );
            }
            for idx in 0..params.layers()[l].b.len() {
                let orig = params.layers()[l].b[idx];
                probe.layers[l].b[idx] = orig + h;
                let (_, lp) =
                    hyperbolic_grad(&probe, &[x], std::slice::from_ref(target), &b, r_clip).unwrap();
                probe.layers[l].b[idx] = orig - h;
                let (_, lm) =
                    hyperbolic_grad(&probe, &[x], std::slice::from_ref(target), &b, r_clip).unwrap();
                probe.layers[l].b[idx] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads.layers[l].b[idx];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    (fd - an).abs() / denom < tol,
                    "layer {l} b[{idx}]: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn single_layer_gradient_matches_finite_differences() {
        let spec = MlpSpec::new(vec![2, 2], 3).unwrap();
        let layers = vec![Layer { w: vec![0.3, -0.2, 0.1, 0.4], b: vec![0.05, -0.1] }];
        let params = EncoderParams::from_layers(spec, layers).unwrap();
        let target = BallPoint::new(vec![0.2, -0.1]).unwrap();
        fd_check(&params, &[0.7, -0.3], &target, 1e-5);
    }

    #[test]
    fn deep_gradient_matches_finite_differences() {
        let spec = MlpSpec::new(vec![3, 5, 4, 2], 11).unwrap();
        let mut params = EncoderParams::glorot(spec);
        // Shrink weights so no rectifier sits on its kink and no clip engages.
        for l in 0..params.layers().len() {
            for w in &mut params.layers[l].w {
                *w *= 0.5;
            }
        }
        let target = BallPoint::new(vec![-0.3, 0.25]).unwrap();
        fd_check(&params, &[0.9, -0.4, 0.6], &target, 1e-4);
    }

    #[test]
    fn gradient_through_active_clip_matches_finite_differences() {
        // Large weights force ‖exp_map0(v)‖ > r_clip so the rescale Jacobian
        // is exercised, not the pass-through branch.
        let spec = MlpSpec::new(vec![2, 2], 0).unwrap();
        let layers = vec![Layer { w: vec![2.0, 0.5, -0.4, 1.8], b: vec![0.3, 0.2] }];
        let params = EncoderParams::from_layers(spec, layers).unwrap();
        let x = [1.0, 0.8];
        let v = params.forward(&x).unwrap();
        assert!(exp_map0(&v, &ball()).norm() > 0.9, "clip must be active for this test");
        let target = BallPoint::new(vec![0.1, 0.2]).unwrap();
        fd_check(&params, &x, &target, 1e-4);
    }

    #[test]
    fn origin_reflection_isometry_preserves_loss() {
        // Negating the output layer negates every feature; negating targets
        // applies the same ball isometry, so the loss is unchanged.
        let spec = MlpSpec::new(vec![2, 4, 2], 5).unwrap();
        let params = EncoderParams::glorot(spec.clone());
        let xs: Vec<Vec<f64>> = vec![vec![0.3, 0.9], vec![-0.5, 0.1], vec![0.2, -0.7]];
        let batch: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let targets: Vec<BallPoint> = vec![
            BallPoint::new(vec![0.3, 0.1]).unwrap(),
            BallPoint::new(vec![-0.2, 0.4]).unwrap(),
            BallPoint::new(vec![0.0, -0.5]).unwrap(),
        ];
        let (_, loss) = hyperbolic_grad(&params, &batch, &targets, &ball(), 0.9).unwrap();

        let mut reflected = params.clone();
        let last = reflected.layers.len() - 1;
        for w in &mut reflected.layers[last].w {
            *w = -*w;
        }
        for b in &mut reflected.layers[last].b {
            *b = -*b;
        }
        let neg_targets: Vec<BallPoint> = targets
            .iter()
            .map(|t| BallPoint::new(t.coords().iter().map(|x| -x).collect()).unwrap())
            .collect();
        let (_, loss_neg) =
            hyperbolic_grad(&reflected, &batch, &neg_targets, &ball(), 0.9).unwrap();
        assert_eq!(loss, loss_neg);
    }

    #[test]
    fn gradients_are_deterministic() {
        let spec = MlpSpec::new(vec![2, 3, 2], 21).unwrap();
        let params = EncoderParams::glorot(spec);
        let x = [0.2, -0.9];
        let target = BallPoint::new(vec![0.4, 0.1]).unwrap();
        let (g1, l1) =
            hyperbolic_grad(&params, &[&x], std::slice::from_ref(&target), &ball(), 0.9).unwrap();
        let (g2, l2) =
            hyperbolic_grad(&params, &[&x], std::slice::from_ref(&target), &ball(), 0.9).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1.layers[0].w, g2.layers[0].w);
        assert_eq!(g1.layers[1].w, g2.layers[1].w);
    }

    #[test]
    fn checkpoint_round_trips() {
        let spec = MlpSpec::new(vec![3, 4, 2], 17).unwrap();
        let params = EncoderParams::glorot(spec);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn loss_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_csv(&[0.5, 0.25], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "epoch,loss");
        assert!(lines.next().unwrap().starts_with("0,5.0"));
        assert!(lines.next().unwrap().starts_with("1,2.5"));
    }
}
