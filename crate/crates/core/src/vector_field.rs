//! Time-conditioned MLP vector field `N(t, u)` with exact reverse-mode
//! gradients of the flow-matching loss.
//!
//! The network sees `[(u - shift_in) / scale_in, emb(t)]` and its raw output
//! `y` is mapped to state units as `shift_out + scale_out * y`. The loss is
//! taken on raw outputs against targets mapped the same way, so with the
//! identity [`Normalizer`] it is exactly `mean_b mean_j (N_j - v_j)^2`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CfoError, Result};
use crate::interpolant::InterpolantBatch;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub state_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// Number of sinusoidal frequencies; the embedding has `2 * embed_bands` entries.
    pub embed_bands: usize,
    pub use_time_embedding: bool,
}

impl MlpConfig {
    /// Desk-scale default: hidden `[64, 128, 128, 64]`, 8 frequencies.
    pub fn desk(state_dim: usize) -> Self {
        Self {
            state_dim,
            hidden_dims: vec![64, 128, 128, 64],
            embed_bands: 8,
            use_time_embedding: true,
        }
    }

    /// `[128, 256, 256, 256, 128]` hidden layers.
    pub fn full(state_dim: usize) -> Self {
        Self {
            hidden_dims: vec![128, 256, 256, 256, 128],
            ..Self::desk(state_dim)
        }
    }

    /// Same network without time input, for one-step autoregressive maps.
    pub fn autoregressive(mut self) -> Self {
        self.use_time_embedding = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return invalid("state_dim must be positive");
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return invalid("hidden_dims must be nonempty with positive widths");
        }
        if self.use_time_embedding && self.embed_bands == 0 {
            return invalid("embed_bands must be positive when the time embedding is used");
        }
        Ok(())
    }

    pub fn embed_dim(&self) -> usize {
        if self.use_time_embedding {
            2 * self.embed_bands
        } else {
            0
        }
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.embed_dim()
    }

    /// `(fan_in, fan_out)` for every affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim()];
        dims.extend(&self.hidden_dims);
        dims.push(self.state_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Flat parameter storage. Layer `l` holds a `fan_in × fan_out` weight block
/// followed by its bias, in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldParams {
    shapes: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl VectorFieldParams {
    pub fn zeros(config: &MlpConfig) -> Self {
        Self {
            shapes: config.layer_shapes(),
            values: vec![0.0; config.n_params()],
        }
    }

    pub fn from_flat(config: &MlpConfig, values: Vec<f64>) -> Result<Self> {
        if values.len() != config.n_params() {
            return invalid(format!(
                "expected {} parameters, got {}",
                config.n_params(),
                values.len()
            ));
        }
        Ok(Self {
            shapes: config.layer_shapes(),
            values,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            shapes: self.shapes.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    fn offset(&self, layer: usize) -> usize {
        self.shapes[..layer].iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (fi, fo) = self.shapes[l];
        let off = self.offset(l);
        let w = ArrayView2::from_shape((fi, fo), &self.values[off..off + fi * fo]).unwrap();
        let b = ArrayView1::from(&self.values[off + fi * fo..off + fi * fo + fo]);
        (w, b)
    }

    pub fn layer_mut(&mut self, l: usize) -> (ArrayViewMut2<'_, f64>, ArrayViewMut1<'_, f64>) {
        let (fi, fo) = self.shapes[l];
        let off = self.offset(l);
        let (w, b) = self.values[off..off + fi * fo + fo].split_at_mut(fi * fo);
        (
            ArrayViewMut2::from_shape((fi, fo), w).unwrap(),
            ArrayViewMut1::from(b),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
pub fn init_params(config: &MlpConfig, seed: u64) -> Result<VectorFieldParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = VectorFieldParams::zeros(config);
    for l in 0..p.n_layers() {
        let (fi, _) = p.shapes[l];
        let bound = 1.0 / (fi as f64).sqrt();
        let (mut w, _) = p.layer_mut(l);
        w.mapv_inplace(|_| rng.random_range(-bound..bound));
    }
    Ok(p)
}

/// `[sin(2^j π t)]_j ++ [cos(2^j π t)]_j` for `j = 0..bands`.
pub fn time_embedding(t: f64, bands: usize) -> Result<Vec<f64>> {
    if bands == 0 {
        return invalid("time embedding needs at least one band");
    }
    let mut out = vec![0.0; 2 * bands];
    write_embedding(t, bands, &mut out);
    Ok(out)
}

fn write_embedding(t: f64, bands: usize, out: &mut [f64]) {
    let mut freq = std::f64::consts::PI;
    for j in 0..bands {
        let (s, c) = (freq * t).sin_cos();
        out[j] = s;
        out[bands + j] = c;
        freq *= 2.0;
    }
}

/// Per-component affine map, `normalized = (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.shift.len() != dim || self.scale.len() != dim {
            return invalid("normalizer dimension does not match the state dimension");
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) || self.shift.iter().any(|s| !s.is_finite()) {
            return invalid("normalizer scales must be positive and finite");
        }
        Ok(())
    }
}

/// Input and output scaling wrapped around the raw network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input: Affine,
    pub output: Affine,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            input: Affine::identity(dim),
            output: Affine::identity(dim),
        }
    }
}

/// MLP vector field with its normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub config: MlpConfig,
    pub params: VectorFieldParams,
    pub normalizer: Normalizer,
}

struct Tape {
    /// Input to each layer (`activations[0]` is the network input).
    activations: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl VectorField {
    pub fn new(config: MlpConfig, params: VectorFieldParams, normalizer: Normalizer) -> Result<Self> {
        config.validate()?;
        if params.shapes != config.layer_shapes() {
            return invalid("parameter layout does not match the configuration");
        }
        normalizer.input.validate(config.state_dim)?;
        normalizer.output.validate(config.state_dim)?;
        Ok(Self {
            config,
            params,
            normalizer,
        })
    }

    /// Fresh network with [`init_params`] and identity normalization.
    pub fn initialized(config: MlpConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        let d = config.state_dim;
        Self::new(config, params, Normalizer::identity(d))
    }

    pub fn state_dim(&self) -> usize {
        self.config.state_dim
    }

    fn build_input(&self, t: &[f64], u: ArrayView2<f64>) -> Result<Array2<f64>> {
        let d = self.config.state_dim;
        if u.ncols() != d {
            return invalid(format!("state has dimension {}, model expects {d}", u.ncols()));
        }
        if self.config.use_time_embedding && t.len() != u.nrows() {
            return invalid(format!("{} times for {} states", t.len(), u.nrows()));
        }
        let n = u.nrows();
        let mut input = Array2::zeros((n, self.config.input_dim()));
        let (shift, scale) = (&self.normalizer.input.shift, &self.normalizer.input.scale);
        let bands = self.config.embed_bands;
        for (r, mut row) in input.axis_iter_mut(Axis(0)).enumerate() {
            let src = u.row(r);
            let dst = row.as_slice_mut().unwrap();
            for j in 0..d {
                let v = src[j];
                if !v.is_finite() {
                    return Err(CfoError::Numeric(format!("non-finite state entry at row {r}, component {j}")));
                }
                dst[j] = (v - shift[j]) / scale[j];
            }
            if self.config.use_time_embedding {
                if !t[r].is_finite() {
                    return Err(CfoError::Numeric(format!("non-finite time at row {r}")));
                }
                write_embedding(t[r], bands, &mut dst[d..]);
            }
        }
        Ok(input)
    }

    fn run(&self, input: Array2<f64>, keep: bool) -> Tape {
        let n_layers = self.params.n_layers();
        let mut activations = Vec::with_capacity(if keep { n_layers } else { 0 });
        let mut a = input;
        for l in 0..n_layers {
            let (w, b) = self.params.layer(l);
            let mut z = Array2::zeros((a.nrows(), w.ncols()));
            z.assign(&b.broadcast((a.nrows(), w.ncols())).unwrap());
            general_mat_mul(1.0, &a, &w, 1.0, &mut z);
            if l + 1 < n_layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            if keep {
                activations.push(a);
            }
            a = z;
        }
        Tape { activations, output: a }
    }

    fn denormalize(&self, raw: &mut Array2<f64>) {
        let (shift, scale) = (&self.normalizer.output.shift, &self.normalizer.output.scale);
        for mut row in raw.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = shift[j] + scale[j] * *v;
            }
        }
    }

    /// Evaluates `N(t_r, u_r)` for every row `r`. `t` is ignored (and may be
    /// empty) when the time embedding is disabled.
    pub fn forward_batch(&self, t: &[f64], u: ArrayView2<f64>) -> Result<Array2<f64>> {
        let input = self.build_input(t, u)?;
        let mut out = self.run(input, false).output;
        self.denormalize(&mut out);
        Ok(out)
    }

    /// Evaluates every row at the same time `t`.
    pub fn forward_at(&self, t: f64, u: ArrayView2<f64>) -> Result<Array2<f64>> {
        let times = vec![t; u.nrows()];
        self.forward_batch(&times, u)
    }

    pub fn forward(&self, t: f64, u: ArrayView1<f64>) -> Result<Array1<f64>> {
        let u2 = u.insert_axis(Axis(0));
        Ok(self.forward_at(t, u2)?.row(0).to_owned())
    }

    /// Mean squared error (over rows and components, in normalized output
    /// units) and its exact gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        t: &[f64],
        x: ArrayView2<f64>,
        target: ArrayView2<f64>,
    ) -> Result<(f64, VectorFieldParams)> {
        let n = x.nrows();
        let d = self.config.state_dim;
        if n == 0 {
            return invalid("loss needs a nonempty batch");
        }
        if target.dim() != (n, d) {
            return invalid(format!("targets have shape {:?}, expected ({n}, {d})", target.dim()));
        }
        let input = self.build_input(t, x)?;
        let tape = self.run(input, true);

        let (shift, scale) = (&self.normalizer.output.shift, &self.normalizer.output.scale);
        let mut delta = tape.output;
        let mut loss = 0.0;
        for (r, mut row) in delta.axis_iter_mut(Axis(0)).enumerate() {
            let mut row_loss = 0.0;
            for j in 0..d {
                let e = row[j] - (target[[r, j]] - shift[j]) / scale[j];
                row_loss += e * e;
                row[j] = e;
            }
            if !row_loss.is_finite() {
                return Err(CfoError::Numeric(format!(
                    "non-finite loss contribution from sample {r} (t = {})",
                    t.get(r).copied().unwrap_or(f64::NAN)
                )));
            }
            loss += row_loss;
        }
        let denom = (n * d) as f64;
        loss /= denom;
        delta.mapv_inplace(|e| 2.0 * e / denom);

        let mut grads = self.params.zeros_like();
        for l in (0..self.params.n_layers()).rev() {
            let a = &tape.activations[l];
            {
                let (mut gw, mut gb) = grads.layer_mut(l);
                general_mat_mul(1.0, &a.t(), &delta, 0.0, &mut gw);
                gb.assign(&delta.sum_axis(Axis(0)));
            }
            if l > 0 {
                let (w, _) = self.params.layer(l);
                let mut prev = Array2::zeros((n, w.nrows()));
                general_mat_mul(1.0, &delta, &w.t(), 0.0, &mut prev);
                // ReLU gate: activations are post-ReLU, zero exactly where gated
                ndarray::Zip::from(&mut prev).and(a).for_each(|g, &act| {
                    if act <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = prev;
            }
        }
        Ok((loss, grads))
    }

    /// Loss and gradient on an interpolant batch.
    pub fn batch_loss_and_grad(&self, batch: &InterpolantBatch) -> Result<(f64, VectorFieldParams)> {
        self.loss_and_grad(&batch.t, batch.x.view(), batch.v_target.view())
    }

    /// Loss only, same normalization as [`Self::loss_and_grad`].
    pub fn loss(&self, t: &[f64], x: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<f64> {
        let pred = self.forward_batch(t, x)?;
        let d = self.config.state_dim;
        let scale = &self.normalizer.output.scale;
        let mut total = 0.0;
        for r in 0..pred.nrows() {
            for j in 0..d {
                let e = (pred[[r, j]] - target[[r, j]]) / scale[j];
                total += e * e;
            }
        }
        Ok(total / (pred.nrows() * d) as f64)
    }

    /// Bias of the output layer.
    pub fn output_bias_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        let last = self.params.n_layers() - 1;
        self.params.layer_mut(last).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn toy_config() -> MlpConfig {
        MlpConfig {
            state_dim: 2,
            hidden_dims: vec![5, 4],
            embed_bands: 2,
            use_time_embedding: true,
        }
    }

    #[test]
    fn embedding_values() {
        let e = time_embedding(0.0, 4).unwrap();
        assert_eq!(&e[..4], &[0.0; 4]);
        assert_eq!(&e[4..], &[1.0; 4]);
        assert_eq!(time_embedding(0.3, 8).unwrap().len(), 16);
        assert!(time_embedding(0.3, 0).is_err());
        let e = time_embedding(0.25, 2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(e[0], r, epsilon = 1e-15);
        assert_relative_eq!(e[1], 1.0, epsilon = 1e-15);
        assert_relative_eq!(e[2], r, epsilon = 1e-15);
        assert_relative_eq!(e[3], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn embedding_separates_times() {
        // pairwise distinct on a 1000-point grid of (0, 1) for bands >= 2
        let pts: Vec<Vec<f64>> = (1..1000)
            .map(|k| time_embedding(k as f64 / 1000.0, 2).unwrap())
            .collect();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let dist: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum();
                assert!(dist > 1e-12, "embeddings {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn config_shapes() {
        let c = MlpConfig::full(3);
        assert_eq!(c.input_dim(), 19);
        assert_eq!(c.layer_shapes().len(), 6);
        assert_eq!(c.autoregressive().input_dim(), 3);
        assert!(MlpConfig { hidden_dims: vec![], ..toy_config() }.validate().is_err());
        assert!(MlpConfig { embed_bands: 0, ..toy_config() }.validate().is_err());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let c = toy_config();
        let vf = VectorField::new(c.clone(), VectorFieldParams::zeros(&c), Normalizer::identity(2)).unwrap();
        assert_eq!(vf.forward(0.4, array![3.0, -7.0].view()).unwrap(), array![0.0, 0.0]);
    }

    #[test]
    fn single_hidden_identity_network_is_affine() {
        // hidden width 2 without time: relu(W1 u + b1) then W2, b2.
        let c = MlpConfig {
            state_dim: 2,
            hidden_dims: vec![2],
            embed_bands: 1,
            use_time_embedding: false,
        };
        let mut p = VectorFieldParams::zeros(&c);
        {
            let (mut w, mut b) = p.layer_mut(0);
            w.assign(&array![[1.0, 0.0], [0.0, 1.0]]);
            b.assign(&array![10.0, 10.0]);
        }
        {
            let (mut w, mut b) = p.layer_mut(1);
            w.assign(&array![[2.0, 1.0], [0.0, -1.0]]);
            b.assign(&array![0.5, 0.25]);
        }
        let vf = VectorField::new(c, p, Normalizer::identity(2)).unwrap();
        let u = array![1.0, 2.0];
        // hidden = (11, 12); out = (2*11 + 0*12 + 0.5, 1*11 - 12 + 0.25)
        let out = vf.forward(0.0, u.view()).unwrap();
        assert_eq!(out, array![22.5, -0.75]);
    }

    #[test]
    fn forward_is_deterministic_and_init_bounded() {
        let c = toy_config();
        let p = init_params(&c, 3).unwrap();
        assert_eq!(p, init_params(&c, 3).unwrap());
        assert_ne!(p, init_params(&c, 4).unwrap());
        for l in 0..p.n_layers() {
            let (w, b) = p.layer(l);
            let bound = 1.0 / (w.nrows() as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= bound));
            assert!(b.iter().all(|&v| v == 0.0));
        }
        let vf = VectorField::initialized(c, 3).unwrap();
        let u = array![0.3, -0.2];
        let a = vf.forward(0.7, u.view()).unwrap();
        let b = vf.forward(0.7, u.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let vf = VectorField::initialized(toy_config(), 0).unwrap();
        assert!(matches!(
            vf.forward(0.1, array![f64::NAN, 0.0].view()),
            Err(CfoError::Numeric(_))
        ));
        assert!(vf.forward(0.1, array![1.0].view()).is_err());
    }

    fn finite_difference_check(vf: &VectorField, t: &[f64], x: &Array2<f64>, y: &Array2<f64>) {
        let (_, grads) = vf.loss_and_grad(t, x.view(), y.view()).unwrap();
        let mut probe = vf.clone();
        let eps = 1e-5;
        for i in 0..vf.params.len() {
            let orig = probe.params.as_slice()[i];
            probe.params.as_mut_slice()[i] = orig + eps;
            let lp = probe.loss(t, x.view(), y.view()).unwrap();
            probe.params.as_mut_slice()[i] = orig - eps;
            let lm = probe.loss(t, x.view(), y.view()).unwrap();
            probe.params.as_mut_slice()[i] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let an = grads.as_slice()[i];
            let denom = fd.abs().max(an.abs()).max(1e-7);
            assert!((fd - an).abs() / denom < 1e-4, "param {i}: fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let c = toy_config();
        let mut vf = VectorField::initialized(c, 11).unwrap();
        vf.normalizer = Normalizer {
            input: Affine { shift: vec![0.5, -1.0], scale: vec![2.0, 0.5] },
            output: Affine { shift: vec![0.0, 0.1], scale: vec![3.0, 0.7] },
        };
        vf.output_bias_mut().assign(&array![0.1, -0.2]);
        let t = vec![0.1, 0.55, 0.9];
        let x = array![[0.2, -0.4], [1.0, 0.3], [-0.7, 0.8]];
        let y = array![[1.0, 0.0], [-0.5, 2.0], [0.3, 0.3]];
        finite_difference_check(&vf, &t, &x, &y);
    }

    #[test]
    fn oracle_weights_give_zero_loss_and_gradient() {
        // zero weights with output bias equal to the target
        let c = toy_config();
        let mut vf = VectorField::new(c.clone(), VectorFieldParams::zeros(&c), Normalizer::identity(2)).unwrap();
        vf.output_bias_mut().assign(&array![1.5, -2.0]);
        let (loss, grads) = vf
            .loss_and_grad(&[0.3], array![[0.1, 0.2]].view(), array![[1.5, -2.0]].view())
            .unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.as_slice().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn loss_scales_quadratically_with_targets() {
        let c = toy_config();
        let vf = VectorField::new(c.clone(), VectorFieldParams::zeros(&c), Normalizer::identity(2)).unwrap();
        let x = array![[0.0, 0.0]];
        let v = array![[3.0, 4.0]];
        let (l1, _) = vf.loss_and_grad(&[0.2], x.view(), v.view()).unwrap();
        let (l2, _) = vf.loss_and_grad(&[0.2], x.view(), (&v * 2.0).view()).unwrap();
        // ‖v‖ = 5 -> loss = 25 / 2
        assert_relative_eq!(l1, 12.5);
        assert_relative_eq!((l2 * 2.0).sqrt(), 2.0 * (l1 * 2.0).sqrt());
    }

    #[test]
    fn non_finite_targets_name_the_sample() {
        let vf = VectorField::initialized(toy_config(), 1).unwrap();
        let err = vf
            .loss_and_grad(
                &[0.1, 0.2],
                array![[0.0, 0.0], [0.0, 0.0]].view(),
                array![[0.0, 0.0], [f64::INFINITY, 0.0]].view(),
            )
            .unwrap_err();
        match err {
            CfoError::Numeric(msg) => assert!(msg.contains("sample 1"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
