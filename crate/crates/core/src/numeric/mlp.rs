//! Small dense feed-forward networks with hand-written backpropagation.
//!
//! A layer computes `act(X · W + b)` for a batch `X` of row samples, so the
//! weight of layer `l` has shape `widths[l] × widths[l + 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, NumericError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's own output `y = act(x)`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Layer widths (input first) and one activation per weight layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self, NumericError> {
        if widths.len() < 2 {
            return Err(NumericError::InvalidSpec(format!(
                "need at least 2 widths, got {}",
                widths.len()
            )));
        }
        if widths.contains(&0) {
            return Err(NumericError::InvalidSpec(format!(
                "all widths must be >= 1, got {widths:?}"
            )));
        }
        if activations.len() != widths.len() - 1 {
            return Err(NumericError::InvalidSpec(format!(
                "{} weight layers but {} activations",
                widths.len() - 1,
                activations.len()
            )));
        }
        Ok(Self {
            widths,
            activations,
        })
    }

    /// Same hidden activation everywhere, `output` on the last layer.
    pub fn uniform(
        widths: Vec<usize>,
        hidden: Activation,
        output: Activation,
    ) -> Result<Self, NumericError> {
        let layers = widths.len().saturating_sub(1);
        let mut activations = vec![hidden; layers];
        if let Some(last) = activations.last_mut() {
            *last = output;
        }
        Self::new(widths, activations)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated spec has widths")
    }
}

/// Weights and biases of an MLP. Also used to carry gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut weights = Vec::with_capacity(spec.layers());
        let mut biases = Vec::with_capacity(spec.layers());
        for pair in spec.widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            weights.push(Matrix::from_vec(fan_in, fan_out, data).expect("sized buffer"));
            biases.push(vec![0.0; fan_out]);
        }
        Self { weights, biases }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            weights: spec
                .widths
                .windows(2)
                .map(|p| Matrix::zeros(p[0], p[1]))
                .collect(),
            biases: spec.widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn check_against(&self, spec: &MlpSpec) -> Result<(), NumericError> {
        if self.weights.len() != spec.layers() || self.biases.len() != spec.layers() {
            return Err(NumericError::ShapeMismatch {
                context: "MlpParams".into(),
                expected: format!("{} layers", spec.layers()),
                found: format!(
                    "{} weights / {} biases",
                    self.weights.len(),
                    self.biases.len()
                ),
            });
        }
        for (l, pair) in spec.widths.windows(2).enumerate() {
            if self.weights[l].shape() != (pair[0], pair[1]) || self.biases[l].len() != pair[1] {
                return Err(NumericError::ShapeMismatch {
                    context: format!("MlpParams layer {l}"),
                    expected: format!("{}x{} weight, {} bias", pair[0], pair[1], pair[1]),
                    found: format!(
                        "{}x{} weight, {} bias",
                        self.weights[l].rows(),
                        self.weights[l].cols(),
                        self.biases[l].len()
                    ),
                });
            }
        }
        Ok(())
    }

    /// Flat parameter blocks in a fixed order: weights then bias, per layer.
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w.as_mut_slice(), b.as_mut_slice()])
            .collect()
    }

    /// Human-readable name of block `index` in [`MlpParams::blocks`] order.
    pub fn block_name(index: usize) -> String {
        let kind = if index % 2 == 0 { "weights" } else { "biases" };
        format!("layer {} {kind}", index / 2)
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_scaled(&mut self, other: &MlpParams, factor: f64) {
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += factor * s;
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.zeros_like();
        out.add_scaled(self, factor);
        out
    }

    pub fn dot(&self, other: &MlpParams) -> f64 {
        self.blocks()
            .iter()
            .zip(other.blocks())
            .map(|(a, b)| super::matrix::dot(a, b))
            .sum()
    }

    /// Order-sensitive fingerprint of the exact parameter bits.
    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for block in self.blocks() {
            for x in block {
                h ^= x.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Activations recorded by a forward pass; consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    widths: Vec<usize>,
    params_fingerprint: u64,
    /// `outputs[0]` is the input batch, `outputs[l + 1]` the output of layer `l`.
    outputs: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.outputs[0].rows()
    }

    pub fn input(&self) -> &Matrix {
        &self.outputs[0]
    }

    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("cache holds input and outputs")
    }
}

/// Forward pass over a batch of row samples.
pub fn forward(
    spec: &MlpSpec,
    params: &MlpParams,
    input: &Matrix,
) -> Result<(Matrix, ForwardCache), NumericError> {
    params.check_against(spec)?;
    if input.cols() != spec.input_width() {
        return Err(NumericError::ShapeMismatch {
            context: "mlp forward input".into(),
            expected: format!("{} columns", spec.input_width()),
            found: format!("{}x{}", input.rows(), input.cols()),
        });
    }
    let mut outputs = Vec::with_capacity(spec.layers() + 1);
    outputs.push(input.clone());
    for (l, act) in spec.activations.iter().enumerate() {
        let mut z = outputs[l].matmul(&params.weights[l])?;
        z.add_row_vector(&params.biases[l])?;
        let a = if *act == Activation::Identity {
            z
        } else {
            z.map(|x| act.apply(x))
        };
        outputs.push(a);
    }
    let out = outputs.last().cloned().expect("at least one layer");
    Ok((
        out,
        ForwardCache {
            widths: spec.widths.clone(),
            params_fingerprint: params.fingerprint(),
            outputs,
        },
    ))
}

/// Backward pass. Returns parameter gradients and the gradient with respect
/// to the input batch.
pub fn backward(
    spec: &MlpSpec,
    params: &MlpParams,
    cache: &ForwardCache,
    output_gradient: &Matrix,
) -> Result<(MlpParams, Matrix), NumericError> {
    if cache.widths != spec.widths {
        return Err(NumericError::StaleCache(format!(
            "cache built for widths {:?}, spec has {:?}",
            cache.widths, spec.widths
        )));
    }
    params.check_against(spec)?;
    if cache.params_fingerprint != params.fingerprint() {
        return Err(NumericError::StaleCache(
            "parameters changed since the forward pass".into(),
        ));
    }
    let expected = (cache.batch_size(), spec.output_width());
    if output_gradient.shape() != expected {
        return Err(NumericError::ShapeMismatch {
            context: "mlp backward output gradient".into(),
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", output_gradient.rows(), output_gradient.cols()),
        });
    }

    let mut grads = params.zeros_like();
    let mut upstream = output_gradient.clone();
    for l in (0..spec.layers()).rev() {
        let act = spec.activations[l];
        let out = &cache.outputs[l + 1];
        let mut delta = upstream;
        if act != Activation::Identity {
            for (d, &y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *d *= act.derivative_from_output(y);
            }
        }
        grads.weights[l] = cache.outputs[l].t_matmul(&delta)?;
        grads.biases[l] = delta.column_sums();
        upstream = delta.matmul_t(&params.weights[l])?;
    }
    Ok((grads, upstream))
}

/// An [`MlpSpec`] together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let params = MlpParams::init(&spec, rng);
        Self { spec, params }
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, ForwardCache), NumericError> {
        forward(&self.spec, &self.params, input)
    }

    /// Forward pass without keeping the cache.
    pub fn predict(&self, input: &Matrix) -> Result<Matrix, NumericError> {
        forward(&self.spec, &self.params, input).map(|(out, _)| out)
    }

    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_gradient: &Matrix,
    ) -> Result<(MlpParams, Matrix), NumericError> {
        backward(&self.spec, &self.params, cache, output_gradient)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::seeded_rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Straight-line forward pass with explicit loops, no shared helpers.
    fn reference_forward(spec: &MlpSpec, params: &MlpParams, input: &Matrix) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = input.iter_rows().map(|r| r.to_vec()).collect();
        for l in 0..spec.layers() {
            let w = &params.weights[l];
            let b = &params.biases[l];
            rows = rows
                .iter()
                .map(|x| {
                    (0..w.cols())
                        .map(|j| {
                            let mut z = b[j];
                            for (i, xi) in x.iter().enumerate() {
                                z += xi * w[(i, j)];
                            }
                            match spec.activations()[l] {
                                Activation::Identity => z,
                                Activation::Relu => {
                                    if z > 0.0 {
                                        z
                                    } else {
                                        0.0
                                    }
                                }
                                Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                                Activation::Tanh => z.tanh(),
                            }
                        })
                        .collect()
                })
                .collect();
        }
        rows
    }

    #[test]
    fn identity_network_returns_input() {
        let spec = MlpSpec::new(vec![3, 3], vec![Activation::Identity]).unwrap();
        let params = MlpParams {
            weights: vec![Matrix::identity(3)],
            biases: vec![vec![0.0; 3]],
        };
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]]).unwrap();
        let (y, _) = forward(&spec, &params, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn sigmoid_unit_at_zero_is_half() {
        let spec = MlpSpec::new(vec![2, 1], vec![Activation::Sigmoid]).unwrap();
        let params = MlpParams::zeros(&spec);
        let x = Matrix::from_rows(&[[7.0, -3.0]]).unwrap();
        let (y, _) = forward(&spec, &params, &x).unwrap();
        assert_eq!(y[(0, 0)], 0.5);
    }

    #[test]
    fn forward_matches_straight_line_reimplementation() {
        let mut rng = seeded_rng(11, 0);
        let spec = MlpSpec::new(
            vec![5, 7, 4, 3],
            vec![Activation::Tanh, Activation::Relu, Activation::Sigmoid],
        )
        .unwrap();
        let params = MlpParams::init(&spec, &mut rng);
        let x = random_matrix(6, 5, &mut rng);
        let (y, _) = forward(&spec, &params, &x).unwrap();
        let expected = reference_forward(&spec, &params, &x);
        for (i, row) in expected.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((y[(i, j)] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], vec![]).is_err());
        assert!(MlpSpec::new(vec![3, 0], vec![Activation::Relu]).is_err());
        assert!(MlpSpec::new(vec![3, 2], vec![]).is_err());
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let spec = MlpSpec::new(vec![3, 2], vec![Activation::Relu]).unwrap();
        let params = MlpParams::zeros(&spec);
        let err = forward(&spec, &params, &Matrix::zeros(4, 2)).unwrap_err();
        assert!(matches!(err, NumericError::ShapeMismatch { .. }));
        assert!(err.to_string().contains("3 columns"));
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let mut rng = seeded_rng(3, 0);
        let spec = MlpSpec::uniform(vec![4, 5, 2], Activation::Tanh, Activation::Identity).unwrap();
        let params = MlpParams::init(&spec, &mut rng);
        let x = random_matrix(3, 4, &mut rng);
        let (_, cache) = forward(&spec, &params, &x).unwrap();
        let (grads, input_grad) = backward(&spec, &params, &cache, &Matrix::zeros(3, 2)).unwrap();
        assert!(grads.blocks().iter().all(|b| b.iter().all(|&g| g == 0.0)));
        assert!(input_grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_quadratic_loss_matches_closed_form() {
        // L = ||W^T x + b - y||^2 for a single sample; dL/dW = x (2 r)^T with r = Wx+b-y.
        let spec = MlpSpec::new(vec![3, 2], vec![Activation::Identity]).unwrap();
        let params = MlpParams {
            weights: vec![Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25], [-0.75, 1.5]]).unwrap()],
            biases: vec![vec![0.1, -0.2]],
        };
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let y = [0.3, 0.7];
        let (out, cache) = forward(&spec, &params, &x).unwrap();
        let residual: Vec<f64> = (0..2).map(|j| out[(0, j)] - y[j]).collect();
        let upstream = Matrix::from_rows(&[[2.0 * residual[0], 2.0 * residual[1]]]).unwrap();
        let (grads, _) = backward(&spec, &params, &cache, &upstream).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let closed = 2.0 * residual[j] * x[(0, i)];
                assert!((grads.weights[0][(i, j)] - closed).abs() < 1e-14);
            }
        }
        for j in 0..2 {
            assert!((grads.biases[0][j] - 2.0 * residual[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_rejects_stale_or_mismatched_cache() {
        let mut rng = seeded_rng(5, 0);
        let spec = MlpSpec::uniform(vec![3, 4, 2], Activation::Tanh, Activation::Identity).unwrap();
        let mut params = MlpParams::init(&spec, &mut rng);
        let x = random_matrix(2, 3, &mut rng);
        let (_, cache) = forward(&spec, &params, &x).unwrap();

        let wrong_grad = Matrix::zeros(3, 2);
        assert!(backward(&spec, &params, &cache, &wrong_grad).is_err());

        let other =
            MlpSpec::uniform(vec![3, 5, 2], Activation::Tanh, Activation::Identity).unwrap();
        let other_params = MlpParams::init(&other, &mut rng);
        assert!(matches!(
            backward(&other, &other_params, &cache, &Matrix::zeros(2, 2)),
            Err(NumericError::StaleCache(_))
        ));

        params.biases[0][0] += 1.0;
        assert!(matches!(
            backward(&spec, &params, &cache, &Matrix::zeros(2, 2)),
            Err(NumericError::StaleCache(_))
        ));
    }
}
