//! Synthetic base tables produced by randomly initialized multilayer maps.
//! Standard-normal inputs are pushed through 2-4 random layers (random width
//! and nonlinearity per layer); hidden and output units form a column pool
//! from which the table columns are drawn. A random subset of columns is
//! discretized into at most 8 levels and tagged categorical.

use crate::error::{Error, Result};
use crate::prior::{BaseTable, ColumnKind};
use crate::rng::{self, StreamRng};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Copy, Debug)]
enum Activation {
    Tanh,
    Identity,
    Rectifier,
    Sine,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
            Activation::Rectifier => x.max(0.0),
            Activation::Sine => x.sin(),
        }
    }

    fn draw(rng: &mut StreamRng) -> Self {
        match rng.gen_range(0..4u8) {
            0 => Activation::Tanh,
            1 => Activation::Identity,
            2 => Activation::Rectifier,
            _ => Activation::Sine,
        }
    }
}

/// A randomly initialized multilayer map; also backs the nonlinear propensity
/// mechanism. Weights are scaled by 1/sqrt(fan_in) so activations stay O(1).
pub struct RandomMultilayerMap {
    layers: Vec<Layer>,
}

struct Layer {
    weights: Vec<f64>, // fan_in x fan_out, row-major
    bias: Vec<f64>,
    fan_out: usize,
    activation: Activation,
}

impl RandomMultilayerMap {
    pub fn sample(rng: &mut StreamRng, input_dim: usize, min_total_units: usize) -> Self {
        let n_layers = rng.gen_range(2..=4usize);
        let mut layers = Vec::with_capacity(n_layers);
        let mut fan_in = input_dim;
        let mut total = 0usize;
        for l in 0..n_layers {
            let mut fan_out = rng.gen_range(3..=8usize);
            if l == n_layers - 1 && total + fan_out < min_total_units {
                fan_out = min_total_units - total;
            }
            let scale = 1.0 / (fan_in as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng::normal(rng) * scale)
                .collect();
            let bias = (0..fan_out).map(|_| rng::normal(rng) * 0.1).collect();
            layers.push(Layer {
                weights,
                bias,
                fan_out,
                activation: Activation::draw(rng),
            });
            fan_in = fan_out;
            total += fan_out;
        }
        RandomMultilayerMap { layers }
    }

    /// Push `inputs` (n x d row-major) through the map, returning every
    /// hidden/output unit as a column (n-vector).
    pub fn unit_columns(&self, inputs: &[f64], n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut columns = Vec::new();
        let mut current: Vec<f64> = inputs.to_vec();
        let mut width = d;
        for layer in &self.layers {
            let mut next = vec![0.0; n * layer.fan_out];
            for i in 0..n {
                let row = &current[i * width..(i + 1) * width];
                let out = &mut next[i * layer.fan_out..(i + 1) * layer.fan_out];
                for (j, o) in out.iter_mut().enumerate() {
                    let mut acc = layer.bias[j];
                    for (k, &xv) in row.iter().enumerate() {
                        acc += xv * layer.weights[k * layer.fan_out + j];
                    }
                    *o = layer.activation.apply(acc);
                }
            }
            for j in 0..layer.fan_out {
                columns.push((0..n).map(|i| next[i * layer.fan_out + j]).collect());
            }
            current = next;
            width = layer.fan_out;
        }
        columns
    }

    /// Single-column output of the map (last unit), for scalar functions.
    pub fn scalar_outputs(&self, inputs: &[f64], n: usize, d: usize) -> Vec<f64> {
        self.unit_columns(inputs, n, d).pop().expect("at least one layer")
    }
}

const CATEGORICAL_PROB: f64 = 0.25;

/// Deterministically synthesize an `n_rows x n_cols` base table from `seed`.
pub fn synth_base_table(seed: u64, n_rows: usize, n_cols: usize) -> Result<BaseTable> {
    if n_rows < 2 {
        return Err(Error::arg("synth_base_table: n_rows must be at least 2"));
    }
    if n_cols < 4 {
        return Err(Error::arg("synth_base_table: n_cols must be at least 4"));
    }
    let mut rng = rng::stream(seed);
    let input_dim = rng.gen_range(2..=5usize);
    let map = RandomMultilayerMap::sample(&mut rng, input_dim, n_cols);
    let inputs: Vec<f64> = (0..n_rows * input_dim).map(|_| rng::normal(&mut rng)).collect();
    let mut pool = map.unit_columns(&inputs, n_rows, input_dim);

    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut rng);
    order.truncate(n_cols);

    let mut columns = Vec::with_capacity(n_cols);
    let mut kinds = Vec::with_capacity(n_cols);
    for &idx in &order {
        let mut col = std::mem::take(&mut pool[idx]);
        if rng.gen_range(0.0..1.0) < CATEGORICAL_PROB {
            let levels = rng.gen_range(2..=8usize);
            discretize(&mut col, levels);
            kinds.push(ColumnKind::CategoricalEncoded);
        } else {
            kinds.push(ColumnKind::Continuous);
        }
        columns.push(col);
    }
    BaseTable::new(n_rows, columns, kinds)
}

/// Equal-frequency binning into at most `levels` levels; values become the
/// level index as f64.
fn discretize(col: &mut [f64], levels: usize) {
    let n = col.len();
    let mut sorted = col.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut edges = Vec::with_capacity(levels - 1);
    for j in 1..levels {
        edges.push(crate::stats::quantile_sorted(&sorted, j as f64 / levels as f64));
    }
    for v in col.iter_mut().take(n) {
        let level = edges.iter().filter(|&&e| *v > e).count();
        *v = level as f64;
    }
}
