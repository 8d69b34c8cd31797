use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major batch of activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Mat {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r.as_ref());
        }
        Mat { rows: rows.len(), cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Fully connected layer `y = W x + b` with `W` stored `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Uniform init in `[-limit, limit]`, zero bias.
    pub fn uniform<R: Rng>(in_dim: usize, out_dim: usize, limit: f64, rng: &mut R) -> Dense {
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        Dense { in_dim, out_dim, weights, bias: vec![0.0; out_dim] }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        debug_assert_eq!(x.cols, self.in_dim);
        let mut out = Mat::zeros(x.rows, self.out_dim);
        for r in 0..x.rows {
            let xr = x.row(r);
            let yr = out.row_mut(r);
            for (o, y) in yr.iter_mut().enumerate() {
                let w = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                *y = self.bias[o] + dot(w, xr);
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input.
    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut DenseGrad, need_dx: bool) -> Option<Mat> {
        for r in 0..x.rows {
            let xr = x.row(r);
            let dyr = dy.row(r);
            for (o, &g) in dyr.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad.bias[o] += g;
                let gw = &mut grad.weights[o * self.in_dim..(o + 1) * self.in_dim];
                for (w, &xi) in gw.iter_mut().zip(xr) {
                    *w += g * xi;
                }
            }
        }
        if !need_dx {
            return None;
        }
        let mut dx = Mat::zeros(x.rows, self.in_dim);
        for r in 0..x.rows {
            let dyr = dy.row(r);
            let dxr = dx.row_mut(r);
            for (o, &g) in dyr.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let w = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, &wi) in dxr.iter_mut().zip(w) {
                    *d += g * wi;
                }
            }
        }
        Some(dx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &Dense) -> DenseGrad {
        DenseGrad { weights: vec![0.0; layer.weights.len()], bias: vec![0.0; layer.bias.len()] }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn relu_inplace(m: &mut Mat) {
    for v in &mut m.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}
