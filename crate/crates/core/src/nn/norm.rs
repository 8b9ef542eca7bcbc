use ndarray::{Array1, Axis};

use super::{Param, ParamKind, Scalar, Tensor};

struct NormCache<T> {
    normalized: Tensor<T>,
    inv_std: Array1<T>,
}

/// Per-channel batch normalization over `(batch, height, width)`.
///
/// Training mode normalizes with batch statistics and updates the running
/// estimates; `eval` uses the running estimates.
pub struct BatchNorm2d<T: Scalar> {
    pub scale: Param<T>,
    pub shift: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    pub momentum: f64,
    pub eps: f64,
    /// When false, training-mode forwards leave the running estimates alone.
    pub track_running_stats: bool,
    cache: Option<NormCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            scale: Param::new(format!("{name}.scale"), ParamKind::NormScale, &[channels], T::one()),
            shift: Param::new(format!("{name}.shift"), ParamKind::NormShift, &[channels], T::zero()),
            running_mean: Param::new(format!("{name}.running_mean"), ParamKind::RunningMean, &[channels], T::zero()),
            running_var: Param::new(format!("{name}.running_var"), ParamKind::RunningVar, &[channels], T::one()),
            momentum: 0.1,
            eps: 1e-5,
            track_running_stats: true,
            cache: None,
        }
    }

    fn affine(&self, normalized: &Tensor<T>) -> Tensor<T> {
        let mut y = normalized.clone();
        for (c, mut plane) in y.axis_iter_mut(Axis(1)).enumerate() {
            let (g, b) = (self.scale.value[c], self.shift.value[c]);
            plane.mapv_inplace(|v| v * g + b);
        }
        y
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        if !train {
            self.cache = None;
            return self.eval(x);
        }
        let (n, c, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let mut normalized = x.clone();
        let mut inv_std = Array1::zeros(c);
        for (ch, mut plane) in normalized.axis_iter_mut(Axis(1)).enumerate() {
            let mean = plane.iter().map(|v| v.as_f64()).sum::<f64>() / m;
            let var = plane.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / m;
            let is = 1.0 / (var + self.eps).sqrt();
            let (mean_t, is_t) = (T::of(mean), T::of(is));
            plane.mapv_inplace(|v| (v - mean_t) * is_t);
            inv_std[ch] = is_t;

            if !self.track_running_stats {
                continue;
            }
            let mom = self.momentum;
            let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
            let rm = &mut self.running_mean.value[ch];
            *rm = T::of((1.0 - mom) * rm.as_f64() + mom * mean);
            let rv = &mut self.running_var.value[ch];
            *rv = T::of((1.0 - mom) * rv.as_f64() + mom * unbiased);
        }
        let y = self.affine(&normalized);
        self.cache = Some(NormCache { normalized, inv_std });
        y
    }

    pub fn eval(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut y = x.clone();
        for (c, mut plane) in y.axis_iter_mut(Axis(1)).enumerate() {
            let is = T::of(1.0 / (self.running_var.value[c].as_f64() + self.eps).sqrt());
            let (mean, g, b) = (self.running_mean.value[c], self.scale.value[c], self.shift.value[c]);
            plane.mapv_inplace(|v| (v - mean) * is * g + b);
        }
        y
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let cache = self.cache.as_ref().expect("backward without training forward");
        let (n, _, h, w) = dy.dim();
        let m = T::of((n * h * w) as f64);
        let mut dx = Tensor::zeros(dy.raw_dim());
        for (ch, ((dyp, xh), mut dxp)) in dy
            .axis_iter(Axis(1))
            .zip(cache.normalized.axis_iter(Axis(1)))
            .zip(dx.axis_iter_mut(Axis(1)))
            .enumerate()
        {
            let sum_dy: T = dyp.iter().copied().sum();
            let sum_dy_xh: T = dyp.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum();
            self.shift.grad[ch] += sum_dy;
            self.scale.grad[ch] += sum_dy_xh;
            let k = self.scale.value[ch] * cache.inv_std[ch] / m;
            ndarray::Zip::from(&mut dxp)
                .and(&dyp)
                .and(&xh)
                .for_each(|d, &g, &xv| *d = k * (m * g - sum_dy - xv * sum_dy_xh));
        }
        dx
    }

    pub fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.scale);
        f(&self.shift);
        f(&self.running_mean);
        f(&self.running_var);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.scale);
        f(&mut self.shift);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}
