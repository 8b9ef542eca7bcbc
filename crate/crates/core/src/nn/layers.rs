use ndarray::{Array2, Axis};

use super::{Param, ParamKind, Scalar, Tensor};

#[derive(Default)]
pub struct Relu {
    mask: Option<ndarray::Array4<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        if train {
            self.mask = Some(x.mapv(|v| v > T::zero()));
        }
        Self::eval(x)
    }

    pub fn eval<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
        x.mapv(|v| v.max(T::zero()))
    }

    pub fn backward<T: Scalar>(&self, dy: &Tensor<T>) -> Tensor<T> {
        let mask = self.mask.as_ref().expect("backward without training forward");
        let mut dx = dy.clone();
        ndarray::Zip::from(&mut dx).and(mask).for_each(|d, &m| {
            if !m {
                *d = T::zero()
            }
        });
        dx
    }
}

pub struct Tanh<T> {
    out: Option<Tensor<T>>,
}

impl<T: Scalar> Default for Tanh<T> {
    fn default() -> Self {
        Self { out: None }
    }
}

impl<T: Scalar> Tanh<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let y = x.mapv(|v| v.tanh());
        self.out = train.then(|| y.clone());
        y
    }

    pub fn backward(&self, dy: &Tensor<T>) -> Tensor<T> {
        let y = self.out.as_ref().expect("backward without training forward");
        let mut dx = dy.clone();
        ndarray::Zip::from(&mut dx).and(y).for_each(|d, &v| *d *= T::one() - v * v);
        dx
    }
}

/// Spatial mean per channel: `(n, c, h, w) -> (n, c)`.
#[derive(Default)]
pub struct GlobalAvgPool {
    spatial: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Array2<T> {
        let (_, _, h, w) = x.dim();
        self.spatial = Some((h, w));
        Self::eval(x)
    }

    pub fn eval<T: Scalar>(x: &Tensor<T>) -> Array2<T> {
        let (n, c, h, w) = x.dim();
        let flat = x.as_standard_layout().into_owned().into_shape_with_order((n, c, h * w)).expect("sized");
        flat.sum_axis(Axis(2)) / T::of((h * w) as f64)
    }

    pub fn backward<T: Scalar>(&self, dy: &Array2<T>) -> Tensor<T> {
        let (h, w) = self.spatial.expect("backward without forward");
        let (n, c) = dy.dim();
        let k = T::of(1.0 / (h * w) as f64);
        Tensor::from_shape_fn((n, c, h, w), |(i, j, _, _)| dy[[i, j]] * k)
    }
}

/// Fully connected layer on `(batch, features)`.
pub struct Linear<T: Scalar> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Array2<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), ParamKind::LinearWeight, &[outputs, inputs], T::zero()),
            bias: Param::new(format!("{name}.bias"), ParamKind::Bias, &[outputs], T::zero()),
            input: None,
        }
    }

    fn weight_matrix(&self) -> ndarray::ArrayView2<'_, T> {
        self.weight.value.view().into_dimensionality().expect("2-d weight")
    }

    pub fn forward(&mut self, x: &Array2<T>, train: bool) -> Array2<T> {
        self.input = train.then(|| x.clone());
        self.eval(x)
    }

    pub fn eval(&self, x: &Array2<T>) -> Array2<T> {
        let b = self.bias.value.view().into_dimensionality::<ndarray::Ix1>().expect("1-d bias");
        x.dot(&self.weight_matrix().t()) + &b
    }

    pub fn backward(&mut self, dy: &Array2<T>) -> Array2<T> {
        let x = self.input.as_ref().expect("backward without training forward");
        let dw = dy.t().dot(x);
        self.weight.grad += &dw.into_dyn();
        self.bias.grad += &dy.sum_axis(Axis(0)).into_dyn();
        dy.dot(&self.weight_matrix())
    }

    pub fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
        f(&self.bias);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
