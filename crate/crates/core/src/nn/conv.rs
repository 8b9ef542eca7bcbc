use ndarray::{Array2, ArrayView2, Axis};

use super::{Param, ParamKind, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    kernel: usize,
    stride: usize,
    padding: usize,
}

/// Shapes of one unfold: a `(C, H, W)` image against a `(Ho, Wo)` output grid.
#[derive(Debug, Clone, Copy)]
struct Frame {
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
}

/// Calls `f(input_index, column_index)` for every in-bounds tap, row by row of the
/// patch matrix. Column indices are relative to the sample's block.
fn for_each_tap(fr: Frame, g: Geometry, mut f: impl FnMut(usize, usize, usize)) {
    let k = g.kernel;
    for ci in 0..fr.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                for oy in 0..fr.ho {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= fr.h as isize {
                        continue;
                    }
                    let base = (ci * fr.h + iy as usize) * fr.w;
                    for ox in 0..fr.wo {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < fr.w as isize {
                            f(row, base + ix as usize, oy * fr.wo + ox);
                        }
                    }
                }
            }
        }
    }
}

/// Unfolds a batch of `(C, H, W)` images into one `(C*k*k, N*Ho*Wo)` patch matrix,
/// sample `i` occupying columns `i*Ho*Wo..(i+1)*Ho*Wo`.
fn im2col<T: Scalar>(x: &[T], n: usize, fr: Frame, g: Geometry) -> Array2<T> {
    let plane = fr.ho * fr.wo;
    let rows = fr.c * g.kernel * g.kernel;
    let stride = n * plane;
    let mut cols = vec![T::zero(); rows * stride];
    let size = fr.c * fr.h * fr.w;
    for i in 0..n {
        let xi = &x[i * size..(i + 1) * size];
        let off = i * plane;
        for_each_tap(fr, g, |row, src, col| cols[row * stride + off + col] = xi[src]);
    }
    Array2::from_shape_vec((rows, stride), cols).expect("sized above")
}

/// Adjoint of [`im2col`]: folds a patch matrix back into `N` images, summing overlaps.
fn col2im<T: Scalar>(cols: ArrayView2<T>, n: usize, fr: Frame, g: Geometry) -> Vec<T> {
    let cols = cols.as_standard_layout();
    let cols = cols.as_slice().expect("standard layout");
    let plane = fr.ho * fr.wo;
    let stride = n * plane;
    let size = fr.c * fr.h * fr.w;
    let mut out = vec![T::zero(); n * size];
    for (i, oi) in out.chunks_mut(size).enumerate() {
        let off = i * plane;
        for_each_tap(fr, g, |row, dst, col| oi[dst] += cols[row * stride + off + col]);
    }
    out
}

fn matrix<T: Scalar>(p: &Param<T>, rows: usize, cols: usize) -> ArrayView2<'_, T> {
    p.value
        .view()
        .into_shape_with_order((rows, cols))
        .expect("contiguous parameter")
}

fn add_into<T: Scalar>(acc: &mut ndarray::ArrayD<T>, part: &Array2<T>) {
    let rows = part.nrows();
    let cols = acc.len() / rows;
    let mut flat = acc
        .view_mut()
        .into_shape_with_order((rows, cols))
        .expect("contiguous parameter");
    flat += part;
}

/// `(N, C, H, W)` to `(C, N*H*W)`.
fn channel_major<T: Scalar>(x: &Tensor<T>) -> Array2<T> {
    let (n, c, h, w) = x.dim();
    let p = x.view().permuted_axes([1, 0, 2, 3]);
    let p = p.as_standard_layout().into_owned();
    p.into_shape_with_order((c, n * h * w)).expect("contiguous")
}

/// Inverse of [`channel_major`].
fn batch_major<T: Scalar>(m: Array2<T>, n: usize, h: usize, w: usize) -> Tensor<T> {
    let c = m.nrows();
    let t = m.into_shape_with_order((c, n, h, w)).expect("sized by caller");
    t.permuted_axes([1, 0, 2, 3]).as_standard_layout().into_owned()
}

fn standard<T: Scalar>(x: &Tensor<T>) -> std::borrow::Cow<'_, [T]> {
    match x.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(x.as_standard_layout().iter().copied().collect()),
    }
}

struct ConvCache<T> {
    cols: Array2<T>,
    in_dim: (usize, usize, usize, usize),
}

/// 2-D convolution with square kernels and zero padding.
pub struct Conv2d<T: Scalar> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_channels: usize,
    out_channels: usize,
    geometry: Geometry,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                ParamKind::ConvWeight,
                &[out_channels, in_channels, kernel, kernel],
                T::zero(),
            ),
            bias: bias.then(|| Param::new(format!("{name}.bias"), ParamKind::Bias, &[out_channels], T::zero())),
            in_channels,
            out_channels,
            geometry: Geometry {
                kernel,
                stride,
                padding,
            },
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let g = self.geometry;
        (
            (h + 2 * g.padding - g.kernel) / g.stride + 1,
            (w + 2 * g.padding - g.kernel) / g.stride + 1,
        )
    }

    fn frame(&self, h: usize, w: usize) -> Frame {
        let (ho, wo) = self.output_size(h, w);
        Frame {
            c: self.in_channels,
            h,
            w,
            ho,
            wo,
        }
    }

    fn compute(&self, x: &Tensor<T>) -> (Tensor<T>, Array2<T>) {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "{}: channel mismatch", self.weight.name);
        let fr = self.frame(h, w);
        let kk = self.geometry.kernel * self.geometry.kernel;
        let cols = im2col(&standard(x), n, fr, self.geometry);
        let mut y = matrix(&self.weight, self.out_channels, c * kk).dot(&cols);
        if let Some(b) = &self.bias {
            for (mut row, &bv) in y.axis_iter_mut(Axis(0)).zip(b.value.iter()) {
                row.mapv_inplace(|v| v + bv);
            }
        }
        (batch_major(y, n, fr.ho, fr.wo), cols)
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let (y, cols) = self.compute(x);
        self.cache = train.then(|| ConvCache { cols, in_dim: x.dim() });
        y
    }

    pub fn eval(&self, x: &Tensor<T>) -> Tensor<T> {
        self.compute(x).0
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let cache = self.cache.as_ref().expect("backward without training forward");
        let (n, c, h, w) = cache.in_dim;
        let kk = self.geometry.kernel * self.geometry.kernel;
        let dym = channel_major(dy);
        add_into(&mut self.weight.grad, &dym.dot(&cache.cols.t()));
        if let Some(b) = &mut self.bias {
            for (g, v) in b.grad.iter_mut().zip(dym.sum_axis(Axis(1))) {
                *g += v;
            }
        }
        let fr = self.frame(h, w);
        need_dx.then(|| {
            let dcols = matrix(&self.weight, self.out_channels, c * kk).t().dot(&dym);
            Tensor::from_shape_vec((n, c, h, w), col2im(dcols.view(), n, fr, self.geometry)).expect("sized")
        })
    }

    pub fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Transposed convolution (the adjoint of a strided convolution), no bias.
///
/// Output size is `(H - 1) * stride - 2 * padding + kernel + output_padding`.
pub struct ConvTranspose2d<T: Scalar> {
    pub weight: Param<T>,
    in_channels: usize,
    out_channels: usize,
    geometry: Geometry,
    output_padding: usize,
    cache: Option<(Array2<T>, (usize, usize, usize, usize))>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                ParamKind::ConvWeight,
                &[in_channels, out_channels, kernel, kernel],
                T::zero(),
            ),
            in_channels,
            out_channels,
            geometry: Geometry {
                kernel,
                stride,
                padding,
            },
            output_padding,
            cache: None,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let g = self.geometry;
        let f = |n: usize| (n - 1) * g.stride + g.kernel + self.output_padding - 2 * g.padding;
        (f(h), f(w))
    }

    /// The output plays the role of the convolution's input.
    fn frame(&self, h: usize, w: usize) -> Frame {
        let (ho, wo) = self.output_size(h, w);
        Frame {
            c: self.out_channels,
            h: ho,
            w: wo,
            ho: h,
            wo: w,
        }
    }

    fn compute(&self, xm: &Array2<T>, n: usize, h: usize, w: usize) -> Tensor<T> {
        let fr = self.frame(h, w);
        let kk = self.geometry.kernel * self.geometry.kernel;
        let cols = matrix(&self.weight, self.in_channels, self.out_channels * kk).t().dot(xm);
        Tensor::from_shape_vec((n, fr.c, fr.h, fr.w), col2im(cols.view(), n, fr, self.geometry)).expect("sized")
    }

    fn input_matrix(&self, x: &Tensor<T>) -> Array2<T> {
        assert_eq!(x.dim().1, self.in_channels, "{}: channel mismatch", self.weight.name);
        channel_major(x)
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let (n, _, h, w) = x.dim();
        let xm = self.input_matrix(x);
        let y = self.compute(&xm, n, h, w);
        self.cache = train.then(|| (xm, x.dim()));
        y
    }

    pub fn eval(&self, x: &Tensor<T>) -> Tensor<T> {
        let (n, _, h, w) = x.dim();
        self.compute(&self.input_matrix(x), n, h, w)
    }

    pub fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let (xm, (n, c, h, w)) = self.cache.as_ref().expect("backward without training forward");
        let (n, c, h, w) = (*n, *c, *h, *w);
        let fr = self.frame(h, w);
        let dcols = im2col(&standard(dy), n, fr, self.geometry);
        add_into(&mut self.weight.grad, &xm.dot(&dcols.t()));
        let kk = self.geometry.kernel * self.geometry.kernel;
        need_dx.then(|| batch_major(matrix(&self.weight, c, self.out_channels * kk).dot(&dcols), n, h, w))
    }

    pub fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::*;
    use crate::nn::{init_weights, Module};

    struct Wrap<L>(L);

    impl Module<f64> for Wrap<Conv2d<f64>> {
        fn visit(&self, f: &mut dyn FnMut(&Param<f64>)) {
            self.0.visit(f)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<f64>)) {
            self.0.visit_mut(f)
        }
    }

    impl Module<f64> for Wrap<ConvTranspose2d<f64>> {
        fn visit(&self, f: &mut dyn FnMut(&Param<f64>)) {
            self.0.visit(f)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<f64>)) {
            self.0.visit_mut(f)
        }
    }

    /// Direct nested-loop convolution.
    fn naive_conv(x: &Tensor<f64>, wt: &ndarray::ArrayD<f64>, s: usize, p: usize) -> Tensor<f64> {
        let (n, c, h, w) = x.dim();
        let (o, k) = (wt.shape()[0], wt.shape()[2]);
        let ho = (h + 2 * p - k) / s + 1;
        let wo = (w + 2 * p - k) / s + 1;
        Tensor::from_shape_fn((n, o, ho, wo), |(b, oc, oy, ox)| {
            let mut acc = 0.0;
            for ci in 0..c {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * s + ky) as isize - p as isize;
                        let ix = (ox * s + kx) as isize - p as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                            acc += x[[b, ci, iy as usize, ix as usize]] * wt[[oc, ci, ky, kx]];
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn conv_matches_naive_loops() {
        for &(k, s, p) in &[(3, 1, 1), (3, 2, 1), (7, 1, 3), (1, 1, 0)] {
            let mut conv = Wrap(Conv2d::<f64>::new("c", 3, 4, k, s, p, false));
            init_weights(&mut conv, 0.0, 0.5, 11);
            let x = random_tensor((2, 3, 9, 10), 5);
            let y = conv.0.eval(&x);
            let expect = naive_conv(&x, &conv.0.weight.value, s, p);
            assert_close(y.as_slice().unwrap(), expect.as_slice().unwrap(), 1e-12);
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut conv = Wrap(Conv2d::<f64>::new("c", 2, 3, 3, 2, 1, true));
        init_weights(&mut conv, 0.0, 0.5, 3);
        let x = random_tensor((2, 2, 6, 5), 8);
        let probe = random_tensor((2, 3, 3, 3), 9);
        let y = conv.0.forward(&x, true);
        assert_eq!(y.dim(), probe.dim());
        conv.zero_grad();
        let dx = conv.0.backward(&probe, true).unwrap();
        let num = numeric_input_grad(&x, 1e-6, |xx| (conv.0.eval(xx) * &probe).sum());
        assert_close(dx.as_slice().unwrap(), num.as_slice().unwrap(), 1e-7);

        let analytic = crate::nn::flat_grads(&conv);
        let params = crate::nn::flat_values(&conv).len();
        for i in 0..params {
            let mut plus = Wrap(Conv2d::<f64>::new("c", 2, 3, 3, 2, 1, true));
            plus.load_state_dict(&conv.state_dict()).unwrap();
            crate::nn::nudge(&mut plus, i, 1e-6);
            let a = (plus.0.eval(&x) * &probe).sum();
            crate::nn::nudge(&mut plus, i, -2e-6);
            let b = (plus.0.eval(&x) * &probe).sum();
            let num = (a - b) / 2e-6;
            assert!((num - analytic[i]).abs() < 1e-6 * num.abs().max(1.0), "param {i}");
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> when both share the weight tensor
        let mut conv = Wrap(Conv2d::<f64>::new("c", 3, 2, 3, 2, 1, false));
        init_weights(&mut conv, 0.0, 1.0, 4);
        let mut tconv = ConvTranspose2d::<f64>::new("t", 2, 3, 3, 2, 1, 1);
        tconv.weight.value = conv.0.weight.value.clone();
        let x = random_tensor((1, 3, 8, 8), 1);
        let y = random_tensor((1, 2, 4, 4), 2);
        let lhs = (conv.0.eval(&x) * &y).sum();
        let ty = tconv.eval(&y);
        assert_eq!(ty.dim(), (1, 3, 8, 8));
        let rhs = (&x * &ty).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn transposed_conv_gradients_match_finite_differences() {
        let mut t = Wrap(ConvTranspose2d::<f64>::new("t", 3, 2, 3, 2, 1, 1));
        init_weights(&mut t, 0.0, 0.5, 6);
        let x = random_tensor((2, 3, 4, 3), 12);
        let probe = random_tensor((2, 2, 8, 6), 13);
        let y = t.0.forward(&x, true);
        assert_eq!(y.dim(), probe.dim());
        let dx = t.0.backward(&probe, true).unwrap();
        let num = numeric_input_grad(&x, 1e-6, |xx| (t.0.eval(xx) * &probe).sum());
        assert_close(dx.as_slice().unwrap(), num.as_slice().unwrap(), 1e-7);

        let analytic = crate::nn::flat_grads(&t);
        for i in (0..analytic.len()).step_by(5) {
            let mut plus = Wrap(ConvTranspose2d::<f64>::new("t", 3, 2, 3, 2, 1, 1));
            plus.load_state_dict(&t.state_dict()).unwrap();
            crate::nn::nudge(&mut plus, i, 1e-6);
            let a = (plus.0.eval(&x) * &probe).sum();
            crate::nn::nudge(&mut plus, i, -2e-6);
            let b = (plus.0.eval(&x) * &probe).sum();
            let num = (a - b) / 2e-6;
            assert!((num - analytic[i]).abs() < 1e-6 * num.abs().max(1.0), "param {i}");
        }
    }
}
