use ndarray::{Array, Dimension};

use crate::nn::Scalar;
use crate::{Error, Result};

/// Probabilities are kept at least this far from 0 and 1 before taking logs.
pub const PROB_EPS: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    v.sum::<f64>() / n as f64
}

/// `E[log D(y)] + E[log(1 - D(G(x)))]` over discriminator probabilities.
pub fn adversarial_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    mean(d_real.iter().map(|&p| clamp(p).ln())) + mean(d_fake.iter().map(|&p| (1.0 - clamp(p)).ln()))
}

/// What the discriminator minimizes: the negated adversarial value.
pub fn discriminator_step_loss(d_real: &[f64], d_fake: &[f64]) -> f64 {
    -adversarial_loss(d_real, d_fake)
}

/// Non-saturating generator term `-E[log D(G(x))]`.
pub fn generator_step_loss(d_fake: &[f64]) -> f64 {
    -mean(d_fake.iter().map(|&p| clamp(p).ln()))
}

pub fn combined_generator_objective(adv_term: f64, l1_term: f64, lambda_l1: f64) -> f64 {
    adv_term + lambda_l1 * l1_term
}

/// Derivative of `-log clamp(sigmoid(z))` (`positive`) or
/// `-log(1 - clamp(sigmoid(z)))` with respect to `z`. Zero where the clamp is active.
fn logit_grad(z: f64, positive: bool) -> f64 {
    let p = sigmoid(z);
    if p < PROB_EPS || p > 1.0 - PROB_EPS {
        0.0
    } else if positive {
        p - 1.0
    } else {
        p
    }
}

/// Discriminator loss on logits and its gradient with respect to each logit.
pub fn discriminator_logit_loss(real: &[f64], fake: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let pr: Vec<f64> = real.iter().map(|&z| sigmoid(z)).collect();
    let pf: Vec<f64> = fake.iter().map(|&z| sigmoid(z)).collect();
    let loss = discriminator_step_loss(&pr, &pf);
    let gr = real.iter().map(|&z| logit_grad(z, true) / real.len() as f64).collect();
    let gf = fake.iter().map(|&z| logit_grad(z, false) / fake.len() as f64).collect();
    (loss, gr, gf)
}

/// Non-saturating generator loss on the discriminator's logits for fakes, with gradient.
pub fn generator_logit_loss(fake: &[f64]) -> (f64, Vec<f64>) {
    let pf: Vec<f64> = fake.iter().map(|&z| sigmoid(z)).collect();
    let g = fake.iter().map(|&z| logit_grad(z, true) / fake.len() as f64).collect();
    (generator_step_loss(&pf), g)
}

/// Mean absolute difference.
pub fn l1_loss<T: Scalar, D: Dimension>(prediction: &Array<T, D>, target: &Array<T, D>) -> Result<f64> {
    if prediction.shape() != target.shape() {
        return Err(Error::shape(target.shape(), prediction.shape()));
    }
    if prediction.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = prediction.iter().zip(target).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum();
    Ok(s / prediction.len() as f64)
}

/// Subgradient of [`l1_loss`] with respect to the prediction (zero at ties).
pub fn l1_grad<T: Scalar, D: Dimension>(prediction: &Array<T, D>, target: &Array<T, D>) -> Array<T, D> {
    let k = T::of(1.0 / prediction.len().max(1) as f64);
    let mut g = prediction.clone();
    ndarray::Zip::from(&mut g).and(target).for_each(|g, &t| {
        *g = if *g > t {
            k
        } else if *g < t {
            -k
        } else {
            T::zero()
        }
    });
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn closed_forms() {
        assert!((adversarial_loss(&[0.5], &[0.5]) + 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((adversarial_loss(&[0.8], &[0.3]) - (0.8f64.ln() + 0.7f64.ln())).abs() < 1e-12);
        assert!(adversarial_loss(&[1.0 - PROB_EPS], &[PROB_EPS]).abs() < 1e-6);
        assert!(adversarial_loss(&[1.0], &[0.0]).is_finite());
        assert_eq!(combined_generator_objective(0.7, 0.2, 0.0), 0.7);
        assert!((combined_generator_objective(0.7, 0.2, 100.0) - 20.7).abs() < 1e-12);
    }

    #[test]
    fn l1_examples() {
        let t = array![[1.0, 1.0]];
        assert_eq!(l1_loss(&t, &t).unwrap(), 0.0);
        assert_eq!(l1_loss(&array![[0.0, 1.0]], &t).unwrap(), 0.5);
        assert_eq!(l1_loss(&(t.clone() + 0.5), &t).unwrap(), 0.5);
        assert!(l1_loss(&array![[0.0]], &t).is_err());
    }

    #[test]
    fn logit_gradients_match_finite_differences() {
        let real = [0.3, -1.2, 2.0];
        let fake = [-0.4, 0.9];
        let (_, gr, gf) = discriminator_logit_loss(&real, &fake);
        let h = 1e-6;
        for i in 0..real.len() {
            let mut a = real;
            a[i] += h;
            let mut b = real;
            b[i] -= h;
            let num = (discriminator_logit_loss(&a, &fake).0 - discriminator_logit_loss(&b, &fake).0) / (2.0 * h);
            assert!((num - gr[i]).abs() < 1e-8);
        }
        for i in 0..fake.len() {
            let mut a = fake;
            a[i] += h;
            let mut b = fake;
            b[i] -= h;
            let num = (generator_logit_loss(&a).0 - generator_logit_loss(&b).0) / (2.0 * h);
            assert!((num - generator_logit_loss(&fake).1[i]).abs() < 1e-8);
            let num = (discriminator_logit_loss(&real, &a).0 - discriminator_logit_loss(&real, &b).0) / (2.0 * h);
            assert!((num - gf[i]).abs() < 1e-8);
        }
    }
}
