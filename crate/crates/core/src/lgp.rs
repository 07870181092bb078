//! Two-layer linked GP: closed-form moments of a GP fed by independent GPs,
//! with the gradient mean and a first-order gradient covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::gp::{clamp_variance, GaussianPrediction, GpModel, GradientPosterior, LocalPosterior};

/// `E[k(W, w)]` for `W ~ N(mu, var)` under the squared-exponential kernel.
pub fn xi(mu: f64, var: f64, w: f64, gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    (1.0 + 2.0 * var / g2).powf(-0.5) * (-(mu - w).powi(2) / (2.0 * var + g2)).exp()
}

/// `E[k(W, w_i) k(W, w_j)]` for `W ~ N(mu, var)`.
pub fn psi(mu: f64, var: f64, wi: f64, wj: f64, gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    (1.0 + 4.0 * var / g2).powf(-0.5) * psi_exponent(mu, var, wi, wj, g2).exp()
}

fn psi_exponent(mu: f64, var: f64, wi: f64, wj: f64, g2: f64) -> f64 {
    let m = 0.5 * (wi + wj) - mu;
    -m * m / (0.5 * g2 + 2.0 * var) - (wi - wj).powi(2) / (2.0 * g2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkTerms {
    pub i: DVector<f64>,
    pub j: DMatrix<f64>,
    /// `(i, k)` entry is `d I_i / d x*_k`.
    pub grad_i: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LgpModel {
    layer1: Vec<GpModel>,
    layer2: GpModel,
    layer2_inverse: DMatrix<f64>,
}

impl LgpModel {
    pub fn new(layer1: Vec<GpModel>, layer2: GpModel) -> Result<Self> {
        let p = layer1.len();
        if p == 0 {
            return Err(Error::invalid("linked GP needs at least one first-layer GP"));
        }
        check_dim(p, layer2.dim())?;
        let n = layer2.n();
        for (k, g) in layer1.iter().enumerate() {
            check_dim(n, g.n())?;
            if g.x() != layer1[0].x() {
                return Err(Error::invalid(format!("first-layer GP {k} has a different design")));
            }
            if g.y().as_slice() != layer2.x().column(k).as_slice() {
                return Err(Error::invalid(format!(
                    "second-layer input column {k} differs from first-layer outputs"
                )));
            }
        }
        let layer2_inverse = layer2.chol().inverse();
        Ok(Self {
            layer1,
            layer2,
            layer2_inverse,
        })
    }

    pub fn layer1(&self) -> &[GpModel] {
        &self.layer1
    }

    pub fn layer2(&self) -> &GpModel {
        &self.layer2
    }

    /// Input dimension d.
    pub fn dim(&self) -> usize {
        self.layer1[0].dim()
    }

    /// Latent width p.
    pub fn width(&self) -> usize {
        self.layer1.len()
    }

    pub(crate) fn layer1_local(&self, x_star: &[f64]) -> Result<Vec<LocalPosterior>> {
        check_dim(self.dim(), x_star.len())?;
        self.layer1.iter().map(|g| g.local(x_star)).collect()
    }

    /// `I` and `grad I` from first-layer moments at the test point.
    fn link_i(&self, loc: &[LocalPosterior]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.layer2.n();
        let d = self.dim();
        let w = self.layer2.x();
        let ls = self.layer2.params().lengthscales();
        let mut i_vec = DVector::from_element(n, 1.0);
        let mut grad = DMatrix::zeros(n, d);
        let mut dlog = vec![0.0; d];
        for a in 0..n {
            dlog.iter_mut().for_each(|v| *v = 0.0);
            for (p, l) in loc.iter().enumerate() {
                let g2 = ls[p] * ls[p];
                let den = 2.0 * l.variance + g2;
                let diff = l.mean - w[(a, p)];
                i_vec[a] *= xi(l.mean, l.variance, w[(a, p)], ls[p]);
                let dmu = -2.0 * diff / den;
                let dvar = -1.0 / den + 2.0 * diff * diff / (den * den);
                for k in 0..d {
                    dlog[k] += dmu * l.grad_mean[k] + dvar * l.grad_variance[k];
                }
            }
            for k in 0..d {
                grad[(a, k)] = i_vec[a] * dlog[k];
            }
        }
        (i_vec, grad)
    }

    fn link_j(&self, loc: &[LocalPosterior]) -> DMatrix<f64> {
        let n = self.layer2.n();
        let w = self.layer2.x();
        let ls = self.layer2.params().lengthscales();
        let scale: f64 = loc
            .iter()
            .zip(ls)
            .map(|(l, g)| (1.0 + 4.0 * l.variance / (g * g)).powf(-0.5))
            .product();
        let mut j = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..=a {
                let e: f64 = loc
                    .iter()
                    .enumerate()
                    .map(|(p, l)| psi_exponent(l.mean, l.variance, w[(a, p)], w[(b, p)], ls[p] * ls[p]))
                    .sum();
                let v = scale * e.exp();
                j[(a, b)] = v;
                j[(b, a)] = v;
            }
        }
        j
    }

    pub(crate) fn terms_from(&self, loc: &[LocalPosterior]) -> LinkTerms {
        let (i, grad_i) = self.link_i(loc);
        LinkTerms {
            i,
            j: self.link_j(loc),
            grad_i,
        }
    }

    pub(crate) fn predict_from(&self, loc: &[LocalPosterior]) -> GaussianPrediction {
        let (i, _) = self.link_i(loc);
        let j = self.link_j(loc);
        self.moments(&i, &j)
    }

    fn moments(&self, i: &DVector<f64>, j: &DMatrix<f64>) -> GaussianPrediction {
        let a = self.layer2.alpha();
        let n = a.len();
        let mean: f64 = i.iter().zip(a).map(|(x, y)| x * y).sum();
        let mut aja = 0.0;
        let mut tr = 0.0;
        for r in 0..n {
            let mut row = 0.0;
            for c in 0..n {
                row += j[(r, c)] * a[c];
                tr += self.layer2_inverse[(r, c)] * j[(r, c)];
            }
            aja += a[r] * row;
        }
        let p = self.layer2.params();
        let variance = aja - mean * mean + p.signal_variance() * (1.0 + p.nugget() - tr);
        GaussianPrediction {
            mean,
            variance: clamp_variance(variance),
        }
    }

    pub(crate) fn gradient_mean_from(&self, loc: &[LocalPosterior]) -> DVector<f64> {
        let (_, grad_i) = self.link_i(loc);
        grad_i.tr_mul(&DVector::from_column_slice(self.layer2.alpha()))
    }

    pub(crate) fn gradient_cov_from(&self, x_star: &[f64], loc: &[LocalPosterior]) -> Result<DMatrix<f64>> {
        let mu_w: Vec<f64> = loc.iter().map(|l| l.mean).collect();
        let dg = self.layer2.gradient_mean(&mu_w)?;
        let d = self.dim();
        let mut cov = DMatrix::zeros(d, d);
        for (p, g) in self.layer1.iter().enumerate() {
            let w = dg[p] * dg[p];
            if w == 0.0 {
                continue;
            }
            cov += g.gradient(x_star)?.cov * w;
        }
        Ok(cov)
    }

    /// Predictive moments and gradient posterior sharing one first-layer pass.
    pub fn posterior(&self, x_star: &[f64]) -> Result<(GaussianPrediction, GradientPosterior)> {
        let loc = self.layer1_local(x_star)?;
        let (i, grad_i) = self.link_i(&loc);
        let j = self.link_j(&loc);
        let pred = self.moments(&i, &j);
        let mean = grad_i.tr_mul(&DVector::from_column_slice(self.layer2.alpha()));
        let cov = self.gradient_cov_from(x_star, &loc)?;
        Ok((pred, GradientPosterior { mean, cov }))
    }
}

pub fn link_terms(model: &LgpModel, x_star: &[f64]) -> Result<LinkTerms> {
    Ok(model.terms_from(&model.layer1_local(x_star)?))
}

pub fn lgp_predict(model: &LgpModel, x_star: &[f64]) -> Result<GaussianPrediction> {
    Ok(model.predict_from(&model.layer1_local(x_star)?))
}

pub fn lgp_gradient_mean(model: &LgpModel, x_star: &[f64]) -> Result<DVector<f64>> {
    Ok(model.gradient_mean_from(&model.layer1_local(x_star)?))
}

pub fn lgp_gradient_cov(model: &LgpModel, x_star: &[f64]) -> Result<DMatrix<f64>> {
    let loc = model.layer1_local(x_star)?;
    model.gradient_cov_from(x_star, &loc)
}

pub fn lgp_gradient(model: &LgpModel, x_star: &[f64]) -> Result<GradientPosterior> {
    let loc = model.layer1_local(x_star)?;
    Ok(GradientPosterior {
        mean: model.gradient_mean_from(&loc),
        cov: model.gradient_cov_from(x_star, &loc)?,
    })
}
