//! Box-constrained BFGS with backtracking for minimizing smooth objectives in
//! log-parameter space.

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
}

pub(crate) struct Settings {
    pub max_iter: usize,
    pub grad_tol: f64,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

/// Gradient with components pushing against an active bound removed.
fn projected_grad(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((xi, gi), (l, h))| {
            if (*xi <= *l && *gi > 0.0) || (*xi >= *h && *gi < 0.0) {
                0.0
            } else {
                *gi
            }
        })
        .collect()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `f`, which returns `None` where the objective is undefined
/// (for example, a failed factorization). The start must be feasible.
pub(crate) fn minimize<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], s: &Settings) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let mut hinv = vec![vec![0.0; n]; n];
    for (i, row) in hinv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut iterations = 0;
    while iterations < s.max_iter {
        let pg = projected_grad(&x, &g, lo, hi);
        if norm_inf(&pg) < s.grad_tol {
            break;
        }
        iterations += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| hinv[i][j] * pg[j]).sum::<f64>()).collect();
        // fall back to steepest descent when the quasi-Newton step is not a descent direction
        let descent: f64 = dir.iter().zip(&pg).map(|(a, b)| a * b).sum();
        if descent >= 0.0 {
            dir = pg.iter().map(|v| -v).collect();
            for (i, row) in hinv.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0;
            }
        }
        let slope: f64 = dir.iter().zip(&pg).map(|(a, b)| a * b).sum();
        if -slope < 1e-10 * (1.0 + fx.abs()) {
            // predicted decrease is below rounding noise in the objective
            break;
        }
        // keep steps moderate in log space
        let max_step = norm_inf(&dir);
        let cap = if iterations == 1 { 0.25 } else { 2.0 };
        let mut step = if max_step > cap { cap / max_step } else { 1.0 };
        let mut accepted = None;
        while step * max_step > 1e-10 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            project(&mut xn, lo, hi);
            if let Some((fnew, gnew)) = f(&xn) {
                let decrease: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), c)| (a - b) * c).sum();
                if fnew.is_finite() && fnew <= fx + 1e-4 * decrease.min(0.0) {
                    accepted = Some((xn, fnew, gnew));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else { break };
        let sv: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = sv.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let improvement = fx - fnew;
        x = xn;
        fx = fnew;
        g = gnew;
        if sy > 1e-12 {
            if iterations == 1 {
                // scale the initial inverse Hessian to the observed curvature
                let yy: f64 = yv.iter().map(|v| v * v).sum();
                for (i, row) in hinv.iter_mut().enumerate() {
                    row[i] = sy / yy;
                }
            }
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i][j] * yv[j]).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += (1.0 + yhy * rho) * rho * sv[i] * sv[j] - rho * (hy[i] * sv[j] + sv[i] * hy[j]);
                }
            }
        }
        if improvement.abs() < 1e-12 * (1.0 + fx.abs()) {
            break;
        }
    }
    Some(Minimum {
        x,
        value: fx,
    })
}
