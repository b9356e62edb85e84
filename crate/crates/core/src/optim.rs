//! Full-batch first-order minimization with a monotone loss guarantee.
//!
//! Each step takes an Adam direction and halves the step length until the
//! loss does not increase; if that fails it falls back to the normalized
//! negative gradient, and finally to no move at all.

pub(crate) struct Objective<'a> {
    /// Loss and, when asked, its gradient.
    pub eval: &'a (dyn Fn(&[f64], bool) -> (f64, Vec<f64>) + Sync),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Schedule {
    pub learning_rate: f64,
    pub epochs: usize,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;
const MAX_HALVINGS: usize = 30;

/// Minimizes in place; returns the loss after every epoch.
pub(crate) fn minimize(params: &mut Vec<f64>, obj: &Objective<'_>, sched: Schedule) -> Vec<f64> {
    let n = params.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut history = Vec::with_capacity(sched.epochs);
    let (mut loss, mut grad) = (obj.eval)(params, true);
    for epoch in 1..=sched.epochs {
        let t = epoch as i32;
        for i in 0..n {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
        }
        let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
        let adam: Vec<f64> = (0..n)
            .map(|i| -(m[i] / c1) / ((v[i] / c2).sqrt() + EPS))
            .collect();
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let descent: Vec<f64> = if gnorm > 0.0 {
            grad.iter().map(|g| -g / gnorm).collect()
        } else {
            vec![0.0; n]
        };

        let mut moved = false;
        for dir in [&adam, &descent] {
            if let Some((cand, l)) = line_search(params, dir, loss, sched.learning_rate, obj) {
                *params = cand;
                loss = l;
                moved = true;
                break;
            }
        }
        if moved {
            let (l, g) = (obj.eval)(params, true);
            loss = l;
            grad = g;
        }
        history.push(loss);
    }
    history
}

fn line_search(
    params: &[f64],
    dir: &[f64],
    loss: f64,
    lr: f64,
    obj: &Objective<'_>,
) -> Option<(Vec<f64>, f64)> {
    let mut step = lr;
    for _ in 0..MAX_HALVINGS {
        let cand: Vec<f64> = params.iter().zip(dir).map(|(p, d)| p + step * d).collect();
        let (l, _) = (obj.eval)(&cand, false);
        if l.is_finite() && l <= loss {
            return Some((cand, l));
        }
        step *= 0.5;
    }
    None
}
