use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tendon_core::reflex::TensionQp;

/// Brute force over every bound pattern: fix the bound set, solve the
/// remaining stationarity system by LU, keep the best feasible point.
pub fn enumerate(qp: &TensionQp) -> (Vec<f64>, f64) {
    let m = qp.f_min.len();
    // Hessian and linear term built here rather than taken from the solver
    let n = qp.tau_nec.len();
    let h = DMatrix::from_fn(m, m, |i, j| {
        let joint: f64 = (0..n)
            .map(|k| qp.g[(i, k)] * qp.w2_diag[k] * qp.g[(j, k)])
            .sum();
        2.0 * (joint + if i == j { qp.w1_diag[i] } else { 0.0 })
    });
    let c: Vec<f64> = (0..m)
        .map(|i| {
            (0..n)
                .map(|k| 2.0 * qp.g[(i, k)] * qp.w2_diag[k] * qp.tau_nec[k])
                .sum()
        })
        .collect();
    let objective = |x: &[f64]| -> f64 {
        let muscle: f64 = (0..m).map(|i| qp.w1_diag[i] * x[i] * x[i]).sum();
        let joint: f64 = (0..n)
            .map(|k| {
                let r: f64 = (0..m).map(|i| qp.g[(i, k)] * x[i]).sum::<f64>() + qp.tau_nec[k];
                qp.w2_diag[k] * r * r
            })
            .sum();
        muscle + joint
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 0u32..(1 << m) {
        let free: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let mut x = qp.f_min.clone();
        if !free.is_empty() {
            let k = free.len();
            let a = DMatrix::from_fn(k, k, |r, s| h[(free[r], free[s])]);
            let b = DVector::from_fn(k, |r, _| {
                let i = free[r];
                let fixed: f64 = (0..m)
                    .filter(|j| mask & (1 << j) == 0)
                    .map(|j| h[(i, j)] * qp.f_min[j])
                    .sum();
                -(c[i] + fixed)
            });
            let Some(y) = a.lu().solve(&b) else { continue };
            if free
                .iter()
                .zip(y.iter())
                .any(|(&i, &v)| v < qp.f_min[i] - 1e-9)
            {
                continue;
            }
            for (&i, &v) in free.iter().zip(y.iter()) {
                x[i] = v.max(qp.f_min[i]);
            }
        }
        let obj = objective(&x);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((x, obj));
        }
    }
    best.expect("the all-bound pattern is always feasible")
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> TensionQp {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(2..=8);
    let g = DMatrix::from_fn(m, n, |_, _| {
        if rng.random_bool(0.25) {
            0.0
        } else {
            rng.random_range(-0.05..0.05)
        }
    });
    TensionQp {
        w1_diag: (0..m)
            .map(|_| 10f64.powf(rng.random_range(-7.0..-4.0)))
            .collect(),
        w2_diag: (0..n).map(|_| rng.random_range(0.1..10.0)).collect(),
        g,
        tau_nec: (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
        f_min: (0..m).map(|_| rng.random_range(0.0..20.0)).collect(),
    }
}

#[allow(dead_code)]
pub fn seeded_instances(seed: u64, count: usize) -> Vec<TensionQp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_instance(&mut rng)).collect()
}
