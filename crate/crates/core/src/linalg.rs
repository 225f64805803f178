//! Small dense-vector helpers over `[f64]`.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Arithmetic mean of equally sized vectors.
pub fn mean(vs: &[Vec<f64>]) -> Vec<f64> {
    let d = vs.first().map_or(0, Vec::len);
    let mut m = vec![0.0; d];
    for v in vs {
        axpy(1.0, v, &mut m);
    }
    let n = vs.len() as f64;
    m.iter_mut().for_each(|x| *x /= n);
    m
}

pub fn sum(vs: &[Vec<f64>]) -> Vec<f64> {
    let d = vs.first().map_or(0, Vec::len);
    let mut s = vec![0.0; d];
    for v in vs {
        axpy(1.0, v, &mut s);
    }
    s
}
