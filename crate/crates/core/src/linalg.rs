//! Small dense helpers shared by the simulator and tests.

use ndarray::{Array2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::Rng;

pub fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let z: f64 = rng.sample(StandardNormal);
        std * z
    })
}

/// Haar-distributed orthogonal matrix: Gram-Schmidt on a Gaussian matrix,
/// columns re-orthogonalized twice for numerical safety.
pub fn random_orthogonal(n: usize, rng: &mut Rng) -> Array2<f64> {
    let mut q = gaussian(n, n, 1.0, rng);
    for j in 0..n {
        for _pass in 0..2 {
            for k in 0..j {
                let dot = q.column(j).dot(&q.column(k));
                let qk = q.column(k).to_owned();
                q.column_mut(j).scaled_add(-dot, &qk);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    q
}

pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Column means of `m` (rows are observations).
pub fn column_means(m: &Array2<f64>) -> ndarray::Array1<f64> {
    m.mean_axis(Axis(0)).expect("non-empty matrix")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = crate::rng::substream(3, "linalg");
        let q = random_orthogonal(12, &mut rng);
        let qtq = q.t().dot(&q);
        for i in 0..12 {
            for j in 0..12 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[[i, j]] - expect).abs() < 1e-12);
            }
        }
    }
}
