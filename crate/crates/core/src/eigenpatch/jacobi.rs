/// Cyclic Jacobi eigendecomposition of a dense symmetric `n x n` matrix (row-major).
///
/// Returns eigenvalues in descending order and the matching unit eigenvectors
/// as the columns of a row-major `n x n` matrix. Each eigenvector's
/// largest-magnitude entry is made positive so the output is reproducible.
pub fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for r in 0..n {
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = c * arp - s * arq;
                    a[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[p * n + r];
                    let aqr = a[q * n + r];
                    a[p * n + r] = c * apr - s * aqr;
                    a[q * n + r] = s * apr + c * aqr;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        let pivot = (0..n)
            .max_by(|&r1, &r2| v[r1 * n + src].abs().total_cmp(&v[r2 * n + src].abs()))
            .unwrap_or(0);
        let sign = if v[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[r * n + dst] = sign * v[r * n + src];
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| b[k * n + i] * b[k * n + j]).sum();
            }
        }
        a
    }

    #[test]
    fn diagonal_matrix() {
        let a = vec![1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0];
        let (vals, vecs) = symmetric_eigen(a, 3);
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert_eq!(vecs[3], 1.0);
        assert_eq!(vecs[2 * 3 + 1], 1.0);
        assert_eq!(vecs[2], 1.0);
    }

    #[test]
    fn agrees_with_nalgebra() {
        let n = 12;
        let a = random_spd(n, 42);
        let (vals, vecs) = symmetric_eigen(a.clone(), n);
        let mut reference: Vec<f64> = nalgebra::DMatrix::from_row_slice(n, n, &a)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in vals.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-10 * reference[0]);
        }
        // A v = lambda v, V^T V = I
        for c in 0..n {
            for r in 0..n {
                let av: f64 = (0..n).map(|k| a[r * n + k] * vecs[k * n + c]).sum();
                assert!((av - vals[c] * vecs[r * n + c]).abs() < 1e-10 * reference[0]);
            }
            for c2 in 0..n {
                let g: f64 = (0..n).map(|r| vecs[r * n + c] * vecs[r * n + c2]).sum();
                let t = if c == c2 { 1.0 } else { 0.0 };
                assert!((g - t).abs() < 1e-12);
            }
        }
    }
}
