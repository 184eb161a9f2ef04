//! Small dense complex matrices.
//!
//! Every matrix in the pipeline is n×n with n the complex dimension (2 at
//! desk scale), so a plain `Vec`-backed type with deterministic Gaussian
//! elimination beats pulling in a linear algebra crate.

use crate::C64;

/// Row-major n×n complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub n: usize,
    pub data: Vec<C64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn hermitian_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                dev = dev.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        dev
    }

    /// LU factorization with partial pivoting; returns (inverse, det).
    /// Returns `None` when a pivot underflows (singular matrix).
    pub fn inverse_det(&self) -> Option<(CMat, C64)> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut inv = CMat::identity(n);
        let mut det = C64::new(1.0, 0.0);
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].norm();
            for r in (col + 1)..n {
                let m = a[r * n + col].norm();
                if m > best {
                    best = m;
                    piv = r;
                }
            }
            if best < 1e-300 {
                return None;
            }
            if piv != col {
                for c in 0..n {
                    a.swap(piv * n + c, col * n + c);
                    inv.data.swap(piv * n + c, col * n + c);
                }
                det = -det;
            }
            let d = a[col * n + col];
            det *= d;
            let dinv = C64::new(1.0, 0.0) / d;
            for c in 0..n {
                a[col * n + c] *= dinv;
                inv.data[col * n + c] *= dinv;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f.norm() == 0.0 {
                    continue;
                }
                for c in 0..n {
                    let s = a[col * n + c];
                    a[r * n + c] -= f * s;
                    let s = inv.data[col * n + c];
                    inv.data[r * n + c] -= f * s;
                }
            }
        }
        Some((inv, det))
    }

    /// Eigenvalues of a Hermitian matrix via cyclic Jacobi on the real
    /// symmetric embedding [[X, -Y], [Y, X]]; each eigenvalue of H appears
    /// twice in the embedding, so we return every other sorted value.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        let m = 2 * n;
        let mut s = vec![0.0f64; m * m];
        for i in 0..n {
            for j in 0..n {
                let h = self[(i, j)];
                s[i * m + j] = h.re;
                s[i * m + (n + j)] = -h.im;
                s[(n + i) * m + j] = h.im;
                s[(n + i) * m + (n + j)] = h.re;
            }
        }
        // Cyclic Jacobi sweeps.
        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for p in 0..m {
                for q in (p + 1)..m {
                    off += s[p * m + q] * s[p * m + q];
                }
            }
            if off < 1e-28 {
                break;
            }
            for p in 0..m {
                for q in (p + 1)..m {
                    let apq = s[p * m + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let app = s[p * m + p];
                    let aqq = s[q * m + q];
                    let tau = (aqq - app) / (2.0 * apq);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let sn = t * c;
                    for k in 0..m {
                        let skp = s[k * m + p];
                        let skq = s[k * m + q];
                        s[k * m + p] = c * skp - sn * skq;
                        s[k * m + q] = sn * skp + c * skq;
                    }
                    for k in 0..m {
                        let spk = s[p * m + k];
                        let sqk = s[q * m + k];
                        s[p * m + k] = c * spk - sn * sqk;
                        s[q * m + k] = sn * spk + c * sqk;
                    }
                }
            }
        }
        let mut eigs: Vec<f64> = (0..m).map(|i| s[i * m + i]).collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        eigs.into_iter().step_by(2).collect()
    }

    pub fn min_hermitian_eigenvalue(&self) -> f64 {
        self.hermitian_eigenvalues()[0]
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inverse_of_identity() {
        let (inv, det) = CMat::identity(3).inverse_det().unwrap();
        assert_eq!(inv, CMat::identity(3));
        assert_relative_eq!(det.re, 1.0);
    }

    #[test]
    fn inverse_matches_hand_computed_2x2() {
        let mut m = CMat::zeros(2);
        m[(0, 0)] = c(2.0, 0.0);
        m[(0, 1)] = c(0.5, 0.3);
        m[(1, 0)] = c(0.5, -0.3);
        m[(1, 1)] = c(1.0, 0.0);
        let (inv, det) = m.inverse_det().unwrap();
        // det = 2 - |0.5+0.3i|^2 = 2 - 0.34
        assert_relative_eq!(det.re, 1.66, epsilon = 1e-14);
        assert_relative_eq!(det.im, 0.0, epsilon = 1e-14);
        let mut prod = CMat::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                let mut s = c(0.0, 0.0);
                for k in 0..2 {
                    s += m[(i, k)] * inv[(k, j)];
                }
                prod[(i, j)] = s;
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(prod[(i, j)].re, expect, epsilon = 1e-14);
                assert_relative_eq!(prod[(i, j)].im, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn singular_matrix_detected() {
        let m = CMat::zeros(2);
        assert!(m.inverse_det().is_none());
    }

    #[test]
    fn hermitian_eigenvalues_2x2() {
        // H = [[2, i], [-i, 2]] has eigenvalues 1 and 3.
        let mut m = CMat::zeros(2);
        m[(0, 0)] = c(2.0, 0.0);
        m[(0, 1)] = c(0.0, 1.0);
        m[(1, 0)] = c(0.0, -1.0);
        m[(1, 1)] = c(2.0, 0.0);
        let e = m.hermitian_eigenvalues();
        assert_relative_eq!(e[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e[1], 3.0, epsilon = 1e-12);
    }
}
