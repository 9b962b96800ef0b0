//! Complex QR factorization with a deterministic phase convention, seeded
//! random isometries, and a small Hermitian eigensolver.
//!
//! The phase convention makes the reduced factorization unique: R carries a
//! real, strictly positive diagonal, so the map from a full-column-rank
//! matrix to (Q, R) is a well-defined smooth function. Everything downstream
//! (embedding construction, retraction, gradients through the factorization)
//! relies on that uniqueness.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;

/// Diagonal entries of R below this are treated as rank deficiency.
pub const RANK_TOL: f64 = 1e-12;

/// Reduced QR of an r x c matrix with r >= c: m = Q R, Q^H Q = I_c, R upper
/// triangular with real strictly positive diagonal.
///
/// Householder reflections, so Q is orthonormal to machine precision at any
/// condition number; the column phases are then rotated to fix diag(R) > 0.
pub fn qr_reduced(m: &ComplexTensor) -> Result<(ComplexTensor, ComplexTensor)> {
    if m.ndim() != 2 {
        return Err(Error::Shape(format!(
            "qr_reduced requires a 2-axis tensor, got {:?}",
            m.shape()
        )));
    }
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    if rows < cols {
        return Err(Error::Shape(format!(
            "qr_reduced requires rows >= cols, got {}x{}",
            rows, cols
        )));
    }

    // Working copy, row-major rows x cols. Reduced in place to R.
    let mut a: Vec<Complex64> = m.data().to_vec();
    // Reflectors u_k (length rows - k) with squared norms; H_k = I - 2 u u^H / |u|^2.
    let mut reflectors: Vec<(Vec<Complex64>, f64)> = Vec::with_capacity(cols);

    for k in 0..cols {
        let len = rows - k;
        let mut u: Vec<Complex64> = (0..len).map(|i| a[(k + i) * cols + k]).collect();
        let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push((vec![Complex64::new(0.0, 0.0); len], 0.0));
            continue;
        }
        // beta = -exp(i arg(u0)) * |x| avoids cancellation in u0 - beta.
        let head = u[0];
        let phase = if head.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            head / head.norm()
        };
        let beta = -phase * norm;
        u[0] -= beta;
        let unorm2: f64 = u.iter().map(|z| z.norm_sqr()).sum();

        if unorm2 > 0.0 {
            // Apply H_k to the trailing columns of a.
            for j in k..cols {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in 0..len {
                    dot += u[i].conj() * a[(k + i) * cols + j];
                }
                let scale = dot * (2.0 / unorm2);
                for i in 0..len {
                    a[(k + i) * cols + j] -= scale * u[i];
                }
            }
        }
        a[k * cols + k] = beta;
        for i in 1..len {
            a[(k + i) * cols + k] = Complex64::new(0.0, 0.0);
        }
        reflectors.push((u, unorm2));
    }

    // Thin Q = H_0 ... H_{c-1} applied to the first c columns of the identity.
    let mut q = vec![Complex64::new(0.0, 0.0); rows * cols];
    for j in 0..cols {
        q[j * cols + j] = Complex64::new(1.0, 0.0);
    }
    for k in (0..cols).rev() {
        let (u, unorm2) = &reflectors[k];
        if *unorm2 == 0.0 {
            continue;
        }
        let len = rows - k;
        for j in 0..cols {
            let mut dot = Complex64::new(0.0, 0.0);
            for i in 0..len {
                dot += u[i].conj() * q[(k + i) * cols + j];
            }
            let scale = dot * (2.0 / unorm2);
            for i in 0..len {
                q[(k + i) * cols + j] -= scale * u[i];
            }
        }
    }

    // Phase fix: rotate column j of Q and row j of R so diag(R) is real > 0.
    let mut r = vec![Complex64::new(0.0, 0.0); cols * cols];
    for i in 0..cols {
        for j in i..cols {
            r[i * cols + j] = a[i * cols + j];
        }
    }
    for j in 0..cols {
        let d = r[j * cols + j];
        let mag = d.norm();
        if mag < RANK_TOL {
            return Err(Error::RankDeficient {
                index: j,
                value: mag,
            });
        }
        let phase = d / mag;
        for col in j..cols {
            r[j * cols + col] *= phase.conj();
        }
        r[j * cols + j] = Complex64::new(mag, 0.0);
        for row in 0..rows {
            q[row * cols + j] *= phase;
        }
    }

    Ok((
        ComplexTensor::from_vec(&[rows, cols], q)?,
        ComplexTensor::from_vec(&[cols, cols], r)?,
    ))
}

/// Standard complex Gaussian matrix (E|z|^2 = std^2 per entry), drawn from the
/// given ChaCha12 stream.
pub fn complex_gaussian(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut ChaCha12Rng,
) -> ComplexTensor {
    let component = std / 2f64.sqrt();
    let data = (0..rows * cols)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * component, im * component)
        })
        .collect();
    ComplexTensor::from_vec(&[rows, cols], data).expect("gaussian entries are finite")
}

/// Q factor of a seeded standard complex Gaussian matrix. The stream is
/// ChaCha12 keyed by `seed`, so outputs are bit-identical across platforms.
pub fn random_isometry(rows: usize, cols: usize, seed: u64) -> Result<ComplexTensor> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    random_isometry_from_rng(rows, cols, &mut rng)
}

pub fn random_isometry_from_rng(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha12Rng,
) -> Result<ComplexTensor> {
    if rows < cols {
        return Err(Error::Shape(format!(
            "isometry requires rows >= cols, got {}x{}",
            rows, cols
        )));
    }
    let g = complex_gaussian(rows, cols, 1.0, rng);
    let (q, _r) = qr_reduced(&g)?;
    Ok(q)
}

/// Max-entry deviation of W^H W from the identity.
pub fn isometry_deviation(w: &ComplexTensor) -> Result<f64> {
    let gram = w.adjoint()?.matmul(w)?;
    let n = gram.shape()[0];
    Ok(gram.sub(&ComplexTensor::identity(n))?.max_abs())
}

/// Smallest eigenvalue of the Hermitian part of a square matrix.
///
/// Uses the real-symmetric embedding [[X, -Y], [Y, X]] of X + iY followed by
/// cyclic Jacobi sweeps; the embedding has the same spectrum (doubled).
pub fn hermitian_min_eigenvalue(m: &ComplexTensor) -> Result<f64> {
    if m.ndim() != 2 || m.shape()[0] != m.shape()[1] {
        return Err(Error::Shape(format!(
            "eigenvalues require a square 2-axis tensor, got {:?}",
            m.shape()
        )));
    }
    let p = m.shape()[0];
    if p == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    let n = 2 * p;
    let mut b = vec![0.0f64; n * n];
    for i in 0..p {
        for j in 0..p {
            // Hermitian part; the deviation itself is reported separately.
            let h = 0.5 * (m.get2(i, j) + m.get2(j, i).conj());
            b[i * n + j] = h.re;
            b[(i + p) * n + (j + p)] = h.re;
            b[i * n + (j + p)] = -h.im;
            b[(i + p) * n + j] = h.im;
        }
    }
    let eigs = jacobi_symmetric_eigenvalues(&mut b, n);
    Ok(eigs.into_iter().fold(f64::INFINITY, f64::min))
}

fn jacobi_symmetric_eigenvalues(b: &mut [f64], n: usize) -> Vec<f64> {
    let scale = (0..n * n).map(|i| b[i].abs()).fold(0.0, f64::max).max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(b[p * n + q].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = b[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = b[p * n + p];
                let aqq = b[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let bkp = b[k * n + p];
                    let bkq = b[k * n + q];
                    b[k * n + p] = c * bkp - s * bkq;
                    b[k * n + q] = s * bkp + c * bkq;
                }
                for k in 0..n {
                    let bpk = b[p * n + k];
                    let bqk = b[q * n + k];
                    b[p * n + k] = c * bpk - s * bqk;
                    b[q * n + k] = s * bpk + c * bqk;
                }
            }
        }
    }
    (0..n).map(|i| b[i * n + i]).collect()
}

/// Solve X L = C for X, with L square lower triangular (columns of X by back
/// substitution from the last).
pub fn solve_lower_right(c: &ComplexTensor, l: &ComplexTensor) -> Result<ComplexTensor> {
    if c.ndim() != 2 || l.ndim() != 2 || l.shape()[0] != l.shape()[1] {
        return Err(Error::Shape(format!(
            "solve_lower_right requires matrix shapes, got {:?} and {:?}",
            c.shape(),
            l.shape()
        )));
    }
    let (m, n) = (c.shape()[0], c.shape()[1]);
    if l.shape()[0] != n {
        return Err(Error::Shape(format!(
            "solve_lower_right: rhs has {} columns but factor is {}x{}",
            n,
            l.shape()[0],
            l.shape()[1]
        )));
    }
    let mut x = vec![Complex64::new(0.0, 0.0); m * n];
    for j in (0..n).rev() {
        let diag = l.get2(j, j);
        if diag.norm() < RANK_TOL {
            return Err(Error::RankDeficient {
                index: j,
                value: diag.norm(),
            });
        }
        for row in 0..m {
            let mut acc = c.get2(row, j);
            for k in (j + 1)..n {
                acc -= x[row * n + k] * l.get2(k, j);
            }
            x[row * n + j] = acc / diag;
        }
    }
    ComplexTensor::from_vec(&[m, n], x)
}
