//! Spectral value difference orthogonality (SVDO) loss.
//!
//! For a feature `F` flattened per batch element to a `C × (H·W)` matrix
//! `M`, the loss is the squared gap between the extreme eigenvalues of the
//! channel Gram matrix `G = M·Mᵀ`, averaged over the batch:
//!
//! ```text
//! loss = mean_b (λ_max(G_b) − λ_min(G_b))²
//! ```
//!
//! Minimizing it pushes the Gram spectrum toward isotropy, i.e. decorrelates
//! channels. The gradient is analytic: for a simple eigenvalue λ of `M·Mᵀ`
//! with unit eigenvector `v`, `dλ/dM = 2·v·vᵀ·M`, so
//!
//! ```text
//! dloss/dM = 4·(λ_max − λ_min)·(v_max·v_maxᵀ − v_min·v_minᵀ)·M / N
//! ```
//!
//! At degeneracy (gap below [`DEGENERACY_TOLERANCE`]) the loss sits at its
//! global minimum and the gradient is exactly zero, so training receives no
//! spurious pull there.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Backward, Graph, Shape, Tensor};

/// Eigenvalue gaps at or below this threshold take the zero-gradient branch.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

const MAX_JACOBI_SWEEPS: usize = 50;

/// Symmetric real matrix, stored dense row-major. Symmetry holds by
/// construction: the only constructors are [`SymMatrix::from_rows`] (which
/// symmetrizes bitwise by copying the lower triangle) and [`gram`].
#[derive(Clone, Debug)]
pub struct SymMatrix {
    order: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Build from row-major entries; the strict upper triangle is mirrored
    /// from the lower one so `a_ij == a_ji` exactly.
    pub fn from_rows(order: usize, mut entries: Vec<f64>) -> Result<Self> {
        if entries.len() != order * order {
            return Err(Error::Shape(format!(
                "expected {}x{} entries, got {}",
                order,
                order,
                entries.len()
            )));
        }
        for i in 0..order {
            for j in 0..i {
                entries[j * order + i] = entries[i * order + j];
            }
        }
        Ok(SymMatrix { order, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.order + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Full spectrum of a symmetric matrix: eigenvalues ascending, eigenvectors
/// as orthonormal columns of `vectors` (row-major `order × order`; column
/// `k` pairs with `values[k]`).
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    order: usize,
}

impl EigenPair {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Column `k` as a vector.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.order)
            .map(|r| self.vectors[r * self.order + k])
            .collect()
    }
}

/// Channel Gram matrix of one batch element: the feature's channels are
/// flattened to rows of a `C × (H·W)` matrix `M` and the result is `M·Mᵀ`
/// (exactly symmetric, positive semidefinite).
pub fn gram(f: &Tensor, batch_index: usize) -> Result<SymMatrix> {
    let s = f.shape();
    if batch_index >= s.n() {
        return Err(Error::Usage(format!(
            "batch index {batch_index} out of range for shape {s}"
        )));
    }
    let (c, hw) = (s.c(), s.hw());
    let base = batch_index * c * hw;
    let data = &f.data()[base..base + c * hw];
    let mut entries = vec![0.0; c * c];
    for i in 0..c {
        let row_i = &data[i * hw..(i + 1) * hw];
        for j in 0..=i {
            let row_j = &data[j * hw..(j + 1) * hw];
            let mut acc = 0.0;
            for (a, b) in row_i.iter().zip(row_j) {
                acc += a * b;
            }
            entries[i * c + j] = acc;
            entries[j * c + i] = acc;
        }
    }
    Ok(SymMatrix { order: c, entries })
}

/// Full eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps annihilate every off-diagonal pair in turn until the off-diagonal
/// Frobenius norm falls below `1e-12 · ‖A‖_F`; eigenvalues are returned in
/// ascending order with matching orthonormal eigenvector columns. Fails
/// with a diagnostic if [`MAX_JACOBI_SWEEPS`] sweeps do not converge.
pub fn sym_eigen(matrix: &SymMatrix) -> Result<EigenPair> {
    let n = matrix.order;
    let mut a = matrix.entries.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    if n == 1 {
        return Ok(EigenPair {
            values: vec![a[0]],
            vectors: v,
            order: 1,
        });
    }

    let norm = matrix.frobenius_norm();
    let target = 1e-12 * norm;

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = norm == 0.0 || off_norm(&a) <= target;
    if !converged {
        for _ in 0..MAX_JACOBI_SWEEPS {
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (1.0 + theta * theta).sqrt())
                    } else {
                        1.0 / (theta - (1.0 + theta * theta).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;

                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
            if off_norm(&a) <= target {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi eigensolver did not converge after {MAX_JACOBI_SWEEPS} sweeps \
             (order {n}, off-diagonal norm {:.3e}, target {:.3e})",
            off_norm(&a),
            target
        )));
    }

    // Sort ascending; ties keep their post-rotation column order so repeated
    // eigenvalues resolve deterministically.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        a[i * n + i]
            .partial_cmp(&a[j * n + j])
            .expect("eigenvalues are finite")
    });
    let values: Vec<f64> = idx.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in idx.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + col] = v[r * n + src];
        }
    }
    Ok(EigenPair {
        values,
        vectors,
        order: n,
    })
}

/// Gap and extreme eigenvectors for one batch element.
fn element_spectrum(f: &Tensor, b: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let g = gram(f, b)?;
    let eig = sym_eigen(&g)?;
    let c = eig.order();
    let gap = eig.values[c - 1] - eig.values[0];
    Ok((gap, eig.vector(c - 1), eig.vector(0)))
}

/// Per-element gradient contribution `4·gap·(v_max v_maxᵀ − v_min v_minᵀ)·M`,
/// written into `out` (a `C·H·W` slice).
fn element_grad(f_elem: &[f64], c: usize, hw: usize, gap: f64, vmax: &[f64], vmin: &[f64], scale: f64, out: &mut [f64]) {
    if gap <= DEGENERACY_TOLERANCE {
        out.fill(0.0);
        return;
    }
    // P = v_max v_maxᵀ − v_min v_minᵀ; out = scale·4·gap·P·M, row by row.
    for i in 0..c {
        let row = &mut out[i * hw..(i + 1) * hw];
        row.fill(0.0);
        for j in 0..c {
            let p_ij = vmax[i] * vmax[j] - vmin[i] * vmin[j];
            if p_ij == 0.0 {
                continue;
            }
            let coeff = scale * 4.0 * gap * p_ij;
            let src = &f_elem[j * hw..(j + 1) * hw];
            for (r, s) in row.iter_mut().zip(src) {
                *r += coeff * s;
            }
        }
    }
}

struct SvdoRule {
    spectra: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

impl Backward for SvdoRule {
    fn input_grads(
        &self,
        inputs: &[Tensor],
        grad_out: &[f64],
        _needed: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let f = &inputs[0];
        let s = f.shape();
        let (n, c, hw) = (s.n(), s.c(), s.hw());
        let scale = grad_out[0] / n as f64;
        let fd = f.data();
        let mut gx = vec![0.0; s.count()];
        par::for_each_chunk_mut(&mut gx, c * hw, |b, chunk| {
            let (gap, vmax, vmin) = &self.spectra[b];
            element_grad(&fd[b * c * hw..(b + 1) * c * hw], c, hw, *gap, vmax, vmin, scale, chunk);
        });
        Ok(vec![Some(gx)])
    }
}

/// SVDO loss of a feature tensor, averaged over batch elements, as a
/// differentiable scalar.
pub fn svdo_loss(graph: &mut Graph, f: &Tensor) -> Result<Tensor> {
    let n = f.shape().n();
    let spectra: Vec<(f64, Vec<f64>, Vec<f64>)> = par::map_indexed(n, |b| element_spectrum(f, b))
        .into_iter()
        .collect::<Result<_>>()?;
    let loss = spectra.iter().map(|(gap, _, _)| gap * gap).sum::<f64>() / n as f64;
    let rec = graph.wants_grad(&[f]);
    let out = Tensor::from_op(Shape::new(1, 1, 1, 1), vec![loss], rec);
    if rec {
        graph.push_node(vec![f.clone()], &out, Box::new(SvdoRule { spectra }));
    }
    Ok(out)
}

/// Analytic gradient of [`svdo_loss`] with respect to `f`, reshaped to
/// `f`'s shape. Standalone (no tape); exactly zero on degenerate spectra.
pub fn svdo_grad(f: &Tensor) -> Result<Tensor> {
    let s = f.shape();
    let (n, c, hw) = (s.n(), s.c(), s.hw());
    let spectra: Vec<(f64, Vec<f64>, Vec<f64>)> = par::map_indexed(n, |b| element_spectrum(f, b))
        .into_iter()
        .collect::<Result<_>>()?;
    let fd = f.data();
    let scale = 1.0 / n as f64;
    let mut gx = vec![0.0; s.count()];
    par::for_each_chunk_mut(&mut gx, c * hw, |b, chunk| {
        let (gap, vmax, vmin) = &spectra[b];
        element_grad(&fd[b * c * hw..(b + 1) * c * hw], c, hw, *gap, vmax, vmin, scale, chunk);
    });
    Tensor::from_vec(s, gx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_difference_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(values: &[f64]) -> SymMatrix {
        let n = values.len();
        let mut e = vec![0.0; n * n];
        for i in 0..n {
            e[i * n + i] = values[i];
        }
        SymMatrix::from_rows(n, e).unwrap()
    }

    #[test]
    fn diagonal_matrix_spectrum() {
        let eig = sym_eigen(&diag(&[9.0, 1.0, 4.0])).unwrap();
        assert_eq!(eig.values, vec![1.0, 4.0, 9.0]);
        // Eigenvectors are signed identity columns.
        for k in 0..3 {
            let v = eig.vector(k);
            let ones: usize = v.iter().filter(|x| x.abs() > 0.5).count();
            assert_eq!(ones, 1);
        }
    }

    #[test]
    fn two_by_two_hand_spectrum() {
        let m = SymMatrix::from_rows(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let eig = sym_eigen(&m).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &n in &[3usize, 8, 16] {
            let entries: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let m = SymMatrix::from_rows(n, entries).unwrap();
            let eig = sym_eigen(&m).unwrap();
            let norm = m.frobenius_norm();

            // V·Λ·Vᵀ reconstructs A.
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += eig.vectors[i * n + k] * eig.values[k] * eig.vectors[j * n + k];
                    }
                    assert!(
                        (acc - m.get(i, j)).abs() <= 1e-10 * norm.max(1.0),
                        "order {n} entry ({i},{j})"
                    );
                }
            }
            // VᵀV = I.
            for a in 0..n {
                for b in 0..n {
                    let mut acc = 0.0;
                    for r in 0..n {
                        acc += eig.vectors[r * n + a] * eig.vectors[r * n + b];
                    }
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((acc - want).abs() < 1e-10);
                }
            }
        }
    }

    /// Closed-form eigenvalues of a symmetric 3×3 matrix via the
    /// trigonometric solution of the characteristic cubic.
    fn cubic_eigenvalues(m: &SymMatrix) -> [f64; 3] {
        let a = m.entries();
        let p1 = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
        let q = (a[0] + a[4] + a[8]) / 3.0;
        let p2 = (a[0] - q).powi(2) + (a[4] - q).powi(2) + (a[8] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p == 0.0 {
            return [q, q, q];
        }
        // B = (A − qI)/p; r = det(B)/2 clamped to [−1, 1].
        let b: Vec<f64> = (0..9)
            .map(|i| {
                let centered = if i % 4 == 0 { a[i] - q } else { a[i] };
                centered / p
            })
            .collect();
        let det = b[0] * (b[4] * b[8] - b[5] * b[7]) - b[1] * (b[3] * b[8] - b[5] * b[6])
            + b[2] * (b[3] * b[7] - b[4] * b[6]);
        let r = (det / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        // With phi in [0, π/3]: e1 is the largest root, e3 the smallest.
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        [e3, e2, e1]
    }

    #[test]
    fn three_by_three_matches_cubic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let entries: Vec<f64> = (0..9).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let m = SymMatrix::from_rows(3, entries).unwrap();
            let eig = sym_eigen(&m).unwrap();
            let oracle = cubic_eigenvalues(&m);
            for k in 0..3 {
                assert!(
                    (eig.values[k] - oracle[k]).abs() < 1e-8,
                    "eigenvalue {k}: jacobi {} vs cubic {}",
                    eig.values[k],
                    oracle[k]
                );
            }
        }
    }

    #[test]
    fn gram_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Tensor::randn(Shape::new(2, 3, 4, 5), 1.0, &mut rng);
        let g = gram(&f, 1).unwrap();
        let (c, hw) = (3, 20);
        let data = &f.data()[c * hw..2 * c * hw];
        for i in 0..c {
            for j in 0..c {
                let mut acc = 0.0;
                for p in 0..hw {
                    acc += data[i * hw + p] * data[j * hw + p];
                }
                assert!((g.get(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_of_scaled_orthonormal_rows_is_scaled_identity() {
        // Two orthogonal rows of squared norm 3.
        let data = vec![
            1.0, 1.0, 1.0, 0.0, //
            0.0, -1.0, 1.0, 1.0,
        ];
        let f = Tensor::from_vec(Shape::new(1, 2, 1, 4), data).unwrap();
        let g = gram(&f, 0).unwrap();
        assert_eq!(g.get(0, 0), 3.0);
        assert_eq!(g.get(1, 1), 3.0);
        assert_eq!(g.get(0, 1), 0.0);
    }

    #[test]
    fn isotropic_feature_has_zero_loss_and_zero_gradient() {
        // Orthogonal rows of equal norm: Gram = c·I.
        let data = vec![
            1.0, 1.0, 1.0, 1.0, //
            1.0, -1.0, 1.0, -1.0,
        ];
        let f = Tensor::from_vec(Shape::new(1, 2, 2, 2), data).unwrap();
        let mut g = Graph::no_grad();
        let loss = svdo_loss(&mut g, &f).unwrap();
        assert_eq!(loss.item().unwrap(), 0.0);
        let grad = svdo_grad(&f).unwrap();
        assert!(grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_one_feature_loss_is_frobenius_norm_fourth_power() {
        // Both channels the row (1,1,1,1): ‖F‖_F² = 8, loss = 64.
        let f = Tensor::from_vec(Shape::new(1, 2, 1, 4), vec![1.0; 8]).unwrap();
        let mut g = Graph::no_grad();
        let loss = svdo_loss(&mut g, &f).unwrap();
        assert!((loss.item().unwrap() - 64.0).abs() < 1e-8 * 64.0);
    }

    #[test]
    fn loss_matches_eigensolver_oracle_per_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let f = Tensor::randn(Shape::new(3, 4, 5, 5), 1.0, &mut rng);
        let mut g = Graph::no_grad();
        let loss = svdo_loss(&mut g, &f).unwrap().item().unwrap();
        let mut want = 0.0;
        for b in 0..3 {
            let eig = sym_eigen(&gram(&f, b).unwrap()).unwrap();
            let gap = eig.values[3] - eig.values[0];
            want += gap * gap;
        }
        want /= 3.0;
        assert!((loss - want).abs() <= 1e-10 * want.max(1.0));
    }

    #[test]
    fn grad_supported_on_extreme_channels_for_diagonal_gram() {
        // Orthogonal rows with distinct norms: Gram diagonal, v_max/v_min are
        // axis vectors, so the gradient touches only the extreme channels.
        let data = vec![
            3.0, 0.0, 0.0, 0.0, // channel 0: norm² = 9 (max)
            0.0, 2.0, 0.0, 0.0, // channel 1: norm² = 4
            0.0, 0.0, 1.0, 0.0, // channel 2: norm² = 1 (min)
        ];
        let f = Tensor::from_vec(Shape::new(1, 3, 1, 4), data).unwrap();
        let grad = svdo_grad(&f).unwrap();
        let gd = grad.data();
        assert!(gd[0..4].iter().any(|&v| v != 0.0), "max channel must receive gradient");
        assert!(gd[4..8].iter().all(|&v| v == 0.0), "middle channel must not");
        assert!(gd[8..12].iter().any(|&v| v != 0.0), "min channel must receive gradient");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = Tensor::randn(Shape::new(2, 4, 3, 3), 1.0, &mut rng);
        let err = finite_difference_check(|g, x| svdo_loss(g, x), &f, 1e-5).unwrap();
        assert!(err < 1e-4, "svdo gradient error {err}");

        // The standalone analytic form agrees with the taped one.
        let probe = Tensor::param_from_vec(f.shape(), f.data().to_vec()).unwrap();
        let mut g = Graph::new();
        let loss = svdo_loss(&mut g, &probe).unwrap();
        g.backward(&loss).unwrap();
        let taped = probe.grad_or_zeros();
        let standalone = svdo_grad(&f).unwrap();
        for (a, b) in taped.iter().zip(standalone.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_law_alpha_fourth() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let f = Tensor::randn(Shape::new(1, 4, 4, 4), 1.0, &mut rng);
        let alpha = 1.7;
        let scaled =
            Tensor::from_vec(f.shape(), f.data().iter().map(|v| alpha * v).collect()).unwrap();
        let mut g = Graph::no_grad();
        let base = svdo_loss(&mut g, &f).unwrap().item().unwrap();
        let big = svdo_loss(&mut g, &scaled).unwrap().item().unwrap();
        let want = alpha.powi(4) * base;
        assert!((big - want).abs() <= 1e-8 * want.abs().max(1.0));
    }
}
