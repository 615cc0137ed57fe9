//! Dense numeric kernel: rank-1..3 row-major `f64` tensors, the handful of
//! elementwise/matrix operations the encoder needs, a portable seeded RNG,
//! and a central-difference gradient checker.
//!
//! The kernel is deliberately tiny and explicit. The encoder's backward pass
//! is hand-derived, and auditing it is much easier when the numeric layer has
//! no hidden state: no BLAS threading, no SIMD dispatch, no platform-specific
//! RNG. Every operation is a plain loop, so results are bit-reproducible for
//! identical inputs on every platform.
//!
//! Shape violations are programming errors and panic (as in `ndarray`);
//! debug builds additionally assert that no operation produces a non-finite
//! value.

use serde::{Deserialize, Serialize};

/// Dense row-major tensor of rank 1, 2, or 3.
///
/// Rank-2 tensors index as `[row, col]`, rank-3 as `[i, j, k]` with `k`
/// fastest-varying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Zero tensor with the given shape (rank must be 1..=3).
    pub fn zeros(shape: &[usize]) -> Tensor {
        assert!(
            (1..=3).contains(&shape.len()),
            "tensor rank must be 1..=3, got shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Tensor from raw row-major data; `data.len()` must match the shape.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        let mut t = Tensor::zeros(shape);
        assert_eq!(
            t.data.len(),
            data.len(),
            "shape {shape:?} needs {} values, got {}",
            t.data.len(),
            data.len()
        );
        t.data = data;
        t
    }

    /// Rank-1 tensor from a plain vector.
    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor::from_vec(&[data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// General indexer; panics on rank or bounds violations.
    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(
            index.len(),
            self.shape.len(),
            "index rank {} does not match tensor rank {}",
            index.len(),
            self.shape.len()
        );
        let mut o = 0;
        for (d, (&i, &n)) in index.iter().zip(&self.shape).enumerate() {
            assert!(i < n, "index {i} out of bounds for axis {d} of size {n}");
            o = o * n + i;
        }
        o
    }

    /// Elementwise map into a new tensor.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// `self += other` elementwise; shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += s * other` elementwise; shapes must match.
    pub fn add_scaled(&mut self, other: &Tensor, s: f64) {
        assert_eq!(self.shape, other.shape, "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Borrow row `i` of a rank-2 tensor as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        assert_eq!(self.rank(), 2, "row access requires a rank-2 tensor");
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    /// Mutably borrow row `i` of a rank-2 tensor.
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        assert_eq!(self.rank(), 2, "row access requires a rank-2 tensor");
        let c = self.shape[1];
        &mut self.data[i * c..(i + 1) * c]
    }

    /// Multiply every element by `k` in place.
    pub fn scale(&mut self, k: f64) {
        for x in self.data.iter_mut() {
            *x *= k;
        }
    }

    /// Clamp every element into `[-bound, bound]`.
    pub fn clamp_mut(&mut self, bound: f64) {
        assert!(bound > 0.0, "clamp bound must be positive");
        for x in self.data.iter_mut() {
            *x = x.clamp(-bound, bound);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }
}

#[cfg(debug_assertions)]
fn check_finite(op: &str, t: &Tensor) {
    for &x in &t.data {
        assert!(x.is_finite(), "{op} produced non-finite value {x}");
    }
}

#[cfg(not(debug_assertions))]
fn check_finite(_op: &str, _t: &Tensor) {}

/// Elementwise logistic function `1 / (1 + e^-x)`.
pub fn sigmoid(x: &Tensor) -> Tensor {
    let out = x.map(|v| 1.0 / (1.0 + (-v).exp()));
    check_finite("sigmoid", &out);
    out
}

/// Elementwise hyperbolic tangent.
pub fn tanh(x: &Tensor) -> Tensor {
    let out = x.map(f64::tanh);
    check_finite("tanh", &out);
    out
}

/// Elementwise product; shapes must match.
pub fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape, b.shape, "hadamard shape mismatch");
    let out = Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    };
    check_finite("hadamard", &out);
    out
}

/// Elementwise sum; shapes must match.
pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.shape, b.shape, "add shape mismatch");
    let out = Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    };
    check_finite("add", &out);
    out
}

/// Inner product of two equal-length vectors.
pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.rank(), 1, "dot expects vectors");
    assert_eq!(a.shape, b.shape, "dot shape mismatch");
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Matrix-vector product `M v` for `M: r x c`, `v: c`.
pub fn matvec(m: &Tensor, v: &Tensor) -> Tensor {
    assert_eq!(m.rank(), 2, "matvec expects a matrix");
    assert_eq!(v.rank(), 1, "matvec expects a vector");
    let (r, c) = (m.shape[0], m.shape[1]);
    assert_eq!(c, v.len(), "matvec shape mismatch: {:?} vs {:?}", m.shape, v.shape);
    let mut out = Tensor::zeros(&[r]);
    for i in 0..r {
        let row = &m.data[i * c..(i + 1) * c];
        out.data[i] = row.iter().zip(&v.data).map(|(a, b)| a * b).sum();
    }
    check_finite("matvec", &out);
    out
}

/// Transposed matrix-vector product `M^T v` for `M: r x c`, `v: r`.
pub fn matvec_t(m: &Tensor, v: &Tensor) -> Tensor {
    assert_eq!(m.rank(), 2, "matvec_t expects a matrix");
    assert_eq!(v.rank(), 1, "matvec_t expects a vector");
    let (r, c) = (m.shape[0], m.shape[1]);
    assert_eq!(r, v.len(), "matvec_t shape mismatch: {:?} vs {:?}", m.shape, v.shape);
    let mut out = Tensor::zeros(&[c]);
    for i in 0..r {
        let row = &m.data[i * c..(i + 1) * c];
        let vi = v.data[i];
        for (o, a) in out.data.iter_mut().zip(row) {
            *o += vi * a;
        }
    }
    check_finite("matvec_t", &out);
    out
}

/// Outer product `u v^T` as an `len(u) x len(v)` matrix.
pub fn outer(u: &Tensor, v: &Tensor) -> Tensor {
    assert_eq!(u.rank(), 1, "outer expects vectors");
    assert_eq!(v.rank(), 1, "outer expects vectors");
    let (r, c) = (u.len(), v.len());
    let mut out = Tensor::zeros(&[r, c]);
    for i in 0..r {
        for j in 0..c {
            out.data[i * c + j] = u.data[i] * v.data[j];
        }
    }
    check_finite("outer", &out);
    out
}

/// Tensor dot product: contracts a rank-3 tensor `T: l x m x d` with a
/// matrix `A: m x d` over the last two axes,
/// `out[i] = sum_j sum_k T[i,j,k] * A[j,k]`.
///
/// Equivalently, `sum_k` of the matrix-vector products `T[:,:,k] * A[:,k]`;
/// with `d = 1` this reduces to an ordinary matrix-vector product.
pub fn tensor_dot(t: &Tensor, a: &Tensor) -> Tensor {
    assert_eq!(t.rank(), 3, "tensor_dot expects a rank-3 tensor");
    assert_eq!(a.rank(), 2, "tensor_dot expects a matrix");
    let (l, m, d) = (t.shape[0], t.shape[1], t.shape[2]);
    assert_eq!(
        &[m, d],
        a.shape(),
        "tensor_dot shape mismatch: {:?} vs {:?}",
        t.shape,
        a.shape
    );
    let mut out = Tensor::zeros(&[l]);
    for i in 0..l {
        let plane = &t.data[i * m * d..(i + 1) * m * d];
        out.data[i] = plane.iter().zip(&a.data).map(|(x, y)| x * y).sum();
    }
    check_finite("tensor_dot", &out);
    out
}

/// Portable seeded pseudo-random generator (xoshiro256++ with splitmix64
/// seeding, per the reference implementations by Blackman and Vigna).
///
/// The algorithm is part of the project's external contract: checkpoints,
/// fold assignments and negative samples must reproduce bit-for-bit across
/// platforms and implementations, so the generator is fixed here rather than
/// delegated to a library whose stream may change between versions.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a stream index into a master seed, giving independent deterministic
/// substreams (per-fold seeds, per-run subsamples) from one run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut s = seed ^ stream.wrapping_mul(0xA076_1D64_78BD_642F);
    splitmix64(&mut s)
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        let mut sm = seed;
        Rng {
            s: [
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
                splitmix64(&mut sm),
            ],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`; requires `lo < hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        assert!(lo < hi, "invalid range [{lo}, {hi})");
        let v = lo + self.next_f64() * (hi - lo);
        // Guard against the upper bound under floating-point rounding.
        if v >= hi {
            lo
        } else {
            v
        }
    }

    /// Uniform draw in `0..n` without modulo bias (rejection sampling).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is empty");
        // 2^64 mod n; values >= threshold form a range divisible by n.
        let threshold = (u64::MAX % n).wrapping_add(1) % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// Sample `k` distinct indices from `0..n` uniformly without replacement
    /// (partial Fisher-Yates); returned in draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// Tensor with every element drawn uniformly from `[lo, hi)`.
pub fn init_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for x in t.data.iter_mut() {
        *x = rng.uniform(lo, hi);
    }
    t
}

/// Central-difference gradient of a scalar function at `theta`:
/// `g[i] = (f(theta + eps*e_i) - f(theta - eps*e_i)) / (2*eps)`.
///
/// This is the reference oracle the analytic backward passes are checked
/// against; it must stay independent of them.
pub fn finite_diff_grad(mut f: impl FnMut(&Tensor) -> f64, theta: &Tensor, eps: f64) -> Tensor {
    assert!(eps > 0.0, "step size must be positive");
    let mut probe = theta.clone();
    let mut grad = Tensor::zeros(theta.shape());
    for i in 0..theta.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let up = f(&probe);
        probe.data[i] = orig - eps;
        let down = f(&probe);
        probe.data[i] = orig;
        assert!(
            up.is_finite() && down.is_finite(),
            "objective returned a non-finite value during finite differencing"
        );
        grad.data[i] = (up - down) / (2.0 * eps);
    }
    grad
}
