//! Dense linear algebra, stable reductions, and seedable randomness.
//!
//! Everything here is plain `f64` with explicit, fixed accumulation order so
//! results are bit-reproducible run to run. The random generator is
//! SplitMix64 (Vigna's finalizer over a Weyl sequence), documented below so
//! streams can be reproduced outside this crate.

use crate::error::{Error, Result};

/// A dense real vector. Entries are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    /// Builds a vector, rejecting NaN/Inf entries.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!(
                "non-finite value {} at index {i}",
                data[i]
            )));
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: vec![0.0; dim],
        }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize) -> f64) -> Self {
        Self {
            data: (0..dim).map(&mut f).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, other: &Vector, c: f64) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.data {
            *a *= c;
        }
    }

    pub fn scaled(&self, c: f64) -> Vector {
        Vector {
            data: self.data.iter().map(|a| a * c).collect(),
        }
    }

    pub fn concat(a: &Vector, b: &Vector) -> Vector {
        let mut data = Vec::with_capacity(a.dim() + b.dim());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Vector { data }
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// A dense row-major matrix. Entries are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!(
                "non-finite value {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Row `r` as an owned vector.
    pub fn row_vector(&self, r: usize) -> Vector {
        Vector {
            data: self.row(r).to_vec(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `self += c * (col ⊗ row)`, the rank-one update used by backprop.
    pub fn add_outer_scaled(&mut self, col: &[f64], row: &[f64], c: f64) {
        debug_assert_eq!(self.rows, col.len());
        debug_assert_eq!(self.cols, row.len());
        for (r, &cv) in col.iter().enumerate() {
            let dst = self.row_mut(r);
            for (d, &rv) in dst.iter_mut().zip(row) {
                *d += c * cv * rv;
            }
        }
    }

    /// `self += c * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Matrix, c: f64) {
        debug_assert_eq!(self.rows, other.rows);
        debug_assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }
}

fn check_same_dim(a: &Vector, b: &Vector, op: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch(format!(
            "{op}: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Inner product Σ aᵢbᵢ, accumulated left to right.
pub fn dot(a: &Vector, b: &Vector) -> Result<f64> {
    check_same_dim(a, b, "dot")?;
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    Ok(acc)
}

/// Euclidean norm.
pub fn l2_norm(a: &Vector) -> f64 {
    let mut acc = 0.0;
    for x in a.iter() {
        acc += x * x;
    }
    acc.sqrt()
}

/// Cosine similarity, clamped into [-1, 1].
///
/// Zero-norm inputs are an error rather than a silent zero: a collapsed
/// embedding should surface loudly.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    check_same_dim(a, b, "cosine")?;
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate(
            "cosine of a zero-norm vector is undefined".into(),
        ));
    }
    Ok((dot(a, b)? / (na * nb)).clamp(-1.0, 1.0))
}

/// log Σ e^{xᵢ}, computed with the max-shift so large logits never overflow.
pub fn log_sum_exp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("log_sum_exp of no terms".into()));
    }
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    for &x in xs {
        acc += (x - m).exp();
    }
    Ok(m + acc.ln())
}

/// Matrix-vector product M·x with a plain double loop (fixed summation order).
pub fn matvec(m: &Matrix, x: &Vector) -> Result<Vector> {
    if m.cols() != x.dim() {
        return Err(Error::DimMismatch(format!(
            "matvec: matrix has {} cols, vector has dim {}",
            m.cols(),
            x.dim()
        )));
    }
    let mut out = Vector::zeros(m.rows());
    for r in 0..m.rows() {
        let mut acc = 0.0;
        for (w, v) in m.row(r).iter().zip(x.iter()) {
            acc += w * v;
        }
        out[r] = acc;
    }
    Ok(out)
}

/// Mᵀ·x, used to push cotangents back through a linear layer.
pub fn matvec_transpose(m: &Matrix, x: &Vector) -> Result<Vector> {
    if m.rows() != x.dim() {
        return Err(Error::DimMismatch(format!(
            "matvec_transpose: matrix has {} rows, vector has dim {}",
            m.rows(),
            x.dim()
        )));
    }
    let mut out = Vector::zeros(m.cols());
    for r in 0..m.rows() {
        let xv = x[r];
        for (o, w) in out.as_mut_slice().iter_mut().zip(m.row(r)) {
            *o += w * xv;
        }
    }
    Ok(out)
}

/// Seedable, platform-independent pseudo-random generator.
///
/// The core is SplitMix64: the state advances by the Weyl constant
/// `0x9E3779B97F4A7C15` and each output is the mix
/// `z ^= z >> 30, z *= 0xBF58476D1CE4E5B9; z ^= z >> 27, z *= 0x94D049BB133111EB; z ^= z >> 31`
/// (all wrapping, 64-bit). Uniform doubles take the top 53 bits, so the
/// integer and uniform streams are bit-identical on every platform. Gaussian
/// draws apply the Box-Muller transform to two uniforms (pairs are generated
/// together; the second value is cached), which is deterministic given the
/// stream but inherits the platform libm for `ln`/`cos`/`sin`.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    gaussian_spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            gaussian_spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1): top 53 bits over 2⁵³.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller on (0,1] x [0,1) uniforms.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.gaussian_spare.take() {
            return z;
        }
        // (v+1)/2^53 lies in (0, 1], keeping ln away from zero.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.gaussian_spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Unbiased integer in [0, n) by rejection on the top bits.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is undefined");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Uniform over [0, n) \ {excluded}: one draw over n-1 values, then shift.
    pub fn choice_excluding(&mut self, n: usize, excluded: usize) -> Result<usize> {
        if n < 2 {
            return Err(Error::Config(format!(
                "cannot exclude a value from a range of size {n}"
            )));
        }
        if excluded >= n {
            return Err(Error::IndexOutOfRange(format!(
                "excluded index {excluded} not in [0, {n})"
            )));
        }
        let r = self.below((n - 1) as u64) as usize;
        Ok(if r < excluded { r } else { r + 1 })
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below((i + 1) as u64) as usize;
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn dot_orthogonal_is_zero() {
        assert_eq!(dot(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn dot_hand_case() {
        assert_eq!(dot(&v(&[2.0, 3.0]), &v(&[2.0, 3.0])).unwrap(), 13.0);
    }

    #[test]
    fn dot_zero_vector() {
        assert_eq!(dot(&v(&[0.0, 0.0, 0.0]), &v(&[4.0, -5.0, 6.0])).unwrap(), 0.0);
    }

    #[test]
    fn dot_dim_mismatch_rejected() {
        assert!(matches!(
            dot(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn l2_norm_cases() {
        assert_eq!(l2_norm(&v(&[3.0, 4.0])), 5.0);
        assert_eq!(l2_norm(&v(&[0.0, 0.0, 0.0])), 0.0);
        assert_eq!(l2_norm(&v(&[1.0])), 1.0);
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        let c = cosine(&v(&[3.0, 4.0]), &v(&[4.0, 3.0])).unwrap();
        assert!((c - 0.96).abs() < 1e-15);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[-1.0, 0.0])).unwrap(), -1.0);
    }

    #[test]
    fn cosine_zero_norm_rejected() {
        assert!(matches!(
            cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn log_sum_exp_cases() {
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - 2.0f64.ln()).abs() < 1e-15);
        // Shift invariance keeps huge logits finite.
        let big = log_sum_exp(&[1000.0, 1000.0]).unwrap();
        assert!((big - (1000.0 + 2.0f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[5.0]).unwrap(), 5.0);
        assert!(matches!(log_sum_exp(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn matvec_identity() {
        let out = matvec(&Matrix::identity(2), &v(&[7.0, 9.0])).unwrap();
        assert_eq!(out.as_slice(), &[7.0, 9.0]);
    }

    #[test]
    fn matvec_dim_mismatch_rejected() {
        assert!(matvec(&Matrix::zeros(2, 3), &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn matvec_matches_double_loop_oracle_bitwise() {
        let mut rng = Rng::new(99);
        for _ in 0..20 {
            let m = Matrix::from_fn(8, 8, |_, _| rng.uniform(-1.0, 1.0));
            let x = Vector::from_fn(8, |_| rng.uniform(-1.0, 1.0));
            let got = matvec(&m, &x).unwrap();
            for r in 0..8 {
                let mut acc = 0.0;
                for c in 0..8 {
                    acc += m.get(r, c) * x[c];
                }
                assert_eq!(got[r].to_bits(), acc.to_bits());
            }
        }
    }

    #[test]
    fn matvec_transpose_matches_oracle() {
        let m = Matrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        let x = v(&[1.0, -1.0, 2.0]);
        let got = matvec_transpose(&m, &x).unwrap();
        // columns dotted with x
        assert_eq!(got.as_slice(), &[0.0 - 2.0 + 8.0, 1.0 - 3.0 + 10.0]);
    }

    // Frozen reference stream computed with an independent SplitMix64
    // implementation (state += 0x9E3779B97F4A7C15; murmur-style finalizer).
    #[test]
    fn rng_matches_reference_vectors() {
        let mut r = Rng::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(r.next_u64(), 0x06C4_5D18_8009_454F);
        assert_eq!(r.next_u64(), 0xF88B_B8A8_724C_81EC);
        let mut r = Rng::new(42);
        assert_eq!(r.next_u64(), 0xBDD7_3226_2FEB_6E95);
        assert_eq!(r.next_u64(), 0x28EF_E333_B266_F103);
    }

    #[test]
    fn rng_equal_seeds_equal_streams() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..1_000_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        // Gaussian caching is part of the stream contract too.
        let mut a = Rng::new(8);
        let mut b = Rng::new(8);
        for _ in 0..1000 {
            assert_eq!(a.gaussian().to_bits(), b.gaussian().to_bits());
        }
    }

    #[test]
    fn rng_choice_forced_outcome() {
        let mut r = Rng::new(3);
        for _ in 0..100 {
            assert_eq!(r.choice_excluding(2, 0).unwrap(), 1);
        }
    }

    #[test]
    fn rng_choice_invalid_inputs() {
        let mut r = Rng::new(3);
        assert!(r.choice_excluding(1, 0).is_err());
        assert!(r.choice_excluding(4, 4).is_err());
    }

    #[test]
    fn rng_choice_frequencies_near_uniform() {
        let mut r = Rng::new(11);
        let mut counts = [0usize; 5];
        let n = 100_000;
        for _ in 0..n {
            counts[r.choice_excluding(5, 2).unwrap()] += 1;
        }
        assert_eq!(counts[2], 0);
        for &k in &[0usize, 1, 3, 4] {
            let freq = counts[k] as f64 / n as f64;
            assert!(
                (freq - 0.25).abs() < 0.02,
                "class {k} frequency {freq} too far from 0.25"
            );
        }
    }

    #[test]
    fn rng_gaussian_moments() {
        let mut r = Rng::new(5);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| r.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn rng_uniform_bounds() {
        let mut r = Rng::new(17);
        for _ in 0..10_000 {
            let x = r.uniform(-0.25, 0.75);
            assert!((-0.25..0.75).contains(&x));
        }
    }

    mod properties {
        use super::v;
        use crate::numerics::{cosine, l2_norm, log_sum_exp};
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cosine_symmetric_and_bounded(
                (a, b) in (2usize..8).prop_flat_map(|dim| (
                    proptest::collection::vec(-100.0f64..100.0, dim),
                    proptest::collection::vec(-100.0f64..100.0, dim),
                )),
            ) {
                let (va, vb) = (v(&a), v(&b));
                prop_assume!(l2_norm(&va) > 1e-9 && l2_norm(&vb) > 1e-9);
                let c1 = cosine(&va, &vb).unwrap();
                let c2 = cosine(&vb, &va).unwrap();
                prop_assert!((-1.0..=1.0).contains(&c1));
                prop_assert!((c1 - c2).abs() < 1e-14);
            }

            #[test]
            fn cosine_positive_scale_invariant(
                a in proptest::collection::vec(-10.0f64..10.0, 3),
                b in proptest::collection::vec(-10.0f64..10.0, 3),
                c in 1e-3f64..1e3,
            ) {
                let (va, vb) = (v(&a), v(&b));
                prop_assume!(l2_norm(&va) > 1e-6 && l2_norm(&vb) > 1e-6);
                let base = cosine(&va, &vb).unwrap();
                let scaled = cosine(&va.scaled(c), &vb).unwrap();
                prop_assert!((base - scaled).abs() < 1e-12);
            }

            #[test]
            fn log_sum_exp_shift_invariant(
                xs in proptest::collection::vec(-50.0f64..50.0, 1..10),
                c in -100.0f64..100.0,
            ) {
                let base = log_sum_exp(&xs).unwrap();
                let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
                let got = log_sum_exp(&shifted).unwrap();
                prop_assert!((got - (base + c)).abs() < 1e-12);
            }
        }
    }
}
