use rand::Rng;

/// Dense row-major `f64` tensor. Most of the code works with rank-2 tensors;
/// vectors are stored as `1 x n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::new(vec![1, 1], vec![value])
    }

    pub fn row(data: Vec<f64>) -> Self {
        Tensor::new(vec![1, data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a rank-2 tensor (1 for vectors).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            n => self.shape[..n - 1].iter().product(),
        }
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(
            self.data.len(),
            1,
            "item() on tensor of shape {:?}",
            self.shape
        );
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "shape mismatch");
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.data {
            *a *= factor;
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|a| *a = value);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::matrix(c, r, out)
    }
}

/// `a (m x k) * b (k x n)`, optionally transposing either operand, added into
/// `out` scaled by `beta`.
pub(crate) fn gemm(
    a: &Tensor,
    transpose_a: bool,
    b: &Tensor,
    transpose_b: bool,
    out: &mut [f64],
    beta: f64,
) -> (usize, usize) {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k, rsa, csa) = if transpose_a {
        (ac, ar, 1isize, ac as isize)
    } else {
        (ar, ac, ac as isize, 1isize)
    };
    let (k2, n, rsb, csb) = if transpose_b {
        (bc, br, 1isize, bc as isize)
    } else {
        (br, bc, bc as isize, 1isize)
    };
    assert_eq!(k, k2, "matmul inner dimensions differ");
    assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return (m, n);
    }
    // SAFETY: the pointers and strides describe the full extent of each
    // buffer, whose lengths were checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    (m, n)
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let mut out = vec![0.0; a.rows() * b.cols()];
    let (m, n) = gemm(a, false, b, false, &mut out, 0.0);
    Tensor::matrix(m, n, out)
}

/// Uniform Glorot initialisation. Fan-in and fan-out are the last two
/// dimensions; a vector has fan-out 1.
pub fn glorot_init<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let bound = glorot_bound(shape);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data)
}

pub fn glorot_bound(shape: &[usize]) -> f64 {
    assert!(
        !shape.is_empty(),
        "glorot_init needs at least one dimension"
    );
    let (fan_in, fan_out) = match shape.len() {
        1 => (shape[0], 1),
        n => (shape[n - 2], shape[n - 1]),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)`, inference is
/// the identity.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, training: bool, rng: &mut R) -> Tensor {
    if !training || rate == 0.0 {
        return x.clone();
    }
    let mask = dropout_mask(x.shape(), rate, rng);
    x.zip_map(&mask, |a, m| a * m)
}

pub fn dropout_mask<R: Rng + ?Sized>(shape: &[usize], rate: f64, rng: &mut R) -> Tensor {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    let keep = 1.0 / (1.0 - rate);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = glorot_init(&[50, 200], &mut rng);
        let b = (6.0f64 / 250.0).sqrt();
        assert!((b - 0.15492).abs() < 1e-5);
        assert!(t.data().iter().all(|x| x.abs() <= b));
        assert!((glorot_bound(&[1, 1]) - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(glorot_bound(&[5]), (6.0f64 / 6.0).sqrt());

        let again = glorot_init(&[50, 200], &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(t.data(), again.data());
    }

    #[test]
    fn dropout_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::filled(&[1000, 100], 1.0);
        assert_eq!(dropout(&x, 0.5, false, &mut rng), x);
        assert_eq!(dropout(&x, 0.0, true, &mut rng), x);
        let y = dropout(&x, 0.5, true, &mut rng);
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn matmul_with_transposes() {
        let a = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]);
        let b = Tensor::matrix(3, 2, vec![1., 0., 0., 1., 1., 1.]);
        assert_eq!(matmul(&a, &b).data(), &[4., 5., 10., 11.]);
        let mut out = vec![0.0; 9];
        // a^T a
        gemm(&a, true, &a, false, &mut out, 0.0);
        assert_eq!(out, vec![17., 22., 27., 22., 29., 36., 27., 36., 45.]);
        assert_eq!(a.transpose().data(), &[1., 4., 2., 5., 3., 6.]);
    }
}
