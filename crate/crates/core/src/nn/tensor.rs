use crate::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::contract(format!("tensor shape {shape:?} has a zero dimension")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::contract(format!(
                "tensor shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// Builds a `[rows.len(), width]` matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::contract("from_rows needs non-empty rows of equal width"));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), width], data)
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

    /// Number of rows when viewed as a matrix (first dimension).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Row width when viewed as a matrix (product of trailing dimensions).
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn ensure_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::contract(format!(
                "{what}: shape {:?} does not match {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// `self · other` for `[m, k] · [k, n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::contract(format!(
                "matmul: inner dimensions differ ({m}x{k} · {k2}x{n})"
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Tensor::new(vec![m, n], out)
    }

    /// `selfᵀ · other` for `[k, m]ᵀ · [k, n]`.
    pub fn t_matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (k, m) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::contract(format!(
                "t_matmul: row counts differ ({k} vs {k2})"
            )));
        }
        let mut out = vec![0.0; m * n];
        for r in 0..k {
            let a = &self.data[r * m..(r + 1) * m];
            let b = &other.data[r * n..(r + 1) * n];
            for (i, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &bv) in dst.iter_mut().zip(b) {
                    *d += av * bv;
                }
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// `self · otherᵀ` for `[m, k] · [n, k]ᵀ`.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::contract(format!(
                "matmul_t: row widths differ ({k} vs {k2})"
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        Tensor::new(vec![m, n], out)
    }
}

/// Accumulates `a[m,k] · b[k,n]` into `out[m,n]`.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let dst = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let src = &b[p * n..(p + 1) * n];
            for (d, &bv) in dst.iter_mut().zip(src) {
                *d += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::new(vec![3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.data(), &[58.0, 64.0, 139.0, 154.0]);

        let at = Tensor::new(vec![3, 2], vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]).unwrap();
        assert_eq!(at.t_matmul(&b).unwrap(), ab);

        let bt = Tensor::new(vec![2, 3], vec![7.0, 9.0, 11.0, 8.0, 10.0, 12.0]).unwrap();
        assert_eq!(a.matmul_t(&bt).unwrap(), ab);
        assert!(a.matmul(&a).is_err());
    }
}
