//! Small dense tensors indexed by chart coordinates.

/// Dense `n × n × n` array, row-major in `(i, j, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    t.data[(i * n + j) * n + k] = f(i, j, k);
                }
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.n + j) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.n;
        self.data[(i * n + j) * n + k] = v;
    }

    /// Set all six index permutations.
    pub fn set_symmetric(&mut self, i: usize, j: usize, k: usize, v: f64) {
        for (a, b, c) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
            self.set(a, b, c, v);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `t_{ij k} v^k`.
    pub fn contract_last(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let n = self.n;
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| self.get(i, j, k) * v[k]).sum())
                    .collect()
            })
            .collect()
    }
}
