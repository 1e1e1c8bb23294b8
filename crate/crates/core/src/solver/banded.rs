//! Band LU without pivoting, for the strictly diagonally dominant systems
//! `(I − D P) V = r` of policy evaluation.

#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self { n, lower, upper, data: vec![0.0; n * (lower + upper + 1)] }
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.lower >= i && j <= i + self.upper);
        i * (self.lower + self.upper + 1) + (j + self.lower - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.index(i, j);
        self.data[idx] += v;
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|a| *a = 0.0);
    }

    /// Factors in place into unit-lower `L` and upper `U`.
    pub fn factor(&mut self) -> bool {
        let n = self.n;
        for k in 0..n {
            let pivot = self.data[self.index(k, k)];
            if !(pivot.abs() > 0.0) || !pivot.is_finite() {
                return false;
            }
            let rows = (k + self.lower).min(n - 1);
            let cols = (k + self.upper).min(n - 1);
            for i in k + 1..=rows {
                let ik = self.index(i, k);
                if self.data[ik] == 0.0 {
                    continue;
                }
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                for j in k + 1..=cols {
                    let kj = self.data[self.index(k, j)];
                    if kj != 0.0 {
                        let ij = self.index(i, j);
                        self.data[ij] -= l * kj;
                    }
                }
            }
        }
        true
    }

    /// Solves with a factored matrix, overwriting `b`.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let start = i.saturating_sub(self.lower);
            let mut acc = b[i];
            for j in start..i {
                acc -= self.data[self.index(i, j)] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let end = (i + self.upper).min(n - 1);
            let mut acc = b[i];
            for j in i + 1..=end {
                acc -= self.data[self.index(i, j)] * b[j];
            }
            b[i] = acc / self.data[self.index(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_tridiagonal_system() {
        let n = 6;
        let mut a = BandMatrix::zeros(n, 1, 1);
        for i in 0..n {
            a.add(i, i, 4.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|i| {
                4.0 * x[i] - if i > 0 { x[i - 1] } else { 0.0 } - if i + 1 < n { x[i + 1] } else { 0.0 }
            })
            .collect();
        assert!(a.factor());
        a.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-12);
        }
    }
}
