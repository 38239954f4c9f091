/// Dense LU factorization with partial pivoting, `P A = L U`, row-major.
#[derive(Debug, Clone, Default)]
pub(crate) struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// Factors the `n × n` row-major matrix `a`. Returns `None` when a pivot
    /// falls below `tol` times the largest entry.
    pub fn factor(n: usize, mut a: Vec<f64>, tol: f64) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (piv, best) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if best <= tol * scale {
                return None;
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                perm.swap(col, piv);
            }
            let inv = 1.0 / a[col * n + col];
            let (top, rest) = a.split_at_mut((col + 1) * n);
            let pivot_row = &top[col * n..];
            for row in rest.chunks_exact_mut(n) {
                let f = row[col] * inv;
                if f == 0.0 {
                    continue;
                }
                row[col] = f;
                for j in col + 1..n {
                    row[j] -= f * pivot_row[j];
                }
            }
        }
        Some(DenseLu { n, lu: a, perm })
    }

    /// Columns that elimination finds dependent on earlier ones, paired with
    /// the rows left without a pivot. Both lists have the same length.
    pub fn deficiency(n: usize, mut a: Vec<f64>, tol: f64) -> (Vec<usize>, Vec<usize>) {
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut used = vec![false; n];
        let mut dependent = Vec::new();
        for col in 0..n {
            let (piv, best) = (0..n)
                .filter(|&r| !used[r])
                .map(|r| (r, a[r * n + col].abs()))
                .fold((usize::MAX, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            if best <= tol * scale {
                dependent.push(col);
                continue;
            }
            used[piv] = true;
            let inv = 1.0 / a[piv * n + col];
            for r in 0..n {
                if used[r] {
                    continue;
                }
                let f = a[r * n + col] * inv;
                if f != 0.0 {
                    for j in col..n {
                        a[r * n + j] -= f * a[piv * n + j];
                    }
                }
            }
        }
        let free = (0..n).filter(|&r| !used[r]).collect();
        (dependent, free)
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(l, v)| l * v).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n..(i + 1) * n];
            let s: f64 = row[i + 1..].iter().zip(&x[i + 1..]).map(|(u, v)| u * v).sum();
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Uᵀ z = b
        let mut z = b.to_vec();
        for i in 0..n {
            z[i] /= self.lu[i * n + i];
            let zi = z[i];
            if zi != 0.0 {
                for j in i + 1..n {
                    z[j] -= self.lu[i * n + j] * zi;
                }
            }
        }
        // Lᵀ w = z
        for i in (0..n).rev() {
            let wi = z[i];
            if wi != 0.0 {
                for j in 0..i {
                    z[j] -= self.lu[i * n + j] * wi;
                }
            }
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }
}
