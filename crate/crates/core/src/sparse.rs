//! Compressed sparse row matrices.

use std::io::Write;

use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix from per-row `(column, value)` lists; columns
    /// within a row must be strictly increasing.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> CsrMatrix {
        let n = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                assert!(c < n, "column {c} out of range");
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> CsrMatrix {
        CsrMatrix::from_rows((0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`, parallel over rows.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        });
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                rows[j].push((i, v));
            }
        }
        CsrMatrix::from_rows(rows)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |A_ij − A_ji|` over the union of both sparsity patterns.
    pub fn max_asymmetry(&self) -> f64 {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                self.row(i)
                    .map(|(j, v)| (v - self.get(j, i)).abs())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Column sums and column 1-norms.
    pub fn column_sums(&self) -> (Vec<f64>, Vec<f64>) {
        let mut sums = vec![0.0; self.n];
        let mut abs = vec![0.0; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                sums[j] += v;
                abs[j] += v.abs();
            }
        }
        (sums, abs)
    }

    /// `αA + βB` for matrices of equal dimension.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let rows = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                let mut a = self.row(i).peekable();
                let mut b = other.row(i).peekable();
                loop {
                    match (a.peek().copied(), b.peek().copied()) {
                        (Some((ca, va)), Some((cb, vb))) if ca == cb => {
                            out.push((ca, alpha * va + beta * vb));
                            a.next();
                            b.next();
                        }
                        (Some((ca, va)), Some((cb, _))) if ca < cb => {
                            out.push((ca, alpha * va));
                            a.next();
                        }
                        (_, Some((cb, vb))) => {
                            out.push((cb, beta * vb));
                            b.next();
                        }
                        (Some((ca, va)), None) => {
                            out.push((ca, alpha * va));
                            a.next();
                        }
                        (None, None) => break,
                    }
                }
                out
            })
            .collect();
        CsrMatrix::from_rows(rows)
    }

    /// One `row col value` line per stored entry, zero-based.
    pub fn write_coordinate(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(&mut out);
        writeln!(w, "# {} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v:e}")?;
            }
        }
        w.flush()
    }
}
