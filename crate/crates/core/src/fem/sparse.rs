use crate::error::{Error, Result};

/// Square compressed-sparse-row matrix with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<_> = triplets.to_vec();
        if let Some(&(i, j, _)) = sorted.iter().find(|(i, j, _)| *i >= n || *j >= n) {
            return Err(Error::shape(format!("indices below {n}"), format!("({i}, {j})")));
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::shape(format!("{n} columns"), row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, &t)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// Principal submatrix on `keep` (sorted, unique), renumbered in order.
    pub fn submatrix(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in keep {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n: keep.len(),
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Precomputed scatter map from element matrices into a CSR value array.
///
/// Built once per mesh; every subsequent assembly only writes values.
#[derive(Clone, Debug)]
pub struct AssemblyPattern {
    template: CsrMatrix,
    /// Per element, `k * k` indices into `values`, row-major.
    slots: Vec<usize>,
    k: usize,
}

impl AssemblyPattern {
    pub fn new<'a, I>(n: usize, k: usize, element_dofs: I) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let elements: Vec<&[usize]> = element_dofs.into_iter().collect();
        let mut triplets = Vec::with_capacity(elements.len() * k * k);
        for dofs in &elements {
            assert_eq!(dofs.len(), k);
            for &i in dofs.iter() {
                for &j in dofs.iter() {
                    triplets.push((i, j, 0.0));
                }
            }
        }
        let template = CsrMatrix::from_triplets(n, &triplets).expect("element dofs in range");
        let mut slots = Vec::with_capacity(elements.len() * k * k);
        for dofs in &elements {
            for &i in dofs.iter() {
                let start = template.row_ptr[i];
                let cols = &template.col_idx[start..template.row_ptr[i + 1]];
                for &j in dofs.iter() {
                    slots.push(start + cols.binary_search(&j).unwrap());
                }
            }
        }
        Self { template, slots, k }
    }

    pub fn n_elements(&self) -> usize {
        self.slots.len() / (self.k * self.k)
    }

    /// Sums `fill(e, buf)` over elements; `buf` holds the `k × k` element
    /// matrix row-major and starts zeroed.
    pub fn assemble(&self, mut fill: impl FnMut(usize, &mut [f64])) -> CsrMatrix {
        let kk = self.k * self.k;
        let mut m = self.template.clone();
        let mut buf = vec![0.0; kk];
        for (e, slots) in self.slots.chunks_exact(kk).enumerate() {
            buf.iter_mut().for_each(|v| *v = 0.0);
            fill(e, &mut buf);
            for (&s, &v) in slots.iter().zip(&buf) {
                m.values[s] += v;
            }
        }
        m
    }

    /// `Σ_e factor_e · ke`.
    pub fn assemble_scaled(&self, factors: &[f64], ke: &[f64]) -> CsrMatrix {
        assert_eq!(ke.len(), self.k * self.k);
        self.assemble(|e, buf| {
            let f = factors[e];
            for (b, &v) in buf.iter_mut().zip(ke) {
                *b = f * v;
            }
        })
    }
}
