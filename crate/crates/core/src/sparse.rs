//! Triplet accumulation for stamped systems and compressed-sparse-column
//! storage for the linear solver.

/// One stamped linear system: matrix triplets plus right-hand side.
/// Duplicate (row, col) entries are summed on assembly.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn new(n: usize) -> SparseSystem {
        SparseSystem {
            n,
            triplets: Vec::new(),
            rhs: vec![0.0; n],
        }
    }

    pub fn with_capacity(n: usize, nnz: usize) -> SparseSystem {
        SparseSystem {
            n,
            triplets: Vec::with_capacity(nnz),
            rhs: vec![0.0; n],
        }
    }

    /// Accumulate one matrix entry.
    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.triplets.push((row, col, value));
    }

    /// Compress to CSC, summing duplicates.
    pub fn to_csc(&self) -> CscMatrix {
        CscMatrix::from_triplets(self.n, &self.triplets)
    }
}

/// Square sparse matrix in compressed-sparse-column form. Row indices are
/// strictly ascending within each column; duplicates have been summed.
#[derive(Debug, Clone)]
pub struct CscMatrix {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_ind: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> CscMatrix {
        // counting sort by column, then sort each column by row and merge
        let mut counts = vec![0usize; n + 1];
        for &(_, c, _) in triplets {
            counts[c + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut entries: Vec<(usize, f64)> = vec![(0, 0.0); triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            entries[next[c]] = (r, v);
            next[c] += 1;
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_ind = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        for j in 0..n {
            let seg = &mut entries[counts[j]..counts[j + 1]];
            seg.sort_unstable_by_key(|e| e.0);
            let mut i = 0;
            while i < seg.len() {
                let row = seg[i].0;
                let mut v = seg[i].1;
                i += 1;
                while i < seg.len() && seg[i].0 == row {
                    v += seg[i].1;
                    i += 1;
                }
                row_ind.push(row);
                values.push(v);
            }
            col_ptr.push(row_ind.len());
        }
        CscMatrix {
            n,
            col_ptr,
            row_ind,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.row_ind.len()
    }

    /// y = A·x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_ind[p]] += self.values[p] * xj;
            }
        }
    }

    /// Entry lookup (binary search within the column); zero if not stored.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let lo = self.col_ptr[col];
        let hi = self.col_ptr[col + 1];
        match self.row_ind[lo..hi].binary_search(&row) {
            Ok(p) => self.values[lo + p],
            Err(_) => 0.0,
        }
    }

    /// Maximum column sum of absolute values.
    pub fn norm_one(&self) -> f64 {
        let mut best: f64 = 0.0;
        for j in 0..self.n {
            let s: f64 = self.values[self.col_ptr[j]..self.col_ptr[j + 1]]
                .iter()
                .map(|v| v.abs())
                .sum();
            best = best.max(s);
        }
        best
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Dense copy, row-major. Test/diagnostic helper for small systems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                d[self.row_ind[p]][j] = self.values[p];
            }
        }
        d
    }
}
