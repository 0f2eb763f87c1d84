//! Dense tensor helpers: row-major arrays over `M` parameter axes followed
//! by a contiguous block of `inner` values (a spatial vector per point).

/// Row-major `rows × cols` matrix.
#[derive(Clone, Debug)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Applies `mats[d]` along axis `d` for every axis:
/// `out[q_1..q_M, :] = Σ_j Π_d mats[d][q_d, j_d] · data[j_1..j_M, :]`.
///
/// `mats[d].cols` must equal `shape[d]`; the result has shape `mats[d].rows`.
pub fn contract(data: &[f64], shape: &[usize], inner: usize, mats: &[&Matrix]) -> Vec<f64> {
    debug_assert_eq!(shape.len(), mats.len());
    debug_assert_eq!(data.len(), shape.iter().product::<usize>() * inner);
    let mut cur_shape = shape.to_vec();
    let mut cur = data.to_vec();
    for (d, mat) in mats.iter().enumerate() {
        assert_eq!(
            mat.cols, cur_shape[d],
            "contraction size mismatch on axis {d}"
        );
        let outer: usize = cur_shape[..d].iter().product();
        let block: usize = cur_shape[d + 1..].iter().product::<usize>() * inner;
        let n = cur_shape[d];
        let q = mat.rows;
        let mut next = vec![0.0; outer * q * block];
        for a in 0..outer {
            let src = &cur[a * n * block..(a + 1) * n * block];
            let dst = &mut next[a * q * block..(a + 1) * q * block];
            for r in 0..q {
                let out = &mut dst[r * block..(r + 1) * block];
                for (j, &w) in mat.row(r).iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let col = &src[j * block..(j + 1) * block];
                    for (o, v) in out.iter_mut().zip(col) {
                        *o += w * v;
                    }
                }
            }
        }
        cur = next;
        cur_shape[d] = q;
    }
    cur
}

/// Odometer over a tensor shape, last axis fastest (row-major order).
pub struct TensorIter {
    shape: Vec<usize>,
    cur: Vec<usize>,
    done: bool,
}

impl TensorIter {
    pub fn new(shape: &[usize]) -> Self {
        TensorIter {
            shape: shape.to_vec(),
            cur: vec![0; shape.len()],
            done: shape.contains(&0),
        }
    }
}

impl Iterator for TensorIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let item = self.cur.clone();
        let mut d = self.shape.len();
        loop {
            if d == 0 {
                self.done = true;
                break;
            }
            d -= 1;
            self.cur[d] += 1;
            if self.cur[d] < self.shape[d] {
                break;
            }
            self.cur[d] = 0;
        }
        Some(item)
    }
}
