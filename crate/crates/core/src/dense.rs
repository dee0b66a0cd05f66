//! Small dense complex kernels shared by the transforms.

use num_complex::Complex64;
use rayon::prelude::*;

/// `out = a · b` with `a` of shape `rows × inner` and `b` of shape `inner × cols`,
/// both row-major. Each output entry is summed in a fixed order.
pub(crate) fn mat_mul(a: &[Complex64], rows: usize, inner: usize, b: &[Complex64], cols: usize) -> Vec<Complex64> {
    debug_assert_eq!(a.len(), rows * inner);
    debug_assert_eq!(b.len(), inner * cols);
    let mut out = vec![Complex64::new(0.0, 0.0); rows * cols];
    let kernel = |(r, row): (usize, &mut [Complex64])| {
        let a_row = &a[r * inner..(r + 1) * inner];
        for (i, &coef) in a_row.iter().enumerate() {
            if coef.re == 0.0 && coef.im == 0.0 {
                continue;
            }
            let b_row = &b[i * cols..(i + 1) * cols];
            for (o, &v) in row.iter_mut().zip(b_row) {
                *o += coef * v;
            }
        }
    };
    if rows * inner * cols > 1 << 16 {
        out.par_chunks_mut(cols.max(1)).enumerate().for_each(kernel);
    } else {
        out.chunks_mut(cols.max(1)).enumerate().for_each(kernel);
    }
    out
}

pub(crate) fn zeros(len: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); len]
}
