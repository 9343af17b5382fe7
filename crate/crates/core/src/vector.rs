//! Dense vector kernels. Accumulation is done in f64 so orderings are
//! reproducible across platforms.

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[inline]
pub fn l2_sq(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

pub fn is_zero(a: &[f32]) -> bool {
    a.iter().all(|&x| x == 0.0)
}

/// Index of the row in `rows` (row-major, `dim` wide) closest to `v` by L2.
/// Ties go to the lower index.
pub fn nearest_l2(rows: &[f32], dim: usize, v: &[f32]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, row) in rows.chunks_exact(dim).enumerate() {
        let d = l2_sq(row, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}
