//! Raw loops over row-major buffers shared by forward and backward passes.

/// `(outer, dim, inner)` decomposition of `shape` around `axis`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// `c[m,p] += a[m,k] · b[k,p]`
pub(crate) fn mm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * p..(i + 1) * p];
        for (kk, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b[kk * p..(kk + 1) * p];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += aik * bj;
            }
        }
    }
}

/// `da[m,k] += g[m,p] · b[k,p]ᵀ`
pub(crate) fn mm_nt(g: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let g_row = &g[i * p..(i + 1) * p];
        let da_row = &mut da[i * k..(i + 1) * k];
        for (kk, d) in da_row.iter_mut().enumerate() {
            let b_row = &b[kk * p..(kk + 1) * p];
            let mut acc = 0.0;
            for (gj, bj) in g_row.iter().zip(b_row) {
                acc += gj * bj;
            }
            *d += acc;
        }
    }
}

/// `db[k,p] += a[m,k]ᵀ · g[m,p]`
pub(crate) fn mm_tn(a: &[f64], g: &[f64], db: &mut [f64], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let g_row = &g[i * p..(i + 1) * p];
        for (kk, &aik) in a_row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let db_row = &mut db[kk * p..(kk + 1) * p];
            for (d, &gj) in db_row.iter_mut().zip(g_row) {
                *d += aik * gj;
            }
        }
    }
}

/// Calls `f(input_flat, output_flat)` for every element of a tensor of
/// `shape` reduced over the (sorted, unique) `axes`.
pub(crate) fn for_each_reduced(shape: &[usize], axes: &[usize], mut f: impl FnMut(usize, usize)) {
    let n: usize = shape.iter().product();
    if n == 0 {
        return;
    }
    let nd = shape.len();
    // output strides for kept axes, 0 for reduced ones
    let mut out_strides = vec![0usize; nd];
    let mut stride = 1;
    for ax in (0..nd).rev() {
        if !axes.contains(&ax) {
            out_strides[ax] = stride;
            stride *= shape[ax];
        }
    }
    let mut idx = vec![0usize; nd];
    let mut out = 0usize;
    for flat in 0..n {
        f(flat, out);
        for ax in (0..nd).rev() {
            idx[ax] += 1;
            out += out_strides[ax];
            if idx[ax] < shape[ax] {
                break;
            }
            out -= out_strides[ax] * shape[ax];
            idx[ax] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_map_over_middle_axis() {
        let mut pairs = Vec::new();
        for_each_reduced(&[2, 3, 2], &[1], |i, o| pairs.push((i, o)));
        let outs: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        assert_eq!(outs, vec![0, 1, 0, 1, 0, 1, 2, 3, 2, 3, 2, 3]);
    }

    #[test]
    fn matmul_loops_agree_with_transposes() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.5, -1.0, 2.0, 0.0, 1.0]; // 3x2
        let mut c = [0.0; 4];
        mm_nn(&a, &b, &mut c, 2, 3, 2);
        assert_eq!(c, [-1.0, 7.5, -1.0, 18.0]);
        let g = [1.0, 1.0, 1.0, 1.0];
        let mut da = [0.0; 6];
        mm_nt(&g, &b, &mut da, 2, 3, 2);
        assert_eq!(da, [1.5, 1.0, 1.0, 1.5, 1.0, 1.0]);
        let mut db = [0.0; 6];
        mm_tn(&a, &g, &mut db, 2, 3, 2);
        assert_eq!(db, [5.0, 5.0, 7.0, 7.0, 9.0, 9.0]);
    }
}
