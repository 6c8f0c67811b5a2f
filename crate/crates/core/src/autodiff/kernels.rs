//! Dense matrix kernels shared by the tape and the inference paths.
//!
//! All kernels accumulate (`out += ...`) so the backward pass can reuse them
//! for gradient accumulation; forward callers pass a zeroed buffer. Loop
//! order keeps the innermost accesses contiguous.

/// out[m,n] += a[m,k] * b[k,n]
pub fn matmul_nn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &apk) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += apk * bv;
            }
        }
    }
}

/// out[m,n] += a[m,k] * b[n,k]^T  (dot products of rows)
pub fn matmul_nt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// out[k,n] += a[m,k]^T * b[m,n]
pub fn matmul_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn nn_matches_hand_product() {
        // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut out = vec![0.0; 4];
        matmul_nn_acc(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_variants_agree_with_nn() {
        let a = [1.0, -2.0, 0.5, 3.0, 4.0, -1.0]; // 2x3
        let b = [2.0, 1.0, 0.0, -1.0, 1.5, 2.5]; // 3x2
        let mut nn = vec![0.0; 4];
        matmul_nn_acc(&a, &b, 2, 3, 2, &mut nn);

        // b^T stored as 2x3, multiply with nt
        let bt = [2.0, 0.0, 1.5, 1.0, -1.0, 2.5];
        let mut nt = vec![0.0; 4];
        matmul_nt_acc(&a, &bt, 2, 3, 2, &mut nt);
        assert_eq!(nn, nt);

        // a^T stored as 2x3 -> use tn on original a
        let mut tn = vec![0.0; 9];
        matmul_tn_acc(&a, &a, 2, 3, 3, &mut tn); // a^T a, 3x3
        let at = [1.0, 3.0, -2.0, 4.0, 0.5, -1.0]; // 3x2
        let mut nn2 = vec![0.0; 9];
        matmul_nn_acc(&at, &a, 3, 2, 3, &mut nn2);
        assert_eq!(tn, nn2);
    }
}
