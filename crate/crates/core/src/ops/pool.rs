use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Per-feature maximum over all rows, with the winning row (lowest on ties).
pub fn global_maxpool(features: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Vec<usize>)> {
    if features.nrows() == 0 {
        return Err(Error::Shape("global max-pool over zero points".into()));
    }
    let width = features.ncols();
    let mut best = features.row(0).to_owned();
    let mut arg = vec![0usize; width];
    for (i, row) in features.rows().into_iter().enumerate().skip(1) {
        for f in 0..width {
            if row[f] > best[f] {
                best[f] = row[f];
                arg[f] = i;
            }
        }
    }
    Ok((best, arg))
}

/// Routes the pooled gradient back to the winning rows.
pub fn global_maxpool_backward(rows: usize, arg: &[usize], grad: &[f64]) -> Array2<f64> {
    let mut g = Array2::zeros((rows, arg.len()));
    for (f, (&i, &v)) in arg.iter().zip(grad).enumerate() {
        g[[i, f]] += v;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn definition_and_single_row() {
        let (m, arg) = global_maxpool(array![[1.0, 5.0], [3.0, 2.0]].view()).unwrap();
        assert_eq!(m.to_vec(), vec![3.0, 5.0]);
        assert_eq!(arg, vec![1, 0]);
        let (m, _) = global_maxpool(array![[4.0, -1.0]].view()).unwrap();
        assert_eq!(m.to_vec(), vec![4.0, -1.0]);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(global_maxpool(Array2::<f64>::zeros((0, 3)).view()).is_err());
    }

    #[test]
    fn permutation_invariant_bitwise() {
        let x = array![[0.1, -3.0, 2.5], [7.0, 0.0, -1.0], [0.3, 9.5, 2.5]];
        let p = array![[0.3, 9.5, 2.5], [0.1, -3.0, 2.5], [7.0, 0.0, -1.0]];
        assert_eq!(global_maxpool(x.view()).unwrap().0, global_maxpool(p.view()).unwrap().0);
    }
}
