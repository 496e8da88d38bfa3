use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::numkit::{matmul, matmul_nt, matmul_tn, Matrix, Scalar};

use super::SageParams;

fn sorted(list: &[usize]) -> Cow<'_, [usize]> {
    if list.is_sorted() {
        Cow::Borrowed(list)
    } else {
        let mut v = list.to_vec();
        v.sort_unstable();
        Cow::Owned(v)
    }
}

/// Row `i` is the mean of `x_src` over `neighbors[i]`, summed in ascending
/// source order. Empty neighborhoods give a zero row.
pub(crate) fn mean_aggregate<T: Scalar>(x_src: &Matrix<T>, neighbors: &[Vec<usize>]) -> Result<Matrix<T>> {
    let d = x_src.cols();
    let mut out = Matrix::zeros(neighbors.len(), d);
    for (i, list) in neighbors.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        let list = sorted(list);
        let row = out.row_mut(i);
        for &j in list.iter() {
            if j >= x_src.rows() {
                return Err(Error::Validation(format!(
                    "neighbor index {j} of node {i} out of range for {} source rows",
                    x_src.rows()
                )));
            }
            for (acc, &v) in row.iter_mut().zip(x_src.row(j)) {
                *acc += v;
            }
        }
        let n = T::lit(list.len() as f64);
        for acc in row.iter_mut() {
            *acc /= n;
        }
    }
    Ok(out)
}

/// Forward pass returning the output and the aggregated neighbor means.
pub(crate) fn sage_forward_with_agg<T: Scalar>(
    p: &SageParams<T>,
    x_dst: &Matrix<T>,
    x_src: &Matrix<T>,
    neighbors: &[Vec<usize>],
) -> Result<(Matrix<T>, Matrix<T>)> {
    if neighbors.len() != x_dst.rows() {
        return Err(Error::Shape {
            op: "sage_forward",
            left: x_dst.shape(),
            right: (neighbors.len(), 0),
        });
    }
    let agg = mean_aggregate(x_src, neighbors)?;
    let mut out = matmul(x_dst, &p.w_self)?;
    out.add_assign(&matmul(&agg, &p.w_neigh)?)?;
    out.add_row_broadcast(p.bias.as_slice())?;
    Ok((out, agg))
}

/// One SAGE convolution with mean aggregation:
/// `h_i = x_dst[i]·W_self + mean_{j∈N(i)} x_src[j]·W_neigh + b`.
pub fn sage_forward<T: Scalar>(
    p: &SageParams<T>,
    x_dst: &Matrix<T>,
    x_src: &Matrix<T>,
    neighbors: &[Vec<usize>],
) -> Result<Matrix<T>> {
    Ok(sage_forward_with_agg(p, x_dst, x_src, neighbors)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SageGrads<T> {
    pub params: SageParams<T>,
    pub d_x_dst: Option<Matrix<T>>,
    pub d_x_src: Option<Matrix<T>>,
}

/// Reverse pass of [`sage_forward`]. `agg` is the neighbor mean computed on
/// the forward pass. Input gradients are only produced when `input_grads`.
pub fn sage_backward<T: Scalar>(
    p: &SageParams<T>,
    x_dst: &Matrix<T>,
    agg: &Matrix<T>,
    neighbors: &[Vec<usize>],
    num_src: usize,
    d_out: &Matrix<T>,
    input_grads: bool,
) -> Result<SageGrads<T>> {
    let params = SageParams {
        w_self: matmul_tn(x_dst, d_out)?,
        w_neigh: matmul_tn(agg, d_out)?,
        bias: Matrix::from_vec(1, d_out.cols(), d_out.col_sums())?,
    };
    if !input_grads {
        return Ok(SageGrads {
            params,
            d_x_dst: None,
            d_x_src: None,
        });
    }
    let d_x_dst = matmul_nt(d_out, &p.w_self)?;
    let d_agg = matmul_nt(d_out, &p.w_neigh)?;
    let mut d_x_src = Matrix::zeros(num_src, d_agg.cols());
    for (i, list) in neighbors.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        let n = T::lit(list.len() as f64);
        let list = sorted(list);
        for &j in list.iter() {
            for (acc, &g) in d_x_src.row_mut(j).iter_mut().zip(d_agg.row(i)) {
                *acc += g / n;
            }
        }
    }
    Ok(SageGrads {
        params,
        d_x_dst: Some(d_x_dst),
        d_x_src: Some(d_x_src),
    })
}
