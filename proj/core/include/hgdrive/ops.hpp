#pragma once

#include <vector>

#include "hgdrive/tensor.hpp"

namespace hgd {

// Reverse-mode differentiable ops on float64 tensors. Conventions:
//  - 2-D tensors are row-major (rows, cols); "rows" are tokens, "cols" dims.
//  - feature maps are (channels, height, width).
//  - every op validates shapes (throws ShapeError naming both sides) and
//    checks outputs for NaN/Inf (throws NonFiniteError).
// Loss targets are treated as constants: no gradient flows into them.

// shape / assembly
Tensor reshape(const Tensor& t, Shape shape);
Tensor transpose2d(const Tensor& t);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& t, int begin, int count);
Tensor slice_cols(const Tensor& t, int begin, int count);

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_act(const Tensor& a);
Tensor exp_elem(const Tensor& a);
Tensor log_elem(const Tensor& a);

// linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);        // (m,k)x(k,n)
Tensor add_rows(const Tensor& a, const Tensor& bias);   // (m,n)+(n)

// normalization / attention pieces
Tensor softmax_rows(const Tensor& t);                   // rows sum to 1
Tensor layer_norm_rows(const Tensor& t, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

// convolution, all single-sample: x (C,H,W)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride);

// gather
Tensor embedding_rows(const Tensor& table, const std::vector<int>& idx);
// idx entries may be -1: those output rows are zero (and route no gradient).
Tensor gather_rows_or_zero(const Tensor& tokens, const std::vector<int>& idx);

// Non-overlapping p-by-p patches of a (C,H,W) map, row-major over the patch
// grid: ((H/p)*(W/p), C*p*p). Pure rearrangement.
Tensor im2patches(const Tensor& x, int p);

// recurrent
struct GruWeights {
  Tensor wz, uz, bz;  // update gate
  Tensor wr, ur, br;  // reset gate
  Tensor wh, uh, bh;  // candidate
};
// x (1,in), h (1,hidden) -> (1,hidden).
// z = sig(xWz + hUz + bz), r = sig(xWr + hUr + br),
// c = tanh(xWh + (r*h)Uh + bh), h' = (1-z)*h + z*c.
Tensor gru_cell(const Tensor& x, const Tensor& h, const GruWeights& w);

// reductions / losses (scalar outputs)
Tensor sum_all(const Tensor& t);
Tensor mean_all(const Tensor& t);
Tensor l1_loss_sum(const Tensor& pred, const Tensor& target);    // sum |a-b|
Tensor mse_loss_mean(const Tensor& pred, const Tensor& target);  // mean (a-b)^2
// Probabilities clamped to [1e-7, 1-1e-7] before the log; mean over elements.
Tensor bce_loss_mean(const Tensor& prob, const Tensor& target);

}  // namespace hgd
