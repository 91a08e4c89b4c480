#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hasr/tape.h"
#include "hasr/tensor.h"

// Differentiable primitives. Every op takes the tape it records onto; with an
// inference-mode tape nothing is recorded. 2-D ops treat rank-1 tensors as a
// single row.
namespace hasr {

enum class Activation { kTanh, kSigmoid };

// out[i,j] = sum_k a[i,k] * b[k,j]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// out[i,j] = sum_k x[i,k] * w[k,j] + bias[j]
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
// Adds a length-d row to every row of an n x d matrix.
Tensor add_row(Tape& tape, const Tensor& x, const Tensor& row);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
// wa * a + wb * b for same-shape tensors.
Tensor weighted_sum(Tape& tape, const Tensor& a, double wa, const Tensor& b, double wb);

Tensor elementwise(Tape& tape, const Tensor& x, Activation kind);
inline Tensor tanh(Tape& tape, const Tensor& x) { return elementwise(tape, x, Activation::kTanh); }
inline Tensor sigmoid(Tape& tape, const Tensor& x) {
  return elementwise(tape, x, Activation::kSigmoid);
}

// Row-wise, max-shifted. NaN inputs raise NumericError.
Tensor softmax(Tape& tape, const Tensor& x);
Tensor log_softmax(Tape& tape, const Tensor& x);

Tensor sum(Tape& tape, const Tensor& x);
// -sum_i log(probs[i, targets[i]])
Tensor nll(Tape& tape, const Tensor& probs, std::span<const std::size_t> targets);
// sum_i x[i, cols[i]]
Tensor pick_sum(Tape& tape, const Tensor& x, std::span<const std::size_t> cols);

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);
Tensor row(Tape& tape, const Tensor& x, std::size_t index);
Tensor select_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> indices);
Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows);
// Vertical concatenation of matrices with equal column counts.
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

// Convolution of a length-L weight vector with each filter row of F along the
// frame axis. Zero padding keeps the output at L rows:
//   out[l, f] = sum_w F[f, w] * a[l + (width - 1) / 2 - w]
Tensor conv1d_frames(Tape& tape, const Tensor& a, const Tensor& filters);

// LSTM pointwise update from pre-activation gates laid out as [i | f | g | o]:
//   c = sigmoid(f) * c_prev + sigmoid(i) * tanh(g),  h = sigmoid(o) * tanh(c)
struct LstmCellOutput {
  Tensor h;
  Tensor c;
};
LstmCellOutput lstm_cell(Tape& tape, const Tensor& gates, const Tensor& c_prev);

// Per-column statistics over the rows (time axis) of one sequence.
struct ColumnMoments {
  Buffer mean;
  Buffer var;
};

// Normalizes each column over time with its own mean and biased variance,
// then applies gamma/beta. The batch moments are written to `moments` if set.
Tensor batch_norm_time(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps, ColumnMoments* moments = nullptr);
// Same affine normalization with externally supplied moments.
Tensor batch_norm_fixed(Tape& tape, const Tensor& x, const ColumnMoments& moments,
                        const Tensor& gamma, const Tensor& beta, double eps);

}  // namespace hasr
