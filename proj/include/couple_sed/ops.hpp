#pragma once

#include <cstddef>
#include <vector>

#include "couple_sed/tape.hpp"
#include "couple_sed/tensor.hpp"

namespace csed::numkit {

// ---------------------------------------------------------------------------
// Pure forward primitives. Each has a Tape overload below that reuses the
// same forward code and records an exact analytic backward.
// ---------------------------------------------------------------------------

double sigmoid(double x);
Tensor sigmoid(const Tensor& x);

/// Gated linear unit over the leading (channel) axis: a * sigmoid(b) where a is
/// the first half of the channels and b the second half.
Tensor glu(const Tensor& x);

/// Same-padded 2-D cross-correlation. x: [C_in, T, F], kernels:
/// [C_out, C_in, kT, kF] with odd kT and kF, bias: [C_out] or empty.
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias = {});

/// Max pooling over [C, T, F] with window == stride. Partial windows at the
/// end of T or F are treated as padded with -inf, so the output has
/// ceil(T/pool_t) x ceil(F/pool_f) cells. `argmax`, when given, receives the
/// flat input index chosen for each output cell (first in row-major order on
/// ties).
Tensor max_pool2d(const Tensor& x, std::size_t pool_t, std::size_t pool_f,
                  std::vector<std::size_t>* argmax = nullptr);

/// Weights of one GRU direction. Gate blocks are stacked (reset, update,
/// candidate) along the first axis.
struct GruWeights {
  Tensor w_ih;  // [3H, D]
  Tensor w_hh;  // [3H, H]
  Tensor b_ih;  // [3H]
  Tensor b_hh;  // [3H]

  std::size_t hidden() const { return w_hh.dim(1); }
  std::size_t input() const { return w_ih.dim(1); }
};

/// Per-step activations kept for backpropagation through time, indexed by the
/// time position of the step (not by processing order).
struct GruCache {
  std::vector<double> r, z, n, hn, h_prev;  // each T*H
};

/// One GRU direction over x: [T, D] with zero initial state:
///   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
///   z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h = (1 - z) * n + z * h_prev
/// `reverse` walks t = T-1 .. 0. Output row t is the state after step t.
Tensor gru_pass(const Tensor& x, const GruWeights& w, bool reverse,
                GruCache* cache = nullptr);

/// Forward and backward GRU passes concatenated along features: [T, 2H].
Tensor bigru_layer(const Tensor& x, const GruWeights& forward, const GruWeights& backward);

/// y[t] = W x[t] + b for x: [T, D], W: [O, D], b: [O].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Softmax along axis 0 of a [T, C] matrix (each column sums to one).
Tensor softmax_axis0(const Tensor& x);

/// [C, T, F] -> [T, C*F] with out[t, c*F + f] = x[c, t, f].
Tensor to_sequence(const Tensor& x);

// ---------------------------------------------------------------------------
// Taped versions.
// ---------------------------------------------------------------------------

Var sigmoid(Tape& tape, Var x);
Var glu(Tape& tape, Var x);
Var conv2d(Tape& tape, Var x, Var kernels, Var bias);
Var max_pool2d(Tape& tape, Var x, std::size_t pool_t, std::size_t pool_f);
Var gru_pass(Tape& tape, Var x, Var w_ih, Var w_hh, Var b_ih, Var b_hh, bool reverse);
Var linear(Tape& tape, Var x, Var w, Var b);
Var softmax_axis0(Tape& tape, Var x);
Var to_sequence(Tape& tape, Var x);
Var concat_cols(Tape& tape, Var a, Var b);

Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var mul_const(Tape& tape, Var x, const Tensor& c);
Var scale(Tape& tape, Var x, double s);
/// Column sums of a [T, C] tensor; a vector [n] sums to shape [1].
Var sum_axis0(Tape& tape, Var x);
/// Sum of every element, shape [1].
Var sum_all(Tape& tape, Var x);

/// Sum of binary cross-entropy terms -[y log p + (1-y) log(1-p)] with p
/// clamped to [eps, 1-eps]. The clamp is treated as identity in backward.
Var bce_sum(Tape& tape, Var probs, const Tensor& targets, double eps);
/// Sum of squared differences against a constant target.
Var sq_err_sum(Tape& tape, Var x, const Tensor& target);

}  // namespace csed::numkit
