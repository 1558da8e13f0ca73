#include "couple_sed/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace csed::numkit {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(t.shape()));
  }
}

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Tensor glu(const Tensor& x) {
  if (x.rank() == 0 || x.dim(0) % 2 != 0) {
    throw ShapeError("glu: channel axis must be even, got shape " + shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[0] /= 2;
  Tensor y(out_shape);
  const std::size_t half = y.size();
  for (std::size_t i = 0; i < half; ++i) y[i] = x[i] * sigmoid(x[half + i]);
  return y;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  require_rank(x, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  const std::size_t c_in = x.dim(0), T = x.dim(1), F = x.dim(2);
  const std::size_t c_out = kernels.dim(0), kt = kernels.dim(2), kf = kernels.dim(3);
  if (kernels.dim(1) != c_in) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernels.dim(1)) +
                     " input channels, input has " + std::to_string(c_in));
  }
  if (kt % 2 == 0 || kf % 2 == 0) {
    throw ShapeError("conv2d: kernel dims must be odd, got " + shape_str(kernels.shape()));
  }
  if (!bias.empty()) require_shape(bias, {c_out}, "conv2d bias");
  const std::ptrdiff_t pt = static_cast<std::ptrdiff_t>(kt / 2);
  const std::ptrdiff_t pf = static_cast<std::ptrdiff_t>(kf / 2);
  const auto sT = static_cast<std::ptrdiff_t>(T), sF = static_cast<std::ptrdiff_t>(F);

  Tensor y({c_out, T, F});
  for (std::size_t co = 0; co < c_out; ++co) {
    double* yc = &y[co * T * F];
    if (!bias.empty()) std::fill(yc, yc + T * F, bias[co]);
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const double* xc = &x[ci * T * F];
      const double* kc = &kernels[(co * c_in + ci) * kt * kf];
      for (std::ptrdiff_t dt = 0; dt < static_cast<std::ptrdiff_t>(kt); ++dt) {
        const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, pt - dt);
        const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(sT, sT + pt - dt);
        for (std::ptrdiff_t df = 0; df < static_cast<std::ptrdiff_t>(kf); ++df) {
          const double w = kc[dt * static_cast<std::ptrdiff_t>(kf) + df];
          const std::ptrdiff_t f0 = std::max<std::ptrdiff_t>(0, pf - df);
          const std::ptrdiff_t f1 = std::min<std::ptrdiff_t>(sF, sF + pf - df);
          for (std::ptrdiff_t t = t0; t < t1; ++t) {
            double* yr = yc + t * sF;
            const double* xr = xc + (t + dt - pt) * sF + (df - pf);
            for (std::ptrdiff_t f = f0; f < f1; ++f) yr[f] += w * xr[f];
          }
        }
      }
    }
  }
  return y;
}

Tensor max_pool2d(const Tensor& x, std::size_t pool_t, std::size_t pool_f,
                  std::vector<std::size_t>* argmax) {
  require_rank(x, 3, "max_pool2d input");
  if (pool_t == 0 || pool_f == 0) throw std::invalid_argument("max_pool2d: zero-sized window");
  const std::size_t C = x.dim(0), T = x.dim(1), F = x.dim(2);
  const std::size_t To = (T + pool_t - 1) / pool_t, Fo = (F + pool_f - 1) / pool_f;
  Tensor y({C, To, Fo});
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t to = 0; to < To; ++to) {
      for (std::size_t fo = 0; fo < Fo; ++fo, ++o) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = (c * T + to * pool_t) * F + fo * pool_f;
        const std::size_t t_end = std::min(T, (to + 1) * pool_t);
        const std::size_t f_end = std::min(F, (fo + 1) * pool_f);
        for (std::size_t t = to * pool_t; t < t_end; ++t) {
          for (std::size_t f = fo * pool_f; f < f_end; ++f) {
            const std::size_t idx = (c * T + t) * F + f;
            if (x[idx] > best) {
              best = x[idx];
              best_idx = idx;
            }
          }
        }
        y[o] = best;
        if (argmax) (*argmax)[o] = best_idx;
      }
    }
  }
  return y;
}

namespace {

void check_gru_shapes(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh,
                      const Tensor& b_ih, const Tensor& b_hh) {
  require_rank(x, 2, "gru input");
  require_rank(w_hh, 2, "gru w_hh");
  const std::size_t H = w_hh.dim(1);
  require_shape(w_hh, {3 * H, H}, "gru w_hh");
  require_shape(w_ih, {3 * H, x.dim(1)}, "gru w_ih");
  require_shape(b_ih, {3 * H}, "gru b_ih");
  require_shape(b_hh, {3 * H}, "gru b_hh");
  if (x.dim(0) == 0) throw std::invalid_argument("gru: sequence length must be >= 1");
}

Tensor gru_impl(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh, const Tensor& b_ih,
                const Tensor& b_hh, bool reverse, GruCache* cache) {
  check_gru_shapes(x, w_ih, w_hh, b_ih, b_hh);
  const std::size_t T = x.dim(0), H = w_hh.dim(1);
  const Tensor gx = linear(x, w_ih, b_ih);  // [T, 3H]
  Tensor out({T, H});
  if (cache) {
    for (auto* v : {&cache->r, &cache->z, &cache->n, &cache->hn, &cache->h_prev}) {
      v->assign(T * H, 0.0);
    }
  }
  std::vector<double> h(H, 0.0), gh(3 * H);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;
    for (std::size_t j = 0; j < 3 * H; ++j) {
      const double* wr = &w_hh[j * H];
      double acc = b_hh[j];
      for (std::size_t k = 0; k < H; ++k) acc += wr[k] * h[k];
      gh[j] = acc;
    }
    const double* g = &gx[t * 3 * H];
    for (std::size_t j = 0; j < H; ++j) {
      const double r = sigmoid(g[j] + gh[j]);
      const double z = sigmoid(g[H + j] + gh[H + j]);
      const double hn = gh[2 * H + j];
      const double n = std::tanh(g[2 * H + j] + r * hn);
      const double h_new = (1.0 - z) * n + z * h[j];
      if (cache) {
        cache->r[t * H + j] = r;
        cache->z[t * H + j] = z;
        cache->n[t * H + j] = n;
        cache->hn[t * H + j] = hn;
        cache->h_prev[t * H + j] = h[j];
      }
      out[t * H + j] = h_new;
    }
    for (std::size_t j = 0; j < H; ++j) h[j] = out[t * H + j];
  }
  return out;
}

}  // namespace

Tensor gru_pass(const Tensor& x, const GruWeights& w, bool reverse, GruCache* cache) {
  return gru_impl(x, w.w_ih, w.w_hh, w.b_ih, w.b_hh, reverse, cache);
}

Tensor bigru_layer(const Tensor& x, const GruWeights& forward, const GruWeights& backward) {
  const Tensor f = gru_pass(x, forward, false);
  const Tensor b = gru_pass(x, backward, true);
  const std::size_t T = x.dim(0), Hf = f.dim(1), Hb = b.dim(1);
  Tensor y({T, Hf + Hb});
  for (std::size_t t = 0; t < T; ++t) {
    std::copy_n(&f[t * Hf], Hf, &y[t * (Hf + Hb)]);
    std::copy_n(&b[t * Hb], Hb, &y[t * (Hf + Hb) + Hf]);
  }
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const std::size_t T = x.dim(0), D = x.dim(1), O = w.dim(0);
  if (w.dim(1) != D) {
    throw ShapeError("linear: weight " + shape_str(w.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  require_shape(b, {O}, "linear bias");
  Tensor y({T, O});
  for (std::size_t t = 0; t < T; ++t) {
    const double* xr = &x[t * D];
    for (std::size_t o = 0; o < O; ++o) {
      const double* wr = &w[o * D];
      double acc = b[o];
      for (std::size_t d = 0; d < D; ++d) acc += wr[d] * xr[d];
      y[t * O + o] = acc;
    }
  }
  return y;
}

Tensor softmax_axis0(const Tensor& x) {
  require_rank(x, 2, "softmax_axis0");
  const std::size_t T = x.dim(0), C = x.dim(1);
  if (T == 0) throw std::invalid_argument("softmax_axis0: empty time axis");
  Tensor y(x.shape());
  for (std::size_t c = 0; c < C; ++c) {
    double mx = x[c];
    for (std::size_t t = 1; t < T; ++t) mx = std::max(mx, x[t * C + c]);
    double sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      y[t * C + c] = std::exp(x[t * C + c] - mx);
      sum += y[t * C + c];
    }
    for (std::size_t t = 0; t < T; ++t) y[t * C + c] /= sum;
  }
  return y;
}

Tensor to_sequence(const Tensor& x) {
  require_rank(x, 3, "to_sequence");
  const std::size_t C = x.dim(0), T = x.dim(1), F = x.dim(2);
  Tensor y({T, C * F});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < T; ++t) {
      std::copy_n(&x[(c * T + t) * F], F, &y[t * C * F + c * F]);
    }
  }
  return y;
}

// ---------------------------------------------------------------------------

Var sigmoid(Tape& tape, Var x) {
  Tensor y = sigmoid(tape.value(x));
  const Var out = tape.record(y, {x}, [x, y](Tape& tp, const Tensor& g) {
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
  return out;
}

Var glu(Tape& tape, Var x) {
  Tensor y = glu(tape.value(x));
  return tape.record(std::move(y), {x}, [x](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(x);
    Tensor& dx = tp.grad_buffer(x);
    const std::size_t half = g.size();
    for (std::size_t i = 0; i < half; ++i) {
      const double a = xv[i];
      const double s = sigmoid(xv[half + i]);
      dx[i] += g[i] * s;
      dx[half + i] += g[i] * a * s * (1.0 - s);
    }
  });
}

Var conv2d(Tape& tape, Var x, Var kernels, Var bias) {
  Tensor y = conv2d(tape.value(x), tape.value(kernels), tape.value(bias));
  return tape.record(std::move(y), {x, kernels, bias}, [x, kernels, bias](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(x);
    const Tensor& kv = tp.value(kernels);
    const std::size_t c_in = xv.dim(0), T = xv.dim(1), F = xv.dim(2);
    const std::size_t c_out = kv.dim(0), kt = kv.dim(2), kf = kv.dim(3);
    const std::ptrdiff_t pt = static_cast<std::ptrdiff_t>(kt / 2);
    const std::ptrdiff_t pf = static_cast<std::ptrdiff_t>(kf / 2);
    const auto sT = static_cast<std::ptrdiff_t>(T), sF = static_cast<std::ptrdiff_t>(F);
    const bool need_x = tp.requires_grad(x), need_k = tp.requires_grad(kernels);
    if (tp.requires_grad(bias)) {
      Tensor& db = tp.grad_buffer(bias);
      for (std::size_t co = 0; co < c_out; ++co) {
        double acc = 0.0;
        for (std::size_t i = 0; i < T * F; ++i) acc += g[co * T * F + i];
        db[co] += acc;
      }
    }
    if (!need_x && !need_k) return;
    Tensor* dx = need_x ? &tp.grad_buffer(x) : nullptr;
    Tensor* dk = need_k ? &tp.grad_buffer(kernels) : nullptr;
    for (std::size_t co = 0; co < c_out; ++co) {
      const double* gc = &g[co * T * F];
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const double* xc = &xv[ci * T * F];
        const std::size_t kbase = (co * c_in + ci) * kt * kf;
        for (std::ptrdiff_t dt = 0; dt < static_cast<std::ptrdiff_t>(kt); ++dt) {
          const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, pt - dt);
          const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(sT, sT + pt - dt);
          for (std::ptrdiff_t df = 0; df < static_cast<std::ptrdiff_t>(kf); ++df) {
            const std::size_t kidx = kbase + static_cast<std::size_t>(dt) * kf + static_cast<std::size_t>(df);
            const double w = kv[kidx];
            const std::ptrdiff_t f0 = std::max<std::ptrdiff_t>(0, pf - df);
            const std::ptrdiff_t f1 = std::min<std::ptrdiff_t>(sF, sF + pf - df);
            double acc = 0.0;
            for (std::ptrdiff_t t = t0; t < t1; ++t) {
              const double* gr = gc + t * sF;
              const std::ptrdiff_t src = (t + dt - pt) * sF + (df - pf);
              const double* xr = xc + src;
              if (dk) {
                for (std::ptrdiff_t f = f0; f < f1; ++f) acc += gr[f] * xr[f];
              }
              if (dx) {
                double* dxr = &(*dx)[ci * T * F] + src;
                for (std::ptrdiff_t f = f0; f < f1; ++f) dxr[f] += w * gr[f];
              }
            }
            if (dk) (*dk)[kidx] += acc;
          }
        }
      }
    }
  });
}

Var max_pool2d(Tape& tape, Var x, std::size_t pool_t, std::size_t pool_f) {
  std::vector<std::size_t> argmax;
  Tensor y = max_pool2d(tape.value(x), pool_t, pool_f, &argmax);
  return tape.record(std::move(y), {x}, [x, argmax = std::move(argmax)](Tape& tp, const Tensor& g) {
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t o = 0; o < g.size(); ++o) dx[argmax[o]] += g[o];
  });
}

Var gru_pass(Tape& tape, Var x, Var w_ih, Var w_hh, Var b_ih, Var b_hh, bool reverse) {
  GruCache cache;
  Tensor y = gru_impl(tape.value(x), tape.value(w_ih), tape.value(w_hh), tape.value(b_ih),
                      tape.value(b_hh), reverse, &cache);
  return tape.record(
      std::move(y), {x, w_ih, w_hh, b_ih, b_hh},
      [=, cache = std::move(cache)](Tape& tp, const Tensor& g) {
        const Tensor& xv = tp.value(x);
        const Tensor& wih = tp.value(w_ih);
        const Tensor& whh = tp.value(w_hh);
        const std::size_t T = xv.dim(0), D = xv.dim(1), H = whh.dim(1);
        Tensor dgx({T, 3 * H});
        Tensor dwhh({3 * H, H});
        Tensor dbhh({3 * H});
        std::vector<double> dh(H, 0.0), dh_next(H), dgh(3 * H);
        for (std::size_t step = 0; step < T; ++step) {
          // walk steps in reverse processing order
          const std::size_t t = reverse ? step : T - 1 - step;
          for (std::size_t j = 0; j < H; ++j) dh[j] += g[t * H + j];
          const std::size_t o = t * H;
          for (std::size_t j = 0; j < H; ++j) {
            const double r = cache.r[o + j], z = cache.z[o + j], n = cache.n[o + j];
            const double hn = cache.hn[o + j], hp = cache.h_prev[o + j];
            const double dn_pre = dh[j] * (1.0 - z) * (1.0 - n * n);
            const double dz_pre = dh[j] * (hp - n) * z * (1.0 - z);
            const double dr_pre = dn_pre * hn * r * (1.0 - r);
            dgx[t * 3 * H + j] = dr_pre;
            dgx[t * 3 * H + H + j] = dz_pre;
            dgx[t * 3 * H + 2 * H + j] = dn_pre;
            dgh[j] = dr_pre;
            dgh[H + j] = dz_pre;
            dgh[2 * H + j] = dn_pre * r;
            dh_next[j] = dh[j] * z;
          }
          for (std::size_t i = 0; i < 3 * H; ++i) {
            dbhh[i] += dgh[i];
            double* dw = &dwhh[i * H];
            const double* wr = &whh[i * H];
            for (std::size_t k = 0; k < H; ++k) {
              dw[k] += dgh[i] * cache.h_prev[o + k];
              dh_next[k] += wr[k] * dgh[i];
            }
          }
          dh.swap(dh_next);
        }
        if (tp.requires_grad(w_hh)) accumulate(tp.grad_buffer(w_hh), dwhh);
        if (tp.requires_grad(b_hh)) accumulate(tp.grad_buffer(b_hh), dbhh);
        if (tp.requires_grad(b_ih)) {
          Tensor& db = tp.grad_buffer(b_ih);
          for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < 3 * H; ++i) db[i] += dgx[t * 3 * H + i];
        }
        if (tp.requires_grad(w_ih)) {
          Tensor& dw = tp.grad_buffer(w_ih);
          for (std::size_t t = 0; t < T; ++t) {
            const double* xr = &xv[t * D];
            for (std::size_t i = 0; i < 3 * H; ++i) {
              const double gi = dgx[t * 3 * H + i];
              double* dwr = &dw[i * D];
              for (std::size_t d = 0; d < D; ++d) dwr[d] += gi * xr[d];
            }
          }
        }
        if (tp.requires_grad(x)) {
          Tensor& dx = tp.grad_buffer(x);
          for (std::size_t t = 0; t < T; ++t) {
            double* dxr = &dx[t * D];
            for (std::size_t i = 0; i < 3 * H; ++i) {
              const double gi = dgx[t * 3 * H + i];
              const double* wr = &wih[i * D];
              for (std::size_t d = 0; d < D; ++d) dxr[d] += gi * wr[d];
            }
          }
        }
      });
}

Var linear(Tape& tape, Var x, Var w, Var b) {
  Tensor y = linear(tape.value(x), tape.value(w), tape.value(b));
  return tape.record(std::move(y), {x, w, b}, [x, w, b](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(x);
    const Tensor& wv = tp.value(w);
    const std::size_t T = xv.dim(0), D = xv.dim(1), O = wv.dim(0);
    if (tp.requires_grad(b)) {
      Tensor& db = tp.grad_buffer(b);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t o = 0; o < O; ++o) db[o] += g[t * O + o];
    }
    if (tp.requires_grad(w)) {
      Tensor& dw = tp.grad_buffer(w);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t o = 0; o < O; ++o) {
          const double go = g[t * O + o];
          for (std::size_t d = 0; d < D; ++d) dw[o * D + d] += go * xv[t * D + d];
        }
    }
    if (tp.requires_grad(x)) {
      Tensor& dx = tp.grad_buffer(x);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t o = 0; o < O; ++o) {
          const double go = g[t * O + o];
          for (std::size_t d = 0; d < D; ++d) dx[t * D + d] += go * wv[o * D + d];
        }
    }
  });
}

Var softmax_axis0(Tape& tape, Var x) {
  Tensor y = softmax_axis0(tape.value(x));
  return tape.record(y, {x}, [x, y](Tape& tp, const Tensor& g) {
    Tensor& dx = tp.grad_buffer(x);
    const std::size_t T = y.dim(0), C = y.dim(1);
    for (std::size_t c = 0; c < C; ++c) {
      double dot = 0.0;
      for (std::size_t t = 0; t < T; ++t) dot += g[t * C + c] * y[t * C + c];
      for (std::size_t t = 0; t < T; ++t) dx[t * C + c] += y[t * C + c] * (g[t * C + c] - dot);
    }
  });
}

Var to_sequence(Tape& tape, Var x) {
  Tensor y = to_sequence(tape.value(x));
  return tape.record(std::move(y), {x}, [x](Tape& tp, const Tensor& g) {
    Tensor& dx = tp.grad_buffer(x);
    const std::size_t C = dx.dim(0), T = dx.dim(1), F = dx.dim(2);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t f = 0; f < F; ++f) dx[(c * T + t) * F + f] += g[t * C * F + c * F + f];
  });
}

Var concat_cols(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_rank(av, 2, "concat_cols");
  require_rank(bv, 2, "concat_cols");
  if (av.dim(0) != bv.dim(0)) throw ShapeError("concat_cols: row counts differ");
  const std::size_t T = av.dim(0), A = av.dim(1), B = bv.dim(1);
  Tensor y({T, A + B});
  for (std::size_t t = 0; t < T; ++t) {
    std::copy_n(&av[t * A], A, &y[t * (A + B)]);
    std::copy_n(&bv[t * B], B, &y[t * (A + B) + A]);
  }
  return tape.record(std::move(y), {a, b}, [a, b, T, A, B](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) {
      Tensor& da = tp.grad_buffer(a);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < A; ++i) da[t * A + i] += g[t * (A + B) + i];
    }
    if (tp.requires_grad(b)) {
      Tensor& db = tp.grad_buffer(b);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < B; ++i) db[t * B + i] += g[t * (A + B) + A + i];
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  require_shape(tape.value(b), av.shape(), "add");
  Tensor y = av;
  accumulate(y, tape.value(b));
  return tape.record(std::move(y), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) accumulate(tp.grad_buffer(a), g);
    if (tp.requires_grad(b)) accumulate(tp.grad_buffer(b), g);
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  require_shape(bv, av.shape(), "mul");
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return tape.record(std::move(y), {a, b}, [a, b](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(a)) {
      Tensor& da = tp.grad_buffer(a);
      const Tensor& bv = tp.value(b);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b)) {
      Tensor& db = tp.grad_buffer(b);
      const Tensor& av = tp.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var mul_const(Tape& tape, Var x, const Tensor& c) {
  const Tensor& xv = tape.value(x);
  require_shape(c, xv.shape(), "mul_const");
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * c[i];
  return tape.record(std::move(y), {x}, [x, c](Tape& tp, const Tensor& g) {
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * c[i];
  });
}

Var scale(Tape& tape, Var x, double s) {
  Tensor y = tape.value(x);
  for (auto& v : y.data()) v *= s;
  return tape.record(std::move(y), {x}, [x, s](Tape& tp, const Tensor& g) {
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * s;
  });
}

Var sum_axis0(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 1) require_rank(xv, 2, "sum_axis0");
  const std::size_t T = xv.dim(0), C = xv.rank() == 1 ? 1 : xv.dim(1);
  Tensor y({C});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c) y[c] += xv[t * C + c];
  return tape.record(std::move(y), {x}, [x, T, C](Tape& tp, const Tensor& g) {
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) dx[t * C + c] += g[c];
  });
}

Var sum_all(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  double acc = 0.0;
  for (double v : xv.data()) acc += v;
  return tape.record(Tensor::scalar(acc), {x}, [x](Tape& tp, const Tensor& g) {
    for (double& d : tp.grad_buffer(x).data()) d += g[0];
  });
}

Var bce_sum(Tape& tape, Var probs, const Tensor& targets, double eps) {
  const Tensor& p = tape.value(probs);
  require_shape(targets, p.shape(), "bce targets");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], eps, 1.0 - eps);
    const double y = targets[i];
    sum -= y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc);
  }
  return tape.record(Tensor::scalar(sum), {probs}, [probs, targets, eps](Tape& tp, const Tensor& g) {
    const Tensor& pv = tp.value(probs);
    Tensor& dp = tp.grad_buffer(probs);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double pc = std::clamp(pv[i], eps, 1.0 - eps);
      dp[i] += g[0] * (pc - targets[i]) / (pc * (1.0 - pc));
    }
  });
}

Var sq_err_sum(Tape& tape, Var x, const Tensor& target) {
  const Tensor& xv = tape.value(x);
  require_shape(target, xv.shape(), "sq_err target");
  double sum = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double d = xv[i] - target[i];
    sum += d * d;
  }
  return tape.record(Tensor::scalar(sum), {x}, [x, target](Tape& tp, const Tensor& g) {
    const Tensor& xv = tp.value(x);
    Tensor& dx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += g[0] * 2.0 * (xv[i] - target[i]);
  });
}

}  // namespace csed::numkit
