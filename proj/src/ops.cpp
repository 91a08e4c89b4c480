#include "hasr/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "hasr/errors.h"

namespace hasr {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

ConstMatrixView view(const Buffer& data, std::size_t r, std::size_t c) {
  return ConstMatrixView(data.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MatrixView view(Buffer& data, std::size_t r, std::size_t c) {
  return MatrixView(data.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

void require_no_nan(const char* op, const Tensor& x) {
  for (double v : x.data()) {
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
  }
}

void accumulate(Buffer& dst, const Buffer& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions of " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " disagree");
  }
  Buffer out(n * m);
  view(out, n, m).noalias() = view(a.buffer(), n, k) * view(b.buffer(), k, m);
  const bool track = tape.tracks({&a, &b});
  Tensor y = tape.output({n, m}, std::move(out), track);
  if (track) {
    tape.record({y}, [a, b, y, n, k, m](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      if (a.requires_grad()) {
        view(t.grad(a), n, k).noalias() += view(gy, n, m) * view(b.buffer(), k, m).transpose();
      }
      if (b.requires_grad()) {
        view(t.grad(b), k, m).noalias() += view(a.buffer(), n, k).transpose() * view(gy, n, m);
      }
    });
  }
  return y;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  const std::size_t n = x.rows(), k = x.cols(), m = w.cols();
  if (w.rows() != k) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  }
  if (bias.numel() != m) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  }
  Buffer out(n * m);
  auto y_view = view(out, n, m);
  y_view.noalias() = view(x.buffer(), n, k) * view(w.buffer(), k, m);
  y_view.rowwise() += view(bias.buffer(), 1, m).row(0);
  const bool track = tape.tracks({&x, &w, &bias});
  Tensor y = tape.output({n, m}, std::move(out), track);
  if (track) {
    tape.record({y}, [x, w, bias, y, n, k, m](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      auto gy_view = view(gy, n, m);
      if (x.requires_grad()) {
        view(t.grad(x), n, k).noalias() += gy_view * view(w.buffer(), k, m).transpose();
      }
      if (w.requires_grad()) {
        view(t.grad(w), k, m).noalias() += view(x.buffer(), n, k).transpose() * gy_view;
      }
      if (bias.requires_grad()) {
        view(t.grad(bias), 1, m).row(0) += gy_view.colwise().sum();
      }
    });
  }
  return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  const bool track = tape.tracks({&a, &b});
  Tensor y = tape.output(a.shape(), std::move(out), track);
  if (track) {
    tape.record({y}, [a, b, y](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      if (a.requires_grad()) accumulate(t.grad(a), gy);
      if (b.requires_grad()) accumulate(t.grad(b), gy);
    });
  }
  return y;
}

Tensor add_row(Tape& tape, const Tensor& x, const Tensor& r) {
  const std::size_t n = x.rows(), d = x.cols();
  if (r.numel() != d) {
    throw DimensionError("add_row: row " + shape_string(r.shape()) + " does not fit " +
                         shape_string(x.shape()));
  }
  Buffer out(x.numel());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.at(i * d + j) + r.at(j);
  }
  const bool track = tape.tracks({&x, &r});
  Tensor y = tape.output(x.shape(), std::move(out), track);
  if (track) {
    tape.record({y}, [x, r, y, n, d](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      if (x.requires_grad()) accumulate(t.grad(x), gy);
      if (r.requires_grad()) {
        Buffer& gr = t.grad(r);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < d; ++j) gr[j] += gy[i * d + j];
        }
      }
    });
  }
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  const bool track = tape.tracks({&a, &b});
  Tensor y = tape.output(a.shape(), std::move(out), track);
  if (track) {
    tape.record({y}, [a, b, y](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      if (a.requires_grad()) {
        Buffer& ga = t.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * b.at(i);
      }
      if (b.requires_grad()) {
        Buffer& gb = t.grad(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * a.at(i);
      }
    });
  }
  return y;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  Buffer out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x.at(i);
  const bool track = tape.tracks({&x});
  Tensor y = tape.output(x.shape(), std::move(out), track);
  if (track) {
    tape.record({y}, [x, y, factor](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      Buffer& gx = t.grad(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * gy[i];
    });
  }
  return y;
}

Tensor weighted_sum(Tape& tape, const Tensor& a, double wa, const Tensor& b, double wb) {
  require_same_shape("weighted_sum", a, b);
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = wa * a.at(i) + wb * b.at(i);
  const bool track = tape.tracks({&a, &b});
  Tensor y = tape.output(a.shape(), std::move(out), track);
  if (track) {
    tape.record({y}, [a, b, y, wa, wb](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      if (a.requires_grad()) {
        Buffer& ga = t.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += wa * gy[i];
      }
      if (b.requires_grad()) {
        Buffer& gb = t.grad(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += wb * gy[i];
      }
    });
  }
  return y;
}

Tensor elementwise(Tape& tape, const Tensor& x, Activation kind) {
  Buffer out(x.numel());
  if (kind == Activation::kTanh) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.at(i));
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.at(i)));
  }
  const bool track = tape.tracks({&x});
  Tensor y = tape.output(x.shape(), std::move(out), track);
  if (track) {
    tape.record({y}, [x, y, kind](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      Buffer& gx = t.grad(x);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double v = y.at(i);
        gx[i] += gy[i] * (kind == Activation::kTanh ? 1.0 - v * v : v * (1.0 - v));
      }
    });
  }
  return y;
}

Tensor softmax(Tape& tape, const Tensor& x) {
  require_no_nan("softmax", x);
  const std::size_t n = x.rows(), k = x.cols();
  Buffer out(x.numel());
  for (std::size_t i = 0; i < n; ++i) {
    const double* in = x.data().data() + i * k;
    double* o = out.data() + i * k;
    const double mx = *std::max_element(in, in + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < k; ++j) o[j] /= z;
  }
  const bool track = tape.tracks({&x});
  Tensor y = tape.output(x.shape(), std::move(out), track);
  if (track) {
    tape.record({y}, [x, y, n, k](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      Buffer& gx = t.grad(x);
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += gy[i * k + j] * y.at(i * k + j);
        for (std::size_t j = 0; j < k; ++j) {
          gx[i * k + j] += y.at(i * k + j) * (gy[i * k + j] - dot);
        }
      }
    });
  }
  return y;
}

Tensor log_softmax(Tape& tape, const Tensor& x) {
  require_no_nan("log_softmax", x);
  const std::size_t n = x.rows(), k = x.cols();
  Buffer out(x.numel());
  for (std::size_t i = 0; i < n; ++i) {
    const double* in = x.data().data() + i * k;
    double* o = out.data() + i * k;
    const double mx = *std::max_element(in, in + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) o[j] = in[j] - lse;
  }
  const bool track = tape.tracks({&x});
  Tensor y = tape.output(x.shape(), std::move(out), track);
  if (track) {
    tape.record({y}, [x, y, n, k](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      Buffer& gx = t.grad(x);
      for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) total += gy[i * k + j];
        for (std::size_t j = 0; j < k; ++j) {
          gx[i * k + j] += gy[i * k + j] - std::exp(y.at(i * k + j)) * total;
        }
      }
    });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool track = tape.tracks({&x});
  Tensor y = tape.output({}, Buffer{total}, track);
  if (track) {
    tape.record({y}, [x, y](Tape& t) {
      const double g = (*t.grad_if_any(y))[0];
      for (double& v : t.grad(x)) v += g;
    });
  }
  return y;
}

Tensor nll(Tape& tape, const Tensor& probs, std::span<const std::size_t> targets) {
  const std::size_t n = probs.rows(), k = probs.cols();
  if (targets.size() != n) {
    throw DimensionError("nll: " + std::to_string(targets.size()) + " targets for " +
                         shape_string(probs.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= k) throw ContractError("nll: target index out of range");
    total -= std::log(probs.at(i, targets[i]));
  }
  const bool track = tape.tracks({&probs});
  Tensor y = tape.output({}, Buffer{total}, track);
  if (track) {
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    tape.record({y}, [probs, y, tgt = std::move(tgt), k](Tape& t) {
      const double g = (*t.grad_if_any(y))[0];
      Buffer& gp = t.grad(probs);
      for (std::size_t i = 0; i < tgt.size(); ++i) gp[i * k + tgt[i]] -= g / probs.at(i, tgt[i]);
    });
  }
  return y;
}

Tensor pick_sum(Tape& tape, const Tensor& x, std::span<const std::size_t> cols) {
  const std::size_t n = x.rows(), k = x.cols();
  if (cols.size() != n) {
    throw DimensionError("pick_sum: " + std::to_string(cols.size()) + " indices for " +
                         shape_string(x.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] >= k) throw ContractError("pick_sum: column index out of range");
    total += x.at(i, cols[i]);
  }
  const bool track = tape.tracks({&x});
  Tensor y = tape.output({}, Buffer{total}, track);
  if (track) {
    std::vector<std::size_t> idx(cols.begin(), cols.end());
    tape.record({y}, [x, y, idx = std::move(idx), k](Tape& t) {
      const double g = (*t.grad_if_any(y))[0];
      Buffer& gx = t.grad(x);
      for (std::size_t i = 0; i < idx.size(); ++i) gx[i * k + idx[i]] += g;
    });
  }
  return y;
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != n) {
      throw DimensionError("concat_cols: row counts differ, " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    total += p.cols();
  }
  Buffer out(n * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(p.data().data() + i * c, c, out.data() + i * total + offset);
    }
    offset += c;
  }
  const bool track = tape.tracks(parts);
  Tensor y = tape.output({n, total}, std::move(out), track);
  if (track) {
    tape.record({y}, [parts, y, n, total](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      std::size_t off = 0;
      for (const Tensor& p : parts) {
        const std::size_t c = p.cols();
        if (p.requires_grad()) {
          Buffer& gp = t.grad(p);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += gy[i * total + off + j];
          }
        }
        off += c;
      }
    });
  }
  return y;
}

Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t n = x.rows(), k = x.cols();
  if (begin >= end || end > k) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  Buffer out(n * w);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data().data() + i * k + begin, w, out.data() + i * w);
  }
  const bool track = tape.tracks({&x});
  Tensor y = tape.output({n, w}, std::move(out), track);
  if (track) {
    tape.record({y}, [x, y, n, k, w, begin](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      Buffer& gx = t.grad(x);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < w; ++j) gx[i * k + begin + j] += gy[i * w + j];
      }
    });
  }
  return y;
}

Tensor row(Tape& tape, const Tensor& x, std::size_t index) {
  const std::size_t idx[] = {index};
  return select_rows(tape, x, idx);
}

Tensor select_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> indices) {
  const std::size_t n = x.rows(), k = x.cols();
  if (indices.empty()) throw DimensionError("select_rows: empty selection");
  Buffer out(indices.size() * k);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n) {
      throw DimensionError("select_rows: row " + std::to_string(indices[i]) + " out of range for " +
                           shape_string(x.shape()));
    }
    std::copy_n(x.data().data() + indices[i] * k, k, out.data() + i * k);
  }
  const bool track = tape.tracks({&x});
  Tensor y = tape.output({indices.size(), k}, std::move(out), track);
  if (track) {
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    tape.record({y}, [x, y, idx = std::move(idx), k](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      Buffer& gx = t.grad(x);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < k; ++j) gx[idx[i] * k + j] += gy[i * k + j];
      }
    });
  }
  return y;
}

Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no inputs");
  const std::size_t k = rows.front().numel();
  Buffer out(rows.size() * k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].numel() != k) {
      throw DimensionError("stack_rows: row sizes differ, " + shape_string(rows.front().shape()) +
                           " vs " + shape_string(rows[i].shape()));
    }
    std::copy_n(rows[i].data().data(), k, out.data() + i * k);
  }
  const bool track = tape.tracks(rows);
  Tensor y = tape.output({rows.size(), k}, std::move(out), track);
  if (track) {
    tape.record({y}, [rows, y, k](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].requires_grad()) continue;
        Buffer& gr = t.grad(rows[i]);
        for (std::size_t j = 0; j < k; ++j) gr[j] += gy[i * k + j];
      }
    });
  }
  return y;
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t k = parts.front().cols();
  std::size_t n = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != k) {
      throw DimensionError("concat_rows: column counts differ, " +
                           shape_string(parts.front().shape()) + " vs " + shape_string(p.shape()));
    }
    n += p.rows();
  }
  Buffer out(n * k);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.numel();
  }
  const bool track = tape.tracks(parts);
  Tensor y = tape.output({n, k}, std::move(out), track);
  if (track) {
    tape.record({y}, [parts, y](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      std::size_t off = 0;
      for (const Tensor& p : parts) {
        if (p.requires_grad()) {
          Buffer& gp = t.grad(p);
          for (std::size_t j = 0; j < p.numel(); ++j) gp[j] += gy[off + j];
        }
        off += p.numel();
      }
    });
  }
  return y;
}

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t k = x.cols();
  Buffer out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * k),
             x.data().begin() + static_cast<std::ptrdiff_t>(end * k));
  const bool track = tape.tracks({&x});
  Tensor y = tape.output({end - begin, k}, std::move(out), track);
  if (track) {
    tape.record({y}, [x, y, begin, k](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      Buffer& gx = t.grad(x);
      for (std::size_t j = 0; j < gy.size(); ++j) gx[begin * k + j] += gy[j];
    });
  }
  return y;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  const bool track = tape.tracks({&x});
  Tensor y = tape.output(std::move(shape), x.buffer(), track);
  if (track) {
    tape.record({y}, [x, y](Tape& t) { accumulate(t.grad(x), *t.grad_if_any(y)); });
  }
  return y;
}

Tensor conv1d_frames(Tape& tape, const Tensor& a, const Tensor& filters) {
  if (a.rows() != 1) {
    throw DimensionError("conv1d_frames: expected a weight vector, got " + shape_string(a.shape()));
  }
  const std::size_t len = a.cols();
  const std::size_t nf = filters.rows(), width = filters.cols();
  if (len == 0 || width == 0) throw DimensionError("conv1d_frames: empty input");
  const auto center = static_cast<std::ptrdiff_t>((width - 1) / 2);
  const auto L = static_cast<std::ptrdiff_t>(len);
  Buffer out(len * nf, 0.0);
  for (std::ptrdiff_t l = 0; l < L; ++l) {
    for (std::size_t f = 0; f < nf; ++f) {
      double acc = 0.0;
      for (std::size_t w = 0; w < width; ++w) {
        const std::ptrdiff_t src = l + center - static_cast<std::ptrdiff_t>(w);
        if (src >= 0 && src < L) acc += filters.at(f * width + w) * a.at(src);
      }
      out[l * nf + f] = acc;
    }
  }
  const bool track = tape.tracks({&a, &filters});
  Tensor y = tape.output({len, nf}, std::move(out), track);
  if (track) {
    tape.record({y}, [a, filters, y, len, nf, width, center](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      const auto L = static_cast<std::ptrdiff_t>(len);
      Buffer* ga = a.requires_grad() ? &t.grad(a) : nullptr;
      Buffer* gf = filters.requires_grad() ? &t.grad(filters) : nullptr;
      for (std::ptrdiff_t l = 0; l < L; ++l) {
        for (std::size_t f = 0; f < nf; ++f) {
          const double g = gy[l * nf + f];
          if (g == 0.0) continue;
          for (std::size_t w = 0; w < width; ++w) {
            const std::ptrdiff_t src = l + center - static_cast<std::ptrdiff_t>(w);
            if (src < 0 || src >= L) continue;
            if (ga) (*ga)[src] += g * filters.at(f * width + w);
            if (gf) (*gf)[f * width + w] += g * a.at(src);
          }
        }
      }
    });
  }
  return y;
}

LstmCellOutput lstm_cell(Tape& tape, const Tensor& gates, const Tensor& c_prev) {
  const std::size_t n = c_prev.rows(), c = c_prev.cols();
  if (gates.rows() != n || gates.cols() != 4 * c) {
    throw DimensionError("lstm_cell: gates " + shape_string(gates.shape()) +
                         " do not match cell state " + shape_string(c_prev.shape()));
  }
  // act holds the activated gates [i | f | g | o] for the backward pass.
  Buffer act(n * 4 * c), h(n * c), cell(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = gates.data().data() + r * 4 * c;
    double* av = act.data() + r * 4 * c;
    for (std::size_t j = 0; j < c; ++j) {
      const double i = 1.0 / (1.0 + std::exp(-z[j]));
      const double f = 1.0 / (1.0 + std::exp(-z[c + j]));
      const double g = std::tanh(z[2 * c + j]);
      const double o = 1.0 / (1.0 + std::exp(-z[3 * c + j]));
      av[j] = i;
      av[c + j] = f;
      av[2 * c + j] = g;
      av[3 * c + j] = o;
      const double cv = f * c_prev.at(r * c + j) + i * g;
      cell[r * c + j] = cv;
      h[r * c + j] = o * std::tanh(cv);
    }
  }
  const bool track = tape.tracks({&gates, &c_prev});
  Tensor h_out = tape.output({n, c}, std::move(h), track);
  Tensor c_out = tape.output({n, c}, std::move(cell), track);
  if (track) {
    tape.record({h_out, c_out}, [gates, c_prev, h_out, c_out, act = std::move(act), n, c](Tape& t) {
      const Buffer* gh = t.grad_if_any(h_out);
      const Buffer* gc = t.grad_if_any(c_out);
      Buffer* gz = gates.requires_grad() ? &t.grad(gates) : nullptr;
      Buffer* gcp = c_prev.requires_grad() ? &t.grad(c_prev) : nullptr;
      for (std::size_t r = 0; r < n; ++r) {
        const double* av = act.data() + r * 4 * c;
        for (std::size_t j = 0; j < c; ++j) {
          const std::size_t q = r * c + j;
          const double i = av[j], f = av[c + j], g = av[2 * c + j], o = av[3 * c + j];
          const double tc = std::tanh(c_out.at(q));
          const double dh = gh ? (*gh)[q] : 0.0;
          const double dc = (gc ? (*gc)[q] : 0.0) + dh * o * (1.0 - tc * tc);
          if (gz) {
            double* dz = gz->data() + r * 4 * c;
            dz[j] += dc * g * i * (1.0 - i);
            dz[c + j] += dc * c_prev.at(q) * f * (1.0 - f);
            dz[2 * c + j] += dc * i * (1.0 - g * g);
            dz[3 * c + j] += dh * tc * o * (1.0 - o);
          }
          if (gcp) (*gcp)[q] += dc * f;
        }
      }
    });
  }
  return {h_out, c_out};
}

namespace {

Tensor normalize_columns(Tape& tape, const Tensor& x, const Buffer& mean, const Buffer& var,
                         const Tensor& gamma, const Tensor& beta, double eps,
                         bool stats_depend_on_x) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("batch_norm: affine parameters " + shape_string(gamma.shape()) +
                         " do not match input " + shape_string(x.shape()));
  }
  Buffer inv_std(d), xhat(n * d), out(n * d);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = (x.at(i * d + j) - mean[j]) * inv_std[j];
      xhat[i * d + j] = v;
      out[i * d + j] = gamma.at(j) * v + beta.at(j);
    }
  }
  const bool track = tape.tracks({&x, &gamma, &beta});
  Tensor y = tape.output(x.shape(), std::move(out), track);
  if (track) {
    tape.record({y}, [x, gamma, beta, y, xhat = std::move(xhat), inv_std = std::move(inv_std), n,
                      d, stats_depend_on_x](Tape& t) {
      const Buffer& gy = *t.grad_if_any(y);
      if (gamma.requires_grad()) {
        Buffer& gg = t.grad(gamma);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < d; ++j) gg[j] += gy[i * d + j] * xhat[i * d + j];
        }
      }
      if (beta.requires_grad()) {
        Buffer& gb = t.grad(beta);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < d; ++j) gb[j] += gy[i * d + j];
        }
      }
      if (!x.requires_grad()) return;
      Buffer& gx = t.grad(x);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t j = 0; j < d; ++j) {
        const double gam = gamma.at(j);
        if (!stats_depend_on_x) {
          for (std::size_t i = 0; i < n; ++i) gx[i * d + j] += gy[i * d + j] * gam * inv_std[j];
          continue;
        }
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double dxh = gy[i * d + j] * gam;
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xhat[i * d + j];
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double dxh = gy[i * d + j] * gam;
          gx[i * d + j] +=
              inv_std[j] * (dxh - inv_n * sum_dxhat - xhat[i * d + j] * inv_n * sum_dxhat_xhat);
        }
      }
    });
  }
  return y;
}

}  // namespace

Tensor batch_norm_time(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps, ColumnMoments* moments) {
  const std::size_t n = x.rows(), d = x.cols();
  ColumnMoments m{Buffer(d, 0.0), Buffer(d, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += x.at(i * d + j);
  }
  for (std::size_t j = 0; j < d; ++j) m.mean[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = x.at(i * d + j) - m.mean[j];
      m.var[j] += dev * dev;
    }
  }
  for (std::size_t j = 0; j < d; ++j) m.var[j] /= static_cast<double>(n);
  Tensor y = normalize_columns(tape, x, m.mean, m.var, gamma, beta, eps, true);
  if (moments) *moments = std::move(m);
  return y;
}

Tensor batch_norm_fixed(Tape& tape, const Tensor& x, const ColumnMoments& moments,
                        const Tensor& gamma, const Tensor& beta, double eps) {
  if (moments.mean.size() != x.cols() || moments.var.size() != x.cols()) {
    throw DimensionError("batch_norm_fixed: statistics do not match input " +
                         shape_string(x.shape()));
  }
  return normalize_columns(tape, x, moments.mean, moments.var, gamma, beta, eps, false);
}

}  // namespace hasr
