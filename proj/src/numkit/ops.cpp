#include "offpolicy/numkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "offpolicy/errors.hpp"

namespace offpolicy::numkit {
namespace {

double* grad_of(const Tensor& t) { return t.storage()->grad.data(); }

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

template <typename Forward, typename Derivative>
Tensor unary(Tape& tape, const Tensor& a, Forward f, Derivative df) {
  std::vector<double> out(a.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return tape.record(a.shape(), std::move(out), {a}, [a, df](const TensorStorage& o) {
    double* ga = grad_of(a);
    const auto x = a.data();
    for (std::size_t i = 0; i < o.data.size(); ++i) ga[i] += o.grad[i] * df(x[i], o.data[i]);
  });
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return tape.record({m, n}, std::move(out), {a, b}, [a, b, m, k, n](const TensorStorage& o) {
    const double* g = o.grad.data();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    if (a.requires_grad()) {
      double* ga = grad_of(a);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = pb + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (b.requires_grad()) {
      double* gb = grad_of(b);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor transpose(Tape& tape, const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.at(i, j);
  }
  return tape.record({n, m}, std::move(out), {a}, [a, m, n](const TensorStorage& o) {
    double* ga = grad_of(a);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += o.grad[j * m + i];
    }
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return tape.record(a.shape(), std::move(out), {a, b}, [a, b](const TensorStorage& o) {
    if (a.requires_grad()) {
      double* ga = grad_of(a);
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    }
    if (b.requires_grad()) {
      double* gb = grad_of(b);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i];
    }
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return tape.record(a.shape(), std::move(out), {a, b}, [a, b](const TensorStorage& o) {
    if (a.requires_grad()) {
      double* ga = grad_of(a);
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    }
    if (b.requires_grad()) {
      double* gb = grad_of(b);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] -= o.grad[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return tape.record(a.shape(), std::move(out), {a, b}, [a, b](const TensorStorage& o) {
    if (a.requires_grad()) {
      double* ga = grad_of(a);
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * b[i];
    }
    if (b.requires_grad()) {
      double* gb = grad_of(b);
      for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i] += o.grad[i] * a[i];
    }
  });
}

Tensor add_row(Tape& tape, const Tensor& a, const Tensor& row) {
  const std::size_t m = a.rows(), n = a.cols();
  if (row.size() != n) {
    throw DimensionError("add_row: row " + shape_string(row.shape()) +
                         " does not broadcast over " + shape_string(a.shape()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a[i * n + j] + row[j];
  }
  return tape.record(a.shape(), std::move(out), {a, row}, [a, row, m, n](const TensorStorage& o) {
    if (a.requires_grad()) {
      double* ga = grad_of(a);
      for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
    }
    if (row.requires_grad()) {
      double* gr = grad_of(row);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gr[j] += o.grad[i * n + j];
      }
    }
  });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  return affine(tape, a, factor, 0.0);
}

Tensor affine(Tape& tape, const Tensor& a, double factor, double offset) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor + offset;
  return tape.record(a.shape(), std::move(out), {a}, [a, factor](const TensorStorage& o) {
    double* ga = grad_of(a);
    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i] * factor;
  });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(
      tape, a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor exp(Tape& tape, const Tensor& a) {
  return unary(
      tape, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor softmax(Tape& tape, const Tensor& x, int axis) {
  const std::size_t m = x.rows(), n = x.cols();
  if (axis == -1) axis = 1;
  if (axis != 0 && axis != 1) throw DimensionError("softmax: axis must be 0, 1 or -1");
  // Walk `lanes` independent vectors of length `len` spaced by `stride`.
  const std::size_t lanes = axis == 1 ? m : n;
  const std::size_t len = axis == 1 ? n : m;
  const std::size_t stride = axis == 1 ? 1 : n;
  const std::size_t lane_step = axis == 1 ? n : 1;
  std::vector<double> out(x.size());
  for (std::size_t l = 0; l < lanes; ++l) {
    const std::size_t base = l * lane_step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, x[base + i * stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(x[base + i * stride] - mx);
      out[base + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[base + i * stride] /= total;
  }
  return tape.record(x.shape(), std::move(out), {x},
                     [x, lanes, len, stride, lane_step](const TensorStorage& o) {
                       double* gx = grad_of(x);
                       for (std::size_t l = 0; l < lanes; ++l) {
                         const std::size_t base = l * lane_step;
                         double dot = 0.0;
                         for (std::size_t i = 0; i < len; ++i) {
                           const std::size_t idx = base + i * stride;
                           dot += o.grad[idx] * o.data[idx];
                         }
                         for (std::size_t i = 0; i < len; ++i) {
                           const std::size_t idx = base + i * stride;
                           gx[idx] += o.data[idx] * (o.grad[idx] - dot);
                         }
                       }
                     });
}

Tensor log_softmax(Tape& tape, const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = x.data().subspan(i * n, n);
    const double lse = log_sum_exp(row);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return tape.record(x.shape(), std::move(out), {x}, [x, m, n](const TensorStorage& o) {
    double* gx = grad_of(x);
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += o.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t idx = i * n + j;
        gx[idx] += o.grad[idx] - std::exp(o.data[idx]) * gsum;
      }
    }
  });
}

Tensor causal_softmax(Tape& tape, const Tensor& scores) {
  const std::size_t m = scores.rows(), n = scores.cols();
  if (m > n) throw DimensionError("causal_softmax: more query rows than key columns");
  // Queries are aligned with the last m keys.
  const std::size_t offset = n - m;
  std::vector<double> out(scores.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t visible = offset + i + 1;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < visible; ++j) mx = std::max(mx, scores[i * n + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < visible; ++j) {
      const double e = std::exp(scores[i * n + j] - mx);
      out[i * n + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < visible; ++j) out[i * n + j] /= total;
  }
  return tape.record(scores.shape(), std::move(out), {scores},
                     [scores, m, n, offset](const TensorStorage& o) {
                       double* gs = grad_of(scores);
                       for (std::size_t i = 0; i < m; ++i) {
                         const std::size_t visible = offset + i + 1;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < visible; ++j) {
                           dot += o.grad[i * n + j] * o.data[i * n + j];
                         }
                         for (std::size_t j = 0; j < visible; ++j) {
                           const std::size_t idx = i * n + j;
                           gs[idx] += o.data[idx] * (o.grad[idx] - dot);
                         }
                       }
                     });
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " vs input " + shape_string(x.shape()));
  }
  std::vector<double> out(x.size());
  std::vector<double> normed(x.size());
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = x[i * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = i * n + j;
      normed[idx] = (x[idx] - mu) * inv_std[i];
      out[idx] = normed[idx] * gain[j] + bias[j];
    }
  }
  return tape.record(
      x.shape(), std::move(out), {x, gain, bias},
      [x, gain, bias, m, n, normed = std::move(normed),
       inv_std = std::move(inv_std)](const TensorStorage& o) {
        if (gain.requires_grad() || bias.requires_grad()) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t idx = i * n + j;
              if (gain.requires_grad()) grad_of(gain)[j] += o.grad[idx] * normed[idx];
              if (bias.requires_grad()) grad_of(bias)[j] += o.grad[idx];
            }
          }
        }
        if (!x.requires_grad()) return;
        double* gx = grad_of(x);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = i * n + j;
            const double d = o.grad[idx] * gain[j];
            mean_d += d;
            mean_dx += d * normed[idx];
          }
          mean_d *= inv_n;
          mean_dx *= inv_n;
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = i * n + j;
            const double d = o.grad[idx] * gain[j];
            gx[idx] += inv_std[i] * (d - mean_d - normed[idx] * mean_dx);
          }
        }
      });
}

Tensor embedding(Tape& tape, const Tensor& table, std::span<const int> ids) {
  const std::size_t vocab = table.rows(), d = table.cols();
  if (ids.empty()) throw DimensionError("embedding: empty id list");
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside table " +
                           shape_string(table.shape()));
    }
    std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return tape.record({ids.size(), d}, std::move(out), {table},
                     [table, d, idv = std::move(idv)](const TensorStorage& o) {
                       double* gt = grad_of(table);
                       for (std::size_t i = 0; i < idv.size(); ++i) {
                         for (std::size_t j = 0; j < d; ++j) gt[idv[i] * d + j] += o.grad[i * d + j];
                       }
                     });
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.data().data() + i * w, w, out.data() + i * n + offset);
    }
    offset += w;
  }
  return tape.record({m, n}, std::move(out), parts, [parts, m, n](const TensorStorage& o) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.cols();
      if (p.requires_grad()) {
        double* gp = grad_of(p);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += o.grad[i * n + offset + j];
        }
      }
      offset += w;
    }
  });
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    }
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return tape.record({m, n}, std::move(out), parts, [parts](const TensorStorage& o) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) {
        double* gp = grad_of(p);
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += o.grad[offset + i];
      }
      offset += p.size();
    }
  });
}

Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.data().data() + i * n + begin, w, out.data() + i * w);
  }
  return tape.record({m, w}, std::move(out), {a}, [a, m, n, w, begin](const TensorStorage& o) {
    double* ga = grad_of(a);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += o.grad[i * w + j];
    }
  });
}

Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin >= end || end > m) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + shape_string(a.shape()));
  }
  std::vector<double> out(a.data().begin() + begin * n, a.data().begin() + end * n);
  return tape.record({end - begin, n}, std::move(out), {a}, [a, n, begin](const TensorStorage& o) {
    double* ga = grad_of(a) + begin * n;
    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[i] += o.grad[i];
  });
}

Tensor repeat_rows(Tape& tape, const Tensor& row, std::size_t count) {
  const std::size_t n = row.size();
  if (count == 0) throw DimensionError("repeat_rows: count must be positive");
  std::vector<double> out(count * n);
  for (std::size_t i = 0; i < count; ++i) std::copy_n(row.data().data(), n, out.data() + i * n);
  return tape.record({count, n}, std::move(out), {row}, [row, count, n](const TensorStorage& o) {
    double* gr = grad_of(row);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = 0; j < n; ++j) gr[j] += o.grad[i * n + j];
    }
  });
}

Tensor pick(Tape& tape, const Tensor& a, std::span<const int> cols) {
  const std::size_t m = a.rows(), n = a.cols();
  if (cols.size() != m) {
    throw DimensionError("pick: " + std::to_string(cols.size()) + " indices for " +
                         shape_string(a.shape()));
  }
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (cols[i] < 0 || static_cast<std::size_t>(cols[i]) >= n) {
      throw DimensionError("pick: index " + std::to_string(cols[i]) + " outside " +
                           shape_string(a.shape()));
    }
    out[i] = a[i * n + cols[i]];
  }
  std::vector<int> idx(cols.begin(), cols.end());
  return tape.record({1, m}, std::move(out), {a}, [a, n, idx = std::move(idx)](const TensorStorage& o) {
    double* ga = grad_of(a);
    for (std::size_t i = 0; i < idx.size(); ++i) ga[i * n + idx[i]] += o.grad[i];
  });
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return tape.record({1}, {total}, {a}, [a](const TensorStorage& o) {
    double* ga = grad_of(a);
    for (std::size_t i = 0; i < a.size(); ++i) ga[i] += o.grad[0];
  });
}

Tensor mean(Tape& tape, const Tensor& a) {
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.size()));
}

Tensor dot_const(Tape& tape, const Tensor& a, std::span<const double> weights) {
  if (weights.size() != a.size()) {
    throw DimensionError("dot_const: " + std::to_string(weights.size()) + " weights for " +
                         shape_string(a.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += a[i] * weights[i];
  std::vector<double> w(weights.begin(), weights.end());
  return tape.record({1}, {total}, {a}, [a, w = std::move(w)](const TensorStorage& o) {
    double* ga = grad_of(a);
    for (std::size_t i = 0; i < w.size(); ++i) ga[i] += o.grad[0] * w[i];
  });
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         shape_string(logits.shape()));
  }
  double total = 0.0;
  std::vector<double> lse(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= n) {
      throw DimensionError("cross_entropy: target " + std::to_string(targets[i]) + " outside " +
                           shape_string(logits.shape()));
    }
    lse[i] = log_sum_exp(logits.data().subspan(i * n, n));
    total += lse[i] - logits[i * n + targets[i]];
  }
  std::vector<int> tg(targets.begin(), targets.end());
  return tape.record({1}, {total}, {logits},
                     [logits, m, n, tg = std::move(tg), lse = std::move(lse)](const TensorStorage& o) {
                       double* gl = grad_of(logits);
                       const double g = o.grad[0];
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) {
                           const std::size_t idx = i * n + j;
                           gl[idx] += g * std::exp(logits[idx] - lse[i]);
                         }
                         gl[i * n + tg[i]] -= g;
                       }
                     });
}

double log_sum_exp(std::span<const double> x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double total = 0.0;
  for (double v : x) total += std::exp(v - mx);
  return mx + std::log(total);
}

std::vector<double> softmax_values(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : out) mx = std::max(mx, v);
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> log_softmax_values(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.begin(), logits.end());
  for (double& v : out) v -= lse;
  return out;
}

}  // namespace offpolicy::numkit
