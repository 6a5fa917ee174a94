#include "ser/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace ser::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Node* grad_input(Node& self, std::size_t i) {
  Node* in = self.inputs[i].get();
  return (in && in->requires_grad) ? in : nullptr;
}

// --- broadcasting -----------------------------------------------------------

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;  // per output axis, 0 where broadcast
  std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> aligned_strides(const Shape& in, std::size_t out_rank) {
  std::vector<std::size_t> strides(out_rank, 0);
  std::size_t s = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t axis = in.size() - 1 - i;
    const std::size_t out_axis = out_rank - 1 - i;
    strides[out_axis] = in[axis] == 1 ? 0 : s;
    s *= in[axis];
  }
  return strides;
}

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Broadcast bc;
  bc.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    bc.out[rank - 1 - i] = std::max(da, db);
  }
  bc.stride_a = aligned_strides(a, rank);
  bc.stride_b = aligned_strides(b, rank);
  return bc;
}

template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t rank = bc.out.size();
  const std::size_t total = shape_numel(bc.out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += bc.stride_a[d];
      ib += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      ia -= bc.stride_a[d] * idx[d];
      ib -= bc.stride_b[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryOp { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryOp op, const char* name) {
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  if (a.shape() == b.shape()) {
    Buffer out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = op == BinaryOp::add ? av[i] + bv[i] : op == BinaryOp::sub ? av[i] - bv[i] : av[i] * bv[i];
    }
    return make_result(a.shape(), std::move(out), {a, b}, [op](Node& self) {
      const auto& g = self.grad;
      Node* na = grad_input(self, 0);
      Node* nb = grad_input(self, 1);
      if (na) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          na->grad[i] += op == BinaryOp::mul ? g[i] * self.inputs[1]->value[i] : g[i];
        }
      }
      if (nb) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          nb->grad[i] += op == BinaryOp::mul ? g[i] * self.inputs[0]->value[i]
                         : op == BinaryOp::sub ? -g[i] : g[i];
        }
      }
    });
  }

  auto bc = broadcast(a.shape(), b.shape(), name);
  Buffer out(shape_numel(bc.out));
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    out[o] = op == BinaryOp::add ? av[ia] + bv[ib] : op == BinaryOp::sub ? av[ia] - bv[ib] : av[ia] * bv[ib];
  });
  Shape out_shape = bc.out;
  return make_result(std::move(out_shape), std::move(out), {a, b}, [op, bc](Node& self) {
    const auto& g = self.grad;
    Node* na = grad_input(self, 0);
    Node* nb = grad_input(self, 1);
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      if (na) na->grad[ia] += op == BinaryOp::mul ? g[o] * bv[ib] : g[o];
      if (nb) nb->grad[ib] += op == BinaryOp::mul ? g[o] * av[ia] : op == BinaryOp::sub ? -g[o] : g[o];
    });
  });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto& av = a.node()->value;
  Buffer out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return make_result(a.shape(), std::move(out), {a}, [deriv](Node& self) {
    Node* na = grad_input(self, 0);
    if (!na) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      na->grad[i] += self.grad[i] * deriv(na->value[i], self.value[i]);
    }
  });
}

std::size_t same_pad_left(std::size_t time, std::size_t out_time, std::size_t window, std::size_t stride) {
  const std::size_t needed = (out_time - 1) * stride + window;
  const std::size_t total = needed > time ? needed - time : 0;
  return total / 2;
}

// Runs a [batch, time, ch] op on a rank-2 input by adding and removing a unit batch.
template <typename F>
Tensor with_batch(const Tensor& x, const char* name, F&& f) {
  if (x.rank() == 3) return f(x);
  if (x.rank() == 2) {
    Tensor out = f(reshape(x, {1, x.dim(0), x.dim(1)}));
    Shape s(out.shape().begin() + 1, out.shape().end());
    return reshape(out, s);
  }
  throw ShapeError(std::string(name) + ": expected [batch, time, ch] or [time, ch], got " + shape_str(x.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::mul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({1}, {s}, {a}, [](Node& self) {
    if (Node* na = grad_input(self, 0)) {
      for (double& g : na->grad) g += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  Buffer out(static_cast<std::size_t>(m * n));
  MapMat(out.data(), m, n).noalias() = ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
  return make_result({a.dim(0), b.dim(1)}, std::move(out), {a, b}, [m, k, n](Node& self) {
    ConstMapMat g(self.grad.data(), m, n);
    if (Node* na = grad_input(self, 0)) {
      MapMat(na->grad.data(), m, k).noalias() += g * ConstMapMat(self.inputs[1]->value.data(), k, n).transpose();
    }
    if (Node* nb = grad_input(self, 1)) {
      MapMat(nb->grad.data(), k, n).noalias() += ConstMapMat(self.inputs[0]->value.data(), m, k).transpose() * g;
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw ShapeError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(first) + " on axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = out_shape[axis] * inner;

  Buffer out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    }
    offset += chunk;
  }
  return make_result(out_shape, std::move(out), parts, [outer, out_row, offsets](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      Node* in = grad_input(self, i);
      if (!in) continue;
      const std::size_t chunk = in->value.size() / outer;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < chunk; ++j) in->grad[o * chunk + j] += self.grad[o * out_row + offsets[i] + j];
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return make_result(std::move(shape), a.node()->value, {a}, [](Node& self) {
    if (Node* na = grad_input(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) na->grad[i] += self.grad[i];
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  Buffer out(a.numel());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
  }
  return make_result({c, r}, std::move(out), {a}, [r, c](Node& self) {
    if (Node* na = grad_input(self, 0)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) na->grad[i * c + j] += self.grad[j * r + i];
      }
    }
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= a.rank() || length == 0 || start + length > a.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") on axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t in_row = a.dim(axis) * inner;
  const std::size_t out_row = length * inner;
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  Buffer out(outer * out_row);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(o * in_row + start * inner), out_row,
                out.begin() + static_cast<std::ptrdiff_t>(o * out_row));
  }
  return make_result(std::move(out_shape), std::move(out), {a}, [=](Node& self) {
    if (Node* na = grad_input(self, 0)) {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < out_row; ++j) na->grad[o * in_row + start * inner + j] += self.grad[o * out_row + j];
      }
    }
  });
}

Tensor flip(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) throw ShapeError("flip: axis out of range for " + shape_str(a.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t len = a.dim(axis);
  std::vector<std::size_t> source(a.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t j = 0; j < inner; ++j) {
        source[(o * len + t) * inner + j] = (o * len + (len - 1 - t)) * inner + j;
      }
    }
  }
  Buffer out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[source[i]];
  return make_result(a.shape(), std::move(out), {a}, [source](Node& self) {
    if (Node* na = grad_input(self, 0)) {
      for (std::size_t i = 0; i < source.size(); ++i) na->grad[source[i]] += self.grad[i];
    }
  });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double v) { return v > 0.0 ? v : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) throw ShapeError("softmax: axis out of range for " + shape_str(a.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (std::size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t len = a.dim(axis);
  const auto& x = a.node()->value;
  Buffer y(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = o * len * inner + j;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, x[base + t * inner]);
      double z = 0.0;
      for (std::size_t t = 0; t < len; ++t) z += (y[base + t * inner] = std::exp(x[base + t * inner] - mx));
      for (std::size_t t = 0; t < len; ++t) y[base + t * inner] /= z;
    }
  }
  return make_result(a.shape(), std::move(y), {a}, [outer, inner, len](Node& self) {
    Node* na = grad_input(self, 0);
    if (!na) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t base = o * len * inner + j;
        double dot = 0.0;
        for (std::size_t t = 0; t < len; ++t) dot += self.grad[base + t * inner] * self.value[base + t * inner];
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t i = base + t * inner;
          na->grad[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor conv1d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride,
              Padding padding) {
  return with_batch(input, "conv1d", [&](const Tensor& x) {
    if (weights.rank() != 3 || weights.dim(1) != x.dim(2)) {
      throw ShapeError("conv1d: weights " + shape_str(weights.shape()) + " do not match input " + shape_str(x.shape()));
    }
    if (stride == 0) throw std::invalid_argument("conv1d: stride must be positive");
    const std::size_t batch = x.dim(0), time = x.dim(1), cin = x.dim(2);
    const std::size_t kernel = weights.dim(0), cout = weights.dim(2);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
      throw ShapeError("conv1d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(cout) + " filters");
    }
    std::size_t out_time, pad_left;
    if (padding == Padding::same) {
      out_time = (time + stride - 1) / stride;
      pad_left = same_pad_left(time, out_time, kernel, stride);
    } else {
      if (kernel > time) throw ShapeError("conv1d: kernel " + std::to_string(kernel) + " longer than input " + shape_str(x.shape()));
      out_time = (time - kernel) / stride + 1;
      pad_left = 0;
    }
    const std::size_t rows = batch * out_time;
    const std::size_t width = kernel * cin;
    Buffer cols(rows * width, 0.0);
    const auto& xv = x.node()->value;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < out_time; ++t) {
        double* row = cols.data() + (b * out_time + t) * width;
        for (std::size_t j = 0; j < kernel; ++j) {
          const long src = static_cast<long>(t * stride + j) - static_cast<long>(pad_left);
          if (src < 0 || src >= static_cast<long>(time)) continue;
          std::copy_n(xv.data() + (b * time + static_cast<std::size_t>(src)) * cin, cin, row + j * cin);
        }
      }
    }
    Buffer out(rows * cout);
    const auto r = static_cast<Eigen::Index>(rows);
    const auto w = static_cast<Eigen::Index>(width);
    const auto c = static_cast<Eigen::Index>(cout);
    MapMat out_m(out.data(), r, c);
    out_m.noalias() = ConstMapMat(cols.data(), r, w) * ConstMapMat(weights.data().data(), w, c);
    if (bias.defined()) out_m.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), c);

    std::vector<Tensor> inputs{x, weights};
    if (bias.defined()) inputs.push_back(bias);
    return make_result({batch, out_time, cout}, std::move(out), std::move(inputs),
                       [=, cols = std::move(cols)](Node& self) {
                         ConstMapMat g(self.grad.data(), r, c);
                         if (Node* nw = grad_input(self, 1)) {
                           MapMat(nw->grad.data(), w, c).noalias() += ConstMapMat(cols.data(), r, w).transpose() * g;
                         }
                         if (self.inputs.size() > 2) {
                           if (Node* nb = grad_input(self, 2)) {
                             Eigen::Map<Eigen::RowVectorXd>(nb->grad.data(), c) += g.colwise().sum();
                           }
                         }
                         if (Node* nx = grad_input(self, 0)) {
                           RowMat dcols = g * ConstMapMat(self.inputs[1]->value.data(), w, c).transpose();
                           for (std::size_t b = 0; b < batch; ++b) {
                             for (std::size_t t = 0; t < out_time; ++t) {
                               const double* row = dcols.data() + (b * out_time + t) * width;
                               for (std::size_t j = 0; j < kernel; ++j) {
                                 const long src = static_cast<long>(t * stride + j) - static_cast<long>(pad_left);
                                 if (src < 0 || src >= static_cast<long>(time)) continue;
                                 double* dst = nx->grad.data() + (b * time + static_cast<std::size_t>(src)) * cin;
                                 for (std::size_t ci = 0; ci < cin; ++ci) dst[ci] += row[j * cin + ci];
                               }
                             }
                           }
                         }
                       });
  });
}

Tensor maxpool1d(const Tensor& input, std::size_t pool, std::size_t stride) {
  if (pool == 0 || stride == 0) throw std::invalid_argument("maxpool1d: pool and stride must be positive");
  return with_batch(input, "maxpool1d", [&](const Tensor& x) {
    const std::size_t batch = x.dim(0), time = x.dim(1), ch = x.dim(2);
    const std::size_t out_time = (time + stride - 1) / stride;
    const std::size_t pad_left = same_pad_left(time, out_time, pool, stride);
    const auto& xv = x.node()->value;
    Buffer out(batch * out_time * ch, 0.0);
    std::vector<std::ptrdiff_t> argmax(out.size(), -1);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < out_time; ++t) {
        const long begin = static_cast<long>(t * stride) - static_cast<long>(pad_left);
        for (std::size_t c = 0; c < ch; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          std::ptrdiff_t best_i = -1;
          for (long j = begin; j < begin + static_cast<long>(pool); ++j) {
            if (j < 0 || j >= static_cast<long>(time)) continue;
            const auto i = static_cast<std::ptrdiff_t>((b * time + static_cast<std::size_t>(j)) * ch + c);
            if (best_i < 0 || xv[static_cast<std::size_t>(i)] > best) {
              best = xv[static_cast<std::size_t>(i)];
              best_i = i;
            }
          }
          const std::size_t o = (b * out_time + t) * ch + c;
          argmax[o] = best_i;
          out[o] = best_i >= 0 ? best : 0.0;
        }
      }
    }
    return make_result({batch, out_time, ch}, std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
      Node* nx = grad_input(self, 0);
      if (!nx) return;
      for (std::size_t o = 0; o < argmax.size(); ++o) {
        if (argmax[o] >= 0) nx->grad[static_cast<std::size_t>(argmax[o])] += self.grad[o];
      }
    });
  });
}

Tensor global_avg_pool1d(const Tensor& input) {
  if (input.rank() == 2) return reshape(global_avg_pool1d(reshape(input, {1, input.dim(0), input.dim(1)})), {input.dim(1)});
  if (input.rank() != 3) throw ShapeError("global_avg_pool1d: expected rank 3, got " + shape_str(input.shape()));
  const std::size_t batch = input.dim(0), time = input.dim(1), ch = input.dim(2);
  const auto& xv = input.node()->value;
  Buffer out(batch * ch, 0.0);
  const double inv = 1.0 / static_cast<double>(time);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < time; ++t) {
      for (std::size_t c = 0; c < ch; ++c) out[b * ch + c] += xv[(b * time + t) * ch + c];
    }
    for (std::size_t c = 0; c < ch; ++c) out[b * ch + c] *= inv;
  }
  return make_result({batch, ch}, std::move(out), {input}, [=](Node& self) {
    Node* nx = grad_input(self, 0);
    if (!nx) return;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < time; ++t) {
        for (std::size_t c = 0; c < ch; ++c) nx->grad[(b * time + t) * ch + c] += self.grad[b * ch + c] * inv;
      }
    }
  });
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& moving_mean,
                 Tensor& moving_var, Mode mode, double momentum, double eps) {
  if (x.rank() < 1 || x.numel() == 0) throw ShapeError("batchnorm: empty input");
  const std::size_t ch = x.shape().back();
  for (const Tensor* p : {&gamma, &beta, static_cast<const Tensor*>(&moving_mean), static_cast<const Tensor*>(&moving_var)}) {
    if (p->numel() != ch) {
      throw ShapeError("batchnorm: parameter of shape " + shape_str(p->shape()) + " does not match " +
                       std::to_string(ch) + " channels of " + shape_str(x.shape()));
    }
  }
  const std::size_t rows = x.numel() / ch;
  if (x.rank() < 2 || x.dim(0) == 0) throw ShapeError("batchnorm: batch of size 0");
  const auto& xv = x.node()->value;

  Buffer mu(ch, 0.0), invstd(ch, 0.0);
  if (mode == Mode::train) {
    Buffer var(ch, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < ch; ++c) mu[c] += xv[r * ch + c];
    }
    for (double& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = xv[r * ch + c] - mu[c];
        var[c] += d * d;
      }
    }
    for (double& v : var) v /= static_cast<double>(rows);
    auto mm = moving_mean.mutable_data();
    auto mv = moving_var.mutable_data();
    for (std::size_t c = 0; c < ch; ++c) {
      invstd[c] = 1.0 / std::sqrt(var[c] + eps);
      mm[c] = momentum * mm[c] + (1.0 - momentum) * mu[c];
      mv[c] = momentum * mv[c] + (1.0 - momentum) * var[c];
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mu[c] = moving_mean.data()[c];
      invstd[c] = 1.0 / std::sqrt(moving_var.data()[c] + eps);
    }
  }

  Buffer xhat(xv.size()), out(xv.size());
  const auto& gv = gamma.node()->value;
  const auto& bv = beta.node()->value;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      xhat[i] = (xv[i] - mu[c]) * invstd[c];
      out[i] = gv[c] * xhat[i] + bv[c];
    }
  }
  const bool batch_stats = mode == Mode::train;
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
                     [rows, ch, batch_stats, invstd = std::move(invstd), xhat = std::move(xhat)](Node& self) {
                       const auto& g = self.grad;
                       Node* nx = grad_input(self, 0);
                       Node* ng = grad_input(self, 1);
                       Node* nb = grad_input(self, 2);
                       Buffer sum_g(ch, 0.0), sum_gx(ch, 0.0);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < ch; ++c) {
                           sum_g[c] += g[r * ch + c];
                           sum_gx[c] += g[r * ch + c] * xhat[r * ch + c];
                         }
                       }
                       if (ng) for (std::size_t c = 0; c < ch; ++c) ng->grad[c] += sum_gx[c];
                       if (nb) for (std::size_t c = 0; c < ch; ++c) nb->grad[c] += sum_g[c];
                       if (!nx) return;
                       const auto& gamma_v = self.inputs[1]->value;
                       const double inv_rows = 1.0 / static_cast<double>(rows);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < ch; ++c) {
                           const std::size_t i = r * ch + c;
                           const double scale_c = gamma_v[c] * invstd[c];
                           if (batch_stats) {
                             nx->grad[i] += scale_c * (g[i] - inv_rows * sum_g[c] - xhat[i] * inv_rows * sum_gx[c]);
                           } else {
                             nx->grad[i] += scale_c * g[i];
                           }
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (mode == Mode::infer || rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale_kept = 1.0 / (1.0 - rate);
  Buffer mask(x.numel());
  for (double& m : mask) m = keep(rng) ? scale_kept : 0.0;
  Buffer out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    if (Node* nx = grad_input(self, 0)) {
      for (std::size_t i = 0; i < mask.size(); ++i) nx->grad[i] += self.grad[i] * mask[i];
    }
  });
}

namespace {

void check_one_hot(const Tensor& y, const Shape& expected, const char* op) {
  if (y.shape() != expected) {
    throw ShapeError(std::string(op) + ": targets " + shape_str(y.shape()) + " do not match " + shape_str(expected));
  }
  const std::size_t classes = expected[1];
  for (std::size_t r = 0; r < expected[0]; ++r) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double v = y.data()[r * classes + c];
      if (v == 1.0) ++ones;
      else if (v != 0.0) ones = 2;
    }
    if (ones != 1) throw std::invalid_argument(std::string(op) + ": row " + std::to_string(r) + " is not one-hot");
  }
}

}  // namespace

Tensor cross_entropy(const Tensor& probs, const Tensor& target) {
  if (probs.rank() != 2) throw ShapeError("cross_entropy: expected [batch, classes], got " + shape_str(probs.shape()));
  check_one_hot(target, probs.shape(), "cross_entropy");
  const std::size_t batch = probs.dim(0), classes = probs.dim(1);
  constexpr double kFloor = 1e-12;
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = probs.data()[r * classes + c];
      row_sum += p;
      loss -= target.data()[r * classes + c] * std::log(std::max(p, kFloor));
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw std::invalid_argument("cross_entropy: probability row " + std::to_string(r) + " does not sum to 1");
    }
  }
  loss /= static_cast<double>(batch);
  return make_result({1}, {loss}, {probs, target}, [batch](Node& self) {
    Node* np = grad_input(self, 0);
    if (!np) return;
    const auto& y = self.inputs[1]->value;
    const double g = self.grad[0] / static_cast<double>(batch);
    for (std::size_t i = 0; i < np->value.size(); ++i) {
      const double p = np->value[i];
      if (p > kFloor && y[i] != 0.0) np->grad[i] -= g * y[i] / p;
    }
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& target) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: expected [batch, classes], got " + shape_str(logits.shape()));
  check_one_hot(target, logits.shape(), "softmax_cross_entropy");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  Buffer probs(logits.numel());
  double loss = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* z = logits.data().data() + r * classes;
    const double mx = *std::max_element(z, z + classes);
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += (probs[r * classes + c] = std::exp(z[c] - mx));
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] /= s;
      loss -= target.data()[r * classes + c] * (z[c] - lse);
    }
  }
  loss /= static_cast<double>(batch);
  return make_result({1}, {loss}, {logits, target}, [batch, probs = std::move(probs)](Node& self) {
    Node* nz = grad_input(self, 0);
    if (!nz) return;
    const auto& y = self.inputs[1]->value;
    const double g = self.grad[0] / static_cast<double>(batch);
    for (std::size_t i = 0; i < probs.size(); ++i) nz->grad[i] += g * (probs[i] - y[i]);
  });
}

Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t n_classes) {
  if (labels.empty()) throw ShapeError("one_hot: no labels");
  Buffer v(labels.size() * n_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) throw std::out_of_range("one_hot: label " + std::to_string(labels[i]) + " out of range");
    v[i * n_classes + labels[i]] = 1.0;
  }
  return Tensor::from({labels.size(), n_classes}, std::move(v));
}

}  // namespace ser::ad
