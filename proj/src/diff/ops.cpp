#include "stgnn/diff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "stgnn/errors.hpp"

namespace stgnn::diff {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (grad_enabled()) {
    bool any = false;
    for (const auto* in : inputs) {
      if (in && in->defined() && in->requires_grad()) any = true;
    }
    if (any) {
      node->requires_grad = true;
      for (const auto* in : inputs) {
        node->parents.push_back(in && in->defined() ? in->node_ptr() : nullptr);
      }
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor<T>(std::move(node));
}

// Grad buffer of parent i, or nullptr when it takes no gradient.
template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  if (!p || !p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

template <typename T>
const std::vector<T>& parent_data(Node<T>& self, std::size_t i) {
  return self.parents[i]->data;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(a.shape()));
  }
}

}  // namespace

Conv1dGeometry Conv1dGeometry::symmetric(std::size_t padding, std::size_t stride,
                                         std::size_t dilation) {
  return {stride, padding, padding, dilation};
}

Conv1dGeometry Conv1dGeometry::causal(std::size_t kernel, std::size_t stride,
                                      std::size_t dilation) {
  return {stride, (kernel - 1) * dilation, 0, dilation};
}

std::size_t Conv1dGeometry::output_length(std::size_t length, std::size_t kernel) const {
  if (kernel < 1 || stride < 1 || dilation < 1) {
    throw GeometryError("conv1d: kernel, stride and dilation must be >= 1");
  }
  const long long span = static_cast<long long>(dilation * (kernel - 1) + 1);
  const long long padded = static_cast<long long>(length + pad_left + pad_right);
  if (padded < span) {
    throw GeometryError("conv1d: input length " + std::to_string(length) +
                        " too short for receptive field " + std::to_string(span));
  }
  return static_cast<std::size_t>((padded - span) / static_cast<long long>(stride)) + 1;
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (T* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [](Node<T>& self) {
    const auto& xa = parent_data(self, 0);
    const auto& xb = parent_data(self, 1);
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * xb[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * xa[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>(a.shape(), std::move(out), {&a}, [factor](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * da[i];
  return make_result<T>(a.shape(), std::move(out), {&a}, [](Node<T>& self) {
    const auto& x = parent_data(self, 0);
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += T(2) * x[i] * self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] > T(0) ? da[i] : T(0);
  return make_result<T>(a.shape(), std::move(out), {&a}, [](Node<T>& self) {
    const auto& x = parent_data(self, 0);
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (x[i] > T(0)) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = da[i];
    if (x >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T(1) + e);
    }
  }
  return make_result<T>(a.shape(), std::move(out), {&a}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T y = self.data[i];
        g[i] += self.grad[i] * y * (T(1) - y);
      }
    }
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double rate, bool train, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("dropout rate must lie in [0, 1]");
  if (!train || rate == 0.0) return a;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const T keep_scale = rate >= 1.0 ? T(0) : static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(a.numel());
  for (auto& m : mask) m = uniform(rng) < rate ? T(0) : keep_scale;
  std::vector<T> out(a.numel());
  auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * mask[i];
  return make_result<T>(a.shape(), std::move(out), {&a},
                        [mask = std::move(mask)](Node<T>& self) {
                          if (T* g = parent_grad(self, 0)) {
                            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                              g[i] += self.grad[i] * mask[i];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  if (a.rank() < 1) throw DimensionError("softmax_rows: scalar input");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = cols ? a.numel() / cols : 0;
  std::vector<T> out(a.numel());
  auto da = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = da.data() + r * cols;
    T* y = out.data() + r * cols;
    const T m = *std::max_element(x, x + cols);
    T total = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(x[c] - m);
      total += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  return make_result<T>(a.shape(), std::move(out), {&a}, [rows, cols](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = self.data.data() + r * cols;
        const T* dy = self.grad.data() + r * cols;
        T dot = 0;
        for (std::size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += y[c] * (dy[c] - dot);
      }
    }
  });
}

// ----------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.data()) total += v;
  return make_result<T>({}, {total}, {&a}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->data.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  if (a.numel() == 0) throw DimensionError("mean_all: empty tensor");
  return scale(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> mean_over_axis(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) throw DimensionError("mean_over_axis: axis out of range");
  const auto& shape = a.shape();
  const std::size_t extent = shape[axis];
  if (extent == 0) throw DimensionError("mean_over_axis: empty axis");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  Shape out_shape;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out_shape.push_back(shape[i]);
  }
  std::vector<T> out(outer * inner, T(0));
  auto da = a.data();
  const T inv = T(1) / static_cast<T>(extent);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < extent; ++k) {
      const T* src = da.data() + (o * extent + k) * inner;
      T* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  for (auto& v : out) v *= inv;
  return make_result<T>(std::move(out_shape), std::move(out), {&a},
                        [outer, extent, inner, inv](Node<T>& self) {
                          if (T* g = parent_grad(self, 0)) {
                            for (std::size_t o = 0; o < outer; ++o) {
                              const T* dy = self.grad.data() + o * inner;
                              for (std::size_t k = 0; k < extent; ++k) {
                                T* dst = g + (o * extent + k) * inner;
                                for (std::size_t i = 0; i < inner; ++i) dst[i] += dy[i] * inv;
                              }
                            }
                          }
                        });
}

// ---------------------------------------------------------------------- shape

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_result<T>(std::move(shape), std::move(out), {&a}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> flatten(const Tensor<T>& a) {
  if (a.rank() < 1) throw DimensionError("flatten: scalar input");
  const std::size_t lead = a.dim(0);
  return reshape(a, {lead, lead ? a.numel() / lead : 0});
}

template <typename T>
Tensor<T> transpose_last(const Tensor<T>& a) {
  if (a.rank() != 2 && a.rank() != 3) throw DimensionError("transpose_last: rank 2 or 3 only");
  const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t m = a.dim(a.rank() - 2);
  const std::size_t n = a.dim(a.rank() - 1);
  Shape out_shape = a.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  std::vector<T> out(a.numel());
  auto da = a.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[b * m * n + j * m + i] = da[b * m * n + i * n + j];
    }
  }
  return make_result<T>(std::move(out_shape), std::move(out), {&a},
                        [batch, m, n](Node<T>& self) {
                          if (T* g = parent_grad(self, 0)) {
                            for (std::size_t b = 0; b < batch; ++b) {
                              for (std::size_t i = 0; i < m; ++i) {
                                for (std::size_t j = 0; j < n; ++j) {
                                  g[b * m * n + i * n + j] += self.grad[b * m * n + j * m + i];
                                }
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_last: no inputs");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw DimensionError("concat_last: scalar input");
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size() ||
        !std::equal(first.begin(), first.end() - 1, p.shape().begin())) {
      throw DimensionError("concat_last: leading shapes differ");
    }
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = first.back() ? parts.front().numel() / first.back() : 0;
  Shape out_shape = first;
  out_shape.back() = total;
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto d = parts[p].data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(d.data() + r * widths[p], widths[p], out.data() + r * total + offset);
    }
    offset += widths[p];
  }

  // Variable arity: wire parents by hand.
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(out_shape);
  node->data = std::move(out);
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (grad_enabled() && any) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.node_ptr());
    node->backward_fn = [widths, rows, total](Node<T>& self) {
      std::size_t off = 0;
      for (std::size_t p = 0; p < widths.size(); ++p) {
        if (T* g = parent_grad(self, p)) {
          for (std::size_t r = 0; r < rows; ++r) {
            const T* src = self.grad.data() + r * total + off;
            T* dst = g + r * widths[p];
            for (std::size_t c = 0; c < widths[p]; ++c) dst[c] += src[c];
          }
        }
        off += widths[p];
      }
    };
  }
  return Tensor<T>(std::move(node));
}

// --------------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  }
  std::vector<T> out(m * n);
  MatMap<T>(out.data(), m, n).noalias() =
      ConstMatMap<T>(a.data().data(), m, k) * ConstMatMap<T>(b.data().data(), k, n);
  return make_result<T>({m, n}, std::move(out), {&a, &b}, [m, k, n](Node<T>& self) {
    ConstMatMap<T> dy(self.grad.data(), m, n);
    if (T* g = parent_grad(self, 0)) {
      MatMap<T>(g, m, k).noalias() += dy * ConstMatMap<T>(parent_data(self, 1).data(), k, n).transpose();
    }
    if (T* g = parent_grad(self, 1)) {
      MatMap<T>(g, k, n).noalias() += ConstMatMap<T>(parent_data(self, 0).data(), m, k).transpose() * dy;
    }
  });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw DimensionError("bmm: " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  }
  std::vector<T> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MatMap<T>(out.data() + i * m * n, m, n).noalias() =
        ConstMatMap<T>(a.data().data() + i * m * k, m, k) *
        ConstMatMap<T>(b.data().data() + i * k * n, k, n);
  }
  return make_result<T>({batch, m, n}, std::move(out), {&a, &b}, [batch, m, k, n](Node<T>& self) {
    T* ga = parent_grad(self, 0);
    T* gb = parent_grad(self, 1);
    const auto& xa = parent_data(self, 0);
    const auto& xb = parent_data(self, 1);
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMatMap<T> dy(self.grad.data() + i * m * n, m, n);
      if (ga) {
        MatMap<T>(ga + i * m * k, m, k).noalias() +=
            dy * ConstMatMap<T>(xb.data() + i * k * n, k, n).transpose();
      }
      if (gb) {
        MatMap<T>(gb + i * k * n, k, n).noalias() +=
            ConstMatMap<T>(xa.data() + i * m * k, m, k).transpose() * dy;
      }
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(weight, 2, "linear");
  if (x.rank() < 1) throw DimensionError("linear: scalar input");
  const std::size_t in = weight.dim(1), out_dim = weight.dim(0);
  if (x.shape().back() != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    throw DimensionError("linear: bias shape " + shape_str(bias.shape()));
  }
  const std::size_t rows = in ? x.numel() / in : 0;
  std::vector<T> out(rows * out_dim);
  MatMap<T> y(out.data(), rows, out_dim);
  y.noalias() = ConstMatMap<T>(x.data().data(), rows, in) *
                ConstMatMap<T>(weight.data().data(), out_dim, in).transpose();
  if (bias.defined()) {
    y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data().data(), out_dim);
  }
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  return make_result<T>(std::move(out_shape), std::move(out), {&x, &weight, &bias},
                        [rows, in, out_dim](Node<T>& self) {
                          ConstMatMap<T> dy(self.grad.data(), rows, out_dim);
                          if (T* g = parent_grad(self, 0)) {
                            MatMap<T>(g, rows, in).noalias() +=
                                dy * ConstMatMap<T>(parent_data(self, 1).data(), out_dim, in);
                          }
                          if (T* g = parent_grad(self, 1)) {
                            MatMap<T>(g, out_dim, in).noalias() +=
                                dy.transpose() * ConstMatMap<T>(parent_data(self, 0).data(), rows, in);
                          }
                          if (self.parents[2]) {
                            if (T* g = parent_grad(self, 2)) {
                              Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(g, out_dim) +=
                                  dy.colwise().sum();
                            }
                          }
                        });
}

// --------------------------------------------------------------------- conv1d

namespace {

struct ConvDims {
  std::size_t batch, c_in, length, c_out, kernel, l_out;
};

// Rows per im2col chunk so the column buffer stays near 4M elements.
inline std::size_t conv_chunk_rows(const ConvDims& d) {
  const std::size_t per_row = std::max<std::size_t>(1, d.c_in * d.kernel * d.l_out);
  return std::clamp<std::size_t>((std::size_t{1} << 22) / per_row, 1, std::max<std::size_t>(1, d.batch));
}

template <typename T>
void im2col(const T* x, const ConvDims& d, const Conv1dGeometry& geo, std::size_t b0,
            std::size_t nb, T* col) {
  const std::size_t width = nb * d.l_out;
  for (std::size_t ci = 0; ci < d.c_in; ++ci) {
    for (std::size_t k = 0; k < d.kernel; ++k) {
      T* dst = col + (ci * d.kernel + k) * width;
      const long long offset = static_cast<long long>(k * geo.dilation) - static_cast<long long>(geo.pad_left);
      for (std::size_t bi = 0; bi < nb; ++bi) {
        const T* src = x + ((b0 + bi) * d.c_in + ci) * d.length;
        T* row = dst + bi * d.l_out;
        for (std::size_t t = 0; t < d.l_out; ++t) {
          const long long pos = static_cast<long long>(t * geo.stride) + offset;
          row[t] = (pos >= 0 && pos < static_cast<long long>(d.length)) ? src[pos] : T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, const Conv1dGeometry& geo, std::size_t b0,
                std::size_t nb, T* dx) {
  const std::size_t width = nb * d.l_out;
  for (std::size_t ci = 0; ci < d.c_in; ++ci) {
    for (std::size_t k = 0; k < d.kernel; ++k) {
      const T* src = col + (ci * d.kernel + k) * width;
      const long long offset = static_cast<long long>(k * geo.dilation) - static_cast<long long>(geo.pad_left);
      for (std::size_t bi = 0; bi < nb; ++bi) {
        T* dst = dx + ((b0 + bi) * d.c_in + ci) * d.length;
        const T* row = src + bi * d.l_out;
        for (std::size_t t = 0; t < d.l_out; ++t) {
          const long long pos = static_cast<long long>(t * geo.stride) + offset;
          if (pos >= 0 && pos < static_cast<long long>(d.length)) dst[pos] += row[t];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv1dGeometry& geometry) {
  require_rank(input, 3, "conv1d");
  require_rank(weight, 3, "conv1d");
  ConvDims d{input.dim(0), input.dim(1), input.dim(2), weight.dim(0), weight.dim(2), 0};
  if (weight.dim(1) != d.c_in) {
    throw DimensionError("conv1d: input channels " + std::to_string(d.c_in) +
                         " vs weight " + shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.c_out)) {
    throw DimensionError("conv1d: bias shape " + shape_str(bias.shape()));
  }
  d.l_out = geometry.output_length(d.length, d.kernel);

  const std::size_t cols = d.c_in * d.kernel;
  const std::size_t chunk = conv_chunk_rows(d);
  std::vector<T> out(d.batch * d.c_out * d.l_out);
  std::vector<T> col(cols * chunk * d.l_out);
  RowMat<T> product;
  ConstMatMap<T> w(weight.data().data(), d.c_out, cols);
  for (std::size_t b0 = 0; b0 < d.batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, d.batch - b0);
    const std::size_t width = nb * d.l_out;
    im2col(input.data().data(), d, geometry, b0, nb, col.data());
    product.noalias() = w * ConstMatMap<T>(col.data(), cols, width);
    for (std::size_t bi = 0; bi < nb; ++bi) {
      for (std::size_t co = 0; co < d.c_out; ++co) {
        const T shift = bias.defined() ? bias.data()[co] : T(0);
        T* dst = out.data() + ((b0 + bi) * d.c_out + co) * d.l_out;
        const T* src = product.data() + co * width + bi * d.l_out;
        for (std::size_t t = 0; t < d.l_out; ++t) dst[t] = src[t] + shift;
      }
    }
  }

  return make_result<T>({d.batch, d.c_out, d.l_out}, std::move(out), {&input, &weight, &bias},
                        [d, geometry](Node<T>& self) {
                          T* gx = parent_grad(self, 0);
                          T* gw = parent_grad(self, 1);
                          T* gb = self.parents[2] ? parent_grad(self, 2) : nullptr;
                          const std::size_t cols = d.c_in * d.kernel;
                          const std::size_t chunk = conv_chunk_rows(d);
                          const auto& x = parent_data(self, 0);
                          ConstMatMap<T> w(parent_data(self, 1).data(), d.c_out, cols);
                          std::vector<T> col(cols * chunk * d.l_out);
                          RowMat<T> dy_chunk, dcol;
                          for (std::size_t b0 = 0; b0 < d.batch; b0 += chunk) {
                            const std::size_t nb = std::min(chunk, d.batch - b0);
                            const std::size_t width = nb * d.l_out;
                            dy_chunk.resize(d.c_out, width);
                            for (std::size_t bi = 0; bi < nb; ++bi) {
                              for (std::size_t co = 0; co < d.c_out; ++co) {
                                const T* src = self.grad.data() + ((b0 + bi) * d.c_out + co) * d.l_out;
                                std::copy_n(src, d.l_out, dy_chunk.data() + co * width + bi * d.l_out);
                              }
                            }
                            if (gb) {
                              for (std::size_t co = 0; co < d.c_out; ++co) gb[co] += dy_chunk.row(co).sum();
                            }
                            if (gw) {
                              im2col(x.data(), d, geometry, b0, nb, col.data());
                              MatMap<T>(gw, d.c_out, cols).noalias() +=
                                  dy_chunk * ConstMatMap<T>(col.data(), cols, width).transpose();
                            }
                            if (gx) {
                              dcol.noalias() = w.transpose() * dy_chunk;
                              col2im_add(dcol.data(), d, geometry, b0, nb, gx);
                            }
                          }
                        });
}

// ------------------------------------------------------------------ batchnorm

template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool train, T epsilon,
                      T momentum) {
  if (input.rank() != 2 && input.rank() != 3) {
    throw DimensionError("batchnorm1d: expected [B x C] or [B x C x L], got " +
                         shape_str(input.shape()));
  }
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t length = input.rank() == 3 ? input.dim(2) : 1;
  for (const Tensor<T>* p : std::initializer_list<const Tensor<T>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (p->numel() != channels) throw DimensionError("batchnorm1d: per-channel buffer size mismatch");
  }
  const std::size_t count = batch * length;
  if (train && count < 2) {
    throw DegenerateError("batchnorm1d: train mode needs at least 2 values per channel");
  }

  auto x = input.data();
  std::vector<T> mean(channels), inv_std(channels);
  if (train) {
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* row = x.data() + (b * channels + c) * length;
        for (std::size_t t = 0; t < length; ++t) s += row[t];
      }
      const double mu = s / static_cast<double>(count);
      double v = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* row = x.data() + (b * channels + c) * length;
        for (std::size_t t = 0; t < length; ++t) v += (row[t] - mu) * (row[t] - mu);
      }
      const double biased = v / static_cast<double>(count);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(biased + static_cast<double>(epsilon)));
      auto rm = running_mean.data();
      auto rv = running_var.data();
      rm[c] = (T(1) - momentum) * rm[c] + momentum * static_cast<T>(mu);
      rv[c] = (T(1) - momentum) * rv[c] +
              momentum * static_cast<T>(v / static_cast<double>(count - 1));
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = running_mean.data()[c];
      inv_std[c] = T(1) / std::sqrt(running_var.data()[c] + epsilon);
    }
  }

  std::vector<T> xhat(input.numel()), out(input.numel());
  auto g = gamma.data();
  auto bt = beta.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * length;
      for (std::size_t t = 0; t < length; ++t) {
        xhat[base + t] = (x[base + t] - mean[c]) * inv_std[c];
        out[base + t] = g[c] * xhat[base + t] + bt[c];
      }
    }
  }

  return make_result<T>(
      input.shape(), std::move(out), {&input, &gamma, &beta},
      [batch, channels, length, count, train, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](Node<T>& self) {
        T* gx = parent_grad(self, 0);
        T* gg = parent_grad(self, 1);
        T* gbeta = parent_grad(self, 2);
        const auto& gamma_v = parent_data(self, 1);
        for (std::size_t c = 0; c < channels; ++c) {
          T sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * length;
            for (std::size_t t = 0; t < length; ++t) {
              sum_dy += self.grad[base + t];
              sum_dy_xhat += self.grad[base + t] * xhat[base + t];
            }
          }
          if (gg) gg[c] += sum_dy_xhat;
          if (gbeta) gbeta[c] += sum_dy;
          if (!gx) continue;
          const T scale_c = gamma_v[c] * inv_std[c];
          const T n = static_cast<T>(count);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * length;
            for (std::size_t t = 0; t < length; ++t) {
              const T dy = self.grad[base + t];
              gx[base + t] += train ? scale_c * (dy - sum_dy / n - xhat[base + t] * sum_dy_xhat / n)
                                    : scale_c * dy;
            }
          }
        }
      });
}

// ---------------------------------------------------------------- weight norm

template <typename T>
Tensor<T> weight_norm(const Tensor<T>& direction, const Tensor<T>& gain) {
  if (direction.rank() < 1) throw DimensionError("weight_norm: scalar direction");
  const std::size_t rows = direction.dim(0);
  if (gain.numel() != rows) {
    throw DimensionError("weight_norm: gain length " + std::to_string(gain.numel()) +
                         " vs " + std::to_string(rows) + " output channels");
  }
  constexpr T kGuard = T(1e-12);
  const std::size_t width = rows ? direction.numel() / rows : 0;
  auto v = direction.data();
  auto g = gain.data();
  std::vector<T> norms(rows), out(direction.numel());
  for (std::size_t o = 0; o < rows; ++o) {
    T s = 0;
    for (std::size_t j = 0; j < width; ++j) s += v[o * width + j] * v[o * width + j];
    norms[o] = std::sqrt(s);
    const T factor = g[o] / (norms[o] + kGuard);
    for (std::size_t j = 0; j < width; ++j) out[o * width + j] = factor * v[o * width + j];
  }
  return make_result<T>(direction.shape(), std::move(out), {&direction, &gain},
                        [rows, width, norms = std::move(norms)](Node<T>& self) {
                          const auto& v = parent_data(self, 0);
                          const auto& g = parent_data(self, 1);
                          T* gv = parent_grad(self, 0);
                          T* gg = parent_grad(self, 1);
                          for (std::size_t o = 0; o < rows; ++o) {
                            const T s = norms[o] + kGuard;
                            T dot = 0;
                            for (std::size_t j = 0; j < width; ++j) {
                              dot += self.grad[o * width + j] * v[o * width + j];
                            }
                            if (gg) gg[o] += dot / s;
                            if (!gv) continue;
                            const T radial = norms[o] > T(0) ? g[o] * dot / (norms[o] * s * s) : T(0);
                            for (std::size_t j = 0; j < width; ++j) {
                              gv[o * width + j] +=
                                  g[o] / s * self.grad[o * width + j] - radial * v[o * width + j];
                            }
                          }
                        });
}

// ------------------------------------------------------------- graph helpers

template <typename T>
Tensor<T> row_normalize_clamped(const Tensor<T>& a) {
  require_rank(a, 3, "row_normalize_clamped");
  const std::size_t batch = a.dim(0), n = a.dim(1), m = a.dim(2);
  auto x = a.data();
  std::vector<T> sums(batch * n), out(a.numel());
  for (std::size_t r = 0; r < batch * n; ++r) {
    T s = 0;
    for (std::size_t j = 0; j < m; ++j) s += x[r * m + j];
    sums[r] = s;
    const T denom = std::max(s, T(1));
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] = x[r * m + j] / denom;
  }
  return make_result<T>(a.shape(), std::move(out), {&a},
                        [batch, n, m, sums = std::move(sums)](Node<T>& self) {
                          T* g = parent_grad(self, 0);
                          if (!g) return;
                          const auto& x = parent_data(self, 0);
                          for (std::size_t r = 0; r < batch * n; ++r) {
                            const T* dy = self.grad.data() + r * m;
                            if (sums[r] > T(1)) {
                              const T s = sums[r];
                              T dot = 0;
                              for (std::size_t j = 0; j < m; ++j) dot += dy[j] * x[r * m + j];
                              for (std::size_t j = 0; j < m; ++j) g[r * m + j] += dy[j] / s - dot / (s * s);
                            } else {
                              for (std::size_t j = 0; j < m; ++j) g[r * m + j] += dy[j];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> frobenius_norm(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v * v;
  const T norm = std::sqrt(s);
  return make_result<T>({}, {norm}, {&a}, [norm](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      if (norm == T(0)) return;
      const auto& x = parent_data(self, 0);
      for (std::size_t i = 0; i < x.size(); ++i) g[i] += self.grad[0] * x[i] / norm;
    }
  });
}

template <typename T>
Tensor<T> row_entropy_mean(const Tensor<T>& s) {
  if (s.rank() < 1) throw DimensionError("row_entropy_mean: scalar input");
  constexpr T kEps = T(1e-15);
  const std::size_t cols = s.shape().back();
  const std::size_t rows = cols ? s.numel() / cols : 0;
  if (rows == 0) throw DimensionError("row_entropy_mean: empty input");
  T total = 0;
  for (T v : s.data()) total -= v * std::log(v + kEps);
  return make_result<T>({}, {total / static_cast<T>(rows)}, {&s}, [rows](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const auto& x = parent_data(self, 0);
      const T scale_r = self.grad[0] / static_cast<T>(rows);
      for (std::size_t i = 0; i < x.size(); ++i) {
        g[i] -= scale_r * (std::log(x[i] + kEps) + x[i] / (x[i] + kEps));
      }
    }
  });
}

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& probabilities, const std::vector<T>& labels) {
  if (probabilities.numel() != labels.size() || labels.empty()) {
    throw DimensionError("bce_loss: " + std::to_string(probabilities.numel()) +
                         " probabilities vs " + std::to_string(labels.size()) + " labels");
  }
  constexpr T kLow = T(1e-7);
  constexpr T kHigh = T(1) - T(1e-7);
  const std::size_t n = labels.size();
  auto p = probabilities.data();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(p[i], kLow, kHigh);
    total -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
  }
  return make_result<T>({}, {static_cast<T>(total / static_cast<double>(n))}, {&probabilities},
                        [labels, n](Node<T>& self) {
                          if (T* g = parent_grad(self, 0)) {
                            const auto& x = parent_data(self, 0);
                            const T scale_n = self.grad[0] / static_cast<T>(n);
                            for (std::size_t i = 0; i < n; ++i) {
                              if (x[i] < kLow || x[i] > kHigh) continue;
                              const T y = labels[i];
                              g[i] += scale_n * (-y / x[i] + (T(1) - y) / (T(1) - x[i]));
                            }
                          }
                        });
}

#define STGNN_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> square(const Tensor<T>&);                                                 \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng&);                            \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                           \
  template Tensor<T> sum_all(const Tensor<T>&);                                                \
  template Tensor<T> mean_all(const Tensor<T>&);                                               \
  template Tensor<T> mean_over_axis(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> flatten(const Tensor<T>&);                                                \
  template Tensor<T> transpose_last(const Tensor<T>&);                                         \
  template Tensor<T> concat_last(const std::vector<Tensor<T>>&);                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                            const Conv1dGeometry&);                                            \
  template Tensor<T> batchnorm1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                 Tensor<T>&, Tensor<T>&, bool, T, T);                          \
  template Tensor<T> weight_norm(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> row_normalize_clamped(const Tensor<T>&);                                  \
  template Tensor<T> frobenius_norm(const Tensor<T>&);                                         \
  template Tensor<T> row_entropy_mean(const Tensor<T>&);                                       \
  template Tensor<T> bce_loss(const Tensor<T>&, const std::vector<T>&);

STGNN_INSTANTIATE_OPS(float)
STGNN_INSTANTIATE_OPS(double)

#undef STGNN_INSTANTIATE_OPS

}  // namespace stgnn::diff
