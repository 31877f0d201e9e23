/* Copyright 2026 The hpsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "hpsim/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace hpsim {

namespace {

std::int64_t product(std::span<const std::int64_t> shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void check_dims_non_negative(std::span<const std::int64_t> shape) {
  for (auto d : shape) {
    if (d < 0) {
      throw DimensionError("tensor dimension must be non-negative, got shape " +
                           shape_string(shape));
    }
  }
}

}  // namespace

std::size_t element_size(Precision p) {
  return p == Precision::kSingle ? sizeof(float) : sizeof(double);
}

const char* to_string(Precision p) {
  return p == Precision::kSingle ? "single" : "double";
}

Precision precision_from_string(const std::string& s) {
  if (s == "single") return Precision::kSingle;
  if (s == "double") return Precision::kDouble;
  throw ConfigError("unknown precision '" + s + "' (expected single|double)");
}

std::string shape_string(std::span<const std::int64_t> shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<std::int64_t> shape, Precision precision)
    : shape_(std::move(shape)), precision_(precision) {
  check_dims_non_negative(shape_);
  const auto n = static_cast<std::size_t>(product(shape_));
  if (precision_ == Precision::kSingle) {
    data_ = std::vector<float>(n, 0.0f);
  } else {
    data_ = std::vector<double>(n, 0.0);
  }
}

Tensor Tensor::from_values(std::vector<std::int64_t> shape,
                           std::span<const double> values,
                           Precision precision) {
  Tensor t(std::move(shape), precision);
  if (static_cast<std::int64_t>(values.size()) != t.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_string(t.shape()));
  }
  for (std::int64_t i = 0; i < t.size(); ++i) t.set_value(i, values[i]);
  return t;
}

std::int64_t Tensor::size() const { return product(shape_); }

std::int64_t Tensor::bytes() const {
  return size() * static_cast<std::int64_t>(element_size(precision_));
}

template <typename T>
std::span<T> Tensor::data() {
  auto* v = std::get_if<std::vector<T>>(&data_);
  if (!v) {
    throw DimensionError(std::string("tensor precision is ") +
                         to_string(precision_) +
                         "; typed access with the other element type");
  }
  return std::span<T>(*v);
}

template <typename T>
std::span<const T> Tensor::data() const {
  const auto* v = std::get_if<std::vector<T>>(&data_);
  if (!v) {
    throw DimensionError(std::string("tensor precision is ") +
                         to_string(precision_) +
                         "; typed access with the other element type");
  }
  return std::span<const T>(*v);
}

template std::span<float> Tensor::data<float>();
template std::span<double> Tensor::data<double>();
template std::span<const float> Tensor::data<float>() const;
template std::span<const double> Tensor::data<double>() const;

double Tensor::value_at(std::int64_t flat) const {
  if (precision_ == Precision::kSingle) {
    return static_cast<double>(data<float>()[static_cast<std::size_t>(flat)]);
  }
  return data<double>()[static_cast<std::size_t>(flat)];
}

void Tensor::set_value(std::int64_t flat, double v) {
  if (precision_ == Precision::kSingle) {
    data<float>()[static_cast<std::size_t>(flat)] = static_cast<float>(v);
  } else {
    data<double>()[static_cast<std::size_t>(flat)] = v;
  }
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<std::size_t>(size()));
  for (std::int64_t i = 0; i < size(); ++i) {
    out[static_cast<std::size_t>(i)] = value_at(i);
  }
  return out;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> new_shape) const {
  check_dims_non_negative(new_shape);
  if (product(new_shape) != size()) {
    throw DimensionError("reshape from " + shape_string(shape_) + " to " +
                         shape_string(new_shape) + " changes element count");
  }
  Tensor t = *this;
  t.shape_ = std::move(new_shape);
  return t;
}

Tensor Tensor::converted(Precision target) const {
  if (target == precision_) return *this;
  Tensor t(shape_, target);
  for (std::int64_t i = 0; i < size(); ++i) t.set_value(i, value_at(i));
  return t;
}

namespace {

template <typename T, typename F>
void for_each_elem(std::span<T> v, F&& f) {
  for (auto& x : v) f(x);
}

void check_same_layout(const Tensor& a, const Tensor& b, const char* op) {
  if (a.precision() != b.precision()) {
    throw DimensionError(std::string(op) + ": mixed precision operands (" +
                         to_string(a.precision()) + " vs " +
                         to_string(b.precision()) + ")");
  }
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

void Tensor::fill(double v) {
  if (precision_ == Precision::kSingle) {
    for_each_elem(data<float>(), [&](float& x) { x = static_cast<float>(v); });
  } else {
    for_each_elem(data<double>(), [&](double& x) { x = v; });
  }
}

void Tensor::scale(double s) {
  if (precision_ == Precision::kSingle) {
    const float fs = static_cast<float>(s);
    for_each_elem(data<float>(), [&](float& x) { x *= fs; });
  } else {
    for_each_elem(data<double>(), [&](double& x) { x *= s; });
  }
}

void Tensor::add(const Tensor& other) {
  check_same_layout(*this, other, "add");
  if (precision_ == Precision::kSingle) {
    auto dst = data<float>();
    auto src = other.data<float>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  } else {
    auto dst = data<double>();
    auto src = other.data<double>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void Tensor::add_scaled(const Tensor& other, double s) {
  check_same_layout(*this, other, "add_scaled");
  if (precision_ == Precision::kSingle) {
    auto dst = data<float>();
    auto src = other.data<float>();
    const float fs = static_cast<float>(s);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += fs * src[i];
  } else {
    auto dst = data<double>();
    auto src = other.data<double>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
  }
}

bool Tensor::operator==(const Tensor& other) const {
  if (shape_ != other.shape_ || precision_ != other.precision_) return false;
  if (precision_ == Precision::kSingle) {
    auto a = data<float>();
    auto b = other.data<float>();
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
  }
  auto a = data<double>();
  auto b = other.data<double>();
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// --- matmul family ------------------------------------------------------

namespace {

void check_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " +
                         shape_string(t.shape()));
  }
}

template <typename T>
void matmul_impl(const Tensor& a, const Tensor& b, Tensor& c) {
  const auto m = a.dim(0), p = a.dim(1), n = b.dim(1);
  auto pa = a.data<T>();
  auto pb = b.data<T>();
  auto pc = c.data<T>();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::int64_t k = 0; k < p; ++k) {
        acc += pa[i * p + k] * pb[k * n + j];
      }
      pc[i * n + j] = acc;
    }
  }
}

template <typename T>
void matmul_tn_impl(const Tensor& a, const Tensor& b, Tensor& c) {
  // c[i,j] = sum_k a[k,i] * b[k,j]
  const auto p = a.dim(0), m = a.dim(1), n = b.dim(1);
  auto pa = a.data<T>();
  auto pb = b.data<T>();
  auto pc = c.data<T>();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::int64_t k = 0; k < p; ++k) {
        acc += pa[k * m + i] * pb[k * n + j];
      }
      pc[i * n + j] = acc;
    }
  }
}

template <typename T>
void matmul_nt_impl(const Tensor& a, const Tensor& b, Tensor& c) {
  // c[i,j] = sum_k a[i,k] * b[j,k]
  const auto m = a.dim(0), p = a.dim(1), n = b.dim(0);
  auto pa = a.data<T>();
  auto pb = b.data<T>();
  auto pc = c.data<T>();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::int64_t k = 0; k < p; ++k) {
        acc += pa[i * p + k] * pb[j * p + k];
      }
      pc[i * n + j] = acc;
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  if (a.precision() != b.precision()) {
    throw DimensionError("matmul: mixed precision operands");
  }
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)}, a.precision());
  if (a.precision() == Precision::kSingle) {
    matmul_impl<float>(a, b, c);
  } else {
    matmul_impl<double>(a, b, c);
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul_tn");
  check_matrix(b, "matmul_tn");
  if (a.precision() != b.precision()) {
    throw DimensionError("matmul_tn: mixed precision operands");
  }
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("matmul_tn: leading dimensions disagree, " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor c({a.dim(1), b.dim(1)}, a.precision());
  if (a.precision() == Precision::kSingle) {
    matmul_tn_impl<float>(a, b, c);
  } else {
    matmul_tn_impl<double>(a, b, c);
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul_nt");
  check_matrix(b, "matmul_nt");
  if (a.precision() != b.precision()) {
    throw DimensionError("matmul_nt: mixed precision operands");
  }
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: trailing dimensions disagree, " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(0)}, a.precision());
  if (a.precision() == Precision::kSingle) {
    matmul_nt_impl<float>(a, b, c);
  } else {
    matmul_nt_impl<double>(a, b, c);
  }
  return c;
}

// --- conv2d -------------------------------------------------------------

namespace {

struct ConvGeometry {
  std::int64_t batch, in_c, in_h, in_w;
  std::int64_t filters, r, s;
  std::int64_t out_h, out_w;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels,
                           int stride, int pad) {
  if (input.rank() != 4 || kernels.rank() != 4) {
    throw DimensionError("conv2d: input and kernels must be rank-4, got " +
                         shape_string(input.shape()) + " and " +
                         shape_string(kernels.shape()));
  }
  if (input.precision() != kernels.precision()) {
    throw DimensionError("conv2d: mixed precision operands");
  }
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (pad < 0) throw ConfigError("conv2d: pad must be >= 0");
  ConvGeometry g;
  g.batch = input.dim(0);
  g.in_c = input.dim(1);
  g.in_h = input.dim(2);
  g.in_w = input.dim(3);
  g.filters = kernels.dim(0);
  g.r = kernels.dim(2);
  g.s = kernels.dim(3);
  if (kernels.dim(1) != g.in_c) {
    throw DimensionError("conv2d: kernel channel count " +
                         std::to_string(kernels.dim(1)) +
                         " does not match input channels " +
                         std::to_string(g.in_c));
  }
  const std::int64_t num_h = g.in_h + 2 * pad - g.r;
  const std::int64_t num_w = g.in_w + 2 * pad - g.s;
  if (num_h < 0 || num_h % stride != 0 || num_w < 0 || num_w % stride != 0) {
    throw ConfigError("conv2d: output dimension (H+2*pad-R)/stride+1 is not a "
                      "positive integer for input " +
                      shape_string(input.shape()) + ", kernel " +
                      shape_string(kernels.shape()) + ", stride " +
                      std::to_string(stride) + ", pad " + std::to_string(pad));
  }
  g.out_h = num_h / stride + 1;
  g.out_w = num_w / stride + 1;
  return g;
}

template <typename T>
void conv2d_forward_impl(const Tensor& input, const Tensor& kernels,
                         int stride, int pad, const ConvGeometry& g,
                         Tensor& out) {
  auto x = input.data<T>();
  auto k = kernels.data<T>();
  auto y = out.data<T>();
  const auto in_hw = g.in_h * g.in_w;
  const auto out_hw = g.out_h * g.out_w;
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t f = 0; f < g.filters; ++f) {
      for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
        for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
          T acc = 0;
          for (std::int64_t c = 0; c < g.in_c; ++c) {
            for (std::int64_t r = 0; r < g.r; ++r) {
              const std::int64_t h = oh * stride - pad + r;
              if (h < 0 || h >= g.in_h) continue;
              for (std::int64_t s = 0; s < g.s; ++s) {
                const std::int64_t w = ow * stride - pad + s;
                if (w < 0 || w >= g.in_w) continue;
                acc += x[((b * g.in_c + c) * g.in_h + h) * g.in_w + w] *
                       k[((f * g.in_c + c) * g.r + r) * g.s + s];
              }
            }
          }
          y[(b * g.filters + f) * out_hw + oh * g.out_w + ow] = acc;
        }
      }
    }
  }
  (void)in_hw;
}

template <typename T>
void conv2d_backward_impl(const Tensor& input, const Tensor& kernels,
                          const Tensor& grad_output, int stride, int pad,
                          const ConvGeometry& g, Tensor& grad_input,
                          Tensor& grad_kernels) {
  auto x = input.data<T>();
  auto k = kernels.data<T>();
  auto gy = grad_output.data<T>();
  auto gx = grad_input.data<T>();
  auto gk = grad_kernels.data<T>();
  const auto out_hw = g.out_h * g.out_w;

  // dK[f,c,r,s] = sum_{b,oh,ow} dY[b,f,oh,ow] * X[b,c,oh*st-pad+r,ow*st-pad+s]
  for (std::int64_t f = 0; f < g.filters; ++f) {
    for (std::int64_t c = 0; c < g.in_c; ++c) {
      for (std::int64_t r = 0; r < g.r; ++r) {
        for (std::int64_t s = 0; s < g.s; ++s) {
          T acc = 0;
          for (std::int64_t b = 0; b < g.batch; ++b) {
            for (std::int64_t oh = 0; oh < g.out_h; ++oh) {
              const std::int64_t h = oh * stride - pad + r;
              if (h < 0 || h >= g.in_h) continue;
              for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
                const std::int64_t w = ow * stride - pad + s;
                if (w < 0 || w >= g.in_w) continue;
                acc += gy[(b * g.filters + f) * out_hw + oh * g.out_w + ow] *
                       x[((b * g.in_c + c) * g.in_h + h) * g.in_w + w];
              }
            }
          }
          gk[((f * g.in_c + c) * g.r + r) * g.s + s] = acc;
        }
      }
    }
  }

  // dX[b,c,h,w] = sum_{f,r,s} dY[b,f,(h+pad-r)/st,(w+pad-s)/st] * K[f,c,r,s]
  for (std::int64_t b = 0; b < g.batch; ++b) {
    for (std::int64_t c = 0; c < g.in_c; ++c) {
      for (std::int64_t h = 0; h < g.in_h; ++h) {
        for (std::int64_t w = 0; w < g.in_w; ++w) {
          T acc = 0;
          for (std::int64_t f = 0; f < g.filters; ++f) {
            for (std::int64_t r = 0; r < g.r; ++r) {
              const std::int64_t oh_num = h + pad - r;
              if (oh_num < 0 || oh_num % stride != 0) continue;
              const std::int64_t oh = oh_num / stride;
              if (oh >= g.out_h) continue;
              for (std::int64_t s = 0; s < g.s; ++s) {
                const std::int64_t ow_num = w + pad - s;
                if (ow_num < 0 || ow_num % stride != 0) continue;
                const std::int64_t ow = ow_num / stride;
                if (ow >= g.out_w) continue;
                acc += gy[(b * g.filters + f) * out_hw + oh * g.out_w + ow] *
                       k[((f * g.in_c + c) * g.r + r) * g.s + s];
              }
            }
          }
          gx[((b * g.in_c + c) * g.in_h + h) * g.in_w + w] = acc;
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, int stride,
                      int pad) {
  const ConvGeometry g = conv_geometry(input, kernels, stride, pad);
  Tensor out({g.batch, g.filters, g.out_h, g.out_w}, input.precision());
  if (input.precision() == Precision::kSingle) {
    conv2d_forward_impl<float>(input, kernels, stride, pad, g, out);
  } else {
    conv2d_forward_impl<double>(input, kernels, stride, pad, g, out);
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            const Tensor& grad_output, int stride, int pad) {
  const ConvGeometry g = conv_geometry(input, kernels, stride, pad);
  const std::vector<std::int64_t> want{g.batch, g.filters, g.out_h, g.out_w};
  if (grad_output.shape() != want || grad_output.precision() != input.precision()) {
    throw DimensionError("conv2d_backward: grad_output shape " +
                         shape_string(grad_output.shape()) +
                         " does not match forward output " +
                         shape_string(want));
  }
  Conv2dGrads grads{Tensor(input.shape(), input.precision()),
                    Tensor(kernels.shape(), kernels.precision())};
  if (input.precision() == Precision::kSingle) {
    conv2d_backward_impl<float>(input, kernels, grad_output, stride, pad, g,
                                grads.grad_input, grads.grad_kernels);
  } else {
    conv2d_backward_impl<double>(input, kernels, grad_output, stride, pad, g,
                                 grads.grad_input, grads.grad_kernels);
  }
  return grads;
}

// --- relu / loss ---------------------------------------------------------

Tensor relu(const Tensor& x) {
  Tensor y = x;
  if (x.precision() == Precision::kSingle) {
    for (auto& v : y.data<float>()) v = v > 0.0f ? v : 0.0f;
  } else {
    for (auto& v : y.data<double>()) v = v > 0.0 ? v : 0.0;
  }
  return y;
}

Tensor relu_backward(const Tensor& pre_activation, const Tensor& grad_output) {
  check_same_layout(pre_activation, grad_output, "relu_backward");
  Tensor g = grad_output;
  if (g.precision() == Precision::kSingle) {
    auto z = pre_activation.data<float>();
    auto gv = g.data<float>();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      if (!(z[i] > 0.0f)) gv[i] = 0.0f;
    }
  } else {
    auto z = pre_activation.data<double>();
    auto gv = g.data<double>();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      if (!(z[i] > 0.0)) gv[i] = 0.0;
    }
  }
  return g;
}

namespace {

template <typename T>
XentResult logistic_xent_impl(const Tensor& logits, const Tensor& targets) {
  const auto batch = logits.dim(0);
  auto z = logits.data<T>();
  auto t = targets.data<T>();
  XentResult res;
  res.grad_logits = Tensor(logits.shape(), logits.precision());
  auto g = res.grad_logits.data<T>();
  const double inv_b = 1.0 / static_cast<double>(batch);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = static_cast<double>(z[i]);
    const double ti = static_cast<double>(t[i]);
    if (ti < 0.0 || ti > 1.0) {
      throw DomainError("logistic_xent: target " + std::to_string(ti) +
                        " outside [0,1] at flat index " + std::to_string(i));
    }
    // -[t*log(sigma) + (1-t)*log(1-sigma)] = softplus(-z) + (1-t)*z
    const double softplus_neg = std::max(-zi, 0.0) + std::log1p(std::exp(-std::abs(zi)));
    loss += softplus_neg + (1.0 - ti) * zi;
    const double sigma =
        zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi))
                  : std::exp(zi) / (1.0 + std::exp(zi));
    g[i] = static_cast<T>(inv_b * (sigma - ti));
  }
  res.loss = loss * inv_b;
  return res;
}

}  // namespace

XentResult logistic_xent(const Tensor& logits, const Tensor& targets) {
  check_same_layout(logits, targets, "logistic_xent");
  if (logits.rank() != 2) {
    throw DimensionError("logistic_xent: expected [BxL] logits, got " +
                         shape_string(logits.shape()));
  }
  if (logits.dim(0) == 0) {
    throw DimensionError("logistic_xent: empty batch");
  }
  if (logits.precision() == Precision::kSingle) {
    return logistic_xent_impl<float>(logits, targets);
  }
  return logistic_xent_impl<double>(logits, targets);
}

// --- 2-D helpers ----------------------------------------------------------

namespace {

void check_row_range(const Tensor& m, std::int64_t r0, std::int64_t r1,
                     const char* op) {
  check_matrix(m, op);
  if (r0 < 0 || r1 < r0 || r1 > m.dim(0)) {
    throw DimensionError(std::string(op) + ": row range [" +
                         std::to_string(r0) + "," + std::to_string(r1) +
                         ") out of bounds for " + shape_string(m.shape()));
  }
}

void check_col_range(const Tensor& m, std::int64_t c0, std::int64_t c1,
                     const char* op) {
  check_matrix(m, op);
  if (c0 < 0 || c1 < c0 || c1 > m.dim(1)) {
    throw DimensionError(std::string(op) + ": column range [" +
                         std::to_string(c0) + "," + std::to_string(c1) +
                         ") out of bounds for " + shape_string(m.shape()));
  }
}

template <typename T>
void copy_block(const Tensor& src, Tensor& dst, std::int64_t src_r0,
                std::int64_t src_c0, std::int64_t dst_r0, std::int64_t dst_c0,
                std::int64_t rows, std::int64_t cols) {
  auto s = src.data<T>();
  auto d = dst.data<T>();
  const auto sc = src.dim(1);
  const auto dc = dst.dim(1);
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      d[(dst_r0 + r) * dc + dst_c0 + c] = s[(src_r0 + r) * sc + src_c0 + c];
    }
  }
}

void copy_block_dispatch(const Tensor& src, Tensor& dst, std::int64_t src_r0,
                         std::int64_t src_c0, std::int64_t dst_r0,
                         std::int64_t dst_c0, std::int64_t rows,
                         std::int64_t cols) {
  if (src.precision() != dst.precision()) {
    throw DimensionError("block copy: mixed precision operands");
  }
  if (src.precision() == Precision::kSingle) {
    copy_block<float>(src, dst, src_r0, src_c0, dst_r0, dst_c0, rows, cols);
  } else {
    copy_block<double>(src, dst, src_r0, src_c0, dst_r0, dst_c0, rows, cols);
  }
}

}  // namespace

Tensor slice_rows(const Tensor& m, std::int64_t r0, std::int64_t r1) {
  check_row_range(m, r0, r1, "slice_rows");
  Tensor out({r1 - r0, m.dim(1)}, m.precision());
  copy_block_dispatch(m, out, r0, 0, 0, 0, r1 - r0, m.dim(1));
  return out;
}

Tensor slice_cols(const Tensor& m, std::int64_t c0, std::int64_t c1) {
  check_col_range(m, c0, c1, "slice_cols");
  Tensor out({m.dim(0), c1 - c0}, m.precision());
  copy_block_dispatch(m, out, 0, c0, 0, 0, m.dim(0), c1 - c0);
  return out;
}

void paste_rows(Tensor& dst, const Tensor& src, std::int64_t r0) {
  check_row_range(dst, r0, r0 + src.dim(0), "paste_rows");
  if (src.dim(1) != dst.dim(1)) {
    throw DimensionError("paste_rows: column count mismatch");
  }
  copy_block_dispatch(src, dst, 0, 0, r0, 0, src.dim(0), src.dim(1));
}

void paste_cols(Tensor& dst, const Tensor& src, std::int64_t c0) {
  check_col_range(dst, c0, c0 + src.dim(1), "paste_cols");
  if (src.dim(0) != dst.dim(0)) {
    throw DimensionError("paste_cols: row count mismatch");
  }
  copy_block_dispatch(src, dst, 0, 0, 0, c0, src.dim(0), src.dim(1));
}

Tensor column_sums(const Tensor& m) {
  check_matrix(m, "column_sums");
  Tensor out({m.dim(1)}, m.precision());
  if (m.precision() == Precision::kSingle) {
    auto s = m.data<float>();
    auto d = out.data<float>();
    for (std::int64_t r = 0; r < m.dim(0); ++r) {
      for (std::int64_t c = 0; c < m.dim(1); ++c) d[c] += s[r * m.dim(1) + c];
    }
  } else {
    auto s = m.data<double>();
    auto d = out.data<double>();
    for (std::int64_t r = 0; r < m.dim(0); ++r) {
      for (std::int64_t c = 0; c < m.dim(1); ++c) d[c] += s[r * m.dim(1) + c];
    }
  }
  return out;
}

void add_row_broadcast(Tensor& m, const Tensor& row) {
  check_matrix(m, "add_row_broadcast");
  if (row.rank() != 1 || row.dim(0) != m.dim(1)) {
    throw DimensionError("add_row_broadcast: row shape " +
                         shape_string(row.shape()) + " does not match " +
                         shape_string(m.shape()));
  }
  if (m.precision() != row.precision()) {
    throw DimensionError("add_row_broadcast: mixed precision operands");
  }
  if (m.precision() == Precision::kSingle) {
    auto d = m.data<float>();
    auto r = row.data<float>();
    for (std::int64_t i = 0; i < m.dim(0); ++i) {
      for (std::int64_t c = 0; c < m.dim(1); ++c) d[i * m.dim(1) + c] += r[c];
    }
  } else {
    auto d = m.data<double>();
    auto r = row.data<double>();
    for (std::int64_t i = 0; i < m.dim(0); ++i) {
      for (std::int64_t c = 0; c < m.dim(1); ++c) d[i * m.dim(1) + c] += r[c];
    }
  }
}

}  // namespace hpsim
