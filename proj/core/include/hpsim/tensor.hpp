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
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hpsim/errors.hpp"

namespace hpsim {

enum class Precision { kSingle, kDouble };

std::size_t element_size(Precision p);
const char* to_string(Precision p);
Precision precision_from_string(const std::string& s);

/// Dense row-major tensor of reals in single or double precision.
///
/// Every loop in hpsim that touches tensor elements walks them in row-major
/// order (last index fastest), and every reduction accumulates in ascending
/// index order. There is no threading and no reassociation, so repeating an
/// operation on identical inputs is bit-identical on a given platform.
/// Arithmetic between tensors of different precision is a DimensionError.
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor. Dimensions must be non-negative.
  Tensor(std::vector<std::int64_t> shape, Precision precision);

  static Tensor from_values(std::vector<std::int64_t> shape,
                            std::span<const double> values,
                            Precision precision);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::int64_t size() const;
  Precision precision() const { return precision_; }
  std::int64_t bytes() const;

  /// Typed flat storage. Throws DimensionError if T does not match the
  /// tensor's precision.
  template <typename T>
  std::span<T> data();
  template <typename T>
  std::span<const T> data() const;

  // Converting scalar access on the flat row-major index (test/tooling use).
  double value_at(std::int64_t flat) const;
  void set_value(std::int64_t flat, double v);
  std::vector<double> to_vector() const;

  /// Same data, new shape; element count must be preserved.
  Tensor reshaped(std::vector<std::int64_t> new_shape) const;
  Tensor converted(Precision target) const;

  // Elementwise updates. Shapes and precisions of operands must match.
  void fill(double v);
  void scale(double s);
  void add(const Tensor& other);                    // this += other
  void add_scaled(const Tensor& other, double s);   // this += s * other

  /// Exact equality: same shape, same precision, identical bit patterns.
  bool operator==(const Tensor& other) const;

 private:
  std::vector<std::int64_t> shape_;
  Precision precision_ = Precision::kDouble;
  std::variant<std::vector<float>, std::vector<double>> data_ =
      std::vector<double>{};
};

std::string shape_string(std::span<const std::int64_t> shape);

// --- Dense kernels -----------------------------------------------------
//
// matmul family: c[i,j] accumulates products in ascending inner-index order.
Tensor matmul(const Tensor& a, const Tensor& b);     // [MxP] x [PxN]
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T x b, a is [PxM]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a x b^T, b is [NxP]

/// 2-D cross-correlation ("convolution" in CNN convention, no kernel flip)
/// with zero padding. input [BxCxHxW], kernels [FxCxRxS]. The output height
/// (H + 2*pad - R) / stride + 1 must be a positive integer, same for width;
/// otherwise ConfigError.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, int stride,
                      int pad);

struct Conv2dGrads {
  Tensor grad_input;
  Tensor grad_kernels;
};

/// Exact gradients of conv2d_forward with respect to input and kernels.
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                            const Tensor& grad_output, int stride, int pad);

Tensor relu(const Tensor& x);
/// Passes grad_output through where pre_activation > 0, zero elsewhere.
Tensor relu_backward(const Tensor& pre_activation, const Tensor& grad_output);

struct XentResult {
  double loss = 0.0;
  Tensor grad_logits;
};

/// Mean cross-entropy of independent logistic units over a batch.
/// logits and targets are [BxL], target entries must lie in [0,1].
/// loss = (1/B) * sum_{b,l} -[t*log(sigma(z)) + (1-t)*log(1-sigma(z))],
/// grad = (1/B) * (sigma(z) - t). Evaluated in log-sum-exp form, stable for
/// |z| up to about 1e3.
XentResult logistic_xent(const Tensor& logits, const Tensor& targets);

// --- 2-D helpers used by the fully-connected machinery -----------------
Tensor slice_rows(const Tensor& m, std::int64_t r0, std::int64_t r1);
Tensor slice_cols(const Tensor& m, std::int64_t c0, std::int64_t c1);
void paste_rows(Tensor& dst, const Tensor& src, std::int64_t r0);
void paste_cols(Tensor& dst, const Tensor& src, std::int64_t c0);
/// Sums a [RxC] matrix over rows into a [C] vector (ascending row order).
Tensor column_sums(const Tensor& m);
/// m[r,:] += row for every r; row is [C].
void add_row_broadcast(Tensor& m, const Tensor& row);

}  // namespace hpsim
