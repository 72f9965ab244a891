#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "kdaudit/common.hpp"

namespace kdaudit {

/// Dense row-major tensor of 64-bit floats. Values are immutable by
/// convention once an op has produced them; mutation is confined to
/// construction sites (init, optimizer steps, perturbation).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // 2-D accessors; rows()/cols() treat a 1-D tensor as a single row.
    int rows() const;
    int cols() const;
    double& at(int r, int c);
    double at(int r, int c) const;

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

/// Standard matrix product (2-D x 2-D). Throws ShapeError when the inner
/// dimensions disagree.
Tensor matmul(const Tensor& a, const Tensor& b);

/// a x b^T, used for weight-tied output heads.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

/// Max-shifted softmax along `axis` (negative axes count from the end).
Tensor softmax(const Tensor& x, int axis = -1);

/// Log-softmax computed directly via max-shift + log-sum-exp, never as
/// log(softmax(x)).
Tensor log_softmax(const Tensor& x, int axis = -1);

}  // namespace kdaudit
