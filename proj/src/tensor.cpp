#include "kdaudit/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace kdaudit {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in tensor shape");
        n *= d;
    }
    return n;
}

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)) {
    if (shape_product(shape_) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("tensor data length does not match shape product");
    data_ = std::move(values);
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = value;
    return t;
}

int Tensor::rows() const {
    if (shape_.empty()) return 1;
    if (shape_.size() == 1) return 1;
    if (shape_.size() == 2) return shape_[0];
    throw ShapeError("rows() requires a 1-D or 2-D tensor");
}

int Tensor::cols() const {
    if (shape_.empty()) return 1;
    if (shape_.size() == 1) return shape_[0];
    if (shape_.size() == 2) return shape_[1];
    throw ShapeError("cols() requires a 1-D or 2-D tensor");
}

double& Tensor::at(int r, int c) {
    return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                 static_cast<std::size_t>(c)];
}

double Tensor::at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
                 static_cast<std::size_t>(c)];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul expects 2-D tensors");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul inner dimensions disagree: " + std::to_string(a.dim(1)) +
                         " vs " + std::to_string(b.dim(0)));
    Tensor out({a.dim(0), b.dim(1)});
    ConstMatMap ma(a.data(), a.dim(0), a.dim(1));
    ConstMatMap mb(b.data(), b.dim(0), b.dim(1));
    MatMap mo(out.data(), out.dim(0), out.dim(1));
    mo.noalias() = ma * mb;
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw ShapeError("matmul_nt expects 2-D tensors");
    if (a.dim(1) != b.dim(1))
        throw ShapeError("matmul_nt inner dimensions disagree");
    Tensor out({a.dim(0), b.dim(0)});
    ConstMatMap ma(a.data(), a.dim(0), a.dim(1));
    ConstMatMap mb(b.data(), b.dim(0), b.dim(1));
    MatMap mo(out.data(), out.dim(0), out.dim(1));
    mo.noalias() = ma * mb.transpose();
    return out;
}

namespace {

// Applies fn(lane pointer, stride, length) to every 1-D lane along `axis`.
template <typename Fn>
void for_each_lane(const Tensor& x, int axis, Fn&& fn) {
    const auto& shape = x.shape();
    int nd = x.ndim();
    if (nd == 0) throw ShapeError("softmax of a scalar tensor");
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw ShapeError("softmax axis out of range");
    std::int64_t inner = 1, outer = 1;
    for (int i = axis + 1; i < nd; ++i) inner *= shape[static_cast<std::size_t>(i)];
    for (int i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
    const std::int64_t len = shape[static_cast<std::size_t>(axis)];
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i)
            fn(o * len * inner + i, inner, len);
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    Tensor out(x.shape(), x.values());
    double* d = out.data();
    for_each_lane(x, axis, [&](std::int64_t base, std::int64_t stride, std::int64_t len) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t k = 0; k < len; ++k) mx = std::max(mx, d[base + k * stride]);
        double sum = 0.0;
        for (std::int64_t k = 0; k < len; ++k) {
            double e = std::exp(d[base + k * stride] - mx);
            d[base + k * stride] = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (std::int64_t k = 0; k < len; ++k) d[base + k * stride] *= inv;
    });
    return out;
}

Tensor log_softmax(const Tensor& x, int axis) {
    Tensor out(x.shape(), x.values());
    double* d = out.data();
    for_each_lane(x, axis, [&](std::int64_t base, std::int64_t stride, std::int64_t len) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t k = 0; k < len; ++k) mx = std::max(mx, d[base + k * stride]);
        double sum = 0.0;
        for (std::int64_t k = 0; k < len; ++k) sum += std::exp(d[base + k * stride] - mx);
        const double lse = mx + std::log(sum);
        for (std::int64_t k = 0; k < len; ++k) d[base + k * stride] -= lse;
    });
    return out;
}

}  // namespace kdaudit
