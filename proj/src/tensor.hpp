#pragma once

// Dense row-major tensor of doubles.  All arithmetic in this toolkit runs in
// 64-bit; 32-bit is strictly a storage width (applied when a model is written
// out).  Constructors reject non-finite values — NaN/Inf can only appear by
// in-place mutation, and the training loop checks for that after every step.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace snnzip {

class Tensor {
public:
    Tensor() = default;

    // Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<std::size_t> shape);

    // Takes ownership of `values`; size must equal the shape's element count
    // and every entry must be finite.
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Bounds-checked in debug builds only; index arithmetic is row-major.
    double& at(std::size_t i0) { return data_[i0]; }
    double& at(std::size_t i0, std::size_t i1) { return data_[i0 * stride(1) + i1]; }
    double& at(std::size_t i0, std::size_t i1, std::size_t i2) {
        return data_[(i0 * dim(1) + i1) * dim(2) + i2];
    }
    double& at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) {
        return data_[((i0 * dim(1) + i1) * dim(2) + i2) * dim(3) + i3];
    }
    double at(std::size_t i0) const { return data_[i0]; }
    double at(std::size_t i0, std::size_t i1) const { return data_[i0 * stride(1) + i1]; }
    double at(std::size_t i0, std::size_t i1, std::size_t i2) const {
        return data_[(i0 * dim(1) + i1) * dim(2) + i2];
    }
    double at(std::size_t i0, std::size_t i1, std::size_t i2, std::size_t i3) const {
        return data_[((i0 * dim(1) + i1) * dim(2) + i2) * dim(3) + i3];
    }

    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // Human-readable shape like [2, 3, 4] for error messages.
    std::string shape_str() const;

private:
    std::size_t stride(std::size_t axis) const;

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_volume(const std::vector<std::size_t>& shape);

}  // namespace snnzip
