#include "tensor.hpp"

#include <cmath>
#include <sstream>

namespace snnzip {

std::size_t shape_volume(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(shape_volume(shape_), 0.0);
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
    if (shape_volume(shape) != values.size())
        fail(Errc::invalid_argument, "tensor: " + std::to_string(values.size()) +
                                         " values do not fill shape of " +
                                         std::to_string(shape_volume(shape)) + " elements");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    if (!t.all_finite()) fail(Errc::invalid_argument, "tensor: non-finite value rejected");
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) fail(Errc::invalid_argument, "tensor: axis out of range");
    return shape_[axis];
}

std::size_t Tensor::stride(std::size_t axis) const {
    std::size_t s = 1;
    for (std::size_t a = axis; a < shape_.size(); ++a) s *= shape_[a];
    return s;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? ", " : "") << shape_[i];
    os << ']';
    return os.str();
}

}  // namespace snnzip
