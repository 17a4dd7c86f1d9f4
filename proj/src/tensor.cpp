#include "spincim/tensor.hpp"

#include <cmath>
#include <sstream>

namespace spincim {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape)
        n *= d;
    return shape.empty() ? 0 : n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
    for (std::size_t d : shape_)
        if (d == 0)
            throw dimension_error("tensor axis of size zero in " + shape_to_string(shape_));
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw dimension_error("shape " + shape_to_string(shape_) + " does not cover " +
                              std::to_string(data_.size()) + " elements");
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size())
        throw dimension_error("axis " + std::to_string(axis) + " out of range for " + shape_str());
    return shape_[axis];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    if (rank() != 2)
        throw dimension_error("at(r,c) on non-matrix " + shape_str());
    return data_[r * shape_[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    if (rank() != 2)
        throw dimension_error("at(r,c) on non-matrix " + shape_str());
    return data_[r * shape_[1] + c];
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (shape_numel(shape) != numel())
        throw dimension_error("reshape " + shape_str() + " -> " + shape_to_string(shape) +
                              " changes element count");
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) {
    for (auto& x : data_)
        x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x))
            return false;
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

} // namespace spincim
