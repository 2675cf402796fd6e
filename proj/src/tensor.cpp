#include "taxo/tensor.hpp"

#include <cmath>
#include <sstream>

#include "taxo/common.hpp"

namespace taxo::nn {

namespace {

long long shape_size(const std::vector<int>& shape) {
    if (shape.empty()) throw ValidationError("tensor shape must not be empty");
    long long n = 1;
    for (int d : shape) {
        if (d <= 0) throw ValidationError("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<std::size_t>(shape_size(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != static_cast<long long>(data_.size()))
        throw ValidationError("tensor data does not match shape");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::from_vector(std::vector<double> v) {
    if (v.empty()) throw ValidationError("vector tensor must not be empty");
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}

int Tensor::rows() const {
    if (ndim() != 2) throw ValidationError("rows(): tensor is not 2-d");
    return shape_[0];
}

int Tensor::cols() const {
    if (ndim() != 2) throw ValidationError("cols(): tensor is not 2-d");
    return shape_[1];
}

double& Tensor::at(int r, int c) {
    return data_[static_cast<std::size_t>(r) * shape_[1] + c];
}

double Tensor::at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * shape_[1] + c];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ',';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

}  // namespace taxo::nn
