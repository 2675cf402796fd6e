#pragma once

#include <string>
#include <vector>

namespace taxo::nn {

// Dense row-major tensor of 64-bit floats. Scalars have shape {1}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor from_vector(std::vector<double> v);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    long long size() const { return static_cast<long long>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](long long i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](long long i) const { return data_[static_cast<std::size_t>(i)]; }

    // 2-d access; rows() / cols() require ndim() == 2.
    int rows() const;
    int cols() const;
    double& at(int r, int c);
    double at(int r, int c) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double v);

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace taxo::nn
