#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace sslhar {

/// Dense N-dimensional array of doubles, row-major.
///
/// Shapes are immutable after construction; operations return new tensors.
/// All arithmetic is done in 64-bit precision so finite-difference gradient
/// checks stay tight.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor full(std::vector<int> shape, double value);
    static Tensor from(std::initializer_list<double> values);
    static Tensor matrix(int rows, int cols, std::initializer_list<double> values);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Indexed access for the shapes the engine actually uses.
    double& at(int i) { return data_[static_cast<size_t>(i)]; }
    double at(int i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    double& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    double at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }

    /// Same data, new shape (element count must match).
    Tensor reshaped(std::vector<int> shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<int>& shape);
std::string shape_str(const Tensor& t);

/// Elementwise suite. Binary ops accept equal shapes, or a second operand
/// whose shape matches the first's trailing dimensions (broadcast over the
/// leading batch dimension only). Mismatches throw with both shapes named.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// (m x k) * (k x n) -> (m x n).
Tensor matmul(const Tensor& a, const Tensor& b);

double reduce_sum(const Tensor& a);
double reduce_mean(const Tensor& a);

int64_t numel(const std::vector<int>& shape);

}  // namespace sslhar
