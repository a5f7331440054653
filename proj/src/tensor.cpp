#include "sslhar/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sslhar {

namespace {

void check_shape_positive(const std::vector<int>& shape) {
    for (int d : shape) {
        if (d <= 0) {
            throw std::invalid_argument("tensor dimensions must be positive, got " +
                                        shape_str(shape));
        }
    }
}

}  // namespace

int64_t numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    check_shape_positive(shape_);
    data_.assign(static_cast<size_t>(numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape_positive(shape_);
    if (numel(shape_) != static_cast<int64_t>(data_.size())) {
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
    }
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

Tensor Tensor::from(std::initializer_list<double> values) {
    return Tensor({static_cast<int>(values.size())}, std::vector<double>(values));
}

Tensor Tensor::matrix(int rows, int cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (numel(shape) != size()) {
        throw std::invalid_argument("cannot reshape " + shape_str(shape_) + " to " +
                                    shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

std::string shape_str(const Tensor& t) { return shape_str(t.shape()); }

namespace {

// Applies op elementwise; b may broadcast over a's leading batch dimension(s).
template <typename Op>
Tensor ewise(const Tensor& a, const Tensor& b, Op op, const char* name) {
    if (a.same_shape(b)) {
        Tensor out = a;
        const double* pb = b.data();
        double* po = out.data();
        for (int64_t i = 0; i < out.size(); ++i) po[i] = op(po[i], pb[i]);
        return out;
    }
    // Broadcast: b's shape must equal a's trailing dimensions.
    if (b.ndim() < a.ndim()) {
        bool trailing = true;
        for (int i = 0; i < b.ndim(); ++i) {
            if (a.dim(a.ndim() - b.ndim() + i) != b.dim(i)) trailing = false;
        }
        if (trailing) {
            Tensor out = a;
            const int64_t inner = b.size();
            const double* pb = b.data();
            double* po = out.data();
            for (int64_t i = 0; i < out.size(); ++i) po[i] = op(po[i], pb[i % inner]);
            return out;
        }
    }
    throw std::invalid_argument(std::string(name) + ": shape mismatch " + shape_str(a) +
                                " vs " + shape_str(b));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return ewise(a, b, [](double x, double y) { return x + y; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return ewise(a, b, [](double x, double y) { return x - y; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return ewise(a, b, [](double x, double y) { return x * y; }, "mul");
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: shape mismatch " + shape_str(a) + " vs " +
                                    shape_str(b));
    }
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = pa[static_cast<int64_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = pb + static_cast<int64_t>(p) * n;
            double* orow = po + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

double reduce_sum(const Tensor& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}

double reduce_mean(const Tensor& a) {
    if (a.size() == 0) throw std::invalid_argument("reduce_mean: empty tensor");
    return reduce_sum(a) / static_cast<double>(a.size());
}

}  // namespace sslhar
