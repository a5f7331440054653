#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sslhar/gradcheck.hpp"
#include "sslhar/layers.hpp"
#include "sslhar/rng.hpp"

using namespace sslhar;

namespace {

// Scalar loss sum(y * w) with fixed random weights makes finite differences
// exercise every output element.
Tensor loss_weights(const std::vector<int>& shape, uint64_t seed) {
    Rng rng(seed);
    return rng.gaussian(shape, 1.0);
}

double weighted_sum(const Tensor& y, const Tensor& w) {
    double s = 0.0;
    for (int64_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
}

}  // namespace

TEST_CASE("conv1d output lengths") {
    CHECK(conv1d_out_len(40, 5, 1) == 36);
    CHECK(conv1d_out_len(18, 3, 1) == 16);
    CHECK_THROWS_AS(conv1d_out_len(4, 5, 1), std::invalid_argument);
}

TEST_CASE("conv1d hand example") {
    Tensor x({1, 1, 3}, {1, 2, 3});
    Conv1dParams p;
    p.kernels = Tensor({1, 1, 2}, {1, 1});
    p.bias = Tensor({1});
    p.stride = 1;
    const Tensor y = conv1d(x, p);
    CHECK(y.shape() == std::vector<int>{1, 1, 2});
    CHECK(y[0] == doctest::Approx(3.0));
    CHECK(y[1] == doctest::Approx(5.0));
}

TEST_CASE("conv1d error names lengths") {
    Tensor x({1, 1, 3}, {1, 2, 3});
    Conv1dParams p;
    p.kernels = Tensor({1, 1, 5}, {1, 1, 1, 1, 1});
    p.bias = Tensor({1});
    try {
        conv1d(x, p);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("3") != std::string::npos);
        CHECK(msg.find("5") != std::string::npos);
    }
}

TEST_CASE("conv1d backward matches finite differences") {
    Rng rng(11);
    Tensor x = rng.gaussian({2, 3, 12}, 1.0);
    Conv1dParams p;
    p.kernels = rng.gaussian({4, 3, 3}, 0.5);
    p.bias = rng.gaussian({4}, 0.5);
    p.stride = 1;
    const Tensor w = loss_weights({2, 4, 10}, 77);

    auto loss = [&]() { return weighted_sum(conv1d(x, p), w); };
    Conv1dGrads g = conv1d_backward(x, p, w);

    const GradCheckReport report = gradient_check(
        loss,
        {{"x", &x, &g.dx}, {"kernels", &p.kernels, &g.dkernels}, {"bias", &p.bias, &g.dbias}},
        1e-6, 1e-6);
    CHECK(report.pass);
}

TEST_CASE("conv1d linearity in the input") {
    Rng rng(5);
    Conv1dParams p;
    p.kernels = rng.gaussian({2, 2, 3}, 1.0);
    p.bias = Tensor({2});  // bias excluded from the linearity law
    p.stride = 1;
    const Tensor x = rng.gaussian({1, 2, 9}, 1.0);
    const Tensor y = rng.gaussian({1, 2, 9}, 1.0);
    const double a = 1.7, b = -0.4;
    const Tensor lhs = conv1d(add(scale(x, a), scale(y, b)), p);
    const Tensor rhs = add(scale(conv1d(x, p), a), scale(conv1d(y, p), b));
    for (int64_t i = 0; i < lhs.size(); ++i) CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-10));
}

TEST_CASE("maxpool1d values and memorized indices") {
    Tensor x({1, 1, 4}, {1, 3, 2, 4});
    auto [y, rec] = maxpool1d(x, 2, 2);
    CHECK(y.vec() == std::vector<double>{3.0, 4.0});
    CHECK(rec.argmax == std::vector<int32_t>{1, 3});
}

TEST_CASE("maxpool1d ties break to the lowest index") {
    Tensor x({1, 1, 2}, {5, 5});
    auto [y, rec] = maxpool1d(x, 2, 2);
    CHECK(y.vec() == std::vector<double>{5.0});
    CHECK(rec.argmax == std::vector<int32_t>{0});
}

TEST_CASE("maxpool backward routes only to argmax positions") {
    Rng rng(21);
    Tensor x = rng.gaussian({2, 2, 8}, 1.0);
    auto [y, rec] = maxpool1d(x, 2, 2);
    const Tensor w = loss_weights(y.shape(), 9);
    auto loss = [&]() { return weighted_sum(maxpool1d(x, 2, 2).first, w); };
    Tensor dx = maxpool1d_backward(rec, w);
    const GradCheckReport report = gradient_check(loss, {{"x", &x, &dx}}, 1e-6, 1e-6);
    CHECK(report.pass);
    // support is exactly the memorized indices
    int nonzero = 0;
    for (int64_t i = 0; i < dx.size(); ++i) {
        if (dx[i] != 0.0) ++nonzero;
    }
    CHECK(nonzero == static_cast<int>(rec.argmax.size()));
}

TEST_CASE("unpool1d places values at memorized indices") {
    Tensor x({1, 1, 4}, {1, 3, 2, 4});
    auto [y, rec] = maxpool1d(x, 2, 2);
    const Tensor up = unpool1d(y, rec, 4);
    CHECK(up.vec() == std::vector<double>{0.0, 3.0, 0.0, 4.0});

    const Tensor zeros = unpool1d(Tensor({1, 1, 2}), rec, 4);
    for (int64_t i = 0; i < zeros.size(); ++i) CHECK(zeros[i] == 0.0);
}

TEST_CASE("unpool1d rejects corrupt records") {
    Tensor x({1, 1, 4}, {1, 3, 2, 4});
    auto [y, rec] = maxpool1d(x, 2, 2);
    rec.argmax[1] = 9;
    CHECK_THROWS_AS(unpool1d(y, rec, 4), std::invalid_argument);
}

TEST_CASE("maxpool-unpool roundtrip property") {
    // Pooling always consumes relu outputs in this engine, so the roundtrip
    // identity is exercised on non-negative inputs.
    Rng rng(33);
    for (int trial = 0; trial < 50; ++trial) {
        const int len = 4 + rng.uniform_int(20);
        const int size = 2 + rng.uniform_int(2);
        if (len < size) continue;
        const int stride = 1 + rng.uniform_int(size);
        Tensor x = relu(rng.gaussian({2, 3, len}, 1.0));
        auto [v, rec] = maxpool1d(x, size, stride);
        const Tensor up = unpool1d(v, rec, len);
        auto [v2, rec2] = maxpool1d(up, size, stride);
        for (int64_t i = 0; i < v.size(); ++i) {
            CHECK(v2[i] == doctest::Approx(v[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("batchnorm two-point standardization") {
    Tensor x({2, 1}, {1, 3});
    BatchNormParams p = make_batchnorm(1);
    BatchNormCache cache;
    const Tensor y = batchnorm(x, p, BnMode::Train, &cache, false);
    CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(y.at(1, 0) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("batchnorm affine law") {
    Rng rng(3);
    Tensor x = rng.gaussian({64, 4}, 1.5);
    BatchNormParams p = make_batchnorm(4);
    for (int c = 0; c < 4; ++c) {
        p.gamma[c] = 2.0;
        p.beta[c] = 5.0;
    }
    const Tensor y = batchnorm(x, p, BnMode::Train, nullptr, false);
    for (int c = 0; c < 4; ++c) {
        double mean = 0.0;
        for (int n = 0; n < 64; ++n) mean += y.at(n, c);
        mean /= 64;
        double var = 0.0;
        for (int n = 0; n < 64; ++n) var += (y.at(n, c) - mean) * (y.at(n, c) - mean);
        var /= 64;
        CHECK(mean == doctest::Approx(5.0).epsilon(1e-6));
        CHECK(std::sqrt(var) == doctest::Approx(2.0).epsilon(1e-3));
    }
}

TEST_CASE("batchnorm rejects batch of one in train mode") {
    Tensor x({1, 3}, {1, 2, 3});
    BatchNormParams p = make_batchnorm(3);
    CHECK_THROWS_AS(batchnorm(x, p, BnMode::Train, nullptr, false), std::invalid_argument);
    CHECK_NOTHROW(batchnorm(x, p, BnMode::Eval, nullptr, false));
}

TEST_CASE("batchnorm backward matches finite differences") {
    Rng rng(7);
    Tensor x = rng.gaussian({4, 6}, 1.0);
    BatchNormParams p = make_batchnorm(6);
    for (int c = 0; c < 6; ++c) {
        p.gamma[c] = 0.5 + 0.2 * c;
        p.beta[c] = 0.1 * c;
    }
    const Tensor w = loss_weights({4, 6}, 13);
    auto loss = [&]() {
        BatchNormParams local = p;
        return weighted_sum(batchnorm(x, local, BnMode::Train, nullptr, false), w);
    };
    BatchNormCache cache;
    batchnorm(x, p, BnMode::Train, &cache, false);
    BatchNormGrads g = batchnorm_backward(p, cache, w);
    const GradCheckReport report = gradient_check(
        loss, {{"x", &x, &g.dx}, {"gamma", &p.gamma, &g.dgamma}, {"beta", &p.beta, &g.dbeta}},
        1e-6, 1e-5);
    CHECK(report.pass);
}

TEST_CASE("batchnorm running statistics feed eval mode") {
    Rng rng(19);
    BatchNormParams p = make_batchnorm(2);
    Tensor x = rng.gaussian({32, 2}, 1.0);
    for (int i = 0; i < 200; ++i) batchnorm(x, p, BnMode::Train, nullptr, true);
    BatchNormCache cache;
    const Tensor train_y = batchnorm(x, p, BnMode::Train, &cache, false);
    const Tensor eval_y = batchnorm(x, p, BnMode::Eval, nullptr, false);
    for (int64_t i = 0; i < train_y.size(); ++i) {
        CHECK(eval_y[i] == doctest::Approx(train_y[i]).epsilon(1e-3));
    }
}

TEST_CASE("relu and backward") {
    const Tensor x = Tensor::from({-1, 0, 2});
    CHECK(relu(x).vec() == std::vector<double>{0.0, 0.0, 2.0});
    const Tensor dy = Tensor::from({5, 5, 5});
    CHECK(relu_backward(x, dy).vec() == std::vector<double>{0.0, 0.0, 5.0});
}

TEST_CASE("softmax symmetry, stability, normalization") {
    const Tensor u = softmax(Tensor::matrix(1, 3, {0, 0, 0}));
    for (int c = 0; c < 3; ++c) CHECK(u.at(0, c) == doctest::Approx(1.0 / 3.0));

    const Tensor big = softmax(Tensor::matrix(1, 2, {1000, 0}));
    CHECK(big.all_finite());
    CHECK(big.at(0, 0) == doctest::Approx(1.0));
    CHECK(big.at(0, 1) == doctest::Approx(0.0));

    Rng rng(41);
    const Tensor y = softmax(rng.gaussian({16, 6}, 3.0));
    for (int n = 0; n < 16; ++n) {
        double s = 0.0;
        for (int c = 0; c < 6; ++c) {
            s += y.at(n, c);
            CHECK(y.at(n, c) > 0.0);
            CHECK(y.at(n, c) < 1.0);
        }
        CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("softmax backward matches finite differences") {
    Rng rng(23);
    Tensor z = rng.gaussian({3, 5}, 1.0);
    const Tensor w = loss_weights({3, 5}, 29);
    auto loss = [&]() { return weighted_sum(softmax(z), w); };
    Tensor dz = softmax_backward(softmax(z), w);
    const GradCheckReport report = gradient_check(loss, {{"z", &z, &dz}}, 1e-6, 1e-6);
    CHECK(report.pass);
}

TEST_CASE("dense forward and backward") {
    Rng rng(31);
    Tensor x = rng.gaussian({3, 4}, 1.0);
    DenseParams p;
    p.weight = rng.gaussian({4, 2}, 1.0);
    p.bias = rng.gaussian({2}, 1.0);
    const Tensor w = loss_weights({3, 2}, 37);
    auto loss = [&]() { return weighted_sum(dense(x, p), w); };
    DenseGrads g = dense_backward(x, p, w);
    const GradCheckReport report = gradient_check(
        loss, {{"x", &x, &g.dx}, {"weight", &p.weight, &g.dweight}, {"bias", &p.bias, &g.dbias}},
        1e-6, 1e-6);
    CHECK(report.pass);
}
