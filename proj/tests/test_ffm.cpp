#include "doctest.h"
#include "lcdnet/ffm.hpp"
#include "lcdnet/gradcheck.hpp"
#include "test_support.hpp"

using namespace lcdnet;

namespace {

/// 1x1x1x1 FFM with both convolutions set to (weight w, bias 0).
Ffm<float> scalar_ffm(float w1, float w2) {
    Ffm<float> f;
    f.build("ffm", 1, 1, 0);
    f.conv1.weight.mutable_data()[0] = w1;
    f.conv1.bias.mutable_data()[0] = 0.0f;
    f.conv2.weight.mutable_data()[0] = w2;
    f.conv2.bias.mutable_data()[0] = 0.0f;
    return f;
}

float fuse_scalar(Ffm<float>& f, float x1, float x2) {
    Tensor<float> t1 = Tensor<float>::full({1, 1, 1, 1}, x1);
    Tensor<float> t2 = Tensor<float>::full({1, 1, 1, 1}, x2);
    return f.fuse(t1, t2).scalar();
}

}  // namespace

TEST_CASE("ffm hand evaluations with identity convolutions") {
    Ffm<float> f = scalar_ffm(1.0f, 1.0f);
    CHECK(fuse_scalar(f, 2.0f, 3.0f) == doctest::Approx(18.0f));  // s1=6, s2=9, d0=18
    CHECK(fuse_scalar(f, -1.0f, 3.0f) == doctest::Approx(0.0f));  // s1=0, s2=3, d0=relu(-3)
}

TEST_CASE("zero x2 with zero biases annihilates the output") {
    Rng rng(12);
    Ffm<float> f;
    f.build("ffm", 3, 3, 99);
    std::fill(f.conv1.bias.mutable_data(), f.conv1.bias.mutable_data() + 3, 0.0f);
    std::fill(f.conv2.bias.mutable_data(), f.conv2.bias.mutable_data() + 3, 0.0f);
    Tensor<float> x1 = testsupport::random_tensor<float>(rng, {2, 3, 4, 4});
    Tensor<float> x2 = Tensor<float>::zeros({2, 3, 4, 4});
    Tensor<float> d0 = f.fuse(x1, x2);
    for (std::int64_t i = 0; i < d0.numel(); ++i) {
        CHECK(d0.data()[i] == 0.0f);
    }
}

TEST_CASE("ffm output is non-negative and keeps the input shape") {
    Rng rng(13);
    Ffm<float> f;
    f.build("ffm", 5, 5, 7);
    Tensor<float> x1 = testsupport::random_tensor<float>(rng, {2, 5, 6, 6});
    Tensor<float> x2 = testsupport::random_tensor<float>(rng, {2, 5, 6, 6});
    Tensor<float> d0 = f.fuse(x1, x2);
    CHECK(d0.shape() == Shape{2, 5, 6, 6});
    for (std::int64_t i = 0; i < d0.numel(); ++i) {
        CHECK(d0.data()[i] >= 0.0f);
    }
    CHECK_THROWS_AS(f.fuse(x1, testsupport::random_tensor<float>(rng, {2, 5, 6, 5})),
                    std::invalid_argument);
    CHECK_THROWS_AS(f.fuse(testsupport::random_tensor<float>(rng, {2, 4, 6, 6}),
                           testsupport::random_tensor<float>(rng, {2, 4, 6, 6})),
                    std::invalid_argument);
}

TEST_CASE("literal listing mode skips conv1 on x1 and conv2 entirely") {
    Ffm<float> canonical = scalar_ffm(2.0f, 1.0f);
    CHECK(fuse_scalar(canonical, 2.0f, 3.0f) == doctest::Approx(120.0f));
    // x1'=4, x2'=6, s1=24, s2=30, d0=relu(30*4)

    Ffm<float> literal = scalar_ffm(2.0f, 1.0f);
    literal.literal = true;
    CHECK(fuse_scalar(literal, 2.0f, 3.0f) == doctest::Approx(30.0f));
    // o1=relu(2)=2, o2=6, ox=relu(12)=12, out=relu((12+3)*2)

    Ffm<float> canonical2 = scalar_ffm(1.0f, 2.0f);
    CHECK(fuse_scalar(canonical2, 2.0f, 3.0f) == doctest::Approx(30.0f));  // s2=15, d0=30
}

TEST_CASE("ffm gradients pass finite differences at 64-bit") {
    Rng rng(14);
    Ffm<double> f;
    f.build("ffm", 3, 3, 5);
    Tensor<double> x2 = testsupport::random_tensor<double>(rng, {2, 3, 3, 3});

    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        Tensor<double> x1 = testsupport::random_tensor<double>(rng, {2, 3, 3, 3});
        for (int attempt = 0; attempt < 20; ++attempt) {
            KinkWatch watch;
            (void)f.fuse(x1, x2);
            if (watch.margin() > 1e-4) {
                break;
            }
            x1 = testsupport::random_tensor<double>(rng, {2, 3, 3, 3});
        }
        worst = std::max(worst, finite_diff_check(
                                    [&](const Tensor<double>& t) {
                                        return sum_all(f.fuse(t, x2));
                                    },
                                    x1, 1e-6));
        worst = std::max(worst, finite_diff_check(
                                    [&](const Tensor<double>& t) {
                                        return sum_all(f.fuse(x2, t));
                                    },
                                    x1, 1e-6));
    }
    // conv parameters
    Rng rng2(15);
    Tensor<double> a = testsupport::random_tensor<double>(rng2, {1, 3, 3, 3});
    Tensor<double> b = testsupport::random_tensor<double>(rng2, {1, 3, 3, 3});
    worst = std::max(worst, finite_diff_check(
                                [&](const Tensor<double>& w) {
                                    Ffm<double> g = f;
                                    g.conv1.weight = w;
                                    return sum_all(g.fuse(a, b));
                                },
                                f.conv1.weight, 1e-6));
    worst = std::max(worst, finite_diff_check(
                                [&](const Tensor<double>& w) {
                                    Ffm<double> g = f;
                                    g.conv2.weight = w;
                                    return sum_all(g.fuse(a, b));
                                },
                                f.conv2.weight, 1e-6));
    CHECK(worst < 1e-4);
}
