#include "doctest.h"
#include "lcdnet/decoder.hpp"
#include "lcdnet/gradcheck.hpp"
#include "test_support.hpp"

using namespace lcdnet;

namespace {

/// Fused pyramid of random features with the halving resolutions.
std::array<Tensor<float>, 5> fake_pyramid(Rng& rng, const std::array<int, 5>& chans,
                                          std::int64_t input_hw, std::int64_t batch = 1) {
    std::array<Tensor<float>, 5> fused;
    for (int k = 0; k < 5; ++k) {
        const std::int64_t hw = input_hw >> (k + 1);
        fused[static_cast<std::size_t>(k)] = testsupport::random_tensor<float>(
            rng, {batch, chans[static_cast<std::size_t>(k)], hw, hw});
    }
    return fused;
}

const std::array<int, 5> kChans = {4, 6, 8, 8, 12};
const std::array<int, 5> kWidths = {6, 6, 8, 8, 8};

}  // namespace

TEST_CASE("decode emits two full-resolution logit maps") {
    Decoder<float> dec;
    dec.build(kChans, kWidths, true, 1e-5f, true, 3);
    Rng rng(40);
    auto fused = fake_pyramid(rng, kChans, 64, 2);
    auto [l0, l1] = dec.decode(fused);
    CHECK(l0.shape() == Shape{2, 1, 64, 64});
    CHECK(l1.shape() == Shape{2, 1, 64, 64});

    SUBCASE("resolution mismatch is rejected") {
        fused[2] = Tensor<float>::zeros({2, 8, 5, 5});
        CHECK_THROWS_AS(dec.decode(fused), std::invalid_argument);
    }
}

TEST_CASE("zero-weight heads produce identically zero logits") {
    Decoder<float> dec;
    dec.build(kChans, kWidths, true, 1e-5f, true, 3);
    for (Conv2dLayer<float>* head : {&dec.head0, &dec.head1}) {
        std::fill(head->weight.mutable_data(), head->weight.mutable_data() + head->weight.numel(),
                  0.0f);
        std::fill(head->bias.mutable_data(), head->bias.mutable_data() + head->bias.numel(),
                  0.0f);
    }
    Rng rng(41);
    auto fused = fake_pyramid(rng, kChans, 32);
    auto [l0, l1] = dec.decode(fused);
    for (std::int64_t i = 0; i < l0.numel(); ++i) {
        CHECK(l0.data()[i] == 0.0f);
        CHECK(l1.data()[i] == 0.0f);
    }
}

TEST_CASE("zeroing the 3x3 conv reduces a level to its gated output") {
    DecoderLevel<float> level;
    level.build("lvl", 8, 6, true, 1e-5f, true, 9);
    Rng rng(42);
    level.gmm->gamma = testsupport::random_tensor<float>(rng, {1, 6, 1, 1});
    std::fill(level.spatial.weight.mutable_data(),
              level.spatial.weight.mutable_data() + level.spatial.weight.numel(), 0.0f);
    std::fill(level.spatial.bias.mutable_data(),
              level.spatial.bias.mutable_data() + level.spatial.bias.numel(), 0.0f);

    Tensor<float> x = testsupport::random_tensor<float>(rng, {1, 8, 4, 4});
    Tensor<float> out = level.forward(x);
    Tensor<float> gated = level.gmm->gate(level.reduce.forward(x));
    CHECK(testsupport::bit_equal(out, gated));
}

TEST_CASE("decode with GMMs at init equals decode with GMMs removed") {
    Decoder<float> with;
    with.build(kChans, kWidths, true, 1e-5f, true, 5);
    Decoder<float> without;
    without.build(kChans, kWidths, false, 1e-5f, true, 5);
    Rng rng(43);
    auto fused = fake_pyramid(rng, kChans, 32);
    auto [a0, a1] = with.decode(fused);
    auto [b0, b1] = without.decode(fused);
    CHECK(testsupport::bit_equal(a0, b0));
    CHECK(testsupport::bit_equal(a1, b1));
}

TEST_CASE("decoder widths: params grow monotonically and zero width is an error") {
    auto params_for = [](const std::array<int, 5>& widths) {
        Decoder<float> dec;
        dec.build(kChans, widths, true, 1e-5f, true, 1);
        std::int64_t total = 0;
        dec.visit_params([&](const std::string&, Tensor<float>& t, bool) { total += t.numel(); });
        return total;
    };
    const std::int64_t base = params_for(kWidths);
    std::array<int, 5> doubled = kWidths;
    for (int& w : doubled) {
        w *= 2;
    }
    CHECK(params_for(doubled) > base);

    Decoder<float> bad;
    CHECK_THROWS_AS(bad.build(kChans, {6, 6, 0, 8, 8}, true, 1e-5f, true, 1),
                    std::invalid_argument);
}

TEST_CASE("one decoder level passes finite differences") {
    DecoderLevel<double> level;
    level.build("lvl", 6, 4, true, 1e-5, true, 17);
    Rng rng(44);
    level.gmm->gamma = testsupport::random_tensor<double>(rng, {1, 4, 1, 1});
    level.gmm->beta = testsupport::random_tensor<double>(rng, {1, 4, 1, 1});

    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        Tensor<double> x = testsupport::random_tensor<double>(rng, {2, 6, 3, 3});
        worst = std::max(worst,
                         finite_diff_check(
                             [&](const Tensor<double>& t) { return sum_all(level.forward(t)); },
                             x, 1e-6));
    }
    Tensor<double> x0 = testsupport::random_tensor<double>(rng, {2, 6, 3, 3});
    worst = std::max(worst, finite_diff_check(
                                [&](const Tensor<double>& w) {
                                    DecoderLevel<double> l2 = level;
                                    l2.reduce.weight = w;
                                    return sum_all(l2.forward(x0));
                                },
                                level.reduce.weight, 1e-6));
    worst = std::max(worst, finite_diff_check(
                                [&](const Tensor<double>& w) {
                                    DecoderLevel<double> l2 = level;
                                    l2.spatial.weight = w;
                                    return sum_all(l2.forward(x0));
                                },
                                level.spatial.weight, 1e-6));
    CHECK(worst < 1e-4);
}
