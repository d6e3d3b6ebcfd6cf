#include <filesystem>
#include <set>

#include "doctest.h"
#include "lcdnet/checkpoint.hpp"
#include "lcdnet/model.hpp"
#include "test_support.hpp"

using namespace lcdnet;

namespace {

LcdNet<float> tiny_model(std::uint64_t seed = 1) {
    LcdNet<float> m;
    m.build(LcdNetConfig::tiny(), seed);
    return m;
}

}  // namespace

TEST_CASE("forward obeys the shape contract") {
    LcdNet<float> m = tiny_model();
    Rng rng(50);
    Tensor<float> t1 = testsupport::random_tensor<float>(rng, {2, 3, 64, 64});
    Tensor<float> t2 = testsupport::random_tensor<float>(rng, {2, 3, 64, 64});
    auto [l0, l1] = m.forward(t1, t2, false);
    CHECK(l0.shape() == Shape{2, 1, 64, 64});
    CHECK(l1.shape() == Shape{2, 1, 64, 64});

    CHECK_THROWS_AS(m.forward(t1, Tensor<float>::zeros({2, 3, 64, 32}), false),
                    std::invalid_argument);
    CHECK_THROWS_AS(m.forward(Tensor<float>::zeros({1, 3, 48, 48}),
                              Tensor<float>::zeros({1, 3, 48, 48}), false),
                    std::invalid_argument);
}

TEST_CASE("equal inputs make the TIF a no-op") {
    Rng rng(51);
    Tensor<float> t = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});

    LcdNet<float> with_tif = tiny_model(3);
    LcdNetConfig cfg = LcdNetConfig::tiny();
    cfg.use_tif = false;
    LcdNet<float> without_tif;
    without_tif.build(cfg, 3);

    auto [a0, a1] = with_tif.forward(t, t.clone(), false);
    auto [b0, b1] = without_tif.forward(t, t.clone(), false);
    CHECK(testsupport::bit_equal(a0, b0));
    CHECK(testsupport::bit_equal(a1, b1));
}

TEST_CASE("no cross-batch coupling in eval mode") {
    LcdNet<float> m = tiny_model(5);
    Rng rng(52);
    Tensor<float> a1 = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});
    Tensor<float> a2 = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});
    Tensor<float> b1 = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});
    Tensor<float> b2 = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});

    auto stack = [](const Tensor<float>& x, const Tensor<float>& y) {
        std::vector<float> v(x.data(), x.data() + x.numel());
        v.insert(v.end(), y.data(), y.data() + y.numel());
        Shape s = x.shape();
        s.n = 2;
        return Tensor<float>::from_data(s, std::move(v));
    };
    auto [fwd0, fwd1] = m.forward(stack(a1, b1), stack(a2, b2), false);
    auto [rev0, rev1] = m.forward(stack(b1, a1), stack(b2, a2), false);
    const std::int64_t plane = 32 * 32;
    for (std::int64_t i = 0; i < plane; ++i) {
        CHECK(fwd0.data()[i] == rev0.data()[plane + i]);
        CHECK(fwd0.data()[plane + i] == rev0.data()[i]);
        CHECK(fwd1.data()[i] == rev1.data()[plane + i]);
    }
}

TEST_CASE("predict applies a strict threshold to the sigmoid") {
    LcdNet<float> m = tiny_model(7);
    std::fill(m.decoder.head0.weight.mutable_data(),
              m.decoder.head0.weight.mutable_data() + m.decoder.head0.weight.numel(), 0.0f);
    std::fill(m.decoder.head0.bias.mutable_data(),
              m.decoder.head0.bias.mutable_data() + m.decoder.head0.bias.numel(), 0.0f);
    Rng rng(53);
    Tensor<float> t1 = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});
    Tensor<float> t2 = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});

    Tensor<float> at_half = m.predict(t1, t2, 0.5f);
    for (std::int64_t i = 0; i < at_half.numel(); ++i) {
        CHECK(at_half.data()[i] == 0.0f);  // sigmoid(0) = 0.5 is not > 0.5
    }
    Tensor<float> at_zero = m.predict(t1, t2, 0.0f);
    for (std::int64_t i = 0; i < at_zero.numel(); ++i) {
        CHECK(at_zero.data()[i] == 1.0f);
    }
    Tensor<float> at_one = m.predict(t1, t2, 1.0f);
    for (std::int64_t i = 0; i < at_one.numel(); ++i) {
        CHECK(at_one.data()[i] == 0.0f);
    }
    CHECK_THROWS_AS(m.predict(t1, t2, 1.5f), std::invalid_argument);
}

TEST_CASE("predictions are exactly binary") {
    LcdNet<float> m = tiny_model(9);
    Rng rng(54);
    Tensor<float> t1 = testsupport::random_tensor<float>(rng, {2, 3, 32, 32});
    Tensor<float> t2 = testsupport::random_tensor<float>(rng, {2, 3, 32, 32});
    Tensor<float> mask = m.predict(t1, t2);
    for (std::int64_t i = 0; i < mask.numel(); ++i) {
        CHECK((mask.data()[i] == 0.0f || mask.data()[i] == 1.0f));
    }
}

TEST_CASE("encoder weights are shared between the streams") {
    LcdNet<float> m = tiny_model(11);
    Rng rng(55);
    Tensor<float> t1 = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});
    Tensor<float> t2 = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});

    auto [before0, before1] = m.forward(t1, t2, false);
    m.encoder.stem_conv.weight.mutable_data()[0] += 0.25f;
    auto [after0, after1] = m.forward(t1, t2, false);
    CHECK_FALSE(testsupport::bit_equal(before0, after0));

    // exactly one encoder parameter set exists: the count matches one encoder
    std::int64_t model_params = 0;
    std::set<std::string> names;
    m.visit_params([&](const std::string& n, Tensor<float>& t, bool) {
        model_params += t.numel();
        CHECK(names.insert(n).second);  // unique names
    });
    Encoder<float> solo;
    solo.build(EncoderConfig::tiny(), 11);
    std::int64_t enc_params = 0;
    solo.visit_params([&](const std::string&, Tensor<float>& t, bool) { enc_params += t.numel(); });
    std::int64_t rest = 0;
    for (auto& f : m.ffms) {
        f.visit_params([&](const std::string&, Tensor<float>& t, bool) { rest += t.numel(); });
    }
    m.decoder.visit_params([&](const std::string&, Tensor<float>& t, bool) { rest += t.numel(); });
    CHECK(model_params == enc_params + rest);
}

TEST_CASE("checkpoint round-trip reproduces bit-identical outputs") {
    LcdNet<float> m = tiny_model(13);
    Rng rng(56);
    // move batch-norm stats and GMM params off their defaults
    m.encoder.stem_bn.running_mean = testsupport::random_tensor<float>(rng, {1, 4, 1, 1});
    if (m.decoder.levels[0].gmm) {
        m.decoder.levels[0].gmm->gamma =
            testsupport::random_tensor<float>(rng, {1, 6, 1, 1});
    }
    Tensor<float> t1 = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});
    Tensor<float> t2 = testsupport::random_tensor<float>(rng, {1, 3, 32, 32});
    auto [want0, want1] = m.forward(t1, t2, false);

    const auto path =
        (std::filesystem::temp_directory_path() / "lcdnet_ckpt_test.lcdn").string();
    save_checkpoint(m, path, {{"epoch", "3"}, {"best_iou", "0.5"}});

    Archive meta;
    LcdNet<float> back = load_checkpoint(path, &meta);
    CHECK(meta.meta("epoch") == "3");
    CHECK(meta.meta("config_hash") == config_hash(m.cfg));
    auto [got0, got1] = back.forward(t1, t2, false);
    CHECK(testsupport::bit_equal(want0, got0));
    CHECK(testsupport::bit_equal(want1, got1));
    std::filesystem::remove(path);
}

TEST_CASE("config JSON round-trips") {
    LcdNetConfig cfg = LcdNetConfig::tiny();
    cfg.use_gmm = false;
    cfg.exchange_fraction = 0.25;
    LcdNetConfig back = config_from_json(config_to_json(cfg));
    CHECK(back.use_gmm == false);
    CHECK(back.exchange_fraction == 0.25);
    CHECK(back.decoder_widths == cfg.decoder_widths);
    CHECK(back.encoder.stage_channels() == cfg.encoder.stage_channels());
    CHECK(config_hash(back) == config_hash(cfg));
}
