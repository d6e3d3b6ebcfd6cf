#include "lcdnet/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "lcdnet/decoder.hpp"
#include "lcdnet/ffm.hpp"
#include "lcdnet/gmm.hpp"
#include "lcdnet/gradcheck.hpp"
#include "lcdnet/model.hpp"

namespace lcdnet::gradsuite {

namespace {

constexpr double kStep = 1e-6;

Tensor<double> randn(Rng& rng, Shape s, double kink_margin = 0.0, double scale = 1.0) {
    std::vector<double> v(static_cast<std::size_t>(s.numel()));
    for (auto& x : v) {
        x = rng.normal() * scale;
        if (kink_margin > 0.0 && std::abs(x) < kink_margin) {
            x = (x >= 0.0 ? 1.0 : -1.0) * (kink_margin + std::abs(x));
        }
    }
    return Tensor<double>::from_data(s, std::move(v));
}

Tensor<double> randpos(Rng& rng, Shape s, double lo = 0.25, double hi = 2.0) {
    std::vector<double> v(static_cast<std::size_t>(s.numel()));
    for (auto& x : v) {
        x = rng.uniform(lo, hi);
    }
    return Tensor<double>::from_data(s, std::move(v));
}

Tensor<double> randmask(Rng& rng, Shape s, double p = 0.4) {
    std::vector<double> v(static_cast<std::size_t>(s.numel()));
    for (auto& x : v) {
        x = rng.bernoulli(p) ? 1.0 : 0.0;
    }
    return Tensor<double>::from_data(s, std::move(v));
}

std::vector<std::int64_t> every_kth(std::int64_t numel, std::int64_t k) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = 0; i < numel; i += k) {
        idx.push_back(i);
    }
    return idx;
}

double suite(const std::function<Tensor<double>(const Tensor<double>&)>& f, Shape in, int trials,
             Rng& rng, double kink_margin = 0.0, bool positive = false) {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        Tensor<double> x = positive ? randpos(rng, in) : randn(rng, in, kink_margin);
        worst = std::max(worst, finite_diff_check(f, x, kStep));
    }
    return worst;
}

}  // namespace

std::vector<CheckResult> run_op_checks(int trials, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<CheckResult> out;
    auto push = [&out](std::string name, double err) { out.push_back({std::move(name), err}); };

    {
        ConvSpec spec{4, 6, 3, 3, 2, 1, 2, true};
        Tensor<double> w = randn(rng, {6, 2, 3, 3});
        Tensor<double> b = randn(rng, {1, 6, 1, 1});
        Tensor<double> x0 = randn(rng, {2, 4, 7, 7});
        push("conv2d/input", suite([&](const Tensor<double>& x) {
                 return sum_all(conv2d(x, w, &b, spec));
             },
                                   {2, 4, 7, 7}, trials, rng));
        push("conv2d/weight", suite([&](const Tensor<double>& wt) {
                 return sum_all(conv2d(x0, wt, &b, spec));
             },
                                    {6, 2, 3, 3}, trials, rng));
        push("conv2d/bias", suite([&](const Tensor<double>& bt) {
                 return sum_all(conv2d(x0, w, &bt, spec));
             },
                                  {1, 6, 1, 1}, trials, rng));
    }
    {
        ConvSpec spec{3, 3, 3, 3, 1, 1, 3, false};
        Tensor<double> w = randn(rng, {3, 1, 3, 3});
        Tensor<double> x0 = randn(rng, {2, 3, 5, 5});
        push("depthwise_conv2d/input", suite([&](const Tensor<double>& x) {
                 return sum_all(depthwise_conv2d(x, w, spec));
             },
                                             {2, 3, 5, 5}, trials, rng));
        push("depthwise_conv2d/weight", suite([&](const Tensor<double>& wt) {
                 return sum_all(depthwise_conv2d(x0, wt, spec));
             },
                                              {3, 1, 3, 3}, trials, rng));
    }
    {
        Tensor<double> r = randn(rng, {2, 3, 4, 4});
        auto weighted = [&r](Tensor<double> y) { return sum_all(mul(y, r)); };
        push("relu", suite([&](const Tensor<double>& x) { return weighted(relu(x)); },
                           {2, 3, 4, 4}, trials, rng, 1e-3));
        push("relu6", suite([&](const Tensor<double>& x) { return weighted(relu6(x)); },
                            {2, 3, 4, 4}, trials, rng, 1e-3));
        push("tanh", suite([&](const Tensor<double>& x) { return weighted(tanh(x)); },
                           {2, 3, 4, 4}, trials, rng));
        push("sigmoid", suite([&](const Tensor<double>& x) { return weighted(sigmoid(x)); },
                              {2, 3, 4, 4}, trials, rng));
        push("rsqrt", suite([&](const Tensor<double>& x) { return weighted(rsqrt(x)); },
                            {2, 3, 4, 4}, trials, rng, 0.0, true));
        push("add_scalar", suite([&](const Tensor<double>& x) { return weighted(add_scalar(x, 1.3)); },
                                 {2, 3, 4, 4}, trials, rng));
        push("mul_scalar",
             suite([&](const Tensor<double>& x) { return weighted(mul_scalar(x, -0.7)); },
                   {2, 3, 4, 4}, trials, rng));
    }
    for (bool training : {true, false}) {
        Tensor<double> gamma = randpos(rng, {1, 3, 1, 1});
        Tensor<double> beta = randn(rng, {1, 3, 1, 1});
        Tensor<double> x0 = randn(rng, {2, 3, 3, 3});
        auto run = [&](const Tensor<double>& x, const Tensor<double>& g,
                       const Tensor<double>& b) {
            Tensor<double> rm = Tensor<double>::zeros({1, 3, 1, 1});
            Tensor<double> rv = Tensor<double>::full({1, 3, 1, 1}, 1.0);
            return sum_all(mul(batchnorm2d(x, g, b, rm, rv, training, 0.1, 1e-5), x));
        };
        const char* mode = training ? "train" : "eval";
        push(std::string("batchnorm2d/") + mode + "/input",
             suite([&](const Tensor<double>& x) { return run(x, gamma, beta); }, {2, 3, 3, 3},
                   trials, rng));
        push(std::string("batchnorm2d/") + mode + "/gamma",
             suite([&](const Tensor<double>& g) { return run(x0, g, beta); }, {1, 3, 1, 1},
                   trials, rng));
        push(std::string("batchnorm2d/") + mode + "/beta",
             suite([&](const Tensor<double>& b) { return run(x0, gamma, b); }, {1, 3, 1, 1},
                   trials, rng));
    }
    {
        Tensor<double> r = randn(rng, {2, 2, 6, 6});
        push("upsample_bilinear_x2", suite([&](const Tensor<double>& x) {
                 return sum_all(mul(upsample_bilinear_x2(x), r));
             },
                                           {2, 2, 3, 3}, trials, rng));
        push("l2_norm_spatial/eps",
             suite([](const Tensor<double>& x) { return sum_all(l2_norm_spatial(x, 1e-5)); },
                   {2, 3, 3, 3}, trials, rng));
        push("l2_norm_spatial/eps0",
             suite([](const Tensor<double>& x) { return sum_all(l2_norm_spatial(x, 0.0)); },
                   {2, 3, 3, 3}, trials, rng));
        Tensor<double> rc = randn(rng, {2, 1, 3, 3});
        push("channel_mean", suite([&](const Tensor<double>& x) {
                 return sum_all(mul(channel_mean(x), rc));
             },
                                   {2, 4, 3, 3}, trials, rng));
        Tensor<double> other = randn(rng, {2, 2, 3, 3});
        Tensor<double> rcat = randn(rng, {2, 5, 3, 3});
        push("concat_channels", suite([&](const Tensor<double>& x) {
                 return sum_all(mul(concat_channels(x, other), rcat));
             },
                                      {2, 3, 3, 3}, trials, rng));
        push("sum_all", suite([](const Tensor<double>& x) { return sum_all(x); }, {2, 3, 4, 4},
                              trials, rng));
    }
    {
        Tensor<double> chan = randn(rng, {1, 3, 1, 1});
        Tensor<double> full = randn(rng, {2, 3, 4, 4});
        push("add/full", suite([&](const Tensor<double>& x) {
                 return sum_all(mul(add(x, full), full));
             },
                               {2, 3, 4, 4}, trials, rng));
        push("add/broadcast", suite([&](const Tensor<double>& c) {
                 return sum_all(mul(add(full, c), full));
             },
                                    {1, 3, 1, 1}, trials, rng));
        push("mul/full", suite([&](const Tensor<double>& x) {
                 return sum_all(mul(mul(x, chan), full));
             },
                               {2, 3, 4, 4}, trials, rng));
        push("mul/broadcast", suite([&](const Tensor<double>& c) {
                 return sum_all(mul(mul(full, c), full));
             },
                                    {1, 3, 1, 1}, trials, rng));
    }
    {
        const std::vector<std::uint8_t> mask = {1, 0, 1, 0};
        Tensor<double> f2 = randn(rng, {2, 4, 3, 3});
        Tensor<double> r1 = randn(rng, {2, 4, 3, 3});
        Tensor<double> r2 = randn(rng, {2, 4, 3, 3});
        push("exchange", suite([&](const Tensor<double>& f1) {
                 auto [a, b] = exchange(f1, f2, mask);
                 return sum_all(add(mul(a, r1), mul(b, r2)));
             },
                               {2, 4, 3, 3}, trials, rng));
    }
    {
        Tensor<double> labels = randmask(rng, {2, 1, 3, 3});
        push("bce_with_logits", suite([&](const Tensor<double>& z) {
                 return bce_with_logits(z, labels);
             },
                                      {2, 1, 3, 3}, trials, rng));
    }
    return out;
}

namespace {

/// Finite differences of `loss` w.r.t. a handful of the model's parameter
/// tensors, probing every `stride`-th element of the larger ones.
double model_param_checks(LcdNet<double>& model, const Tensor<double>& t1,
                          const Tensor<double>& t2, const Tensor<double>& labels) {
    auto loss_fn = [&]() {
        auto [l0, l1] = model.forward(t1, t2, true);
        return add(bce_with_logits(l0, labels), bce_with_logits(l1, labels));
    };
    double worst = 0.0;
    auto check_tensor = [&](Tensor<double>& param, std::int64_t stride) {
        Tensor<double> original = param;
        const double err = finite_diff_check(
            [&](const Tensor<double>& p) {
                param = p;
                Tensor<double> loss = loss_fn();
                param = original;
                return loss;
            },
            original, kStep, every_kth(original.numel(), stride));
        worst = std::max(worst, err);
    };
    check_tensor(model.encoder.stem_conv.weight, 11);
    check_tensor(model.encoder.stages[2][0].project_conv.weight, 7);
    check_tensor(model.ffms[4].conv1.weight, 13);
    check_tensor(model.decoder.levels[0].gmm->gamma, 1);
    check_tensor(model.decoder.levels[0].gmm->alpha, 1);
    check_tensor(model.decoder.levels[4].spatial.weight, 29);
    check_tensor(model.decoder.head0.weight, 1);
    return worst;
}

}  // namespace

std::vector<CheckResult> run_composite_checks(int trials, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<CheckResult> out;

    {
        Ffm<double> ffm;
        ffm.build("ffm", 3, 3, seed);
        Tensor<double> x2 = randn(rng, {2, 3, 3, 3});
        double worst = 0.0;
        for (int t = 0; t < trials; ++t) {
            Tensor<double> x1 = randn(rng, {2, 3, 3, 3});
            worst = std::max(worst, finite_diff_check(
                                        [&](const Tensor<double>& x) {
                                            return sum_all(ffm.fuse(x, x2));
                                        },
                                        x1, kStep));
            worst = std::max(worst, finite_diff_check(
                                        [&](const Tensor<double>& x) {
                                            return sum_all(ffm.fuse(x2, x));
                                        },
                                        x1, kStep));
        }
        Tensor<double> a = randn(rng, {1, 3, 4, 4});
        Tensor<double> b = randn(rng, {1, 3, 4, 4});
        worst = std::max(worst, finite_diff_check(
                                    [&](const Tensor<double>& w) {
                                        Ffm<double> g = ffm;
                                        g.conv1.weight = w;
                                        return sum_all(g.fuse(a, b));
                                    },
                                    ffm.conv1.weight, kStep));
        worst = std::max(worst, finite_diff_check(
                                    [&](const Tensor<double>& w) {
                                        Ffm<double> g = ffm;
                                        g.conv2.weight = w;
                                        return sum_all(g.fuse(a, b));
                                    },
                                    ffm.conv2.weight, kStep));
        out.push_back({"composite/ffm", worst});
    }

    for (bool rms : {true, false}) {
        Gmm<double> gmm;
        gmm.build("gmm", 3);
        gmm.rms_normalizer = rms;
        gmm.alpha = randpos(rng, {1, 3, 1, 1});
        gmm.gamma = randn(rng, {1, 3, 1, 1});
        gmm.beta = randn(rng, {1, 3, 1, 1});
        double worst = 0.0;
        for (int t = 0; t < trials; ++t) {
            Tensor<double> x = randn(rng, {2, 3, 3, 3});
            worst = std::max(worst, finite_diff_check(
                                        [&](const Tensor<double>& xx) {
                                            return sum_all(gmm.gate(xx));
                                        },
                                        x, kStep));
        }
        Tensor<double> x0 = randn(rng, {2, 3, 3, 3});
        for (auto field : {&Gmm<double>::alpha, &Gmm<double>::gamma, &Gmm<double>::beta}) {
            worst = std::max(worst, finite_diff_check(
                                        [&](const Tensor<double>& p) {
                                            Gmm<double> g = gmm;
                                            g.*field = p;
                                            return sum_all(g.gate(x0));
                                        },
                                        gmm.*field, kStep));
        }
        out.push_back({rms ? "composite/gmm" : "composite/gmm_alt_normalizer", worst});
    }

    {
        DecoderLevel<double> level;
        level.build("lvl", 6, 4, true, 1e-5, true, seed);
        level.gmm->gamma = randn(rng, {1, 4, 1, 1});
        level.gmm->beta = randn(rng, {1, 4, 1, 1});
        double worst = 0.0;
        for (int t = 0; t < trials; ++t) {
            Tensor<double> x = randn(rng, {2, 6, 3, 3});
            worst = std::max(worst, finite_diff_check(
                                        [&](const Tensor<double>& xx) {
                                            return sum_all(level.forward(xx));
                                        },
                                        x, kStep));
        }
        Tensor<double> x0 = randn(rng, {2, 6, 3, 3});
        for (auto conv : {&DecoderLevel<double>::reduce, &DecoderLevel<double>::spatial}) {
            worst = std::max(worst, finite_diff_check(
                                        [&](const Tensor<double>& w) {
                                            DecoderLevel<double> l2 = level;
                                            (l2.*conv).weight = w;
                                            return sum_all(l2.forward(x0));
                                        },
                                        (level.*conv).weight, kStep));
        }
        out.push_back({"composite/decoder_level", worst});
    }

    {
        double worst = 0.0;
        const int model_trials = std::max(1, trials / 4);
        for (int t = 0; t < model_trials; ++t) {
            LcdNet<double> model;
            model.build(LcdNetConfig::tiny(), seed + static_cast<std::uint64_t>(t));
            // pure function of the inputs for finite differencing
            model.encoder.stem_bn.momentum = 0.0;
            for (auto& stage : model.encoder.stages) {
                for (auto& block : stage) {
                    block.expand_bn.momentum = 0.0;
                    block.dw_bn.momentum = 0.0;
                    block.project_bn.momentum = 0.0;
                }
            }
            for (auto& level : model.decoder.levels) {
                if (level.gmm) {
                    level.gmm->gamma = randn(rng, level.gmm->gamma.shape(), 0.0, 0.5);
                    level.gmm->beta = randn(rng, level.gmm->beta.shape(), 0.0, 0.2);
                }
            }
            Tensor<double> t1 = randn(rng, {2, 3, 32, 32}, 0.0, 0.5);
            Tensor<double> t2 = randn(rng, {2, 3, 32, 32}, 0.0, 0.5);
            Tensor<double> labels = randmask(rng, {2, 1, 32, 32});

            // model inputs, probed sparsely
            worst = std::max(
                worst,
                finite_diff_check(
                    [&](const Tensor<double>& x) {
                        auto [l0, l1] = model.forward(x, t2, true);
                        return add(bce_with_logits(l0, labels), bce_with_logits(l1, labels));
                    },
                    t1, kStep, every_kth(t1.numel(), 97)));
            worst = std::max(worst, model_param_checks(model, t1, t2, labels));
        }
        out.push_back({"composite/tiny_model", worst});
    }
    return out;
}

}  // namespace lcdnet::gradsuite
