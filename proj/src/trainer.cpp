#include "lcdnet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "lcdnet/checkpoint.hpp"
#include "lcdnet/graph.hpp"

namespace lcdnet {

AdamW::AdamW(LcdNet<float>& model, OptimConfig cfg) : cfg_(cfg) {
    model.visit_params([this](const std::string& name, Tensor<float>& t, bool decay) {
        ParamSlot slot;
        slot.name = name;
        slot.param = t;  // shares storage with the model
        slot.decay = decay;
        slot.m.assign(static_cast<std::size_t>(t.numel()), 0.0f);
        slot.v.assign(slot.m.size(), 0.0f);
        slots_.push_back(std::move(slot));
    });
}

void AdamW::step() {
    ++step_;
    const float b1 = static_cast<float>(cfg_.beta1);
    const float b2 = static_cast<float>(cfg_.beta2);
    const float inv_bc1 = static_cast<float>(1.0 / (1.0 - std::pow(cfg_.beta1, step_)));
    const float inv_bc2 = static_cast<float>(1.0 / (1.0 - std::pow(cfg_.beta2, step_)));
    const float lr = static_cast<float>(cfg_.lr);
    const float eps = static_cast<float>(cfg_.eps);
    for (ParamSlot& s : slots_) {
        if (!s.param.has_grad()) {
            throw std::runtime_error("missing gradient for trainable parameter '" + s.name + "'");
        }
        float* p = s.param.mutable_data();
        const auto g = s.param.grad();
        const auto n = static_cast<std::size_t>(s.param.numel());
        const float decay_scale =
            s.decay ? static_cast<float>(1.0 - cfg_.lr * cfg_.weight_decay) : 1.0f;
        float* m = s.m.data();
        float* v = s.v.data();
        for (std::size_t i = 0; i < n; ++i) {
            const float pi = p[i] * decay_scale;
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            p[i] = pi - lr * (m[i] * inv_bc1) / (std::sqrt(v[i] * inv_bc2) + eps);
        }
    }
}

void AdamW::zero_grad() {
    for (ParamSlot& s : slots_) {
        s.param.zero_grad();
    }
}

double train_step(LcdNet<float>& model, AdamW& opt, const Batch& batch) {
    enable_flush_to_zero();
    Graph<float> tape;
    double loss_value = 0.0;
    {
        Graph<float>::Scope scope(tape);
        auto [l0, l1] = model.forward(batch.t1, batch.t2, true);
        Tensor<float> loss = add(bce_with_logits(l0, batch.label),
                                 bce_with_logits(l1, batch.label));
        loss_value = static_cast<double>(loss.scalar());
        tape.backward(loss);
    }
    opt.step();
    opt.zero_grad();
    return loss_value;
}

ConfusionCounts evaluate(LcdNet<float>& model, const std::vector<SamplePair>& samples,
                         int batch_size, double threshold) {
    enable_flush_to_zero();
    ConfusionCounts counts;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); i += static_cast<std::size_t>(batch_size)) {
        idx.clear();
        for (std::size_t j = i; j < samples.size() && j < i + static_cast<std::size_t>(batch_size);
             ++j) {
            idx.push_back(j);
        }
        Batch b = make_batch(samples, idx);
        auto [l0, l1] = model.forward(b.t1, b.t2, false);
        Tensor<float> prob = sigmoid(l0);
        Tensor<float> mask = Tensor<float>::zeros(prob.shape());
        float* md = mask.mutable_data();
        const float* pd = prob.data();
        for (std::int64_t k = 0; k < prob.numel(); ++k) {
            md[k] = pd[k] > threshold ? 1.0f : 0.0f;
        }
        counts += accumulate(mask, b.label);
    }
    return counts;
}

namespace {

std::string csv_metric(const std::optional<double>& v) {
    if (!v) {
        return "undefined";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

}  // namespace

TrainLog fit(LcdNet<float>& model, const std::vector<SamplePair>& train,
             const std::vector<SamplePair>& val, const TrainConfig& cfg) {
    TrainLog log;
    if (cfg.epochs == 0) {
        return log;
    }
    if (train.empty() || val.empty()) {
        throw std::invalid_argument("fit requires non-empty train and validation splits");
    }
    if (cfg.batch_size <= 0) {
        throw std::invalid_argument("batch size must be positive");
    }

    AdamW opt(model, cfg.optim);
    Rng shuffle_rng(cfg.seed);
    Rng aug_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    std::ofstream csv;
    if (!cfg.log_csv_path.empty()) {
        csv.open(cfg.log_csv_path, std::ios::trunc);
        if (!csv) {
            throw std::runtime_error("cannot open training log '" + cfg.log_csv_path + "'");
        }
        csv << "epoch,train_loss,pc,rc,f1,oa,kappa,iou,seconds\n";
    }

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        // Fisher-Yates with the session RNG; single-worker order is the contract
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                shuffle_rng.randint(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        int batches = 0;
        std::vector<std::size_t> idx;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() +
                           static_cast<std::ptrdiff_t>(
                               std::min(order.size(),
                                        start + static_cast<std::size_t>(cfg.batch_size))));
            Batch batch;
            if (cfg.augment) {
                std::vector<SamplePair> augmented;
                augmented.reserve(idx.size());
                for (std::size_t i : idx) {
                    augmented.push_back(augment(train[i], cfg.aug, aug_rng));
                }
                std::vector<std::size_t> all(augmented.size());
                for (std::size_t i = 0; i < all.size(); ++i) {
                    all[i] = i;
                }
                batch = make_batch(augmented, all);
            } else {
                batch = make_batch(train, idx);
            }
            try {
                loss_sum += train_step(model, opt, batch);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(batches) + ": " + e.what());
            }
            ++batches;
        }

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / std::max(batches, 1);
        entry.val = compute_metrics(evaluate(model, val, cfg.batch_size, cfg.threshold));
        entry.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        if (entry.val.iou && *entry.val.iou > log.best_iou) {
            log.best_iou = *entry.val.iou;
            log.best_epoch = epoch;
            if (!cfg.checkpoint_path.empty()) {
                char iou_str[32];
                std::snprintf(iou_str, sizeof(iou_str), "%.6f", log.best_iou);
                save_checkpoint(model, cfg.checkpoint_path,
                                {{"epoch", std::to_string(epoch)}, {"best_iou", iou_str}});
            }
        }
        if (csv.is_open()) {
            char loss_str[32], sec_str[32];
            std::snprintf(loss_str, sizeof(loss_str), "%.6f", entry.train_loss);
            std::snprintf(sec_str, sizeof(sec_str), "%.3f", entry.seconds);
            csv << epoch << ',' << loss_str << ',' << csv_metric(entry.val.pc) << ','
                << csv_metric(entry.val.rc) << ',' << csv_metric(entry.val.f1) << ','
                << csv_metric(entry.val.oa) << ',' << csv_metric(entry.val.kappa_standard) << ','
                << csv_metric(entry.val.iou) << ',' << sec_str << "\n";
            csv.flush();
        }
        if (cfg.verbose) {
            std::printf("epoch %3d  loss %.4f  f1 %s  iou %s  (%.1fs)\n", epoch,
                        entry.train_loss, csv_metric(entry.val.f1).c_str(),
                        csv_metric(entry.val.iou).c_str(), entry.seconds);
            std::fflush(stdout);
        }
        log.epochs.push_back(entry);
    }
    return log;
}

}  // namespace lcdnet
