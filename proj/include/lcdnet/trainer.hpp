#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcdnet/data.hpp"
#include "lcdnet/metrics.hpp"
#include "lcdnet/model.hpp"

namespace lcdnet {

struct OptimConfig {
    double lr = 5e-4;
    double weight_decay = 2.5e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with decoupled weight decay: decay-eligible parameters shrink by
/// (1 - lr*wd) before the bias-corrected Adam step. Batch-norm affine terms
/// and GMM vectors register with decay off.
class AdamW {
public:
    struct ParamSlot {
        std::string name;
        Tensor<float> param;
        bool decay = false;
        std::vector<float> m, v;
    };

    AdamW(LcdNet<float>& model, OptimConfig cfg);

    /// One update from the gradients currently on the parameters. A trainable
    /// parameter without a gradient is an error.
    void step();
    void zero_grad();
    std::int64_t step_count() const { return step_; }

    std::vector<ParamSlot>& slots() { return slots_; }

private:
    OptimConfig cfg_;
    std::vector<ParamSlot> slots_;
    std::int64_t step_ = 0;
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 8;
    std::uint64_t seed = 42;
    double threshold = 0.5;
    OptimConfig optim;
    bool augment = false;
    AugmentConfig aug;
    std::string checkpoint_path;  // empty disables checkpointing
    std::string log_csv_path;     // empty disables the CSV log
    bool verbose = false;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;  // mean summed dual-head loss per batch
    MetricSet val;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochLog> epochs;
    double best_iou = -1.0;
    int best_epoch = -1;
};

/// One optimization step on a prepared batch; returns the summed dual-head
/// loss. Exposed for the overfit harness.
double train_step(LcdNet<float>& model, AdamW& opt, const Batch& batch);

/// Confusion counts of thresholded predictions over a full split.
ConfusionCounts evaluate(LcdNet<float>& model, const std::vector<SamplePair>& samples,
                         int batch_size, double threshold);

/// Algorithm: per epoch, shuffled batches of summed dual-head BCE, then a
/// validation pass; a strictly better validation IoU writes the checkpoint.
TrainLog fit(LcdNet<float>& model, const std::vector<SamplePair>& train,
             const std::vector<SamplePair>& val, const TrainConfig& cfg);

}  // namespace lcdnet
