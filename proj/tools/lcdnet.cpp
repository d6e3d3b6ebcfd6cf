// Command-line driver for the change-detection pipeline: synthetic data
// generation, training, evaluation, prediction, complexity profiling and
// gradient checking.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lcdnet/checkpoint.hpp"
#include "lcdnet/data.hpp"
#include "lcdnet/gradsuite.hpp"
#include "lcdnet/metrics.hpp"
#include "lcdnet/model.hpp"
#include "lcdnet/profiler.hpp"
#include "lcdnet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lcdnet;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_path(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw UsageError(std::string("missing required option ") + flag);
    }
}

void check_threads_env() {
    // kernels are single-threaded; the cap is validated and trivially honored
    if (const char* env = std::getenv("LCDNET_THREADS")) {
        const int v = std::atoi(env);
        if (v < 1) {
            throw std::runtime_error("LCDNET_THREADS must be a positive integer");
        }
    }
}

void write_echo(const std::string& out_dir, const std::string& name, const json& j) {
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / (name + "_config.json");
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot write config echo '" + path.string() + "'");
    }
    f << j.dump(2) << "\n";
}

json load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot open config file '" + path + "'");
    }
    json j;
    f >> j;
    return j;
}

/// Shared model-shape flags for subcommands that build a fresh model.
struct ModelFlags {
    std::vector<int> decoder_widths = {96, 96, 96, 96, 64};  // deepest first
    double exchange_fraction = 0.5;
    double eps = 1e-5;
    bool no_tif = false, no_ffm = false, no_gmm = false;
    bool ffm_literal = false;
    bool gmm_alt_eq4 = false;
    bool freeze_bn = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--decoder-widths", decoder_widths,
                        "five decoder widths, deepest level first")
            ->expected(5);
        cmd->add_option("--exchange-fraction", exchange_fraction,
                        "fraction of channels the TIF swaps");
        cmd->add_option("--eps", eps, "GMM embedding/normalizer epsilon");
        cmd->add_flag("--no-tif", no_tif, "disable temporal channel exchange");
        cmd->add_flag("--no-ffm", no_ffm, "fuse streams by averaging instead of the FFM");
        cmd->add_flag("--no-gmm", no_gmm, "remove the gated mechanism from the decoder");
        cmd->add_flag("--ffm-literal", ffm_literal,
                      "use the published FFM listing verbatim");
        cmd->add_flag("--gmm-alt-eq4", gmm_alt_eq4,
                      "normalize by the squared channel mean instead of the mean square");
        cmd->add_flag("--freeze-bn", freeze_bn,
                      "use running batch-norm statistics during training");
    }

    LcdNetConfig to_config() const {
        LcdNetConfig cfg;
        for (int k = 0; k < 5; ++k) {
            cfg.decoder_widths[static_cast<std::size_t>(k)] =
                decoder_widths[static_cast<std::size_t>(4 - k)];
        }
        cfg.exchange_fraction = exchange_fraction;
        cfg.eps = eps;
        cfg.use_tif = !no_tif;
        cfg.use_ffm = !no_ffm;
        cfg.use_gmm = !no_gmm;
        cfg.ffm_literal = ffm_literal;
        cfg.gmm_rms_normalizer = !gmm_alt_eq4;
        cfg.freeze_bn_stats = freeze_bn;
        return cfg;
    }

    json to_json() const {
        return json{{"decoder_widths", decoder_widths},
                    {"exchange_fraction", exchange_fraction},
                    {"eps", eps},
                    {"no_tif", no_tif},
                    {"no_ffm", no_ffm},
                    {"no_gmm", no_gmm},
                    {"ffm_literal", ffm_literal},
                    {"gmm_alt_eq4", gmm_alt_eq4},
                    {"freeze_bn", freeze_bn}};
    }
    void from_json(const json& j) {
        decoder_widths = j.at("decoder_widths").get<std::vector<int>>();
        exchange_fraction = j.at("exchange_fraction").get<double>();
        eps = j.at("eps").get<double>();
        no_tif = j.at("no_tif").get<bool>();
        no_ffm = j.at("no_ffm").get<bool>();
        no_gmm = j.at("no_gmm").get<bool>();
        ffm_literal = j.at("ffm_literal").get<bool>();
        gmm_alt_eq4 = j.at("gmm_alt_eq4").get<bool>();
        freeze_bn = j.at("freeze_bn").get<bool>();
    }
};

Tensor<float> image_tensor(const FloatImage& img) {
    std::vector<float> v(img.v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = (img.v[i] - 0.5f) / 0.5f;
    }
    return Tensor<float>::from_data({1, img.c, img.h, img.w}, std::move(v));
}

Image mask_image(const Tensor<float>& mask) {
    Image img;
    img.width = static_cast<int>(mask.shape().w);
    img.height = static_cast<int>(mask.shape().h);
    img.channels = 1;
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = mask.data()[i] > 0.5f ? 255 : 0;
    }
    return img;
}

Tensor<float> mask_tensor(const BinaryMask& m) {
    std::vector<float> v(m.v.begin(), m.v.end());
    return Tensor<float>::from_data({1, 1, m.h, m.w}, std::move(v));
}

// ---------------------------------------------------------------------------

int cmd_gen_synthetic(const std::string& config_file, std::string out, int pairs, int size,
                      double density, std::uint64_t seed) {
    if (!config_file.empty()) {
        const json j = load_config_file(config_file);
        out = j.at("out").get<std::string>();
        pairs = j.at("pairs").get<int>();
        size = j.at("size").get<int>();
        density = j.at("density").get<double>();
        seed = j.at("seed").get<std::uint64_t>();
    }
    const int holdout = std::max(1, pairs / 4);
    generate_synthetic(out, pairs, holdout, holdout, size, density, seed);
    write_echo(out, "gen_synthetic",
               json{{"subcommand", "gen-synthetic"},
                    {"out", out},
                    {"pairs", pairs},
                    {"size", size},
                    {"density", density},
                    {"seed", seed}});
    std::printf("wrote %d train / %d val / %d test pairs of %dx%d to %s\n", pairs, holdout,
                holdout, size, size, out.c_str());
    return 0;
}

struct TrainArgs {
    std::string data, out, pretrained;
    int epochs = 100;
    int batch_size = 8;
    double lr = 5e-4;
    double weight_decay = 2.5e-3;
    double threshold = 0.5;
    std::uint64_t seed = 42;
    bool augment = false;
    bool verbose = false;
    ModelFlags model;

    json to_json() const {
        json j{{"subcommand", "train"}, {"data", data},
               {"out", out},            {"pretrained", pretrained},
               {"epochs", epochs},      {"batch_size", batch_size},
               {"lr", lr},              {"weight_decay", weight_decay},
               {"threshold", threshold},{"seed", seed},
               {"augment", augment},    {"verbose", verbose}};
        j["model"] = model.to_json();
        return j;
    }
    void from_json(const json& j) {
        data = j.at("data").get<std::string>();
        out = j.at("out").get<std::string>();
        pretrained = j.at("pretrained").get<std::string>();
        epochs = j.at("epochs").get<int>();
        batch_size = j.at("batch_size").get<int>();
        lr = j.at("lr").get<double>();
        weight_decay = j.at("weight_decay").get<double>();
        threshold = j.at("threshold").get<double>();
        seed = j.at("seed").get<std::uint64_t>();
        augment = j.at("augment").get<bool>();
        verbose = j.at("verbose").get<bool>();
        model.from_json(j.at("model"));
    }
};

int cmd_train(const std::string& config_file, TrainArgs a) {
    if (!config_file.empty()) {
        a.from_json(load_config_file(config_file));
    }
    require_path(a.data, "--data");
    require_path(a.out, "--out");
    auto train_split = load_dataset(a.data, "train");
    auto val_split = load_dataset(a.data, "val");

    LcdNet<float> model;
    model.build(a.model.to_config(), a.seed);
    if (!a.pretrained.empty()) {
        load_encoder_weights(model.encoder, Archive::load(a.pretrained));
        std::printf("loaded pretrained encoder weights from %s\n", a.pretrained.c_str());
    }

    fs::create_directories(a.out);
    TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.seed = a.seed;
    cfg.threshold = a.threshold;
    cfg.optim.lr = a.lr;
    cfg.optim.weight_decay = a.weight_decay;
    cfg.augment = a.augment;
    cfg.aug.seed = a.seed;
    cfg.checkpoint_path = (fs::path(a.out) / "best.lcdn").string();
    cfg.log_csv_path = (fs::path(a.out) / "train_log.csv").string();
    cfg.verbose = a.verbose;

    write_echo(a.out, "train", a.to_json());
    TrainLog log = fit(model, train_split, val_split, cfg);
    if (log.best_epoch >= 0) {
        std::printf("best validation IoU %.4f at epoch %d; checkpoint %s\n", log.best_iou,
                    log.best_epoch, cfg.checkpoint_path.c_str());
    } else {
        std::printf("no epoch produced a defined validation IoU; no checkpoint written\n");
    }
    return 0;
}

int cmd_eval(const std::string& config_file, std::string data, std::string checkpoint,
             std::string out, std::string split, double threshold, bool maps) {
    if (!config_file.empty()) {
        const json j = load_config_file(config_file);
        data = j.at("data").get<std::string>();
        checkpoint = j.at("checkpoint").get<std::string>();
        out = j.at("out").get<std::string>();
        split = j.at("split").get<std::string>();
        threshold = j.at("threshold").get<double>();
        maps = j.at("maps").get<bool>();
    }
    require_path(data, "--data");
    require_path(checkpoint, "--checkpoint");
    auto samples = load_dataset(data, split);
    LcdNet<float> model = load_checkpoint(checkpoint);
    fs::create_directories(out);

    ConfusionCounts counts;
    for (const auto& sample : samples) {
        Tensor<float> pred =
            model.predict(image_tensor(sample.t1), image_tensor(sample.t2),
                          static_cast<float>(threshold));
        Tensor<float> label = mask_tensor(sample.label);
        counts += accumulate(pred, label);
        if (maps) {
            const fs::path dir = fs::path(out) / "confusion";
            fs::create_directories(dir);
            write_png((dir / (sample.id + ".png")).string(),
                      render_confusion_map(pred, label));
        }
    }
    MetricSet m = compute_metrics(counts);
    {
        std::ofstream csv(fs::path(out) / "metrics.csv", std::ios::trunc);
        csv << metrics_csv_header() << "\n" << metrics_csv_row(data, split, m) << "\n";
    }
    write_echo(out, "eval",
               json{{"subcommand", "eval"},
                    {"data", data},
                    {"checkpoint", checkpoint},
                    {"out", out},
                    {"split", split},
                    {"threshold", threshold},
                    {"maps", maps}});
    std::printf("%s\n%s\n", metrics_csv_header().c_str(),
                metrics_csv_row(data, split, m).c_str());
    return 0;
}

int cmd_predict(const std::string& config_file, std::string t1, std::string t2,
                std::string checkpoint, std::string out, std::string label, double threshold) {
    if (!config_file.empty()) {
        const json j = load_config_file(config_file);
        t1 = j.at("t1").get<std::string>();
        t2 = j.at("t2").get<std::string>();
        checkpoint = j.at("checkpoint").get<std::string>();
        out = j.at("out").get<std::string>();
        label = j.at("label").get<std::string>();
        threshold = j.at("threshold").get<double>();
    }
    require_path(t1, "--t1");
    require_path(t2, "--t2");
    require_path(checkpoint, "--checkpoint");
    LcdNet<float> model = load_checkpoint(checkpoint);
    FloatImage i1 = image_to_float(read_png(t1));
    FloatImage i2 = image_to_float(read_png(t2));
    Tensor<float> mask = model.predict(image_tensor(i1), image_tensor(i2),
                                       static_cast<float>(threshold));
    fs::create_directories(out);
    write_png((fs::path(out) / "mask.png").string(), mask_image(mask));
    if (!label.empty()) {
        Image lab = read_png(label);
        if (lab.channels != 1) {
            throw std::runtime_error("label image must be single-channel");
        }
        BinaryMask bm;
        bm.h = lab.height;
        bm.w = lab.width;
        bm.v.resize(lab.pixels.size());
        for (std::size_t i = 0; i < lab.pixels.size(); ++i) {
            bm.v[i] = lab.pixels[i] > 127 ? 1 : 0;
        }
        write_png((fs::path(out) / "confusion.png").string(),
                  render_confusion_map(mask, mask_tensor(bm)));
    }
    write_echo(out, "predict",
               json{{"subcommand", "predict"},
                    {"t1", t1},
                    {"t2", t2},
                    {"checkpoint", checkpoint},
                    {"out", out},
                    {"label", label},
                    {"threshold", threshold}});
    std::printf("wrote %s\n", (fs::path(out) / "mask.png").string().c_str());
    return 0;
}

int cmd_profile(const std::string& config_file, int input, std::string out, bool csv,
                ModelFlags flags) {
    if (!config_file.empty()) {
        const json j = load_config_file(config_file);
        input = j.at("input").get<int>();
        out = j.at("out").get<std::string>();
        csv = j.at("csv").get<bool>();
        flags.from_json(j.at("model"));
    }
    LcdNet<float> model;
    model.build(flags.to_config(), 1);
    ComplexityReport rep = model.profile(input);
    std::fputs(rep.table().c_str(), stdout);

    const double d1 = std::abs(rep.gflops_1x() - 4.45);
    const double d2 = std::abs(rep.gflops_2x() - 4.45);
    std::printf("closer convention: %s FLOPs per MAC\n", d2 <= d1 ? "2" : "1");

    if (csv) {
        fs::create_directories(out);
        rep.write_csv((fs::path(out) / "profile.csv").string());
    }
    json echo{{"subcommand", "profile"}, {"input", input}, {"out", out}, {"csv", csv}};
    echo["model"] = flags.to_json();
    write_echo(out, "profile", echo);
    return 0;
}

int cmd_grad_check(const std::string& config_file, int trials, std::uint64_t seed,
                   std::string out) {
    if (!config_file.empty()) {
        const json j = load_config_file(config_file);
        trials = j.at("trials").get<int>();
        seed = j.at("seed").get<std::uint64_t>();
        out = j.at("out").get<std::string>();
    }
    int failures = 0;
    for (const auto& suite :
         {gradsuite::run_op_checks(trials, seed), gradsuite::run_composite_checks(trials, seed)}) {
        for (const auto& r : suite) {
            const bool ok = r.max_err < gradsuite::kTolerance;
            std::printf("%-32s max relative error %.3e  %s\n", r.name.c_str(), r.max_err,
                        ok ? "ok" : "FAIL");
            failures += ok ? 0 : 1;
        }
    }
    write_echo(out, "grad_check",
               json{{"subcommand", "grad-check"}, {"trials", trials}, {"seed", seed},
                    {"out", out}});
    if (failures > 0) {
        throw std::runtime_error(std::to_string(failures) + " gradient checks failed");
    }
    std::printf("all gradient checks below %.0e\n", gradsuite::kTolerance);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    enable_flush_to_zero();
    CLI::App app{"LCD-Net change detection pipeline"};
    app.require_subcommand(1);

    std::string config_file;

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "write a synthetic bitemporal dataset");
    std::string gen_out = "synthetic";
    int gen_pairs = 800, gen_size = 64;
    double gen_density = 0.1;
    std::uint64_t gen_seed = 42;
    gen->add_option("--out", gen_out, "output dataset root");
    gen->add_option("--pairs", gen_pairs, "training pairs (val and test get pairs/4 each)");
    gen->add_option("--size", gen_size, "square image size");
    gen->add_option("--density", gen_density, "mean changed-pixel fraction, in (0, 0.5]");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--config", config_file, "JSON echo file replacing all flags");

    // train
    auto* train = app.add_subcommand("train", "train on a dataset root");
    TrainArgs ta;
    train->add_option("--data", ta.data, "dataset root with train/ and val/ splits");
    train->add_option("--out", ta.out, "output directory");
    train->add_option("--pretrained", ta.pretrained, "optional encoder weight archive");
    train->add_option("--epochs", ta.epochs, "training epochs");
    train->add_option("--batch-size", ta.batch_size, "batch size");
    train->add_option("--lr", ta.lr, "learning rate");
    train->add_option("--weight-decay", ta.weight_decay, "decoupled weight decay");
    train->add_option("--threshold", ta.threshold, "validation threshold");
    train->add_option("--seed", ta.seed, "seed for init, shuffling and augmentation");
    train->add_flag("--augment", ta.augment, "enable the augmentation pipeline");
    train->add_flag("--verbose", ta.verbose, "print per-epoch progress");
    ta.model.attach(train);
    train->add_option("--config", config_file, "JSON echo file replacing all flags");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    std::string ev_data, ev_ckpt, ev_out = "eval_out", ev_split = "test";
    double ev_threshold = 0.5;
    bool ev_no_maps = false;
    ev->add_option("--data", ev_data, "dataset root");
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint");
    ev->add_option("--out", ev_out, "output directory");
    ev->add_option("--split", ev_split, "dataset split");
    ev->add_option("--threshold", ev_threshold, "binarization threshold");
    ev->add_flag("--no-maps", ev_no_maps, "skip writing per-sample confusion maps");
    ev->add_option("--config", config_file, "JSON echo file replacing all flags");

    // predict
    auto* pr = app.add_subcommand("predict", "predict one bitemporal pair");
    std::string pr_t1, pr_t2, pr_ckpt, pr_out = "predict_out", pr_label;
    double pr_threshold = 0.5;
    pr->add_option("--t1", pr_t1, "first image");
    pr->add_option("--t2", pr_t2, "second image");
    pr->add_option("--checkpoint", pr_ckpt, "model checkpoint");
    pr->add_option("--out", pr_out, "output directory");
    pr->add_option("--label", pr_label, "optional label for a confusion map");
    pr->add_option("--threshold", pr_threshold, "binarization threshold");
    pr->add_option("--config", config_file, "JSON echo file replacing all flags");

    // profile
    auto* prof = app.add_subcommand("profile", "static parameter and MAC accounting");
    int prof_input = 256;
    std::string prof_out = "profile_out";
    bool prof_csv = false;
    ModelFlags prof_flags;
    prof->add_option("--input", prof_input, "square input resolution");
    prof->add_option("--out", prof_out, "output directory");
    prof->add_flag("--csv", prof_csv, "also write profile.csv");
    prof_flags.attach(prof);
    prof->add_option("--config", config_file, "JSON echo file replacing all flags");

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
    int gc_trials = 5;
    std::uint64_t gc_seed = 12345;
    std::string gc_out = "gradcheck_out";
    gc->add_option("--trials", gc_trials, "random trials per check");
    gc->add_option("--seed", gc_seed, "suite seed");
    gc->add_option("--out", gc_out, "output directory");
    gc->add_option("--config", config_file, "JSON echo file replacing all flags");

    CLI11_PARSE(app, argc, argv);

    try {
        check_threads_env();
        if (gen->parsed()) {
            return cmd_gen_synthetic(config_file, gen_out, gen_pairs, gen_size, gen_density,
                                     gen_seed);
        }
        if (train->parsed()) {
            return cmd_train(config_file, ta);
        }
        if (ev->parsed()) {
            return cmd_eval(config_file, ev_data, ev_ckpt, ev_out, ev_split, ev_threshold,
                            !ev_no_maps);
        }
        if (pr->parsed()) {
            return cmd_predict(config_file, pr_t1, pr_t2, pr_ckpt, pr_out, pr_label,
                               pr_threshold);
        }
        if (prof->parsed()) {
            return cmd_profile(config_file, prof_input, prof_out, prof_csv, prof_flags);
        }
        if (gc->parsed()) {
            return cmd_grad_check(config_file, gc_trials, gc_seed, gc_out);
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
