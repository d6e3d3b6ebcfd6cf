#include "lcdnet/checkpoint.hpp"

#include <json.hpp>

#include "lcdnet/common.hpp"

namespace lcdnet {

using nlohmann::json;

std::string config_to_json(const LcdNetConfig& cfg) {
    json j;
    j["stem_channels"] = cfg.encoder.stem_channels;
    json stages = json::array();
    for (const auto& stage : cfg.encoder.stages) {
        json groups = json::array();
        for (const auto& b : stage) {
            groups.push_back({{"expand", b.expand},
                              {"out_channels", b.out_channels},
                              {"repeats", b.repeats},
                              {"stride", b.stride}});
        }
        stages.push_back(groups);
    }
    j["stages"] = stages;
    j["decoder_widths"] = cfg.decoder_widths;
    j["exchange_fraction"] = cfg.exchange_fraction;
    j["eps"] = cfg.eps;
    j["use_tif"] = cfg.use_tif;
    j["use_ffm"] = cfg.use_ffm;
    j["use_gmm"] = cfg.use_gmm;
    j["ffm_literal"] = cfg.ffm_literal;
    j["gmm_rms_normalizer"] = cfg.gmm_rms_normalizer;
    j["freeze_bn_stats"] = cfg.freeze_bn_stats;
    return j.dump();
}

LcdNetConfig config_from_json(const std::string& text) {
    json j = json::parse(text);
    LcdNetConfig cfg;
    cfg.encoder.stem_channels = j.at("stem_channels").get<int>();
    const json& stages = j.at("stages");
    if (stages.size() != 5) {
        throw std::runtime_error("config must describe exactly five encoder stages");
    }
    for (std::size_t k = 0; k < 5; ++k) {
        cfg.encoder.stages[k].clear();
        for (const auto& b : stages[k]) {
            cfg.encoder.stages[k].push_back({b.at("expand").get<int>(),
                                             b.at("out_channels").get<int>(),
                                             b.at("repeats").get<int>(),
                                             b.at("stride").get<int>()});
        }
    }
    const auto widths = j.at("decoder_widths").get<std::vector<int>>();
    if (widths.size() != 5) {
        throw std::runtime_error("config must list five decoder widths");
    }
    std::copy(widths.begin(), widths.end(), cfg.decoder_widths.begin());
    cfg.exchange_fraction = j.at("exchange_fraction").get<double>();
    cfg.eps = j.at("eps").get<double>();
    cfg.use_tif = j.at("use_tif").get<bool>();
    cfg.use_ffm = j.at("use_ffm").get<bool>();
    cfg.use_gmm = j.at("use_gmm").get<bool>();
    cfg.ffm_literal = j.at("ffm_literal").get<bool>();
    cfg.gmm_rms_normalizer = j.at("gmm_rms_normalizer").get<bool>();
    cfg.freeze_bn_stats = j.at("freeze_bn_stats").get<bool>();
    cfg.validate();
    return cfg;
}

std::string config_hash(const LcdNetConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config_to_json(cfg))));
    return buf;
}

void save_checkpoint(LcdNet<float>& model, const std::string& path,
                     const std::vector<std::pair<std::string, std::string>>& metadata) {
    Archive ar;
    model.visit_params(
        [&ar](const std::string& name, Tensor<float>& t, bool) { ar.put(name, t); });
    model.visit_buffers([&ar](const std::string& name, Tensor<float>& t) { ar.put(name, t); });
    ar.set_meta("config", config_to_json(model.cfg));
    ar.set_meta("config_hash", config_hash(model.cfg));
    for (const auto& kv : metadata) {
        ar.set_meta(kv.first, kv.second);
    }
    ar.save(path);
}

void load_weights(LcdNet<float>& model, const Archive& ar) {
    auto copy_in = [&ar](const std::string& name, Tensor<float>& dst) {
        Tensor<float> src = ar.get<float>(name);
        if (!(src.shape() == dst.shape())) {
            throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                                     src.shape().str() + ", expected " + dst.shape().str());
        }
        std::copy(src.data(), src.data() + src.numel(), dst.mutable_data());
    };
    model.visit_params(
        [&copy_in](const std::string& name, Tensor<float>& t, bool) { copy_in(name, t); });
    model.visit_buffers([&copy_in](const std::string& name, Tensor<float>& t) { copy_in(name, t); });
}

LcdNet<float> load_checkpoint(const std::string& path, Archive* archive_out) {
    Archive ar = Archive::load(path);
    const std::string cfg_text = ar.meta("config");
    if (cfg_text.empty()) {
        throw std::runtime_error("checkpoint '" + path + "' has no config metadata");
    }
    LcdNet<float> model;
    model.build(config_from_json(cfg_text), 0);
    load_weights(model, ar);
    if (archive_out) {
        *archive_out = std::move(ar);
    }
    return model;
}

}  // namespace lcdnet
