#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lcdnet/archive.hpp"
#include "lcdnet/model.hpp"

namespace lcdnet {

std::string config_to_json(const LcdNetConfig& cfg);
LcdNetConfig config_from_json(const std::string& text);

/// FNV-1a hash of the canonical config JSON, hex-encoded.
std::string config_hash(const LcdNetConfig& cfg);

/// Writes every parameter and buffer plus the config and the given metadata
/// pairs into a named-tensor archive.
void save_checkpoint(LcdNet<float>& model, const std::string& path,
                     const std::vector<std::pair<std::string, std::string>>& metadata = {});

/// Copies all parameters and buffers from the archive into the model.
/// Every model tensor must be present with a matching shape.
void load_weights(LcdNet<float>& model, const Archive& ar);

/// Rebuilds the model from the config stored in the checkpoint metadata and
/// restores its weights.
LcdNet<float> load_checkpoint(const std::string& path, Archive* archive_out = nullptr);

}  // namespace lcdnet
