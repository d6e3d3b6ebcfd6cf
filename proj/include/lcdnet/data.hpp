#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcdnet/common.hpp"
#include "lcdnet/image.hpp"
#include "lcdnet/tensor.hpp"

namespace lcdnet {

/// Planar CHW float image with values in [0, 1].
struct FloatImage {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<float> v;

    float& at(int ch, int y, int x) {
        return v[static_cast<std::size_t>((ch * h + y) * w + x)];
    }
    float at(int ch, int y, int x) const {
        return v[static_cast<std::size_t>((ch * h + y) * w + x)];
    }
};

/// Binary mask with values in {0, 1}.
struct BinaryMask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> v;

    std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y * w + x)]; }
    std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y * w + x)]; }
};

/// One bitemporal sample; t1, t2 and label share spatial dimensions.
struct SamplePair {
    std::string id;
    FloatImage t1, t2;
    BinaryMask label;
};

struct AugmentConfig {
    bool enable_gaussian = true;
    double sigma_min = 0.0;
    double sigma_max = 0.02;
    bool enable_salt_pepper = true;
    double salt_pepper_p = 0.01;
    bool enable_crop = false;
    int crop = 0;
    bool enable_rotation = true;
    std::vector<int> angles = {90, 180, 270};  // right-angle set
    bool arbitrary_rotation = false;            // nearest-neighbor label resampling
    double max_angle_deg = 15.0;
    std::uint64_t seed = 0;

    void validate() const;
};

FloatImage image_to_float(const Image& img);
Image float_to_image(const FloatImage& img);
Image mask_to_image(const BinaryMask& m);  // {0,1} -> {0,255}

/// Loads root/{split}/{A,B,label}/name.png triples in lexicographic name
/// order. Missing counterparts, size mismatches and multi-channel labels are
/// errors naming the offending file. Labels binarize as value > 127.
std::vector<SamplePair> load_dataset(const std::string& root, const std::string& split);

struct TileResult {
    std::vector<SamplePair> tiles;
    std::int64_t dropped_pixels = 0;  // remainder not covered by any tile
};

/// Aligned tiling of one pair; stride is tile_hw - overlap.
TileResult tile(const SamplePair& pair, int tile_hw, int overlap = 0);

/// Geometric transforms (crop, rotation) apply identically to t1, t2 and the
/// label; photometric noise applies independently to t1 and t2, never to the
/// label. Deterministic given the rng state.
SamplePair augment(const SamplePair& pair, const AugmentConfig& cfg, Rng& rng);

/// Deterministic synthetic change-detection dataset: shared background
/// texture, static distractor shapes in both frames, and change shapes that
/// appear in exactly one frame. The label is the exact union of the change
/// shapes' pixels. Writes root/{train,val,test}/{A,B,label}/pair_NNNNN.png.
void generate_synthetic(const std::string& root, int train_pairs, int val_pairs, int test_pairs,
                        int hw, double change_density, std::uint64_t seed);

/// Stacks samples (by index) into normalized model inputs: images map from
/// [0,1] through (v - 0.5) / 0.5; labels become an (N,1,H,W) {0,1} tensor.
struct Batch {
    Tensor<float> t1, t2, label;
};
Batch make_batch(const std::vector<SamplePair>& samples, const std::vector<std::size_t>& idx);

}  // namespace lcdnet
