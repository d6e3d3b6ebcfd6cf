#include "lcdnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <stdexcept>

namespace fs = std::filesystem;

namespace lcdnet {

void AugmentConfig::validate() const {
    if (salt_pepper_p < 0.0 || salt_pepper_p > 1.0) {
        throw std::invalid_argument("salt-and-pepper probability must lie in [0, 1]");
    }
    if (sigma_min < 0.0 || sigma_max < sigma_min) {
        throw std::invalid_argument("gaussian sigma range is invalid");
    }
    if (enable_crop && crop <= 0) {
        throw std::invalid_argument("crop size must be positive when cropping is enabled");
    }
    for (int a : angles) {
        if (a % 90 != 0) {
            throw std::invalid_argument("rotation angle set must contain right angles");
        }
    }
}

FloatImage image_to_float(const Image& img) {
    FloatImage out;
    out.h = img.height;
    out.w = img.width;
    out.c = img.channels;
    out.v.resize(static_cast<std::size_t>(out.h) * out.w * out.c);
    for (int c = 0; c < out.c; ++c) {
        for (int y = 0; y < out.h; ++y) {
            for (int x = 0; x < out.w; ++x) {
                out.at(c, y, x) = static_cast<float>(img.at(y, x, c)) / 255.0f;
            }
        }
    }
    return out;
}

Image float_to_image(const FloatImage& img) {
    Image out;
    out.height = img.h;
    out.width = img.w;
    out.channels = img.c;
    out.pixels.resize(static_cast<std::size_t>(img.h) * img.w * img.c);
    for (int c = 0; c < img.c; ++c) {
        for (int y = 0; y < img.h; ++y) {
            for (int x = 0; x < img.w; ++x) {
                const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
                out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
        }
    }
    return out;
}

Image mask_to_image(const BinaryMask& m) {
    Image out;
    out.height = m.h;
    out.width = m.w;
    out.channels = 1;
    out.pixels.resize(static_cast<std::size_t>(m.h) * m.w);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        out.pixels[i] = m.v[i] ? 255 : 0;
    }
    return out;
}

namespace {

FloatImage to_rgb_float(const Image& img) {
    if (img.channels == 3) {
        return image_to_float(img);
    }
    FloatImage out;
    out.h = img.height;
    out.w = img.width;
    out.c = 3;
    out.v.resize(static_cast<std::size_t>(out.h) * out.w * 3);
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            const float v = static_cast<float>(img.at(y, x, 0)) / 255.0f;
            out.at(0, y, x) = v;
            out.at(1, y, x) = v;
            out.at(2, y, x) = v;
        }
    }
    return out;
}

std::set<std::string> png_names(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw std::runtime_error("dataset directory '" + dir.string() + "' does not exist");
    }
    std::set<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            names.insert(entry.path().filename().string());
        }
    }
    return names;
}

}  // namespace

std::vector<SamplePair> load_dataset(const std::string& root, const std::string& split) {
    const fs::path base = fs::path(root) / split;
    const fs::path da = base / "A", db = base / "B", dl = base / "label";
    const auto na = png_names(da), nb = png_names(db), nl = png_names(dl);
    for (const auto& n : na) {
        if (!nb.count(n)) {
            throw std::runtime_error("dataset pair incomplete: B lacks '" + n + "'");
        }
        if (!nl.count(n)) {
            throw std::runtime_error("dataset pair incomplete: label lacks '" + n + "'");
        }
    }
    for (const auto& n : nb) {
        if (!na.count(n)) {
            throw std::runtime_error("dataset pair incomplete: A lacks '" + n + "'");
        }
    }
    for (const auto& n : nl) {
        if (!na.count(n)) {
            throw std::runtime_error("dataset pair incomplete: A lacks '" + n + "'");
        }
    }

    std::vector<SamplePair> out;
    out.reserve(na.size());
    for (const auto& n : na) {  // std::set iterates lexicographically
        SamplePair p;
        p.id = fs::path(n).stem().string();
        p.t1 = to_rgb_float(read_png((da / n).string()));
        p.t2 = to_rgb_float(read_png((db / n).string()));
        Image lab = read_png((dl / n).string());
        if (lab.channels != 1) {
            throw std::runtime_error("label '" + n + "' is not single-channel");
        }
        if (lab.width != p.t1.w || lab.height != p.t1.h || p.t2.w != p.t1.w ||
            p.t2.h != p.t1.h) {
            throw std::runtime_error("size mismatch within pair '" + n + "'");
        }
        p.label.h = lab.height;
        p.label.w = lab.width;
        p.label.v.resize(lab.pixels.size());
        for (std::size_t i = 0; i < lab.pixels.size(); ++i) {
            p.label.v[i] = lab.pixels[i] > 127 ? 1 : 0;
        }
        out.push_back(std::move(p));
    }
    return out;
}

TileResult tile(const SamplePair& pair, int tile_hw, int overlap) {
    if (tile_hw <= 0 || overlap < 0 || overlap >= tile_hw) {
        throw std::invalid_argument("tile size/overlap is invalid");
    }
    if (tile_hw > pair.t1.h || tile_hw > pair.t1.w) {
        throw std::invalid_argument("tile larger than image");
    }
    const int stride = tile_hw - overlap;
    TileResult res;
    std::vector<std::uint8_t> covered(
        static_cast<std::size_t>(pair.t1.h) * static_cast<std::size_t>(pair.t1.w), 0);
    for (int y = 0; y + tile_hw <= pair.t1.h; y += stride) {
        for (int x = 0; x + tile_hw <= pair.t1.w; x += stride) {
            SamplePair t;
            t.id = pair.id + "_" + std::to_string(y) + "_" + std::to_string(x);
            auto crop_img = [&](const FloatImage& src) {
                FloatImage dst;
                dst.h = tile_hw;
                dst.w = tile_hw;
                dst.c = src.c;
                dst.v.resize(static_cast<std::size_t>(tile_hw) * tile_hw * src.c);
                for (int c = 0; c < src.c; ++c) {
                    for (int yy = 0; yy < tile_hw; ++yy) {
                        for (int xx = 0; xx < tile_hw; ++xx) {
                            dst.at(c, yy, xx) = src.at(c, y + yy, x + xx);
                        }
                    }
                }
                return dst;
            };
            t.t1 = crop_img(pair.t1);
            t.t2 = crop_img(pair.t2);
            t.label.h = tile_hw;
            t.label.w = tile_hw;
            t.label.v.resize(static_cast<std::size_t>(tile_hw) * tile_hw);
            for (int yy = 0; yy < tile_hw; ++yy) {
                for (int xx = 0; xx < tile_hw; ++xx) {
                    t.label.at(yy, xx) = pair.label.at(y + yy, x + xx);
                    covered[static_cast<std::size_t>((y + yy) * pair.t1.w + (x + xx))] = 1;
                }
            }
            res.tiles.push_back(std::move(t));
        }
    }
    for (std::uint8_t cvg : covered) {
        if (!cvg) {
            ++res.dropped_pixels;
        }
    }
    return res;
}

namespace {

// destination (y, x) -> source coordinates for a CCW rotation by `steps` right angles
std::pair<int, int> rot_src(int steps, int h, int w, int y, int x) {
    switch (steps) {
        case 1: return {x, w - 1 - y};          // 90
        case 2: return {h - 1 - y, w - 1 - x};  // 180
        default: return {h - 1 - x, y};         // 270
    }
}

void rotate_image(FloatImage& img, int steps) {
    if (steps == 0) {
        return;
    }
    FloatImage out;
    out.h = steps % 2 == 0 ? img.h : img.w;
    out.w = steps % 2 == 0 ? img.w : img.h;
    out.c = img.c;
    out.v.resize(img.v.size());
    for (int c = 0; c < img.c; ++c) {
        for (int y = 0; y < out.h; ++y) {
            for (int x = 0; x < out.w; ++x) {
                auto [sy, sx] = rot_src(steps, img.h, img.w, y, x);
                out.at(c, y, x) = img.at(c, sy, sx);
            }
        }
    }
    img = std::move(out);
}

void rotate_mask(BinaryMask& mask, int steps) {
    if (steps == 0) {
        return;
    }
    BinaryMask out;
    out.h = steps % 2 == 0 ? mask.h : mask.w;
    out.w = steps % 2 == 0 ? mask.w : mask.h;
    out.v.resize(mask.v.size());
    for (int y = 0; y < out.h; ++y) {
        for (int x = 0; x < out.w; ++x) {
            auto [sy, sx] = rot_src(steps, mask.h, mask.w, y, x);
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    mask = std::move(out);
}

void rotate_arbitrary(SamplePair& p, double angle_deg) {
    const double a = angle_deg * 3.14159265358979323846 / 180.0;
    const double ca = std::cos(a), sa = std::sin(a);
    const double cy = (p.t1.h - 1) / 2.0, cx = (p.t1.w - 1) / 2.0;
    auto sample_img = [&](const FloatImage& src, int c, double sy, double sx) -> float {
        const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
        const double fy = sy - y0, fx = sx - x0;
        auto px = [&](int y, int x) -> float {
            if (y < 0 || y >= src.h || x < 0 || x >= src.w) {
                return 0.0f;
            }
            return src.at(c, y, x);
        };
        return static_cast<float>((1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                                  fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1)));
    };
    FloatImage r1 = p.t1, r2 = p.t2;
    BinaryMask rl = p.label;
    for (int y = 0; y < p.t1.h; ++y) {
        for (int x = 0; x < p.t1.w; ++x) {
            // inverse rotation of the destination pixel
            const double sy = ca * (y - cy) + sa * (x - cx) + cy;
            const double sx = -sa * (y - cy) + ca * (x - cx) + cx;
            for (int c = 0; c < p.t1.c; ++c) {
                r1.at(c, y, x) = sample_img(p.t1, c, sy, sx);
                r2.at(c, y, x) = sample_img(p.t2, c, sy, sx);
            }
            const int ny = static_cast<int>(std::lround(sy));
            const int nx = static_cast<int>(std::lround(sx));
            rl.at(y, x) = (ny >= 0 && ny < p.label.h && nx >= 0 && nx < p.label.w)
                              ? p.label.at(ny, nx)
                              : 0;
        }
    }
    p.t1 = std::move(r1);
    p.t2 = std::move(r2);
    p.label = std::move(rl);
}

void add_gaussian(FloatImage& img, double sigma, Rng& rng) {
    for (auto& v : img.v) {
        v = std::clamp(v + static_cast<float>(rng.normal() * sigma), 0.0f, 1.0f);
    }
}

void add_salt_pepper(FloatImage& img, double p, Rng& rng) {
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            if (rng.bernoulli(p)) {
                const float v = rng.bernoulli(0.5) ? 1.0f : 0.0f;
                for (int c = 0; c < img.c; ++c) {
                    img.at(c, y, x) = v;
                }
            }
        }
    }
}

}  // namespace

SamplePair augment(const SamplePair& pair, const AugmentConfig& cfg, Rng& rng) {
    cfg.validate();
    SamplePair out = pair;

    if (cfg.enable_crop && cfg.crop > 0) {
        if (cfg.crop > out.t1.h || cfg.crop > out.t1.w) {
            throw std::invalid_argument("crop size exceeds image size");
        }
        const int oy = static_cast<int>(rng.randint(0, out.t1.h - cfg.crop));
        const int ox = static_cast<int>(rng.randint(0, out.t1.w - cfg.crop));
        SamplePair shifted;
        shifted.id = out.id;
        auto crop_img = [&](const FloatImage& src) {
            FloatImage dst;
            dst.h = cfg.crop;
            dst.w = cfg.crop;
            dst.c = src.c;
            dst.v.resize(static_cast<std::size_t>(cfg.crop) * cfg.crop * src.c);
            for (int c = 0; c < src.c; ++c) {
                for (int y = 0; y < cfg.crop; ++y) {
                    for (int x = 0; x < cfg.crop; ++x) {
                        dst.at(c, y, x) = src.at(c, oy + y, ox + x);
                    }
                }
            }
            return dst;
        };
        shifted.t1 = crop_img(out.t1);
        shifted.t2 = crop_img(out.t2);
        shifted.label.h = cfg.crop;
        shifted.label.w = cfg.crop;
        shifted.label.v.resize(static_cast<std::size_t>(cfg.crop) * cfg.crop);
        for (int y = 0; y < cfg.crop; ++y) {
            for (int x = 0; x < cfg.crop; ++x) {
                shifted.label.at(y, x) = out.label.at(oy + y, ox + x);
            }
        }
        out = std::move(shifted);
    }

    if (cfg.enable_rotation) {
        if (cfg.arbitrary_rotation) {
            rotate_arbitrary(out, rng.uniform(-cfg.max_angle_deg, cfg.max_angle_deg));
        } else if (!cfg.angles.empty()) {
            // identity is one of the equally likely outcomes
            const auto pick = rng.randint(0, static_cast<std::int64_t>(cfg.angles.size()));
            if (pick > 0) {
                const int angle = cfg.angles[static_cast<std::size_t>(pick - 1)];
                const int steps = ((angle / 90) % 4 + 4) % 4;
                rotate_image(out.t1, steps);
                rotate_image(out.t2, steps);
                rotate_mask(out.label, steps);
            }
        }
    }

    if (cfg.enable_gaussian && cfg.sigma_max > 0.0) {
        add_gaussian(out.t1, rng.uniform(cfg.sigma_min, cfg.sigma_max), rng);
        add_gaussian(out.t2, rng.uniform(cfg.sigma_min, cfg.sigma_max), rng);
    }
    if (cfg.enable_salt_pepper && cfg.salt_pepper_p > 0.0) {
        add_salt_pepper(out.t1, cfg.salt_pepper_p, rng);
        add_salt_pepper(out.t2, cfg.salt_pepper_p, rng);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

namespace {

struct ShapeSpec {
    bool ellipse = false;
    int cy = 0, cx = 0, ry = 1, rx = 1;  // half-extents

    bool contains(int y, int x) const {
        if (ellipse) {
            const double dy = static_cast<double>(y - cy) / ry;
            const double dx = static_cast<double>(x - cx) / rx;
            return dy * dy + dx * dx <= 1.0;
        }
        return std::abs(y - cy) <= ry && std::abs(x - cx) <= rx;
    }
    bool overlaps(const ShapeSpec& o) const {
        return std::abs(cy - o.cy) <= ry + o.ry + 1 && std::abs(cx - o.cx) <= rx + o.rx + 1;
    }
};

FloatImage make_background(int hw, Rng& rng) {
    FloatImage bg;
    bg.h = hw;
    bg.w = hw;
    bg.c = 3;
    bg.v.resize(static_cast<std::size_t>(hw) * hw * 3);
    // two octaves of bilinear value noise plus a slight per-channel tint
    const int coarse = 5, fine = 11;
    std::vector<float> lat_c(coarse * coarse), lat_f(fine * fine);
    for (auto& v : lat_c) {
        v = static_cast<float>(rng.uniform(0.30, 0.65));
    }
    for (auto& v : lat_f) {
        v = static_cast<float>(rng.uniform(-0.05, 0.05));
    }
    float tint[3];
    for (float& t : tint) {
        t = static_cast<float>(rng.uniform(-0.03, 0.03));
    }
    auto lerp_grid = [&](const std::vector<float>& lat, int n, double y, double x) {
        const double gy = y * (n - 1), gx = x * (n - 1);
        const int y0 = std::min(static_cast<int>(gy), n - 2);
        const int x0 = std::min(static_cast<int>(gx), n - 2);
        const double fy = gy - y0, fx = gx - x0;
        const float a = lat[static_cast<std::size_t>(y0 * n + x0)];
        const float b = lat[static_cast<std::size_t>(y0 * n + x0 + 1)];
        const float c = lat[static_cast<std::size_t>((y0 + 1) * n + x0)];
        const float d = lat[static_cast<std::size_t>((y0 + 1) * n + x0 + 1)];
        return static_cast<float>((1 - fy) * ((1 - fx) * a + fx * b) +
                                  fy * ((1 - fx) * c + fx * d));
    };
    for (int y = 0; y < hw; ++y) {
        for (int x = 0; x < hw; ++x) {
            const double ny = static_cast<double>(y) / (hw - 1);
            const double nx = static_cast<double>(x) / (hw - 1);
            const float base = lerp_grid(lat_c, coarse, ny, nx) + lerp_grid(lat_f, fine, ny, nx);
            for (int c = 0; c < 3; ++c) {
                bg.at(c, y, x) = std::clamp(base + tint[c], 0.05f, 0.95f);
            }
        }
    }
    return bg;
}

void paint_shape(FloatImage& img, const ShapeSpec& s, const float color[3], Rng& rng) {
    for (int y = std::max(0, s.cy - s.ry); y <= std::min(img.h - 1, s.cy + s.ry); ++y) {
        for (int x = std::max(0, s.cx - s.rx); x <= std::min(img.w - 1, s.cx + s.rx); ++x) {
            if (s.contains(y, x)) {
                const float grain = static_cast<float>(rng.uniform(-0.02, 0.02));
                for (int c = 0; c < 3; ++c) {
                    img.at(c, y, x) = std::clamp(color[c] + grain, 0.0f, 1.0f);
                }
            }
        }
    }
}

ShapeSpec random_shape(int hw, double target_area, Rng& rng) {
    ShapeSpec s;
    s.ellipse = rng.bernoulli(0.5);
    const double area = target_area * rng.uniform(0.5, 1.5);
    const double aspect = rng.uniform(0.5, 2.0);
    // area ~ (2ry+1)(2rx+1) for rects, pi*ry*rx for ellipses
    const double base = std::sqrt(area / (s.ellipse ? 3.14159 : 4.0));
    s.ry = std::max(1, static_cast<int>(std::lround(base * aspect)));
    s.rx = std::max(1, static_cast<int>(std::lround(base / aspect)));
    s.ry = std::min(s.ry, hw / 3);
    s.rx = std::min(s.rx, hw / 3);
    s.cy = static_cast<int>(rng.randint(s.ry, hw - 1 - s.ry));
    s.cx = static_cast<int>(rng.randint(s.rx, hw - 1 - s.rx));
    return s;
}

void shape_color(const FloatImage& bg, const ShapeSpec& s, Rng& rng, float out[3]) {
    const float base = bg.at(0, s.cy, s.cx);
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    double amp = sign * rng.uniform(0.25, 0.55);
    if (base + amp < 0.05 || base + amp > 0.95) {
        amp = -amp;
    }
    for (int c = 0; c < 3; ++c) {
        out[c] = std::clamp(static_cast<float>(base + amp + rng.uniform(-0.04, 0.04)), 0.0f,
                            1.0f);
    }
}

SamplePair make_synthetic_pair(const std::string& id, int hw, double density, Rng& rng) {
    SamplePair p;
    p.id = id;
    p.t1 = make_background(hw, rng);
    p.t2 = p.t1;  // shared background
    p.label.h = hw;
    p.label.w = hw;
    p.label.v.assign(static_cast<std::size_t>(hw) * hw, 0);

    std::vector<ShapeSpec> placed;

    // static distractors appear identically in both frames
    const int n_static = static_cast<int>(rng.randint(2, 4));
    for (int i = 0; i < n_static; ++i) {
        const ShapeSpec s = random_shape(hw, 0.02 * hw * hw, rng);
        float color[3];
        shape_color(p.t1, s, rng, color);
        Rng grain1(rng.raw());
        Rng grain2 = grain1;  // identical grain in both frames
        paint_shape(p.t1, s, color, grain1);
        paint_shape(p.t2, s, color, grain2);
        placed.push_back(s);
    }

    // change shapes appear in exactly one frame; the label is their union
    const double target = density * hw * hw * rng.uniform(0.9, 1.1);
    std::int64_t area = 0;
    int guard = 0;
    while (area < static_cast<std::int64_t>(target) && guard < 200) {
        ++guard;
        const ShapeSpec s = random_shape(hw, target / 3.5, rng);
        bool clash = false;
        for (const auto& q : placed) {
            if (s.overlaps(q)) {
                clash = true;
                break;
            }
        }
        if (clash) {
            continue;
        }
        placed.push_back(s);
        float color[3];
        shape_color(p.t1, s, rng, color);
        FloatImage& target_img = rng.bernoulli(0.5) ? p.t2 : p.t1;  // added or removed
        Rng grain(rng.raw());
        paint_shape(target_img, s, color, grain);
        for (int y = std::max(0, s.cy - s.ry); y <= std::min(hw - 1, s.cy + s.ry); ++y) {
            for (int x = std::max(0, s.cx - s.rx); x <= std::min(hw - 1, s.cx + s.rx); ++x) {
                if (s.contains(y, x) && !p.label.at(y, x)) {
                    p.label.at(y, x) = 1;
                    ++area;
                }
            }
        }
    }

    // mild radiometric differences between acquisitions, never on the label
    const float gain = static_cast<float>(rng.uniform(0.97, 1.03));
    const float bias = static_cast<float>(rng.uniform(-0.02, 0.02));
    for (auto& v : p.t2.v) {
        v = std::clamp(v * gain + bias, 0.0f, 1.0f);
    }
    add_gaussian(p.t1, 0.01, rng);
    add_gaussian(p.t2, 0.01, rng);
    return p;
}

}  // namespace

void generate_synthetic(const std::string& root, int train_pairs, int val_pairs, int test_pairs,
                        int hw, double change_density, std::uint64_t seed) {
    if (change_density <= 0.0 || change_density > 0.5) {
        throw std::invalid_argument("change density must lie in (0, 0.5]");
    }
    if (hw < 32) {
        throw std::invalid_argument("synthetic image size must be at least 32");
    }
    const std::pair<std::string, int> splits[3] = {
        {"train", train_pairs}, {"val", val_pairs}, {"test", test_pairs}};
    for (const auto& [split, count] : splits) {
        const fs::path base = fs::path(root) / split;
        fs::create_directories(base / "A");
        fs::create_directories(base / "B");
        fs::create_directories(base / "label");
        for (int i = 0; i < count; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "pair_%05d", i);
            // a pair's stream depends only on (seed, split, index)
            Rng rng(seed ^ fnv1a64(split + "/" + name));
            SamplePair p = make_synthetic_pair(name, hw, change_density, rng);
            write_png((base / "A" / (std::string(name) + ".png")).string(),
                      float_to_image(p.t1));
            write_png((base / "B" / (std::string(name) + ".png")).string(),
                      float_to_image(p.t2));
            write_png((base / "label" / (std::string(name) + ".png")).string(),
                      mask_to_image(p.label));
        }
    }
}

Batch make_batch(const std::vector<SamplePair>& samples, const std::vector<std::size_t>& idx) {
    if (idx.empty()) {
        throw std::invalid_argument("make_batch needs at least one sample");
    }
    const SamplePair& first = samples.at(idx[0]);
    const std::int64_t h = first.t1.h, w = first.t1.w;
    const std::int64_t n = static_cast<std::int64_t>(idx.size());
    std::vector<float> v1(static_cast<std::size_t>(n * 3 * h * w));
    std::vector<float> v2(v1.size());
    std::vector<float> vl(static_cast<std::size_t>(n * h * w));
    for (std::int64_t b = 0; b < n; ++b) {
        const SamplePair& s = samples.at(idx[static_cast<std::size_t>(b)]);
        if (s.t1.h != h || s.t1.w != w) {
            throw std::invalid_argument("batch samples must share dimensions");
        }
        for (std::size_t i = 0; i < s.t1.v.size(); ++i) {
            v1[static_cast<std::size_t>(b * 3 * h * w) + i] = (s.t1.v[i] - 0.5f) / 0.5f;
            v2[static_cast<std::size_t>(b * 3 * h * w) + i] = (s.t2.v[i] - 0.5f) / 0.5f;
        }
        for (std::size_t i = 0; i < s.label.v.size(); ++i) {
            vl[static_cast<std::size_t>(b * h * w) + i] = static_cast<float>(s.label.v[i]);
        }
    }
    Batch batch;
    batch.t1 = Tensor<float>::from_data({n, 3, h, w}, std::move(v1));
    batch.t2 = Tensor<float>::from_data({n, 3, h, w}, std::move(v2));
    batch.label = Tensor<float>::from_data({n, 1, h, w}, std::move(vl));
    return batch;
}

}  // namespace lcdnet
