#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lcdnet/data.hpp"
#include "test_support.hpp"

using namespace lcdnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

SamplePair checker_pair(int hw) {
    SamplePair p;
    p.id = "checker";
    p.t1.h = p.t1.w = hw;
    p.t1.c = 3;
    p.t1.v.resize(static_cast<std::size_t>(hw) * hw * 3);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < hw; ++y) {
            for (int x = 0; x < hw; ++x) {
                p.t1.at(c, y, x) = static_cast<float>((y + x + c) % 7) / 7.0f;
            }
        }
    }
    p.t2 = p.t1;
    for (auto& v : p.t2.v) {
        v = 1.0f - v;
    }
    p.label.h = p.label.w = hw;
    p.label.v.resize(static_cast<std::size_t>(hw) * hw);
    for (int y = 0; y < hw; ++y) {
        for (int x = 0; x < hw; ++x) {
            p.label.at(y, x) = (y < hw / 2 && x >= hw / 2) ? 1 : 0;
        }
    }
    return p;
}

void write_pair(const fs::path& base, const std::string& name, const SamplePair& p) {
    write_png((base / "A" / (name + ".png")).string(), float_to_image(p.t1));
    write_png((base / "B" / (name + ".png")).string(), float_to_image(p.t2));
    write_png((base / "label" / (name + ".png")).string(), mask_to_image(p.label));
}

}  // namespace

TEST_CASE("png io round-trips 8-bit images") {
    TempDir dir("lcdnet_png_test");
    Image img;
    img.width = 5;
    img.height = 3;
    img.channels = 3;
    Rng rng(70);
    img.pixels.resize(45);
    for (auto& p : img.pixels) {
        p = static_cast<std::uint8_t>(rng.randint(0, 255));
    }
    const std::string path = (dir.path / "x.png").string();
    write_png(path, img);
    Image back = read_png(path);
    CHECK(back.width == 5);
    CHECK(back.height == 3);
    CHECK(back.channels == 3);
    CHECK(back.pixels == img.pixels);
    CHECK_THROWS_AS(read_png((dir.path / "missing.png").string()), std::runtime_error);
}

TEST_CASE("load_dataset returns name-ordered validated pairs") {
    TempDir dir("lcdnet_ds_test");
    const fs::path base = dir.path / "train";
    fs::create_directories(base / "A");
    fs::create_directories(base / "B");
    fs::create_directories(base / "label");
    SamplePair p = checker_pair(32);
    write_pair(base, "bb", p);
    write_pair(base, "aa", p);
    write_pair(base, "cc", p);

    auto pairs = load_dataset(dir.path.string(), "train");
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].id == "aa");
    CHECK(pairs[1].id == "bb");
    CHECK(pairs[2].id == "cc");
    CHECK(pairs[0].t1.c == 3);
    CHECK(pairs[0].label.v == p.label.v);

    SUBCASE("missing counterpart is an error naming the file") {
        write_png((base / "A" / "dd.png").string(), float_to_image(p.t1));
        try {
            load_dataset(dir.path.string(), "train");
            FAIL("expected an error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("dd") != std::string::npos);
        }
    }
    SUBCASE("multi-channel label is an error") {
        write_png((base / "A" / "ee.png").string(), float_to_image(p.t1));
        write_png((base / "B" / "ee.png").string(), float_to_image(p.t2));
        write_png((base / "label" / "ee.png").string(), float_to_image(p.t1));  // RGB label
        CHECK_THROWS_AS(load_dataset(dir.path.string(), "train"), std::runtime_error);
    }
    SUBCASE("size mismatch within a pair is an error") {
        write_png((base / "A" / "ff.png").string(), float_to_image(p.t1));
        write_png((base / "B" / "ff.png").string(), float_to_image(checker_pair(16).t2));
        write_png((base / "label" / "ff.png").string(), mask_to_image(p.label));
        CHECK_THROWS_AS(load_dataset(dir.path.string(), "train"), std::runtime_error);
    }
}

TEST_CASE("tiling") {
    SUBCASE("a 1024 image yields 16 non-overlapping 256 tiles") {
        SamplePair p = checker_pair(1024);
        TileResult r = tile(p, 256);
        CHECK(r.tiles.size() == 16);
        CHECK(r.dropped_pixels == 0);
    }
    SUBCASE("identity tile") {
        SamplePair p = checker_pair(64);
        TileResult r = tile(p, 64);
        REQUIRE(r.tiles.size() == 1);
        CHECK(r.dropped_pixels == 0);
        CHECK(r.tiles[0].t1.v == p.t1.v);
        CHECK(r.tiles[0].label.v == p.label.v);
    }
    SUBCASE("remainder is dropped with a warning count") {
        SamplePair p = checker_pair(300);
        TileResult r = tile(p, 256);
        CHECK(r.tiles.size() == 1);
        CHECK(r.dropped_pixels == 300 * 300 - 256 * 256);
    }
    SUBCASE("tile content matches the source region") {
        SamplePair p = checker_pair(128);
        TileResult r = tile(p, 64);
        REQUIRE(r.tiles.size() == 4);
        CHECK(r.tiles[1].t1.at(0, 3, 5) == p.t1.at(0, 3, 64 + 5));
        CHECK(r.tiles[2].label.at(1, 2) == p.label.at(64 + 1, 2));
    }
    SUBCASE("oversized tile is rejected") {
        SamplePair p = checker_pair(64);
        CHECK_THROWS_AS(tile(p, 128), std::invalid_argument);
    }
}

TEST_CASE("augmentation") {
    SamplePair p = checker_pair(32);

    SUBCASE("all transforms disabled is the identity") {
        AugmentConfig cfg;
        cfg.enable_gaussian = false;
        cfg.enable_salt_pepper = false;
        cfg.enable_crop = false;
        cfg.enable_rotation = false;
        Rng rng(1);
        SamplePair out = augment(p, cfg, rng);
        CHECK(out.t1.v == p.t1.v);
        CHECK(out.t2.v == p.t2.v);
        CHECK(out.label.v == p.label.v);
    }

    SUBCASE("rotation keeps label aligned with the images") {
        AugmentConfig cfg;
        cfg.enable_gaussian = false;
        cfg.enable_salt_pepper = false;
        cfg.enable_rotation = true;
        cfg.angles = {90};
        // find a seed whose rotation draw picks 90 degrees
        for (std::uint64_t seed = 0; seed < 16; ++seed) {
            Rng rng(seed);
            SamplePair out = augment(p, cfg, rng);
            if (out.t1.v == p.t1.v) {
                continue;  // identity pick
            }
            // CCW 90: destination (y, x) comes from (x, w-1-y)
            for (int y = 0; y < 8; ++y) {
                for (int x = 0; x < 8; ++x) {
                    CHECK(out.t1.at(0, y, x) == p.t1.at(0, x, 31 - y));
                    CHECK(out.label.at(y, x) == p.label.at(x, 31 - y));
                }
            }
            return;
        }
        FAIL("no rotation draw found");
    }

    SUBCASE("crop applies identically to all three planes") {
        AugmentConfig cfg;
        cfg.enable_gaussian = false;
        cfg.enable_salt_pepper = false;
        cfg.enable_rotation = false;
        cfg.enable_crop = true;
        cfg.crop = 16;
        Rng rng(3);
        SamplePair out = augment(p, cfg, rng);
        CHECK(out.t1.h == 16);
        CHECK(out.label.h == 16);
        // alignment: find the offset from t1 and verify label used the same
        bool found = false;
        for (int oy = 0; oy <= 16 && !found; ++oy) {
            for (int ox = 0; ox <= 16 && !found; ++ox) {
                bool match = true;
                for (int y = 0; y < 16 && match; ++y) {
                    for (int x = 0; x < 16 && match; ++x) {
                        match = out.t1.at(0, y, x) == p.t1.at(0, oy + y, ox + x);
                    }
                }
                if (match) {
                    found = true;
                    for (int y = 0; y < 16; ++y) {
                        for (int x = 0; x < 16; ++x) {
                            CHECK(out.label.at(y, x) == p.label.at(oy + y, ox + x));
                        }
                    }
                }
            }
        }
        CHECK(found);
    }

    SUBCASE("photometric noise never touches the label") {
        AugmentConfig cfg;
        cfg.enable_rotation = false;
        cfg.sigma_min = cfg.sigma_max = 0.05;
        cfg.salt_pepper_p = 0.2;
        Rng rng(4);
        SamplePair out = augment(p, cfg, rng);
        CHECK(out.label.v == p.label.v);
        CHECK(out.t1.v != p.t1.v);
    }

    SUBCASE("salt-and-pepper corrupts about p of the pixels") {
        SamplePair big = checker_pair(512);  // avoid values 0/1 ambiguity: content in [0, 6/7]
        AugmentConfig cfg;
        cfg.enable_gaussian = false;
        cfg.enable_rotation = false;
        cfg.salt_pepper_p = 0.1;
        Rng rng(5);
        // accumulate over several draws for a ~1e6 pixel sample
        std::int64_t corrupted = 0, total = 0;
        for (int rep = 0; rep < 4; ++rep) {
            SamplePair out = augment(big, cfg, rng);
            for (int y = 0; y < 512; ++y) {
                for (int x = 0; x < 512; ++x) {
                    const float v = out.t1.at(0, y, x);
                    if ((v == 0.0f || v == 1.0f) && v != big.t1.at(0, y, x)) {
                        ++corrupted;
                    }
                    ++total;
                }
            }
        }
        const double frac = static_cast<double>(corrupted) / static_cast<double>(total);
        CHECK(frac > 0.097);
        CHECK(frac < 0.103);
    }

    SUBCASE("deterministic given the seed") {
        AugmentConfig cfg;
        Rng a(9), b(9);
        SamplePair o1 = augment(p, cfg, a);
        SamplePair o2 = augment(p, cfg, b);
        CHECK(o1.t1.v == o2.t1.v);
        CHECK(o1.t2.v == o2.t2.v);
        CHECK(o1.label.v == o2.label.v);
    }
}

TEST_CASE("synthetic generator") {
    TempDir dir("lcdnet_synth_test");

    SUBCASE("deterministic per seed, byte-identical files") {
        generate_synthetic((dir.path / "a").string(), 3, 1, 1, 64, 0.1, 7);
        generate_synthetic((dir.path / "b").string(), 3, 1, 1, 64, 0.1, 7);
        for (const char* rel : {"train/A/pair_00000.png", "train/B/pair_00002.png",
                                "test/label/pair_00000.png"}) {
            std::ifstream fa(dir.path / "a" / rel, std::ios::binary);
            std::ifstream fb(dir.path / "b" / rel, std::ios::binary);
            std::vector<char> ba((std::istreambuf_iterator<char>(fa)),
                                 std::istreambuf_iterator<char>());
            std::vector<char> bb((std::istreambuf_iterator<char>(fb)),
                                 std::istreambuf_iterator<char>());
            CHECK(ba == bb);
            CHECK_FALSE(ba.empty());
        }
    }

    SUBCASE("label marks exactly the pixels that differ structurally") {
        generate_synthetic((dir.path / "c").string(), 4, 1, 1, 0.12 > 0 ? 64 : 0, 0.12, 11);
        auto pairs = load_dataset((dir.path / "c").string(), "train");
        REQUIRE(pairs.size() == 4);
        for (const auto& p : pairs) {
            // changed pixels should disagree strongly; unchanged ones only by noise
            double changed_diff = 0.0, unchanged_diff = 0.0;
            std::int64_t nc = 0, nu = 0;
            for (int y = 0; y < p.t1.h; ++y) {
                for (int x = 0; x < p.t1.w; ++x) {
                    const double d = std::abs(p.t1.at(0, y, x) - p.t2.at(0, y, x));
                    if (p.label.at(y, x)) {
                        changed_diff += d;
                        ++nc;
                    } else {
                        unchanged_diff += d;
                        ++nu;
                    }
                }
            }
            REQUIRE(nc > 0);
            CHECK(changed_diff / nc > 5.0 * (unchanged_diff / nu));
        }
    }

    SUBCASE("mean foreground fraction tracks the requested density") {
        generate_synthetic((dir.path / "d").string(), 60, 1, 1, 64, 0.1, 13);
        auto pairs = load_dataset((dir.path / "d").string(), "train");
        double frac = 0.0;
        for (const auto& p : pairs) {
            std::int64_t fg = 0;
            for (auto v : p.label.v) {
                fg += v;
            }
            frac += static_cast<double>(fg) / static_cast<double>(p.label.v.size());
        }
        frac /= static_cast<double>(pairs.size());
        CHECK(frac > 0.08);
        CHECK(frac < 0.12);
    }

    SUBCASE("invalid density is rejected") {
        CHECK_THROWS_AS(generate_synthetic((dir.path / "e").string(), 1, 0, 0, 64, 0.0, 1),
                        std::invalid_argument);
        CHECK_THROWS_AS(generate_synthetic((dir.path / "e").string(), 1, 0, 0, 64, 0.7, 1),
                        std::invalid_argument);
    }
}

TEST_CASE("make_batch normalizes images and stacks labels") {
    SamplePair p = checker_pair(32);
    Batch b = make_batch({p, p}, {0, 1});
    CHECK(b.t1.shape() == Shape{2, 3, 32, 32});
    CHECK(b.label.shape() == Shape{2, 1, 32, 32});
    // v=0 maps to -1, v in [0,1] maps to [-1,1]
    CHECK(b.t1.data()[0] == doctest::Approx((p.t1.v[0] - 0.5f) / 0.5f));
    CHECK((b.label.data()[40] == 0.0f || b.label.data()[40] == 1.0f));
}
