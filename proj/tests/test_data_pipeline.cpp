#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "floc/augment.hpp"
#include "floc/dataset.hpp"
#include "floc/degrade.hpp"
#include "floc/synth.hpp"

using namespace floc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "floc_pipeline" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

// host/donor pair with guaranteed texture difference
std::pair<Image, Image> host_donor(uint64_t seed, int size = 160) {
    Rng ha(hash_mix(seed, 1)), da(hash_mix(seed, 2));
    return {synth_texture(size, size, ha), synth_texture(size, size, da)};
}

} // namespace

TEST_SUITE("data_pipeline") {

    TEST_CASE("load_manifest preserves order and count") {
        const auto dir = fresh_dir("manifest_ok");
        U8Image img(32, 32, 3, 100);
        U8Image mask(32, 32, 1, 0);
        for (int i = 0; i < 3; ++i) {
            save_png((dir / ("img" + std::to_string(i) + ".png")).string(), img);
            save_png((dir / ("mask" + std::to_string(i) + ".png")).string(), mask);
        }
        std::string text;
        for (int i = 0; i < 3; ++i)
            text += "{\"image\": \"img" + std::to_string(i) + ".png\", \"mask\": \"mask" + std::to_string(i) +
                    ".png\", \"dataset\": \"d\"}\n";
        write_file(dir / "manifest.jsonl", text);

        const Manifest m = load_manifest((dir / "manifest.jsonl").string());
        REQUIRE(m.entries.size() == 3);
        CHECK(m.entries[0].sample_id == "img0");
        CHECK(m.entries[2].sample_id == "img2");
        CHECK(m.entries[1].dataset_id == "d");
    }

    TEST_CASE("load_manifest empty file gives zero entries") {
        const auto dir = fresh_dir("manifest_empty");
        write_file(dir / "empty.jsonl", "");
        CHECK(load_manifest((dir / "empty.jsonl").string()).entries.empty());
    }

    TEST_CASE("load_manifest reports the offending line") {
        const auto dir = fresh_dir("manifest_bad");
        U8Image img(32, 32, 3, 100);
        save_png((dir / "a.png").string(), img);
        U8Image mask(32, 32, 1, 0);
        save_png((dir / "m.png").string(), mask);
        write_file(dir / "bad.jsonl",
                   "{\"image\": \"a.png\", \"mask\": \"m.png\", \"dataset\": \"d\"}\n"
                   "{\"image\": \"a.png\", \"dataset\": \"d\"}\n");
        CHECK_THROWS_WITH_AS(load_manifest((dir / "bad.jsonl").string()),
                             doctest::Contains("line 2"), Error);

        write_file(dir / "missing_path.jsonl",
                   "{\"image\": \"nope.png\", \"mask\": \"m.png\", \"dataset\": \"d\"}\n");
        CHECK_THROWS_WITH_AS(load_manifest((dir / "missing_path.jsonl").string()),
                             doctest::Contains("does not resolve"), Error);

        write_file(dir / "dup.jsonl",
                   "{\"image\": \"a.png\", \"mask\": \"m.png\", \"dataset\": \"d\"}\n"
                   "{\"image\": \"a.png\", \"mask\": \"m.png\", \"dataset\": \"d\"}\n");
        CHECK_THROWS_WITH_AS(load_manifest((dir / "dup.jsonl").string()),
                             doctest::Contains("duplicate sample_id"), Error);

        CHECK_THROWS_AS(load_manifest((dir / "does_not_exist.jsonl").string()), Error);
    }

    TEST_CASE("load_sample resizes image bilinearly and thresholds the mask") {
        const auto dir = fresh_dir("load_sample");
        Rng rng(4);
        U8Image img(1024, 1024, 3);
        for (auto& v : img.data) v = static_cast<uint8_t>(rng.bounded(256));
        U8Image mask(1024, 1024, 1, 0);
        // quadrant values around the 127 threshold
        for (int y = 0; y < 1024; ++y)
            for (int x = 0; x < 1024; ++x) mask.at(y, x, 0) = (y < 512) ? (x < 512 ? 200 : 100) : 0;
        save_png((dir / "img.png").string(), img);
        save_png((dir / "mask.png").string(), mask);

        const ImageSample s = load_sample({(dir / "img.png").string(), (dir / "mask.png").string(), "d", "img"});
        CHECK(s.image.h == 512);
        CHECK(s.image.w == 512);
        CHECK(s.mask.h == 512);
        // 200 -> 1, 100 -> 0
        CHECK(s.mask.at(10, 10) == 1);
        CHECK(s.mask.at(10, 300) == 0);
        CHECK(s.mask.at(400, 10) == 0);
        for (uint8_t v : s.mask.data) CHECK((v == 0 || v == 1));
    }

    TEST_CASE("load_sample accepts all-zero masks and rejects size mismatch") {
        const auto dir = fresh_dir("load_sample_edge");
        U8Image img(128, 128, 3, 90);
        U8Image mask(128, 128, 1, 0);
        save_png((dir / "img.png").string(), img);
        save_png((dir / "mask.png").string(), mask);
        const ImageSample s = load_sample({(dir / "img.png").string(), (dir / "mask.png").string(), "d", "img"}, 64);
        CHECK(s.mask.count() == 0);
        CHECK(s.image.h == 64);

        U8Image small_mask(64, 128, 1, 0);
        save_png((dir / "small.png").string(), small_mask);
        CHECK_THROWS_WITH_AS(load_sample({(dir / "img.png").string(), (dir / "small.png").string(), "d", "x"}),
                             doctest::Contains("dimensions differ"), Error);
    }

    TEST_CASE("synth_splice is deterministic in the seed") {
        const auto [host, donor] = host_donor(10);
        const ImageSample a = synth_splice(host, donor, 77);
        const ImageSample b = synth_splice(host, donor, 77);
        const ImageSample c = synth_splice(host, donor, 78);
        CHECK(a.image.data == b.image.data);
        CHECK(a.mask.data == b.mask.data);
        CHECK(a.image.data != c.image.data);
    }

    TEST_CASE("synth_splice area fraction stays in [0.05, 0.40] over 100 seeds") {
        const auto [host, donor] = host_donor(11);
        const real total = static_cast<real>(host.h) * host.w;
        for (uint64_t seed = 0; seed < 100; ++seed) {
            const ImageSample s = synth_splice(host, donor, seed);
            const real frac = static_cast<real>(s.mask.count()) / total;
            CHECK(frac >= 0.05);
            CHECK(frac <= 0.40);
        }
    }

    TEST_CASE("synth_splice mask is exactly the changed-pixel set") {
        const auto [host, donor] = host_donor(12);
        for (uint64_t seed = 0; seed < 20; ++seed) {
            const ImageSample s = synth_splice(host, donor, seed);
            for (int y = 0; y < host.h; ++y)
                for (int x = 0; x < host.w; ++x) {
                    bool differs = false;
                    for (int ch = 0; ch < 3; ++ch) differs |= s.image.at(y, x, ch) != host.at(y, x, ch);
                    REQUIRE(differs == (s.mask.at(y, x) == 1));
                }
        }
    }

    TEST_CASE("synth_splice donor == host still produces a real difference") {
        Rng rng(13);
        const Image host = synth_texture(160, 160, rng);
        const ImageSample s = synth_splice(host, host, 5, /*allow_identity_placement=*/false);
        CHECK(s.mask.count() > 0);
        bool any_diff = false;
        for (int y = 0; y < host.h; ++y)
            for (int x = 0; x < host.w; ++x)
                if (s.mask.at(y, x))
                    for (int ch = 0; ch < 3; ++ch) any_diff |= s.image.at(y, x, ch) != host.at(y, x, ch);
        CHECK(any_diff);
    }

    TEST_CASE("synth_splice rejects tiny inputs") {
        Image tiny(64, 64, 3, 0.5);
        CHECK_THROWS_AS(synth_splice(tiny, tiny, 1), Error);
    }

    TEST_CASE("synth textures land on the 8-bit grid (lossless png round trip)") {
        const auto dir = fresh_dir("synth_png");
        const ImageSample s = make_synthetic_sample(128, 3);
        save_png((dir / "img.png").string(), to_u8(s.image));
        const Image back = to_real(load_png((dir / "img.png").string()));
        CHECK(back.data == s.image.data);
    }

    TEST_CASE("augment: some seed is the identity (all coin flips false)") {
        const auto [host, donor] = host_donor(14);
        const ImageSample s = synth_splice(host, donor, 3);
        bool found = false;
        for (uint64_t seed = 0; seed < 2000 && !found; ++seed) {
            const ImageSample out = augment(s, seed);
            if (out.image.data == s.image.data && out.mask.data == s.mask.data) found = true;
        }
        CHECK(found);
    }

    TEST_CASE("augment: mask changes only by the flip, and matches it exactly") {
        const auto [host, donor] = host_donor(15);
        const ImageSample s = synth_splice(host, donor, 4);
        const Mask flipped = hflip(s.mask);
        bool saw_flip = false, saw_noflip = false;
        for (uint64_t seed = 0; seed < 64; ++seed) {
            const ImageSample out = augment(s, seed);
            if (out.mask.data == s.mask.data)
                saw_noflip = true;
            else {
                REQUIRE(out.mask.data == flipped.data);
                saw_flip = true;
            }
            for (uint8_t v : out.mask.data) REQUIRE((v == 0 || v == 1));
        }
        CHECK(saw_flip);
        CHECK(saw_noflip);
    }

    TEST_CASE("augment is deterministic in the seed") {
        const auto [host, donor] = host_donor(16);
        const ImageSample s = synth_splice(host, donor, 5);
        for (uint64_t seed : {uint64_t{0}, uint64_t{17}, uint64_t{991}}) {
            const ImageSample a = augment(s, seed);
            const ImageSample b = augment(s, seed);
            CHECK(a.image.data == b.image.data);
            CHECK(a.mask.data == b.mask.data);
        }
    }

    TEST_CASE("degrade: empty chain is the identity") {
        const auto [host, donor] = host_donor(17);
        DegradationSpec spec;
        const Image out = degrade(host, spec);
        CHECK(out.data == host.data);
    }

    TEST_CASE("degrade: resize factor 1 is the identity") {
        const auto [host, donor] = host_donor(18);
        DegradationSpec spec;
        spec.chain = {DegradationOp::resize(1.0)};
        const Image out = degrade(host, spec);
        CHECK(out.data == host.data);
    }

    TEST_CASE("degrade: chain applies in order and is seed-deterministic") {
        const auto [host, donor] = host_donor(19);
        const DegradationSpec spec = parse_degradation_chain("jpeg:60,resize:0.6,blur:5,noise:0.006", 9);
        REQUIRE(spec.chain.size() == 4);
        CHECK(spec.chain[0].kind == DegradationOp::Kind::jpeg);
        CHECK(spec.chain[0].quality == 60);
        CHECK(spec.chain[1].factor == doctest::Approx(0.6));
        CHECK(spec.chain[2].kernel == 5);
        CHECK(spec.chain[3].intensity == doctest::Approx(0.006));

        const Image a = degrade(host, spec);
        const Image b = degrade(host, spec);
        CHECK(a.data == b.data);
        CHECK(a.h == host.h);
        CHECK(a.w == host.w);

        // manual application in the stated order must agree
        Image manual = jpeg_roundtrip(host, 60);
        {
            const int sh = static_cast<int>(std::lround(manual.h * 0.6));
            const int sw = static_cast<int>(std::lround(manual.w * 0.6));
            manual = resize_bilinear(resize_bilinear(manual, sh, sw), host.h, host.w);
        }
        manual = gaussian_blur(manual, 5);
        {
            Rng rng(hash_mix(9, 0x85ebca6b));
            manual = add_gaussian_noise(manual, std::sqrt(0.006), rng);
        }
        CHECK(a.data == manual.data);

        DegradationSpec other = spec;
        other.seed = 10;
        CHECK(degrade(host, other).data != a.data);
    }

    TEST_CASE("degrade: noise variance matches the requested intensity") {
        Image flat(578, 578, 3, 0.5); // ~1e6 pixels
        DegradationSpec spec;
        spec.chain = {DegradationOp::noise(0.006)};
        spec.seed = 123;
        const Image out = degrade(flat, spec);
        real mean = 0;
        for (real v : out.data) mean += v;
        mean /= static_cast<real>(out.data.size());
        real var = 0;
        for (real v : out.data) var += (v - mean) * (v - mean);
        var /= static_cast<real>(out.data.size());
        CHECK(var > 0.006 * 0.8);
        CHECK(var < 0.006 * 1.2);
    }

    TEST_CASE("degrade validates parameters") {
        CHECK_THROWS_AS(DegradationOp::jpeg(0), Error);
        CHECK_THROWS_AS(DegradationOp::jpeg(101), Error);
        CHECK_THROWS_AS(DegradationOp::blur(4), Error);
        CHECK_THROWS_AS(DegradationOp::noise(-0.1), Error);
        CHECK_THROWS_AS(DegradationOp::resize(0.0), Error);
        CHECK_THROWS_AS(parse_degradation_chain("warp:2"), Error);
        CHECK_THROWS_AS(parse_degradation_chain("jpeg"), Error);
        CHECK_THROWS_AS(parse_degradation_chain("jpeg:abc"), Error);
    }
}
