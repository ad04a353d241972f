#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "mgreid/grounding.hpp"
#include "mgreid/synth_data.hpp"
#include "oracles.hpp"

using namespace mgreid;
using namespace mgreid::grounding;
namespace fs = std::filesystem;

namespace {

synth::Dataset small_dataset() {
    synth::GenConfig cfg;
    cfg.num_ids = 3;
    cfg.samples_per_id = 6;
    cfg.queries_per_id = 1;
    cfg.image_height = 64;
    cfg.image_width = 32;
    cfg.patch_size = 8;
    cfg.seed = 21;
    return synth::generate_dataset(cfg);
}

PartBox random_box(Rng& rng, int w, int h, Part part = Part::upper) {
    int x0 = rng.uniform_int(w);
    int x1 = x0 + 1 + rng.uniform_int(w - x0);
    int y0 = rng.uniform_int(h);
    int y1 = y0 + 1 + rng.uniform_int(h - y0);
    PartBox b{part, x0, y0, x1, y1};
    b.calibrated = true;
    return b;
}

}  // namespace

TEST_CASE("grounding queries use the full sentence templates") {
    CHECK(build_query(Part::head) ==
          "Guide me to the location of the head of the person within the image by providing its "
          "bounding boxes");
    CHECK(build_query(Part::upper) ==
          "Guide me to the location of the upper body of the person within the image by providing "
          "its bounding boxes");
    CHECK(build_query(Part::legs) ==
          "Guide me to the location of the legs of the person within the image by providing its "
          "bounding boxes");
}

TEST_CASE("oracle provider returns manifest boxes when corruption is off") {
    synth::Dataset ds = small_dataset();
    OracleBoxProvider prov(ds.manifest, 0.0, 0.0, 1);
    for (const auto& s : ds.manifest.samples)
        for (Part p : kParts) {
            PartBox got = prov.locate(s.sample_id, p);
            const PartBox& want = s.oracle_boxes[static_cast<int>(p)];
            CHECK(got.x_min == want.x_min);
            CHECK(got.y_min == want.y_min);
            CHECK(got.x_max == want.x_max);
            CHECK(got.y_max == want.y_max);
            CHECK_FALSE(got.calibrated);
        }
}

TEST_CASE("oracle provider corruption is deterministic and honors its contract") {
    synth::Dataset ds = small_dataset();
    const int h = ds.manifest.config.image_height;

    OracleBoxProvider a(ds.manifest, 1.0, 0.0, 9);
    OracleBoxProvider b(ds.manifest, 1.0, 0.0, 9);
    for (const auto& s : ds.manifest.samples) {
        PartBox ba = a.locate(s.sample_id, Part::legs);
        PartBox bb = b.locate(s.sample_id, Part::legs);
        CHECK(ba.y_min == bb.y_min);
        CHECK(ba.y_max == bb.y_max);
        CHECK(ba.height() / static_cast<double>(h) >= 0.9);
    }

    OracleBoxProvider c(ds.manifest, 0.0, 1.0, 9);
    for (const auto& s : ds.manifest.samples) {
        PartBox bc = c.locate(s.sample_id, Part::head);
        CHECK(bc.height() / static_cast<double>(h) <= 0.05);
    }
}

TEST_CASE("file provider round trips annotation rows and reports missing pairs") {
    synth::Dataset ds = small_dataset();
    OracleBoxProvider prov(ds.manifest, 0.0, 0.0, 1);
    std::vector<LabelRow> rows = annotate(ds.manifest, prov, CalibPolicy::defaults());
    const std::string path = (fs::temp_directory_path() / "mgreid_test_labels.jsonl").string();
    save_labels(rows, path);

    FileBoxProvider fromfile(path);
    for (const auto& r : rows) {
        PartBox got = fromfile.locate(r.sample_id, r.part);
        CHECK(got.x_min == r.raw_box.x_min);
        CHECK(got.y_min == r.raw_box.y_min);
        CHECK(got.x_max == r.raw_box.x_max);
        CHECK(got.y_max == r.raw_box.y_max);
    }
    CHECK_THROWS_AS(fromfile.locate(999999, Part::head), std::out_of_range);
    std::remove(path.c_str());
}

TEST_CASE("calibration accepts plausible boxes unchanged") {
    CalibPolicy pol = CalibPolicy::defaults();
    // Head of height fraction 0.2 inside a 64x32 frame.
    PartBox head{Part::head, 8, 8, 24, 8 + 13};
    PartBox out = calibrate_box(head, pol, 32, 64);
    CHECK(out.x_min == head.x_min);
    CHECK(out.y_min == head.y_min);
    CHECK(out.x_max == head.x_max);
    CHECK(out.y_max == head.y_max);
    CHECK(out.calibrated);
}

TEST_CASE("implausible boxes fall back to the part stripe") {
    CalibPolicy pol = CalibPolicy::defaults();
    // Legs box covering almost the whole frame height.
    PartBox legs{Part::legs, 4, 0, 28, 63};
    PartBox out = calibrate_box(legs, pol, 32, 64);
    CHECK(out.calibrated);
    CHECK(out.x_min == 0);
    CHECK(out.x_max == 32);
    CHECK(out.y_min == static_cast<int>(0.60 * 64));
    CHECK(out.y_max == 64);

    // A sliver head box is equally implausible.
    PartBox sliver{Part::head, 0, 10, 32, 11};
    PartBox out2 = calibrate_box(sliver, pol, 32, 64);
    CHECK(out2.y_min == 0);
    CHECK(out2.y_max == static_cast<int>(0.30 * 64));
}

TEST_CASE("calibration is idempotent and bound-enforcing on random boxes") {
    CalibPolicy pol = CalibPolicy::defaults();
    Rng rng(17);
    const int W = 32, H = 64;
    for (int i = 0; i < 1000; ++i) {
        Part part = kParts[rng.uniform_int(3)];
        PartBox b = random_box(rng, W, H, part);
        b.calibrated = false;
        PartBox once = calibrate_box(b, pol, W, H);
        PartBox twice = calibrate_box(once, pol, W, H);
        CHECK(once.calibrated);
        CHECK(once.x_min == twice.x_min);
        CHECK(once.y_min == twice.y_min);
        CHECK(once.x_max == twice.x_max);
        CHECK(once.y_max == twice.y_max);

        // After calibration the box satisfies the policy or equals the stripe.
        const auto& pp = pol.parts[static_cast<int>(part)];
        const double hf = once.height() / static_cast<double>(H);
        const double area =
            once.height() * once.width() / static_cast<double>(W * H);
        const bool in_policy = hf >= pp.min_h_frac && hf <= pp.max_h_frac &&
                               area <= pol.max_area_frac;
        const bool is_stripe = once.x_min == 0 && once.x_max == W &&
                               once.y_min == static_cast<int>(std::lround(pp.stripe_y0_frac * H)) &&
                               once.y_max == static_cast<int>(std::lround(pp.stripe_y1_frac * H));
        CHECK((in_policy || is_stripe));
    }
}

TEST_CASE("uncorrupted oracle boxes pass calibration untouched") {
    synth::Dataset ds = small_dataset();
    CalibPolicy pol = CalibPolicy::defaults();
    const int w = ds.manifest.config.image_width, h = ds.manifest.config.image_height;
    for (const auto& s : ds.manifest.samples)
        for (const auto& b : s.oracle_boxes) {
            PartBox out = calibrate_box(b, pol, w, h);
            CHECK(out.x_min == b.x_min);
            CHECK(out.y_min == b.y_min);
            CHECK(out.x_max == b.x_max);
            CHECK(out.y_max == b.y_max);
        }
}

TEST_CASE("rasterization matches the pixel-cover oracle") {
    Rng rng(23);
    PatchGrid grid = PatchGrid::from_image(64, 32, 8);
    for (int i = 0; i < 1000; ++i) {
        PartBox b = random_box(rng, 32, 64);
        CHECK(rasterize(b, grid) == oracle::pixel_rasterize(b, grid));
    }
}

TEST_CASE("rasterization worked examples") {
    // 32x16 image, patch 8: grid is 4 rows x 2 cols.
    PatchGrid grid = PatchGrid::from_image(32, 16, 8);
    PartBox b{Part::head, 0, 0, 16, 16};
    b.calibrated = true;
    CHECK(rasterize(b, grid) == std::vector<uint8_t>{1, 1, 1, 1, 0, 0, 0, 0});

    PartBox full{Part::head, 0, 0, 16, 32};
    full.calibrated = true;
    CHECK(rasterize(full, grid) == std::vector<uint8_t>(8, 1));

    PartBox empty{Part::head, 5, 5, 5, 20};
    empty.calibrated = true;
    CHECK(rasterize(empty, grid) == std::vector<uint8_t>(8, 0));

    // One-pixel overlap into a patch flips it on.
    PartBox corner{Part::head, 7, 7, 9, 9};
    corner.calibrated = true;
    CHECK(rasterize(corner, grid) == std::vector<uint8_t>{1, 1, 1, 1, 0, 0, 0, 0});
}

TEST_CASE("label matrix stacks part rows in fixed order") {
    std::vector<uint8_t> gh(32, 0), gu(32, 0), gl(32, 0);
    gh[0] = 1;
    gu[15] = 1;
    gl[31] = 1;
    Matrix m = build_label_matrix(gh, gu, gl);
    REQUIRE(m.rows == 3);
    REQUIRE(m.cols == 32);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(1, 15) == 1.0);
    CHECK(m(2, 31) == 1.0);
    CHECK(m(0, 1) == 0.0);

    std::vector<uint8_t> shorter(31, 0);
    CHECK_THROWS_AS(build_label_matrix(gh, gu, shorter), std::invalid_argument);
}

TEST_CASE("annotation pass covers every sample and part and round trips") {
    synth::Dataset ds = small_dataset();
    OracleBoxProvider prov(ds.manifest, 0.0, 0.0, 1);
    std::vector<LabelRow> rows = annotate(ds.manifest, prov, CalibPolicy::defaults());
    CHECK(rows.size() == ds.manifest.samples.size() * kNumParts);

    const std::string path = (fs::temp_directory_path() / "mgreid_test_labels2.jsonl").string();
    save_labels(rows, path);
    std::vector<LabelRow> back = load_labels(path);
    REQUIRE(back.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].sample_id == rows[i].sample_id);
        CHECK(back[i].part == rows[i].part);
        CHECK(back[i].mask_bits == rows[i].mask_bits);
        CHECK(back[i].raw_box.y_min == rows[i].raw_box.y_min);
        CHECK(back[i].calibrated_box.y_max == rows[i].calibrated_box.y_max);
    }

    PatchGrid grid = ds.manifest.config.image_height == 64 ? PatchGrid::from_image(64, 32, 8)
                                                           : PatchGrid{0, 0, 0};
    std::map<int, Matrix> mats = label_matrices(back, grid.num_patches());
    CHECK(mats.size() == ds.manifest.samples.size());
    for (const auto& [sid, m] : mats) {
        REQUIRE(m.rows == 3);
        REQUIRE(m.cols == grid.num_patches());
        // Rows must agree with re-rasterizing the oracle boxes directly.
        const auto& boxes = ds.manifest.samples[sid].oracle_boxes;
        for (int p = 0; p < 3; ++p) {
            std::vector<uint8_t> want = oracle_patch_mask(boxes[p], grid);
            for (int i = 0; i < m.cols; ++i) CHECK(m(p, i) == static_cast<double>(want[i]));
        }
    }
    std::remove(path.c_str());
}
