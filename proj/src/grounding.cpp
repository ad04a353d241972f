#include "mgreid/grounding.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace mgreid::grounding {

std::string build_query(Part part) {
    const char* subject = nullptr;
    switch (part) {
        case Part::head: subject = "the head of the person"; break;
        case Part::upper: subject = "the upper body of the person"; break;
        case Part::legs: subject = "the legs of the person"; break;
    }
    return std::string("Guide me to the location of ") + subject +
           " within the image by providing its bounding boxes";
}

// ---------------------------------------------------------------------------

OracleBoxProvider::OracleBoxProvider(const synth::Manifest& manifest, double oversize_rate,
                                     double oversplit_rate, uint64_t seed)
    : manifest_(manifest), oversize_rate_(oversize_rate), oversplit_rate_(oversplit_rate),
      seed_(seed) {
    if (oversize_rate < 0 || oversplit_rate < 0 || oversize_rate + oversplit_rate > 1.0)
        throw std::invalid_argument("OracleBoxProvider: bad corruption rates");
}

PartBox OracleBoxProvider::locate(int sample_id, Part part) {
    if (sample_id < 0 || sample_id >= static_cast<int>(manifest_.samples.size()))
        throw std::out_of_range("OracleBoxProvider: unknown sample " + std::to_string(sample_id));
    const auto& meta = manifest_.samples[sample_id];
    PartBox box = meta.oracle_boxes[static_cast<int>(part)];
    const int w = manifest_.config.image_width, h = manifest_.config.image_height;

    // Corruption decision is independent per (sample, part) and reproducible.
    Rng r = Rng(seed_)
                .child(0xC0u)
                .child(static_cast<uint64_t>(sample_id))
                .child(static_cast<uint64_t>(part));
    const double u = r.uniform();
    if (u < oversize_rate_)
        box = synth::corrupt_box(box, synth::Corruption::oversize, w, h, r);
    else if (u < oversize_rate_ + oversplit_rate_)
        box = synth::corrupt_box(box, synth::Corruption::oversplit, w, h, r);
    return box;
}

FileBoxProvider::FileBoxProvider(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("FileBoxProvider: cannot open " + path);
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Part part = part_from_name(j.at("part").get<std::string>());
        // Accept detector output ("box") as well as our own annotation rows
        // ("raw_box"), so a label file can be re-fed for re-calibration.
        const auto& b = j.contains("box") ? j.at("box") : j.at("raw_box");
        PartBox box{part, b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
        boxes_[{j.at("sample_id").get<int>(), static_cast<int>(part)}] = box;
    }
}

PartBox FileBoxProvider::locate(int sample_id, Part part) {
    auto it = boxes_.find({sample_id, static_cast<int>(part)});
    if (it == boxes_.end())
        throw std::out_of_range("FileBoxProvider: no box for sample " +
                                std::to_string(sample_id) + " part " + part_name(part));
    return it->second;
}

// ---------------------------------------------------------------------------

CalibPolicy CalibPolicy::defaults() {
    CalibPolicy p;
    p.parts[0] = {0.05, 0.45, 0.00, 0.30};  // head
    p.parts[1] = {0.15, 0.70, 0.25, 0.65};  // upper body
    p.parts[2] = {0.15, 0.70, 0.60, 1.00};  // legs
    p.max_area_frac = 0.9;
    return p;
}

PartBox calibrate_box(const PartBox& box, const CalibPolicy& policy, int img_w, int img_h) {
    const PartPolicy& pp = policy.parts[static_cast<int>(box.part)];

    // Externally produced boxes may stick out of the frame; clamp before
    // judging plausibility. A box that dies under clamping is implausible.
    PartBox out = box;
    out.x_min = std::max(0, out.x_min);
    out.y_min = std::max(0, out.y_min);
    out.x_max = std::min(img_w, out.x_max);
    out.y_max = std::min(img_h, out.y_max);
    const bool degenerate = out.x_min >= out.x_max || out.y_min >= out.y_max;

    const double h_frac = degenerate ? -1.0 : static_cast<double>(out.height()) / img_h;
    const double area_frac =
        degenerate ? 2.0
                   : static_cast<double>(out.width()) * out.height() /
                         (static_cast<double>(img_w) * img_h);

    if (h_frac < pp.min_h_frac || h_frac > pp.max_h_frac || area_frac > policy.max_area_frac) {
        out.x_min = 0;
        out.x_max = img_w;
        out.y_min = static_cast<int>(std::lround(pp.stripe_y0_frac * img_h));
        out.y_max = static_cast<int>(std::lround(pp.stripe_y1_frac * img_h));
    }
    out.calibrated = true;
    out.validate(img_w, img_h);
    return out;
}

std::vector<uint8_t> rasterize(const PartBox& box, const PatchGrid& grid) {
    if (!box.calibrated)
        throw std::invalid_argument("rasterize: box must be calibrated first");
    return oracle_patch_mask(box, grid);
}

std::vector<uint8_t> oracle_patch_mask(const PartBox& box, const PatchGrid& grid) {
    std::vector<uint8_t> mask(static_cast<size_t>(grid.num_patches()), 0);
    const int p = grid.patch_size;
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) {
            // Strictly positive pixel overlap between box and patch cell.
            const int y0 = std::max(box.y_min, r * p), y1 = std::min(box.y_max, (r + 1) * p);
            const int x0 = std::max(box.x_min, c * p), x1 = std::min(box.x_max, (c + 1) * p);
            if (y1 > y0 && x1 > x0) mask[static_cast<size_t>(r) * grid.cols + c] = 1;
        }
    return mask;
}

Matrix build_label_matrix(const std::vector<uint8_t>& head, const std::vector<uint8_t>& upper,
                          const std::vector<uint8_t>& legs) {
    if (head.size() != upper.size() || head.size() != legs.size())
        throw std::invalid_argument("build_label_matrix: size mismatch");
    Matrix g(kNumParts, static_cast<int>(head.size()));
    for (size_t j = 0; j < head.size(); ++j) {
        g(0, static_cast<int>(j)) = head[j];
        g(1, static_cast<int>(j)) = upper[j];
        g(2, static_cast<int>(j)) = legs[j];
    }
    return g;
}

std::vector<LabelRow> annotate(const synth::Manifest& manifest, BoxProvider& provider,
                               const CalibPolicy& policy) {
    const int w = manifest.config.image_width, h = manifest.config.image_height;
    const PatchGrid grid = PatchGrid::from_image(h, w, manifest.config.patch_size);
    std::vector<LabelRow> rows;
    rows.reserve(manifest.samples.size() * kNumParts);
    for (const auto& s : manifest.samples)
        for (Part part : kParts) {
            LabelRow row;
            row.sample_id = s.sample_id;
            row.part = part;
            row.raw_box = provider.locate(s.sample_id, part);
            row.calibrated_box = calibrate_box(row.raw_box, policy, w, h);
            row.mask_bits = rasterize(row.calibrated_box, grid);
            rows.push_back(std::move(row));
        }
    return rows;
}

// ---------------------------------------------------------------------------

namespace {

json box_json(const PartBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

PartBox box_from(Part part, const json& j, bool calibrated) {
    PartBox b{part, j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
    b.calibrated = calibrated;
    return b;
}

}  // namespace

void save_labels(const std::vector<LabelRow>& rows, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_labels: cannot write " + path);
    for (const auto& r : rows) {
        std::string bits(r.mask_bits.size(), '0');
        for (size_t i = 0; i < r.mask_bits.size(); ++i)
            if (r.mask_bits[i]) bits[i] = '1';
        json j = {{"sample_id", r.sample_id},
                  {"part", part_name(r.part)},
                  {"raw_box", box_json(r.raw_box)},
                  {"calibrated_box", box_json(r.calibrated_box)},
                  {"mask_bits", bits}};
        f << j.dump() << "\n";
    }
}

std::vector<LabelRow> load_labels(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_labels: cannot open " + path);
    std::vector<LabelRow> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        LabelRow r;
        r.sample_id = j.at("sample_id").get<int>();
        r.part = part_from_name(j.at("part").get<std::string>());
        r.raw_box = box_from(r.part, j.at("raw_box"), false);
        r.calibrated_box = box_from(r.part, j.at("calibrated_box"), true);
        const std::string bits = j.at("mask_bits").get<std::string>();
        r.mask_bits.resize(bits.size());
        for (size_t i = 0; i < bits.size(); ++i) {
            if (bits[i] != '0' && bits[i] != '1')
                throw std::runtime_error("load_labels: bad mask bits");
            r.mask_bits[i] = bits[i] == '1';
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::map<int, Matrix> label_matrices(const std::vector<LabelRow>& rows, int n_patch) {
    std::map<int, std::array<const LabelRow*, kNumParts>> by_sample;
    for (const auto& r : rows) {
        if (static_cast<int>(r.mask_bits.size()) != n_patch)
            throw std::runtime_error("label_matrices: mask length mismatch");
        by_sample[r.sample_id][static_cast<int>(r.part)] = &r;
    }
    std::map<int, Matrix> out;
    for (auto& [sid, parts] : by_sample) {
        for (const auto* p : parts)
            if (!p) throw std::runtime_error("label_matrices: sample " + std::to_string(sid) +
                                             " is missing a part");
        out.emplace(sid, build_label_matrix(parts[0]->mask_bits, parts[1]->mask_bits,
                                            parts[2]->mask_bits));
    }
    return out;
}

}  // namespace mgreid::grounding
