#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mgreid/matrix.hpp"
#include "mgreid/parts.hpp"
#include "mgreid/rng.hpp"
#include "mgreid/synth_data.hpp"

// Turns part bounding boxes into patch-level supervision. Box sources are
// pluggable: the oracle provider reads ground-truth boxes (optionally
// corrupted to mimic a sloppy annotator), the file provider reads boxes
// produced by any external locator.
namespace mgreid::grounding {

// The natural-language query a visual grounding backend would receive for a
// part. Kept as data so an external backend can be wired in unchanged.
std::string build_query(Part part);

class BoxProvider {
  public:
    virtual ~BoxProvider() = default;
    virtual PartBox locate(int sample_id, Part part) = 0;
};

// Ground-truth boxes from the manifest, with optional per-part corruption at
// the configured rates. Deterministic in (seed, sample_id, part).
class OracleBoxProvider : public BoxProvider {
  public:
    OracleBoxProvider(const synth::Manifest& manifest, double oversize_rate,
                      double oversplit_rate, uint64_t seed);
    PartBox locate(int sample_id, Part part) override;

  private:
    const synth::Manifest& manifest_;
    double oversize_rate_, oversplit_rate_;
    uint64_t seed_;
};

// Boxes from a JSONL file of externally produced detections. Throws
// std::out_of_range when a (sample, part) pair is missing.
class FileBoxProvider : public BoxProvider {
  public:
    explicit FileBoxProvider(const std::string& path);
    PartBox locate(int sample_id, Part part) override;

  private:
    std::map<std::pair<int, int>, PartBox> boxes_;
};

// Plausibility rules for a located box. A box whose height fraction falls
// outside the part's interval, or which covers nearly the whole frame, is
// replaced with the part's fixed fallback stripe (full width).
struct PartPolicy {
    double min_h_frac, max_h_frac;      // accepted height / image height
    double stripe_y0_frac, stripe_y1_frac;  // fallback stripe
};

struct CalibPolicy {
    std::array<PartPolicy, kNumParts> parts;
    double max_area_frac = 0.9;
    static CalibPolicy defaults();
};

PartBox calibrate_box(const PartBox& box, const CalibPolicy& policy, int img_w, int img_h);

// Patch-level mask: a patch is on iff the box overlaps it by at least one
// pixel. Row-major patch order. Requires a calibrated box.
std::vector<uint8_t> rasterize(const PartBox& box, const PatchGrid& grid);

// 3 x n_patch binary matrix, rows in part order head/upper/legs.
Matrix build_label_matrix(const std::vector<uint8_t>& head, const std::vector<uint8_t>& upper,
                          const std::vector<uint8_t>& legs);

// One annotation record per (sample, part).
struct LabelRow {
    int sample_id = 0;
    Part part = Part::head;
    PartBox raw_box;
    PartBox calibrated_box;
    std::vector<uint8_t> mask_bits;
};

// Runs the full annotation pass over a manifest: locate -> calibrate ->
// rasterize for every sample and part.
std::vector<LabelRow> annotate(const synth::Manifest& manifest, BoxProvider& provider,
                               const CalibPolicy& policy);

void save_labels(const std::vector<LabelRow>& rows, const std::string& path);
std::vector<LabelRow> load_labels(const std::string& path);

// sample_id -> 3 x n_patch label matrix. Throws if any sample lacks a part.
std::map<int, Matrix> label_matrices(const std::vector<LabelRow>& rows, int n_patch);

// Patch mask of an uncorrupted ground-truth box (used to score predictions).
std::vector<uint8_t> oracle_patch_mask(const PartBox& box, const PatchGrid& grid);

}  // namespace mgreid::grounding
