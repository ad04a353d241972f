#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mgreid/image.hpp"
#include "mgreid/parts.hpp"
#include "mgreid/rng.hpp"

// Synthetic person crops with exact part annotations. Identities control the
// figure (part colors, proportions); domains control background and
// illumination; per-sample jitter moves the figure around. The regions the
// renderer paints coincide exactly with the emitted part boxes, so annotation
// quality is measurable against a known ground truth.
namespace mgreid::synth {

struct GenConfig {
    int num_ids = 20;
    int samples_per_id = 48;
    int queries_per_id = 4;  // first held-out samples become queries (camera 0)
    int num_cameras = 2;
    int num_domains = 2;
    int image_height = 64;
    int image_width = 32;
    int patch_size = 8;
    uint64_t seed = 1;
    // Probabilities that the oracle annotator corrupts a box (per sample,
    // per part); consumed at annotation time.
    double oversize_rate = 0.0;
    double oversplit_rate = 0.0;
};

struct SampleMeta {
    int sample_id = 0;
    int id_label = 0;
    int camera_id = 0;
    int domain_id = 0;
    std::string split;  // "train" | "query" | "gallery"
    std::array<PartBox, kNumParts> oracle_boxes{};
};

struct Manifest {
    GenConfig config;
    std::vector<SampleMeta> samples;

    std::vector<int> split_indices(const std::string& split) const;
    int held_out_domain() const { return config.num_domains - 1; }
};

struct Dataset {
    Manifest manifest;
    std::vector<Image> images;  // indexed by sample_id
};

// Per-part painted-pixel record, for validating that boxes match exactly what
// was drawn.
struct RenderTrace {
    int height = 0, width = 0;
    std::array<std::vector<uint8_t>, kNumParts> painted;
};

struct IdSpec {
    int id_label = 0;
    uint64_t dataset_seed = 0;
};

struct DomainStyle {
    int domain_id = 0;
    int camera_id = 0;
    uint64_t dataset_seed = 0;
};

// Boxes depend only on (id, sample_seed); the domain touches background and
// illumination only.
struct RenderResult {
    Image image;
    std::array<PartBox, kNumParts> boxes{};
};
RenderResult render_identity(const IdSpec& id, const DomainStyle& style,
                             int height, int width, uint64_t sample_seed,
                             RenderTrace* trace = nullptr);

// Generates the full dataset and assigns splits: the last domain is held out
// for evaluation (one query per id, the rest gallery, cross-camera match
// guaranteed); all other domains train. Throws std::invalid_argument when the
// configuration cannot satisfy the protocol.
Dataset generate_dataset(const GenConfig& cfg);

// Directory layout: <dir>/manifest.json plus <dir>/images/<sample_id>.png.
void save_dataset(const Dataset& ds, const std::string& dir);
Manifest load_manifest(const std::string& dir);
Image load_sample_image(const std::string& dir, int sample_id);
std::vector<Image> load_all_images(const std::string& dir, const Manifest& m);

enum class Corruption { oversize, oversplit };

// oversize: grow to nearly the full frame (height >= 0.9 * image height).
// oversplit: shrink the height to at most 5% of the image height (>= 1 px)
// around the original center. x extents are kept for oversplit.
PartBox corrupt_box(const PartBox& box, Corruption mode, int img_w, int img_h, Rng& rng);

uint64_t sample_seed_for(const GenConfig& cfg, int id_label, int sample_index);

}  // namespace mgreid::synth
