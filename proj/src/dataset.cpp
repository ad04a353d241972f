#include "mgreid/dataset.hpp"

#include <stdexcept>

#include "mgreid/grounding.hpp"

namespace mgreid::data {

const Matrix& Corpus::label(int sample_id) const {
    auto it = labels.find(sample_id);
    if (it == labels.end())
        throw std::out_of_range("Corpus: no labels for sample " + std::to_string(sample_id));
    return it->second;
}

int Corpus::n_patch() const { return grid().num_patches(); }

PatchGrid Corpus::grid() const {
    return PatchGrid::from_image(manifest.config.image_height, manifest.config.image_width,
                                 manifest.config.patch_size);
}

Corpus load_corpus(const std::string& data_dir, const std::string& labels_path) {
    Corpus c;
    c.manifest = synth::load_manifest(data_dir);
    c.images = synth::load_all_images(data_dir, c.manifest);
    const auto rows = grounding::load_labels(labels_path);
    c.labels = grounding::label_matrices(rows, c.n_patch());
    for (const auto& s : c.manifest.samples)
        if (!c.labels.count(s.sample_id))
            throw std::runtime_error("load_corpus: labels missing sample " +
                                     std::to_string(s.sample_id));
    return c;
}

}  // namespace mgreid::data
