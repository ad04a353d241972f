#pragma once

#include <map>
#include <string>
#include <vector>

#include "mgreid/image.hpp"
#include "mgreid/matrix.hpp"
#include "mgreid/synth_data.hpp"

namespace mgreid::data {

// Everything training and evaluation need in memory: the manifest, the
// decoded images (indexed by sample id) and the per-sample 3 x n_patch part
// label matrices from the annotation pass.
struct Corpus {
    synth::Manifest manifest;
    std::vector<Image> images;
    std::map<int, Matrix> labels;

    const Matrix& label(int sample_id) const;
    int n_patch() const;
    PatchGrid grid() const;
};

Corpus load_corpus(const std::string& data_dir, const std::string& labels_path);

}  // namespace mgreid::data
