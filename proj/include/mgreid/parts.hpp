#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace mgreid {

enum class Part { head = 0, upper = 1, legs = 2 };

inline constexpr std::array<Part, 3> kParts{Part::head, Part::upper, Part::legs};
inline constexpr int kNumParts = 3;

inline const char* part_name(Part p) {
    switch (p) {
        case Part::head: return "head";
        case Part::upper: return "upper";
        case Part::legs: return "legs";
    }
    throw std::invalid_argument("part_name: bad part");
}

inline Part part_from_name(const std::string& s) {
    if (s == "head") return Part::head;
    if (s == "upper") return Part::upper;
    if (s == "legs") return Part::legs;
    throw std::invalid_argument("part_from_name: unknown part '" + s + "'");
}

// Axis-aligned pixel box, min-inclusive / max-exclusive. Coordinates are whole
// pixels; everything downstream (rasterization, calibration) relies on that.
struct PartBox {
    Part part = Part::head;
    int x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    bool calibrated = false;

    int width() const { return x_max - x_min; }
    int height() const { return y_max - y_min; }
    double center_y() const { return 0.5 * (y_min + y_max); }

    void validate(int img_w, int img_h) const {
        if (x_min < 0 || y_min < 0 || x_min > x_max || y_min > y_max || x_max > img_w || y_max > img_h)
            throw std::invalid_argument("PartBox out of bounds: [" + std::to_string(x_min) + "," +
                                        std::to_string(y_min) + "," + std::to_string(x_max) + "," +
                                        std::to_string(y_max) + ") in " + std::to_string(img_w) + "x" +
                                        std::to_string(img_h));
    }
};

// Patch grid over an image: rows x cols cells of patch_size pixels each.
struct PatchGrid {
    int rows = 0;
    int cols = 0;
    int patch_size = 0;

    int num_patches() const { return rows * cols; }
    int image_height() const { return rows * patch_size; }
    int image_width() const { return cols * patch_size; }

    static PatchGrid from_image(int height, int width, int patch_size) {
        if (patch_size <= 0 || height % patch_size != 0 || width % patch_size != 0)
            throw std::invalid_argument("PatchGrid: image dims " + std::to_string(height) + "x" +
                                        std::to_string(width) + " not divisible by patch size " +
                                        std::to_string(patch_size));
        return PatchGrid{height / patch_size, width / patch_size, patch_size};
    }
};

}  // namespace mgreid
