#include "mgreid/util.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace mgreid::util {

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + tmp);
        f << content;
        if (!f) throw std::runtime_error("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace mgreid::util
