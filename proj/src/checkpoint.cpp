#include "mgreid/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace mgreid::ckpt {

namespace {

template <class T>
void put_raw(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get_raw(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void Writer::put(const std::string& name, const Matrix& m) {
    entries_.emplace_back(name, m);
}

void Writer::put_scalar(const std::string& name, double v) {
    entries_.emplace_back(name, Matrix(1, 1, v));
}

void Writer::save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("checkpoint: cannot write " + tmp);
        os.write(kMagic, 8);
        put_raw<uint64_t>(os, entries_.size());
        for (const auto& [name, m] : entries_) {
            put_raw<uint32_t>(os, static_cast<uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            put_raw<uint32_t>(os, static_cast<uint32_t>(m.rows));
            put_raw<uint32_t>(os, static_cast<uint32_t>(m.cols));
            os.write(reinterpret_cast<const char*>(m.v.data()),
                     static_cast<std::streamsize>(m.v.size() * sizeof(double)));
        }
        if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

Reader::Reader(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint64_t count = get_raw<uint64_t>(is);
    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t len = get_raw<uint32_t>(is);
        std::string name(len, '\0');
        is.read(name.data(), len);
        const uint32_t rows = get_raw<uint32_t>(is);
        const uint32_t cols = get_raw<uint32_t>(is);
        Matrix m(static_cast<int>(rows), static_cast<int>(cols));
        is.read(reinterpret_cast<char*>(m.v.data()),
                static_cast<std::streamsize>(m.v.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
        if (!entries_.emplace(std::move(name), std::move(m)).second)
            throw std::runtime_error("checkpoint: duplicate entry in " + path);
    }
}

const Matrix& Reader::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::runtime_error("checkpoint: missing entry " + name);
    return it->second;
}

const Matrix& Reader::get(const std::string& name, int rows, int cols) const {
    const Matrix& m = get(name);
    if (m.rows != rows || m.cols != cols)
        throw std::runtime_error("checkpoint: shape mismatch for " + name);
    return m;
}

double Reader::scalar(const std::string& name) const { return get(name, 1, 1)(0, 0); }

std::vector<std::string> Reader::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
}

}  // namespace mgreid::ckpt
