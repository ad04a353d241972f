#pragma once

#include <map>
#include <string>
#include <vector>

#include "mgreid/matrix.hpp"

// Versioned binary archive of named matrices. Scalars are stored as 1x1
// matrices. Writes are atomic (temp file + rename).
namespace mgreid::ckpt {

inline constexpr char kMagic[9] = "MGREID01";

class Writer {
  public:
    void put(const std::string& name, const Matrix& m);
    void put_scalar(const std::string& name, double v);
    void save(const std::string& path) const;

  private:
    std::vector<std::pair<std::string, Matrix>> entries_;
};

class Reader {
  public:
    explicit Reader(const std::string& path);

    bool has(const std::string& name) const { return entries_.count(name) > 0; }
    // Checks the stored shape against the expectation.
    const Matrix& get(const std::string& name, int rows, int cols) const;
    const Matrix& get(const std::string& name) const;
    double scalar(const std::string& name) const;
    std::vector<std::string> names() const;

  private:
    std::map<std::string, Matrix> entries_;
};

}  // namespace mgreid::ckpt
