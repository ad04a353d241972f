#pragma once

#include <string>

namespace mgreid::util {

// Write-then-rename so readers never observe a half-written file.
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace mgreid::util
