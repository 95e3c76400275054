#pragma once

#include <string>

namespace hydra {

// Throws Io.
std::string read_file(const std::string& path);
// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace hydra
