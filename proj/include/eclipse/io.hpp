#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace eclipse {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Writes to a sibling temp file and renames it over the target, so readers
// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace eclipse
