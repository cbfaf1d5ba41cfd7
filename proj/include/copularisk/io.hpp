#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace copularisk {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Whole-file read; IoError names the path when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace copularisk
