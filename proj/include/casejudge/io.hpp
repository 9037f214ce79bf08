#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace casejudge::io {

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Splits into lines without the trailing newline; a final line without a
/// newline is still returned.
std::vector<std::string> split_lines(std::string_view content);

}  // namespace casejudge::io
