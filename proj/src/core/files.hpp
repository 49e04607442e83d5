#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace viewgen {

std::string read_text_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Creates `dir` if needed. An existing non-empty directory is an
// ErrorCode::kOutputExists error unless `force` is set.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

}  // namespace viewgen
