#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace varentropy {

/// 17 significant digits, so every double round-trips through text.
std::string format_real(double v);

/// Comma-joined row of format_real values.
std::string csv_row(const std::vector<double>& values);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace varentropy
