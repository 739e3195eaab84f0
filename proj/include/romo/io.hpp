#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace romo {

std::string read_text_file(const std::filesystem::path& path);

// Writes to "<path>.partial" and renames, so readers never observe a torn file.
void write_text_file(const std::filesystem::path& path, const std::string& content);

// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

// Strict full-token parse; nullopt on anything but a finite or inf/nan literal.
std::optional<double> parse_double(const std::string& token);

}  // namespace romo
