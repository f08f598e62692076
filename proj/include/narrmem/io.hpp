#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace narrmem::io {

// Throws DataError when the file cannot be read.
std::string read_text_file(const std::filesystem::path& path);

// Creates parent directories; replaces the file through a temporary + rename.
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Non-empty lines (trailing '\r' removed).
std::vector<std::string> split_lines(std::string_view content);

// Minimal RFC 4180 CSV helpers.
std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

// Shortest round-trip decimal form; "nan" / "inf" spelled out.
std::string format_double(double v);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// UTC, millisecond precision: 2024-05-01T12:00:00.000Z
std::string iso8601(std::chrono::system_clock::time_point t);
// Inverse of iso8601 (the exact format above). DataError otherwise.
std::chrono::system_clock::time_point parse_iso8601(const std::string& s);

// Appends `line` plus a newline, flushing before returning; creates parents.
void append_line(const std::filesystem::path& path, std::string_view line);

}  // namespace narrmem::io
