#pragma once

// Small helpers for the text formats: fixed 17-digit float rendering and
// atomic file replacement.

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace koed::io {

/// Renders a double with 17 significant digits (round-trips bit-exactly).
std::string format_double(double value);

/// Renders a JSON array of doubles with format_double.
std::string format_array(std::span<const double> values);

std::string read_file(const std::string& path);

/// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::string& path, const std::string& contents);

/// Parses JSON text, rethrowing parse failures as koed::FormatError.
nlohmann::json parse_json(const std::string& text, const std::string& what);

/// Reads a required array of numbers, throwing FormatError when absent.
std::vector<double> number_array(const nlohmann::json& j, const char* key);

}  // namespace koed::io
