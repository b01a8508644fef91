#pragma once

#include <string>

namespace sdelab::csv {

// Appends the shortest round-trip decimal form of v (via std::to_chars), so
// emitted files are byte-stable for byte-identical inputs.
void append_double(std::string& out, double v);

// Writes content to path in binary mode; throws std::runtime_error on failure.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace sdelab::csv
