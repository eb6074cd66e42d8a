#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "pins/core.hpp"
#include "pins/datagen.hpp"

namespace pins::io {

// Text format:
//   PINSOT 1
//   m n
//   a_1 .. a_m, b_1 .. b_n   (one per line)
//   m rows of n costs
// Binary format: "PINSMAT1", u64 m, u64 n, row-major f64 costs, a, b
// (all little-endian).
enum class InstanceFormat { Text, Binary };

void write_instance(std::ostream& out, const Instance& inst,
                    InstanceFormat format = InstanceFormat::Text);
Instance read_instance(std::istream& in);  // detects format from the magic

void save_instance(const std::filesystem::path& path, const Instance& inst,
                   InstanceFormat format = InstanceFormat::Text);
Instance load_instance(const std::filesystem::path& path);

// P2 (ASCII) and P5 (binary, 1 or 2 bytes per sample) graymaps.
GrayImage read_pgm(std::istream& in);
GrayImage load_pgm(const std::filesystem::path& path);
void write_pgm(std::ostream& out, const GrayImage& img, unsigned maxval = 255,
               bool binary = true);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

// Writes to a sibling temp file then renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace pins::io
