// Copyright (c) 2026 the racecar authors
// Licensed under the Apache License, Version 2.0.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "racecar/network.hpp"

namespace racecar {

/// FNV-1a 64-bit.
std::uint64_t fnv1a(const void* data, std::size_t len,
                    std::uint64_t seed = 0xcbf29ce484222325ull);

/// Versioned binary network checkpoint (layer specs, shapes, parameters and
/// BN statistics in declaration order). Round-trips bit-exactly.
void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);

/// 8-bit binary PGM (P5), min-max normalized.
void write_pgm(const std::string& path, const std::vector<double>& pixels, std::size_t height,
               std::size_t width);

/// Locale-independent shortest-round-trip double formatting.
std::string format_double(double v);

/// One CSV line; values joined with ',' and terminated with '\n'.
std::string csv_row(const std::vector<std::string>& fields);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace racecar
