#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rlmlab {

// FNV-1a over raw bytes; used for content hashes in manifests.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

// Shortest round-trip decimal rendering of a double ("." decimal point).
std::string fmt_double(double v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
std::uint64_t hash_file(const std::string& path);

std::vector<std::string> split(const std::string& s, char sep);

std::string hex64(std::uint64_t v);

}  // namespace rlmlab
