#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

namespace clipin {

std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t v);

// FNV-1a of a file's raw bytes, as a 16-char lowercase hex string.
std::string file_checksum(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

// Worker count: CLIPIN_THREADS if set (>=1), else hardware concurrency.
int thread_budget();

// Runs fn(i) for i in [0, n) over a block partition of the index range.
// The partition depends only on n and the thread budget, never on timing,
// so any per-index output slots are filled identically run to run.
void parallel_for(int n, const std::function<void(int)>& fn);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace clipin
