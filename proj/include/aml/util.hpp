#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace aml {

// Little-endian binary IO for the cache and checkpoint formats. The on-disk
// layout is fixed regardless of host byte order.
namespace le {

void write_u8(std::ostream& os, std::uint8_t v);
void write_u16(std::ostream& os, std::uint16_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_i64(std::ostream& os, std::int64_t v);
void write_f64(std::ostream& os, double v);
void write_string(std::ostream& os, const std::string& s);

std::uint8_t read_u8(std::istream& is);
std::uint16_t read_u16(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
std::int64_t read_i64(std::istream& is);
double read_f64(std::istream& is);
std::string read_string(std::istream& is);

}  // namespace le

// FNV-1a over raw bytes. Used for cache invalidation and parameter-group
// isolation checks, not for anything adversarial.
std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t fnv1a_file(const std::filesystem::path& path);

inline std::uint64_t fnv1a_doubles(std::span<const double> v, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(v.data(), v.size() * sizeof(double), h);
}

std::string trim(const std::string& s);
std::vector<std::string> split_string(const std::string& s, char sep);

// Bounded parallel loop over [0, n). fn(begin, end) runs on disjoint ranges;
// with one thread it degenerates to a plain call. Thread count comes from the
// AMLDETECT_THREADS env var, defaulting to the hardware count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);
int thread_count();

}  // namespace aml
