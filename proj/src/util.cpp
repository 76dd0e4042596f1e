#include "aml/util.hpp"

#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <thread>

#include "aml/errors.hpp"

namespace aml {

namespace le {

namespace {

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw DataError("unexpected end of binary stream");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void write_u8(std::ostream& os, std::uint8_t v) { write_le<std::uint8_t>(os, v); }
void write_u16(std::ostream& os, std::uint16_t v) { write_le<std::uint16_t>(os, v); }
void write_u32(std::ostream& os, std::uint32_t v) { write_le<std::uint32_t>(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { write_le<std::uint64_t>(os, v); }
void write_i64(std::ostream& os, std::int64_t v) { write_le<std::uint64_t>(os, static_cast<std::uint64_t>(v)); }

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    write_le<std::uint64_t>(os, bits);
}

void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint8_t read_u8(std::istream& is) { return read_le<std::uint8_t>(is); }
std::uint16_t read_u16(std::istream& is) { return read_le<std::uint16_t>(is); }
std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is); }
std::int64_t read_i64(std::istream& is) { return static_cast<std::int64_t>(read_le<std::uint64_t>(is)); }

double read_f64(std::istream& is) {
    std::uint64_t bits = read_le<std::uint64_t>(is);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

std::string read_string(std::istream& is) {
    std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw DataError("unexpected end of binary stream");
    return s;
}

}  // namespace le

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open file for hashing: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
    }
    return h;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_string(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

int thread_count() {
    if (const char* env = std::getenv("AMLDETECT_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t workers = static_cast<std::size_t>(thread_count());
    if (workers > n) workers = n;
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t b = w * chunk;
        std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        threads.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& t : threads) t.join();
}

}  // namespace aml
