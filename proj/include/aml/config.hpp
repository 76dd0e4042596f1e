#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace aml {

// Flat key-value configuration with dotted keys, one `key = value` per line,
// '#' comments. Keys are validated against a registry so typos fail loudly;
// keys under reserved free-form prefixes (column remaps) are exempt.
class Config {
public:
    Config() = default;

    static Config from_file(const std::filesystem::path& path);
    static Config from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& def) const;
    std::int64_t get_int(const std::string& key, std::int64_t def) const;
    double get_double(const std::string& key, double def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::vector<std::int64_t> get_int_list(const std::string& key,
                                           const std::vector<std::int64_t>& def) const;

    // Throws ConfigError naming every unknown key.
    void validate_known_keys() const;

    // Deterministic serialization (sorted keys) used for config.snapshot.
    std::string serialize() const;
    void save(const std::filesystem::path& path) const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace aml
