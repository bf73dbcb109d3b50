#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fibresense::config {

/// Raised for malformed files, missing keys, and failed value validation.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One `[name]` block of ordered `key = value` entries.
struct Section {
    std::string name;
    int line = 0;
    std::vector<std::pair<std::string, std::string>> entries;

    [[nodiscard]] bool has(std::string_view key) const;
    [[nodiscard]] const std::string* find(std::string_view key) const;

    [[nodiscard]] std::string get_string(std::string_view key) const;
    [[nodiscard]] std::string get_string(std::string_view key, std::string_view fallback) const;

    // Numeric getters accept engineering suffixes (units::parse_value).
    [[nodiscard]] double get_value(std::string_view key) const;
    [[nodiscard]] double get_value(std::string_view key, double fallback) const;
    [[nodiscard]] std::vector<double> get_list(std::string_view key) const;
    [[nodiscard]] std::vector<double> get_list(std::string_view key,
                                               std::vector<double> fallback) const;
    [[nodiscard]] long long get_int(std::string_view key) const;
    [[nodiscard]] long long get_int(std::string_view key, long long fallback) const;
    [[nodiscard]] std::uint64_t get_seed(std::string_view key, std::uint64_t fallback) const;
    [[nodiscard]] bool get_bool(std::string_view key, bool fallback) const;
    [[nodiscard]] std::vector<std::string> get_string_list(std::string_view key) const;

private:
    [[noreturn]] void missing(std::string_view key) const;
};

struct ConfigFile {
    std::filesystem::path source;
    std::vector<Section> sections;  // a leading unnamed section holds pre-header keys

    static ConfigFile parse(std::string_view text, std::string origin = "<string>");
    static ConfigFile load(const std::filesystem::path& path);

    [[nodiscard]] const Section* find(std::string_view name) const;
    [[nodiscard]] const Section& require(std::string_view name) const;
    [[nodiscard]] std::vector<const Section*> all(std::string_view name) const;

    /// Canonical re-serialization, used when echoing configs into run manifests.
    [[nodiscard]] std::string dump() const;
};

} // namespace fibresense::config
