#include "fibresense/config.hpp"

#include "fibresense/units.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fibresense::config {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace

bool Section::has(std::string_view key) const { return find(key) != nullptr; }

const std::string* Section::find(std::string_view key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return &v;
    return nullptr;
}

void Section::missing(std::string_view key) const {
    throw ConfigError("missing key '" + std::string(key) + "' in section [" + name + "]");
}

std::string Section::get_string(std::string_view key) const {
    const std::string* v = find(key);
    if (!v) missing(key);
    return *v;
}

std::string Section::get_string(std::string_view key, std::string_view fallback) const {
    const std::string* v = find(key);
    return v ? *v : std::string(fallback);
}

double Section::get_value(std::string_view key) const {
    const std::string* v = find(key);
    if (!v) missing(key);
    try {
        return units::parse_value(*v);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("section [" + name + "], key '" + std::string(key) + "': " + e.what());
    }
}

double Section::get_value(std::string_view key, double fallback) const {
    return has(key) ? get_value(key) : fallback;
}

std::vector<double> Section::get_list(std::string_view key) const {
    const std::string* v = find(key);
    if (!v) missing(key);
    try {
        return units::parse_list(*v);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("section [" + name + "], key '" + std::string(key) + "': " + e.what());
    }
}

std::vector<double> Section::get_list(std::string_view key, std::vector<double> fallback) const {
    return has(key) ? get_list(key) : std::move(fallback);
}

long long Section::get_int(std::string_view key) const {
    double v = get_value(key);
    auto r = static_cast<long long>(std::llround(v));
    if (static_cast<double>(r) != v)
        throw ConfigError("section [" + name + "], key '" + std::string(key) +
                          "': expected an integer");
    return r;
}

long long Section::get_int(std::string_view key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t Section::get_seed(std::string_view key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    long long v = get_int(key);
    if (v < 0)
        throw ConfigError("section [" + name + "], key '" + std::string(key) +
                          "': seed must be non-negative");
    return static_cast<std::uint64_t>(v);
}

bool Section::get_bool(std::string_view key, bool fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    std::string s = lower(trim(*v));
    if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "off" || s == "no" || s == "0") return false;
    throw ConfigError("section [" + name + "], key '" + std::string(key) +
                      "': expected a boolean, got '" + *v + "'");
}

std::vector<std::string> Section::get_string_list(std::string_view key) const {
    const std::string* v = find(key);
    if (!v) missing(key);
    std::vector<std::string> out;
    std::string_view s(*v);
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        std::string_view item = (comma == std::string_view::npos)
                                    ? s.substr(start)
                                    : s.substr(start, comma - start);
        out.emplace_back(trim(item));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

ConfigFile ConfigFile::parse(std::string_view text, std::string origin) {
    ConfigFile file;
    file.source = origin;
    Section* current = nullptr;

    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line = (eol == std::string_view::npos) ? text.substr(pos)
                                                                : text.substr(pos, eol - pos);
        ++line_no;
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;

        std::size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": unterminated section header");
            Section sec;
            sec.name = std::string(trim(line.substr(1, line.size() - 2)));
            sec.line = line_no;
            file.sections.push_back(std::move(sec));
            current = &file.sections.back();
            continue;
        }

        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value' or '[section]'");
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");

        if (!current) {
            file.sections.push_back(Section{});
            current = &file.sections.back();
        }
        if (current->has(key))
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" +
                              key + "' in section [" + current->name + "]");
        current->entries.emplace_back(std::move(key), std::move(value));
    }
    return file;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    ConfigFile file = parse(ss.str(), path.string());
    file.source = path;
    return file;
}

const Section* ConfigFile::find(std::string_view name) const {
    for (const auto& s : sections)
        if (s.name == name) return &s;
    return nullptr;
}

const Section& ConfigFile::require(std::string_view name) const {
    const Section* s = find(name);
    if (!s)
        throw ConfigError(source.string() + ": missing required section [" + std::string(name) +
                          "]");
    return *s;
}

std::vector<const Section*> ConfigFile::all(std::string_view name) const {
    std::vector<const Section*> out;
    for (const auto& s : sections)
        if (s.name == name) out.push_back(&s);
    return out;
}

std::string ConfigFile::dump() const {
    std::ostringstream out;
    for (const auto& sec : sections) {
        if (!sec.name.empty()) out << '[' << sec.name << "]\n";
        for (const auto& [k, v] : sec.entries) out << k << " = " << v << '\n';
        out << '\n';
    }
    return out.str();
}

} // namespace fibresense::config
