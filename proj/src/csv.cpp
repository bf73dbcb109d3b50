#include "fibresense/csv.hpp"

#include "fibresense/units.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace fibresense::io {

namespace {

std::filesystem::path temp_name(const std::filesystem::path& target) {
    std::filesystem::path t = target;
    t += ".tmp";
    return t;
}

} // namespace

CsvWriter::CsvWriter(std::filesystem::path path, const std::vector<std::string>& header)
    : target_(std::move(path)), temp_(temp_name(target_)), columns_(header.size()) {
    if (header.empty()) throw std::invalid_argument("CSV header must not be empty");
    if (target_.has_parent_path()) std::filesystem::create_directories(target_.parent_path());
    out_.open(temp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open for writing: " + temp_.string());
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out_ << ',';
        out_ << header[i];
    }
    out_ << '\n';
}

CsvWriter::~CsvWriter() {
    if (!committed_) {
        out_.close();
        std::error_code ec;
        std::filesystem::remove(temp_, ec);
    }
}

void CsvWriter::row(std::span<const double> values) {
    if (values.size() != columns_)
        throw std::invalid_argument("CSV row width mismatch in " + target_.string());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out_ << ',';
        out_ << units::format_double(values[i]);
    }
    out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_)
        throw std::invalid_argument("CSV row width mismatch in " + target_.string());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ << ',';
        out_ << cells[i];
    }
    out_ << '\n';
}

void CsvWriter::commit() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + temp_.string());
    out_.close();
    std::filesystem::rename(temp_, target_);
    committed_ = true;
}

CsvTable CsvTable::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open CSV: " + path.string());

    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (start <= line.size()) {
            std::size_t comma = line.find(',', start);
            cells.push_back(comma == std::string::npos ? line.substr(start)
                                                       : line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (first) {
            table.header = std::move(cells);
            first = false;
            continue;
        }
        std::vector<double> nums(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
            nums[i] = (ec == std::errc{} && p == cells[i].data() + cells[i].size())
                          ? v
                          : std::numeric_limits<double>::quiet_NaN();
        }
        table.rows.push_back(std::move(nums));
        table.raw.push_back(std::move(cells));
    }
    if (first) throw std::runtime_error("empty CSV: " + path.string());
    return table;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw std::runtime_error("CSV column not found: " + std::string(name));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path temp = temp_name(path);
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + temp.string());
        out << text;
        out.flush();
        if (!out) throw std::runtime_error("write failed: " + temp.string());
    }
    std::filesystem::rename(temp, path);
}

} // namespace fibresense::io
