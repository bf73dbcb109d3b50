#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace fibresense::io {

/// Writes a CSV file atomically: rows go to `<path>.tmp`, which is renamed onto
/// the target in commit(). Destruction without commit discards the temp file.
/// Doubles are written in shortest round-trip form so files are byte-stable and
/// re-read losslessly.
class CsvWriter {
public:
    CsvWriter(std::filesystem::path path, const std::vector<std::string>& header);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(std::span<const double> values);
    void row(const std::vector<std::string>& cells);
    void commit();

private:
    std::filesystem::path target_;
    std::filesystem::path temp_;
    std::ofstream out_;
    std::size_t columns_;
    bool committed_ = false;
};

/// Numeric CSV table. Non-numeric cells are kept in `raw` and parsed as NaN.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<std::string>> raw;

    static CsvTable load(const std::filesystem::path& path);
    [[nodiscard]] std::size_t column(std::string_view name) const;  // throws if absent
};

/// Writes `text` to `path` via the same temp-then-rename scheme.
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

} // namespace fibresense::io
