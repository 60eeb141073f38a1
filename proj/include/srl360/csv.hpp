#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace srl360 {

/// Minimal comma-separated table: first non-comment line is the header, lines starting with '#'
/// are skipped, no quoting.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of `name` in the header. Throws IoError when absent.
    [[nodiscard]] std::size_t column(const std::string &name) const;
};

CsvTable read_csv(const std::filesystem::path &path);
std::vector<std::string> split_csv_line(const std::string &line);
double parse_double(const std::string &text, const std::filesystem::path &source);

} // namespace srl360
