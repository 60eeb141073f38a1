#include "srl360/csv.hpp"

#include "srl360/errors.hpp"

#include <charconv>
#include <fstream>

namespace srl360 {

std::size_t CsvTable::column(const std::string &name) const {
    for (std::size_t k = 0; k < header.size(); ++k)
        if (header[k] == name) return k;
    throw IoError("csv: missing column '" + name + "'");
}

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    out.push_back(std::move(field));
    for (auto &f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
    }
    return out;
}

CsvTable read_csv(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    CsvTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != table.header.size())
            throw IoError("csv " + path.string() + ": row has " + std::to_string(fields.size()) + " fields, expected " +
                          std::to_string(table.header.size()));
        table.rows.push_back(std::move(fields));
    }
    if (!have_header) throw IoError("csv " + path.string() + ": missing header");
    return table;
}

double parse_double(const std::string &text, const std::filesystem::path &source) {
    double v = 0.0;
    const auto *end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end) throw IoError("csv " + source.string() + ": bad number '" + text + "'");
    return v;
}

} // namespace srl360
