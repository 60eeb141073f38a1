#include "srl360/checkpoint.hpp"

#include "srl360/errors.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace srl360::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'S', 'R', 'L', '3', '6', '0', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream &out, std::uint64_t v) { out.write(reinterpret_cast<const char *>(&v), sizeof v); }

std::uint64_t read_u64(std::istream &in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char *>(&v), sizeof v);
    return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path &path, const std::vector<NamedArray> &arrays) {
    nlohmann::json header;
    header["format_version"] = kCheckpointFormatVersion;
    header["arrays"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto &a : arrays) {
        if (a.values.size() != a.rows * a.cols) throw ShapeError("save_checkpoint: '" + a.name + "' size != rows*cols");
        header["arrays"].push_back({{"name", a.name}, {"shape", {a.rows, a.cols}}, {"offset", offset},
                                    {"count", a.values.size()}});
        offset += a.values.size();
    }
    const auto text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
    out.write(kMagic.data(), kMagic.size());
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto &a : arrays)
        out.write(reinterpret_cast<const char *>(a.values.data()), static_cast<std::streamsize>(a.values.size() * 8));
    if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw IoError("load_checkpoint: bad magic in " + path.string());
    const auto header_len = read_u64(in);
    std::string text(header_len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw IoError("load_checkpoint: truncated header in " + path.string());

    const auto header = nlohmann::json::parse(text);
    if (header.at("format_version").get<int>() != kCheckpointFormatVersion)
        throw IoError("load_checkpoint: unsupported format version");

    const auto payload_start = in.tellg();
    std::vector<NamedArray> arrays;
    for (const auto &entry : header.at("arrays")) {
        NamedArray a;
        a.name = entry.at("name").get<std::string>();
        a.rows = entry.at("shape").at(0).get<std::size_t>();
        a.cols = entry.at("shape").at(1).get<std::size_t>();
        const auto offset = entry.at("offset").get<std::uint64_t>();
        const auto count = entry.at("count").get<std::uint64_t>();
        if (count != a.rows * a.cols) throw IoError("load_checkpoint: count != rows*cols for " + a.name);
        a.values.resize(count);
        in.seekg(payload_start + static_cast<std::streamoff>(offset * 8));
        in.read(reinterpret_cast<char *>(a.values.data()), static_cast<std::streamsize>(count * 8));
        if (!in) throw IoError("load_checkpoint: truncated payload for " + a.name);
        arrays.push_back(std::move(a));
    }
    return arrays;
}

std::vector<NamedArray> to_named_arrays(const ParamList<const double> &list, const std::string &prefix) {
    std::vector<NamedArray> out;
    out.reserve(list.items.size());
    for (const auto &item : list.items)
        out.push_back({prefix + item.name, item.rows, item.cols, Vec(item.values.begin(), item.values.end())});
    return out;
}

void restore_from(ParamList<double> &list, const std::vector<NamedArray> &arrays, const std::string &prefix) {
    std::map<std::string, const NamedArray *> by_name;
    for (const auto &a : arrays) by_name[a.name] = &a;
    for (auto &item : list.items) {
        const auto it = by_name.find(prefix + item.name);
        if (it == by_name.end()) throw ShapeError("restore_from: missing array " + prefix + item.name);
        const auto &a = *it->second;
        if (a.rows != item.rows || a.cols != item.cols) throw ShapeError("restore_from: shape mismatch for " + a.name);
        std::copy(a.values.begin(), a.values.end(), item.values.begin());
    }
}

} // namespace srl360::nn
