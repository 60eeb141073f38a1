#include "srl360/environment.hpp"

#include "srl360/csv.hpp"
#include "srl360/errors.hpp"
#include "srl360/format.hpp"

#include <json.hpp>

#include <fstream>

namespace srl360::env {

NetworkTrace load_trace_csv(const std::filesystem::path &path) {
    const auto table = read_csv(path);
    const auto ts = table.column("timestamp_s");
    const auto tp = table.column("throughput_mbps");
    NetworkTrace trace;
    trace.name = path.stem().string();
    for (const auto &row : table.rows) {
        trace.timestamps.push_back(parse_double(row.at(ts), path));
        trace.throughput_mbps.push_back(parse_double(row.at(tp), path));
    }
    trace.validate();
    return trace;
}

void save_trace_csv(const std::filesystem::path &path, const NetworkTrace &trace) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "# srl360-trace v" << kTraceFormatVersion << '\n' << "timestamp_s,throughput_mbps\n";
    for (std::size_t k = 0; k < trace.timestamps.size(); ++k)
        out << fmt_exact(trace.timestamps[k]) << ',' << fmt_exact(trace.throughput_mbps[k]) << '\n';
}

VideoManifest load_manifest_json(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw IoError("manifest " + path.string() + ": " + e.what());
    }
    if (j.value("format_version", 0) != kManifestFormatVersion)
        throw ConfigError("manifest " + path.string() + ": unsupported format_version");

    try {
        const geo::TileGrid grid{j.at("grid").at("rows").get<int>(), j.at("grid").at("cols").get<int>()};
        if (j.contains("generator")) {
            const auto &g = j.at("generator");
            ManifestSpec spec;
            spec.video_id = j.value("video_id", spec.video_id);
            spec.grid = grid;
            spec.nominal_bitrates_mbps = j.at("nominal_bitrates_mbps").get<std::vector<double>>();
            spec.segment_duration_s = j.value("segment_duration_s", spec.segment_duration_s);
            spec.segment_count = g.at("segment_count").get<std::size_t>();
            spec.jitter_sigma = g.value("jitter_sigma", spec.jitter_sigma);
            spec.seed = g.at("seed").get<std::uint64_t>();
            return synthesize_manifest(spec);
        }
        VideoManifest m;
        m.video_id = j.value("video_id", std::string("video"));
        m.grid = grid;
        m.segment_duration_s = j.at("segment_duration_s").get<double>();
        m.nominal_bitrates_mbps = j.at("nominal_bitrates_mbps").get<std::vector<double>>();
        m.tile_area_fraction = j.at("tile_area_fraction").get<std::vector<double>>();
        m.chunk_sizes_mbit = j.at("chunk_sizes_mbit").get<std::vector<std::vector<std::vector<double>>>>();
        m.validate();
        return m;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError("manifest " + path.string() + ": " + e.what());
    }
}

void save_manifest_json(const std::filesystem::path &path, const VideoManifest &manifest) {
    nlohmann::json j;
    j["format_version"] = kManifestFormatVersion;
    j["video_id"] = manifest.video_id;
    j["grid"] = {{"rows", manifest.grid.rows}, {"cols", manifest.grid.cols}};
    j["segment_duration_s"] = manifest.segment_duration_s;
    j["nominal_bitrates_mbps"] = manifest.nominal_bitrates_mbps;
    j["tile_area_fraction"] = manifest.tile_area_fraction;
    j["chunk_sizes_mbit"] = manifest.chunk_sizes_mbit;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

} // namespace srl360::env
