#include "srl360/csv.hpp"
#include "srl360/errors.hpp"
#include "srl360/format.hpp"
#include "srl360/predictors.hpp"

#include <json.hpp>

#include <fstream>

namespace srl360::predict {

geo::Trajectory load_trajectory_csv(const std::filesystem::path &path) {
    const auto table = read_csv(path);
    const auto ts = table.column("timestamp_s");
    const auto lon = table.column("longitude_deg");
    const auto lat = table.column("latitude_deg");
    geo::Trajectory t;
    t.user_id = path.stem().string();
    for (const auto &row : table.rows) {
        t.timestamps.push_back(parse_double(row.at(ts), path));
        t.samples.push_back(geo::canonical({parse_double(row.at(lon), path), parse_double(row.at(lat), path)}));
    }
    t.validate();
    if (t.size() > 1) t.sample_rate = static_cast<double>(t.size() - 1) / (t.timestamps.back() - t.timestamps.front());
    return t;
}

void save_trajectory_csv(const std::filesystem::path &path, const geo::Trajectory &trajectory) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "# srl360-trajectory v" << kTrajectoryFormatVersion << '\n' << "timestamp_s,longitude_deg,latitude_deg\n";
    for (std::size_t k = 0; k < trajectory.size(); ++k)
        out << fmt_exact(trajectory.timestamps[k]) << ',' << fmt_exact(trajectory.samples[k].longitude) << ','
            << fmt_exact(trajectory.samples[k].latitude) << '\n';
}

std::vector<geo::Trajectory> load_trajectory_set(const std::filesystem::path &index) {
    std::ifstream in(index);
    if (!in) throw IoError("cannot read " + index.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw IoError("trajectory index " + index.string() + ": " + e.what());
    }
    if (j.value("format_version", 0) != kTrajectoryFormatVersion)
        throw ConfigError("trajectory index " + index.string() + ": unsupported format_version");

    std::vector<geo::Trajectory> set;
    try {
        for (const auto &e : j.at("trajectories")) {
            std::filesystem::path file = e.at("file").get<std::string>();
            if (file.is_relative()) file = index.parent_path() / file;
            auto t = load_trajectory_csv(file);
            t.video_id = e.at("video_id").get<std::string>();
            t.user_id = e.at("user_id").get<std::string>();
            t.sample_rate = e.value("frame_rate", t.sample_rate);
            set.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception &e) {
        throw IoError("trajectory index " + index.string() + ": " + e.what());
    }
    return set;
}

void save_trajectory_set(const std::filesystem::path &directory, const std::vector<geo::Trajectory> &set) {
    std::filesystem::create_directories(directory);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto &t : set) {
        const auto file = t.video_id + "_" + t.user_id + ".csv";
        save_trajectory_csv(directory / file, t);
        entries.push_back({{"video_id", t.video_id}, {"user_id", t.user_id}, {"frame_rate", t.sample_rate}, {"file", file}});
    }
    const nlohmann::json index{{"format_version", kTrajectoryFormatVersion}, {"trajectories", entries}};
    std::ofstream out(directory / "trajectories.json");
    if (!out) throw IoError("cannot write " + (directory / "trajectories.json").string());
    out << index.dump(2) << '\n';
}

} // namespace srl360::predict
