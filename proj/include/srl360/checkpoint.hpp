#pragma once

#include "srl360/nn.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace srl360::nn {

/// Checkpoint container layout (all integers little-endian):
///
///   bytes 0..7    magic "SRL360CK"
///   bytes 8..15   uint64 header length H
///   next H bytes  UTF-8 JSON header:
///                 {"format_version": 1,
///                  "arrays": [{"name": str, "shape": [rows, cols], "offset": n, "count": n}, ...]}
///   remainder     float64 little-endian payload; array k occupies
///                 payload[offset_k, offset_k + count_k) in units of doubles.
inline constexpr int kCheckpointFormatVersion = 1;

struct NamedArray {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec values;
};

void save_checkpoint(const std::filesystem::path &path, const std::vector<NamedArray> &arrays);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path &path);

std::vector<NamedArray> to_named_arrays(const ParamList<const double> &list, const std::string &prefix = "");

/// Copies matching arrays (by prefix + name) into `list`. Throws ShapeError on a missing name or shape mismatch.
void restore_from(ParamList<double> &list, const std::vector<NamedArray> &arrays, const std::string &prefix = "");

} // namespace srl360::nn
