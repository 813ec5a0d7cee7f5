#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rach/neural.hpp"

namespace rach::nn {

// RACHNN1 checkpoint layout (all integers and floats little-endian):
//
//   "RACHNN1"                     7 bytes
//   layer count                   u64
//   per layer: kind u32, activation u32, rows u64, cols u64
//   per layer, in order: rows*cols weights (row-major), then rows biases,
//   as IEEE-754 binary64
//
// Dense layers use rows = outputs, cols = inputs. LSTM cells use
// rows = 4H, cols = D + H with gate blocks ordered i, f, o, g.
enum class LayerKind : std::uint32_t { dense = 0, lstm = 1 };

struct LayerRecord {
    LayerKind kind = LayerKind::dense;
    Activation activation = Activation::identity;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::vector<double> values; // weights row-major, then biases

    bool operator==(const LayerRecord&) const = default;
};

inline constexpr char kCheckpointMagic[] = "RACHNN1";

LayerRecord to_record(const DenseLayer& layer);
LayerRecord to_record(const LstmCell& cell);
DenseLayer dense_from_record(const LayerRecord& record);
LstmCell lstm_from_record(const LayerRecord& record);

std::vector<LayerRecord> to_records(const Mlp& net);
Mlp mlp_from_records(const std::vector<LayerRecord>& records, std::size_t first, std::size_t count);

std::vector<LayerRecord> to_records(const LstmRegressor& net);
LstmRegressor lstm_regressor_from_records(const std::vector<LayerRecord>& records, std::size_t first);

std::string encode_checkpoint(const std::vector<LayerRecord>& layers);
std::vector<LayerRecord> decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<LayerRecord>& layers);
std::vector<LayerRecord> read_checkpoint(const std::filesystem::path& path);

}  // namespace rach::nn
