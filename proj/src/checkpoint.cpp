#include "rach/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rach::nn {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t k = 0; k < sizeof(T); ++k)
        out.push_back(static_cast<char>((value >> (8 * k)) & 0xFF));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size())
        throw std::runtime_error("checkpoint truncated");
    T value = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k)
        value |= static_cast<T>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
    pos += sizeof(T);
    return value;
}

void append_matrix(std::vector<double>& out, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            out.push_back(m(i, j));
}

void read_into(const LayerRecord& r, Matrix& weights, Vector& bias) {
    const auto rows = static_cast<Eigen::Index>(r.rows);
    const auto cols = static_cast<Eigen::Index>(r.cols);
    if (r.values.size() != r.rows * r.cols + r.rows)
        throw std::runtime_error("checkpoint layer has wrong parameter count");
    weights.resize(rows, cols);
    bias.resize(rows);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            weights(i, j) = r.values[k++];
    for (Eigen::Index i = 0; i < rows; ++i)
        bias[i] = r.values[k++];
}

}  // namespace

LayerRecord to_record(const DenseLayer& layer) {
    LayerRecord r{LayerKind::dense, layer.activation, static_cast<std::uint64_t>(layer.outputs()),
                  static_cast<std::uint64_t>(layer.inputs()), {}};
    r.values.reserve(r.rows * r.cols + r.rows);
    append_matrix(r.values, layer.weights);
    r.values.insert(r.values.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
    return r;
}

LayerRecord to_record(const LstmCell& cell) {
    LayerRecord r{LayerKind::lstm, Activation::tanh, static_cast<std::uint64_t>(cell.weights.rows()),
                  static_cast<std::uint64_t>(cell.weights.cols()), {}};
    append_matrix(r.values, cell.weights);
    r.values.insert(r.values.end(), cell.bias.data(), cell.bias.data() + cell.bias.size());
    return r;
}

DenseLayer dense_from_record(const LayerRecord& record) {
    if (record.kind != LayerKind::dense)
        throw std::runtime_error("checkpoint: expected a dense layer");
    DenseLayer layer;
    layer.activation = record.activation;
    read_into(record, layer.weights, layer.bias);
    return layer;
}

LstmCell lstm_from_record(const LayerRecord& record) {
    if (record.kind != LayerKind::lstm)
        throw std::runtime_error("checkpoint: expected an LSTM layer");
    if (record.rows % 4 != 0 || record.cols <= record.rows / 4)
        throw std::runtime_error("checkpoint: malformed LSTM dimensions");
    LstmCell cell;
    read_into(record, cell.weights, cell.bias);
    return cell;
}

std::vector<LayerRecord> to_records(const Mlp& net) {
    std::vector<LayerRecord> out;
    for (const auto& layer : net.layers())
        out.push_back(to_record(layer));
    return out;
}

Mlp mlp_from_records(const std::vector<LayerRecord>& records, std::size_t first, std::size_t count) {
    if (first + count > records.size())
        throw std::runtime_error("checkpoint: not enough layers");
    std::vector<DenseLayer> layers;
    for (std::size_t k = first; k < first + count; ++k)
        layers.push_back(dense_from_record(records[k]));
    return Mlp(std::move(layers));
}

std::vector<LayerRecord> to_records(const LstmRegressor& net) {
    return {to_record(net.cell()), to_record(net.head())};
}

LstmRegressor lstm_regressor_from_records(const std::vector<LayerRecord>& records, std::size_t first) {
    if (first + 2 > records.size())
        throw std::runtime_error("checkpoint: not enough layers");
    return LstmRegressor(lstm_from_record(records[first]), dense_from_record(records[first + 1]));
}

std::string encode_checkpoint(const std::vector<LayerRecord>& layers) {
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    put_le<std::uint64_t>(out, layers.size());
    for (const auto& l : layers) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.kind));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.activation));
        put_le<std::uint64_t>(out, l.rows);
        put_le<std::uint64_t>(out, l.cols);
    }
    for (const auto& l : layers) {
        if (l.values.size() != l.rows * l.cols + l.rows)
            throw std::invalid_argument("encode_checkpoint: layer parameter count does not match dims");
        for (double v : l.values)
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

std::vector<LayerRecord> decode_checkpoint(const std::string& bytes) {
    const std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
    if (bytes.size() < magic_len || bytes.compare(0, magic_len, kCheckpointMagic) != 0)
        throw std::runtime_error("not a RACHNN1 checkpoint");
    std::size_t pos = magic_len;
    const auto count = get_le<std::uint64_t>(bytes, pos);
    if (count > (bytes.size() - pos) / 24)
        throw std::runtime_error("checkpoint header claims too many layers");
    std::vector<LayerRecord> layers(count);
    for (auto& l : layers) {
        const auto kind = get_le<std::uint32_t>(bytes, pos);
        const auto act = get_le<std::uint32_t>(bytes, pos);
        if (kind > 1 || act > 2)
            throw std::runtime_error("checkpoint: unknown layer kind or activation");
        l.kind = static_cast<LayerKind>(kind);
        l.activation = static_cast<Activation>(act);
        l.rows = get_le<std::uint64_t>(bytes, pos);
        l.cols = get_le<std::uint64_t>(bytes, pos);
    }
    for (auto& l : layers) {
        const std::uint64_t n = l.rows * l.cols + l.rows;
        if (n > (bytes.size() - pos) / 8)
            throw std::runtime_error("checkpoint truncated");
        l.values.resize(n);
        for (auto& v : l.values)
            v = std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
    }
    if (pos != bytes.size())
        throw std::runtime_error("checkpoint has trailing bytes");
    return layers;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<LayerRecord>& layers) {
    const std::string bytes = encode_checkpoint(layers);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("failed writing " + path.string());
}

std::vector<LayerRecord> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_checkpoint(buf.str());
}

}  // namespace rach::nn
