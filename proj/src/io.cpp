#include "dap/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dap/nn.hpp"

namespace dap::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kTensorMagic[4] = {'D', 'A', 'P', 'T'};
constexpr char kBundleMagic[4] = {'D', 'A', 'P', 'C'};
constexpr std::uint16_t kFormatVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& what) {
    T value;
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError("unexpected end of file while reading " + what);
    return value;
}

json require_key(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key))
        throw IoError("manifest parse error: missing field '" + key + "' in " + where);
    return j.at(key);
}

json layer_spec_to_json(const nn::LayerSpec& s) {
    using Kind = nn::LayerSpec::Kind;
    json j;
    switch (s.kind) {
        case Kind::Dense:
            j["kind"] = "dense";
            j["units"] = s.units;
            break;
        case Kind::Conv1d:
            j["kind"] = "conv1d";
            j["filters"] = s.filters;
            j["kernel_size"] = s.kernel_size;
            j["stride"] = s.stride;
            break;
        case Kind::MaxPool1d:
            j["kind"] = "maxpool1d";
            j["pool_size"] = s.pool_size;
            break;
        case Kind::Upsample1d:
            j["kind"] = "upsample1d";
            j["factor"] = s.factor;
            break;
        case Kind::Flatten:
            j["kind"] = "flatten";
            break;
        case Kind::Reshape:
            j["kind"] = "reshape";
            j["target_shape"] = s.target_shape;
            break;
        case Kind::Activation:
            j["kind"] = "activation";
            j["activation"] = s.act == nn::Act::Swish ? "swish" : "linear";
            break;
    }
    return j;
}

nn::LayerSpec layer_spec_from_json(const json& j) {
    const std::string kind = require_key(j, "kind", "layer spec");
    if (kind == "dense") return nn::LayerSpec::dense(require_key(j, "units", kind));
    if (kind == "conv1d")
        return nn::LayerSpec::conv1d(require_key(j, "filters", kind),
                                     require_key(j, "kernel_size", kind),
                                     require_key(j, "stride", kind));
    if (kind == "maxpool1d") return nn::LayerSpec::maxpool1d(require_key(j, "pool_size", kind));
    if (kind == "upsample1d") return nn::LayerSpec::upsample1d(require_key(j, "factor", kind));
    if (kind == "flatten") return nn::LayerSpec::flatten();
    if (kind == "reshape")
        return nn::LayerSpec::reshape(
            require_key(j, "target_shape", kind).get<std::vector<int>>());
    if (kind == "activation") {
        const std::string act = require_key(j, "activation", kind);
        if (act == "swish") return nn::LayerSpec::activation(nn::Act::Swish);
        if (act == "linear") return nn::LayerSpec::activation(nn::Act::Linear);
        throw IoError("unknown activation '" + act + "'");
    }
    throw IoError("unknown layer kind '" + kind + "'");
}

json network_to_json(const nn::Network& net) {
    json j;
    j["input_shape"] = net.input_shape();
    json layers = json::array();
    for (const nn::LayerSpec& s : net.specs()) layers.push_back(layer_spec_to_json(s));
    j["layers"] = layers;
    return j;
}

nn::Network network_from_json(const json& j) {
    std::vector<nn::LayerSpec> specs;
    for (const json& l : require_key(j, "layers", "network")) specs.push_back(layer_spec_from_json(l));
    return nn::Network(specs, require_key(j, "input_shape", "network").get<std::vector<int>>(),
                       /*seed=*/0);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_tensor(const std::string& path, const TensorData& tensor) {
    std::uint64_t count = 1;
    for (std::uint64_t d : tensor.dims) count *= d;
    if (count != tensor.data.size())
        throw IoError("write_tensor: payload length does not match dims");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kTensorMagic, 4);
    write_pod(out, kFormatVersion);
    write_pod(out, kDtypeF64);
    write_pod(out, static_cast<std::uint8_t>(tensor.dims.size()));
    for (std::uint64_t d : tensor.dims) write_pod(out, d);
    out.write(reinterpret_cast<const char*>(tensor.data.data()),
              static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
    if (!out) throw IoError("short write to '" + path + "'");
}

TensorData read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kTensorMagic, 4) != 0)
        throw IoError("'" + path + "' is not a DAPT tensor file (bad magic)");
    const auto version = read_pod<std::uint16_t>(in, "version");
    if (version != kFormatVersion)
        throw IoError("unsupported tensor format version " + std::to_string(version));
    const auto dtype = read_pod<std::uint8_t>(in, "dtype");
    if (dtype != kDtypeF64) throw IoError("unsupported dtype code " + std::to_string(dtype));
    const auto rank = read_pod<std::uint8_t>(in, "rank");
    TensorData t;
    std::uint64_t count = 1;
    for (int i = 0; i < rank; ++i) {
        t.dims.push_back(read_pod<std::uint64_t>(in, "dims"));
        count *= t.dims.back();
    }
    t.data.resize(count);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("truncated tensor payload in '" + path + "'");
    return t;
}

void write_matrix(const std::string& path, const Mat& m) {
    TensorData t;
    t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    t.data.resize(static_cast<size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            t.data[static_cast<size_t>(i * m.cols() + j)] = m(i, j);
    write_tensor(path, t);
}

Mat read_matrix(const std::string& path) {
    TensorData t = read_tensor(path);
    if (t.dims.size() != 2) throw IoError("'" + path + "' does not hold a rank-2 tensor");
    Mat m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = t.data[static_cast<size_t>(i * m.cols() + j)];
    return m;
}

void save_snapshots(const std::string& dir, const fom::SnapshotSet& set) {
    set.validate();
    fs::create_directories(dir);
    json manifest;
    manifest["field_layout"] = set.field_layout;
    manifest["dt"] = set.dt();
    manifest["t_start"] = set.times.front();
    manifest["times_count"] = set.times.size();
    manifest["parameters"] = set.parameters;
    json files = json::array();
    for (size_t i = 0; i < set.states.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "param_%03zu.dapt", i);
        files.push_back(name);
        write_matrix((fs::path(dir) / name).string(), set.states[i]);
    }
    manifest["files"] = files;
    write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

fom::SnapshotSet load_snapshots(const std::string& dir) {
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    json manifest;
    try {
        manifest = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw IoError("manifest parse error in '" + manifest_path + "': " + e.what());
    }
    fom::SnapshotSet set;
    set.field_layout = require_key(manifest, "field_layout", "manifest").get<std::string>();
    const double dt = require_key(manifest, "dt", "manifest");
    const double t_start = require_key(manifest, "t_start", "manifest");
    const size_t count = require_key(manifest, "times_count", "manifest");
    set.times.resize(count);
    for (size_t j = 0; j < count; ++j) set.times[j] = t_start + static_cast<double>(j) * dt;
    set.parameters =
        require_key(manifest, "parameters", "manifest").get<std::vector<std::vector<double>>>();
    for (const json& f : require_key(manifest, "files", "manifest"))
        set.states.push_back(read_matrix((fs::path(dir) / f.get<std::string>()).string()));
    set.validate();
    return set;
}

void save_bundle(const std::string& path, const pipeline::ModelBundle& bundle) {
    json meta;
    meta["version"] = kFormatVersion;
    meta["latent_dim"] = bundle.latent_dim;
    meta["dt"] = bundle.dt;
    meta["t_train_end"] = bundle.t_train_end;
    meta["t_end"] = bundle.t_end;
    meta["train_params"] = bundle.train_params;
    meta["field_layout"] = bundle.field_layout;
    json norm;
    norm["mu_min"] = bundle.norm.mu_min;
    norm["mu_max"] = bundle.norm.mu_max;
    norm["t_min"] = bundle.norm.t_min;
    norm["t_max"] = bundle.norm.t_max;
    norm["zscore_state"] = bundle.norm.zscore_state;
    norm["state_shift"] = std::vector<double>(bundle.norm.state_shift.begin(),
                                              bundle.norm.state_shift.end());
    norm["state_scale"] = std::vector<double>(bundle.norm.state_scale.begin(),
                                              bundle.norm.state_scale.end());
    meta["norm"] = norm;
    meta["encoder"] = network_to_json(bundle.encoder);
    meta["decoder"] = network_to_json(bundle.decoder);
    meta["ffnn"] = network_to_json(bundle.ffnn);

    std::vector<nn::Tensor> blobs;
    json table = json::array();
    const std::pair<const char*, const nn::Network*> nets[] = {
        {"encoder", &bundle.encoder}, {"decoder", &bundle.decoder}, {"ffnn", &bundle.ffnn}};
    for (const auto& [name, net] : nets) {
        for (const nn::Tensor& t : net->parameter_tensors()) {
            json entry;
            entry["net"] = name;
            entry["shape"] = t.shape;
            table.push_back(entry);
            blobs.push_back(t);
        }
    }
    meta["tensors"] = table;

    const std::string meta_text = meta.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(kBundleMagic, 4);
    write_pod(out, kFormatVersion);
    write_pod(out, static_cast<std::uint64_t>(meta_text.size()));
    out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    for (const nn::Tensor& t : blobs)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) throw IoError("short write to '" + path + "'");
}

pipeline::ModelBundle load_bundle(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kBundleMagic, 4) != 0)
        throw IoError("'" + path + "' is not a DAPC checkpoint (bad magic)");
    const auto version = read_pod<std::uint16_t>(in, "version");
    if (version != kFormatVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto meta_len = read_pod<std::uint64_t>(in, "metadata length");
    std::string meta_text(meta_len, '\0');
    in.read(meta_text.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw IoError("truncated checkpoint metadata in '" + path + "'");

    json meta;
    try {
        meta = json::parse(meta_text);
    } catch (const json::exception& e) {
        throw IoError("checkpoint metadata parse error: " + std::string(e.what()));
    }

    pipeline::ModelBundle bundle;
    bundle.latent_dim = require_key(meta, "latent_dim", "checkpoint");
    bundle.dt = require_key(meta, "dt", "checkpoint");
    bundle.t_train_end = require_key(meta, "t_train_end", "checkpoint");
    bundle.t_end = require_key(meta, "t_end", "checkpoint");
    bundle.train_params = require_key(meta, "train_params", "checkpoint").get<std::vector<double>>();
    bundle.field_layout = require_key(meta, "field_layout", "checkpoint");
    const json norm = require_key(meta, "norm", "checkpoint");
    bundle.norm.mu_min = require_key(norm, "mu_min", "norm");
    bundle.norm.mu_max = require_key(norm, "mu_max", "norm");
    bundle.norm.t_min = require_key(norm, "t_min", "norm");
    bundle.norm.t_max = require_key(norm, "t_max", "norm");
    bundle.norm.zscore_state = require_key(norm, "zscore_state", "norm");
    const auto shift = require_key(norm, "state_shift", "norm").get<std::vector<double>>();
    const auto scale = require_key(norm, "state_scale", "norm").get<std::vector<double>>();
    bundle.norm.state_shift = Eigen::Map<const Vec>(shift.data(), static_cast<Eigen::Index>(shift.size()));
    bundle.norm.state_scale = Eigen::Map<const Vec>(scale.data(), static_cast<Eigen::Index>(scale.size()));

    bundle.encoder = network_from_json(require_key(meta, "encoder", "checkpoint"));
    bundle.decoder = network_from_json(require_key(meta, "decoder", "checkpoint"));
    bundle.ffnn = network_from_json(require_key(meta, "ffnn", "checkpoint"));

    std::vector<nn::Tensor> enc_t, dec_t, ffnn_t;
    for (const json& entry : require_key(meta, "tensors", "checkpoint")) {
        const std::string net = require_key(entry, "net", "tensor entry");
        nn::Tensor t = nn::Tensor::zeros(require_key(entry, "shape", "tensor entry").get<std::vector<int>>());
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw IoError("truncated checkpoint blob in '" + path + "'");
        if (net == "encoder")
            enc_t.push_back(std::move(t));
        else if (net == "decoder")
            dec_t.push_back(std::move(t));
        else if (net == "ffnn")
            ffnn_t.push_back(std::move(t));
        else
            throw IoError("tensor entry names unknown network '" + net + "'");
    }
    bundle.encoder.set_parameters(enc_t);
    bundle.decoder.set_parameters(dec_t);
    bundle.ffnn.set_parameters(ffnn_t);
    return bundle;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw IoError("csv row width does not match header");
        for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
        out << "\n";
    }
    if (!out) throw IoError("short write to '" + path + "'");
}

std::vector<pipeline::Query> load_queries_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(in, line)) throw IoError("query file '" + path + "' is empty (no header)");
    std::vector<pipeline::Query> queries;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string mu_s, t_s;
        if (!std::getline(ss, mu_s, ',') || !std::getline(ss, t_s, ','))
            throw IoError("query file parse error at line " + std::to_string(line_no));
        try {
            queries.push_back({std::stod(mu_s), std::stod(t_s)});
        } catch (const std::exception&) {
            throw IoError("query file parse error at line " + std::to_string(line_no));
        }
    }
    return queries;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace dap::io
