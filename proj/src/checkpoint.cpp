#include "canon/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "canon/vocab.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace canon {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'N', 'O', 'N', '1', '\0', '\0'};

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
    nlohmann::json manifest;
    manifest["version"] = "CANON1";
    manifest["kind"] = data.kind;
    manifest["config"] = data.config;
    manifest["meta"] = data.meta;
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : data.tensors) {
        tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size() * sizeof(double);
    }
    manifest["tensors"] = tensors;
    const std::string mtext = manifest.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u64(out, mtext.size());
    out.write(mtext.data(), std::streamsize(mtext.size()));
    for (const auto& [name, t] : data.tensors) {
        (void)name;
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  std::streamsize(t.size() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw FormatError("bad checkpoint magic: " + path);
    std::uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    if (!in) throw CorruptionError("checkpoint truncated in header: " + path);
    std::string mtext(mlen, '\0');
    in.read(mtext.data(), std::streamsize(mlen));
    if (!in) throw CorruptionError("checkpoint truncated in manifest: " + path);

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mtext);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest parse error: ") + e.what());
    }
    if (!manifest.contains("version") || manifest["version"] != "CANON1")
        throw FormatError("unsupported checkpoint version");

    CheckpointData data;
    data.kind = manifest.value("kind", "");
    data.config = manifest.value("config", nlohmann::json::object());
    data.meta = manifest.value("meta", nlohmann::json::object());

    std::uint64_t expect_offset = 0;
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::vector<long> shape = entry.at("shape").get<std::vector<long>>();
        const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
        if (offset != expect_offset) throw FormatError("non-contiguous tensor offsets");
        const std::size_t count = std::size_t(numel(shape));
        std::vector<double> buf(count);
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(count * sizeof(double)));
        if (!in) throw CorruptionError("checkpoint blob truncated at tensor " + name);
        data.tensors.emplace_back(name, Tensor::from(shape, std::move(buf), true));
        expect_offset += count * sizeof(double);
    }
    // trailing bytes mean the blob disagrees with the manifest
    char extra;
    in.read(&extra, 1);
    if (!in.eof()) throw CorruptionError("checkpoint has trailing bytes past the manifest");
    return data;
}

namespace {

// Assign loaded tensors to the model's named parameters, requiring an exact
// name/shape match in both directions.
void bind_tensors(const CheckpointData& data,
                  std::vector<std::pair<std::string, Tensor>> params) {
    if (data.tensors.size() != params.size())
        throw FormatError("manifest tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [want_name, dst] = params[i];
        const auto& [got_name, src] = data.tensors[i];
        if (want_name != got_name)
            throw FormatError("unexpected tensor name: " + got_name + " (wanted " +
                              want_name + ")");
        if (src.shape() != dst.shape()) throw FormatError("tensor shape mismatch: " + got_name);
        Tensor d = dst;
        std::copy(src.data().begin(), src.data().end(), d.mutable_data().begin());
    }
}

}  // namespace

void save_backpack(const std::string& path, const BackpackModel& model) {
    CheckpointData data;
    data.kind = "backpack";
    data.config = model.cfg.to_json();
    data.tensors = model.named_params();
    save_checkpoint(path, data);
}

BackpackModel load_backpack(const std::string& path) {
    CheckpointData data = load_checkpoint(path);
    if (data.kind != "backpack") throw FormatError("checkpoint is not a backpack model");
    ModelConfig cfg = ModelConfig::from_json(data.config);
    Rng rng(0);
    BackpackModel model = BackpackModel::init(cfg, rng);
    bind_tensors(data, model.named_params());
    return model;
}

void save_host(const std::string& path, const HostTransformerLM& model) {
    CheckpointData data;
    data.kind = "host";
    data.config = model.cfg.to_json();
    data.tensors = model.named_params();
    save_checkpoint(path, data);
}

HostTransformerLM load_host(const std::string& path) {
    CheckpointData data = load_checkpoint(path);
    if (data.kind != "host") throw FormatError("checkpoint is not a host model");
    ModelConfig cfg = ModelConfig::from_json(data.config);
    Rng rng(0);
    HostTransformerLM model = HostTransformerLM::init(cfg, rng);
    bind_tensors(data, model.named_params());
    return model;
}

void save_sense_delta(const std::string& path, const SenseDelta& delta,
                      const ModelConfig& cfg) {
    const Vocab& vocab = Vocab::get();
    CheckpointData data;
    data.kind = "sense_delta";
    data.config = cfg.to_json();
    const long d = cfg.model_dim;
    for (std::size_t i = 0; i < delta.slots.size(); ++i) {
        const auto [w, l] = delta.slots[i];
        std::vector<double> row(delta.rows.data().begin() + long(i) * d,
                                delta.rows.data().begin() + (long(i) + 1) * d);
        data.tensors.emplace_back(
            "sense_delta/" + vocab.word(w) + "/" + std::to_string(l),
            Tensor::from({d}, std::move(row)));
    }
    save_checkpoint(path, data);
}

SenseDelta load_sense_delta(const std::string& path, const ModelConfig& cfg) {
    const Vocab& vocab = Vocab::get();
    CheckpointData data = load_checkpoint(path);
    if (data.kind != "sense_delta") throw FormatError("checkpoint is not a sense delta");
    SenseDelta delta;
    std::vector<double> rows;
    for (const auto& [name, t] : data.tensors) {
        // sense_delta/{word}/{ell}
        const std::string prefix = "sense_delta/";
        if (name.rfind(prefix, 0) != 0) throw FormatError("unexpected delta tensor: " + name);
        const std::size_t slash = name.find('/', prefix.size());
        if (slash == std::string::npos) throw FormatError("malformed delta tensor name: " + name);
        const std::string word = name.substr(prefix.size(), slash - prefix.size());
        const long ell = std::stol(name.substr(slash + 1));
        if (ell < 0 || ell >= cfg.sense_count)
            throw IndexError("sense index out of range in delta: " + name);
        delta.slots.emplace_back(vocab.id(word), ell);
        if (t.rank() != 1 || t.dim(0) != cfg.model_dim)
            throw FormatError("delta row has wrong width: " + name);
        rows.insert(rows.end(), t.data().begin(), t.data().end());
    }
    if (delta.slots.empty()) throw FormatError("sense delta checkpoint holds no tensors");
    delta.rows = Tensor::from({long(delta.slots.size()), cfg.model_dim}, std::move(rows), true);
    return delta;
}

}  // namespace canon
