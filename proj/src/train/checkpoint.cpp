#include "dyneformer/train/checkpoint.hpp"

#include "dyneformer/data/csv_io.hpp"
#include "dyneformer/errors.hpp"
#include "dyneformer/hashing.hpp"

#include <fmt/format.h>

#include <cstdint>
#include <cstring>

namespace dyneformer::train {

namespace {

constexpr char kMagic[8] = {'D', 'Y', 'N', 'E', 'C', 'K', 'P', 'T'};

template <typename V>
void put(std::string& out, V v) {
    char buf[sizeof(V)];
    std::memcpy(buf, &v, sizeof(V));
    out.append(buf, sizeof(V));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename V>
    V get() {
        V v;
        std::memcpy(&v, take(sizeof(V)), sizeof(V));
        return v;
    }

    const char* take(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw DataError("checkpoint blob is truncated");
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace

nlohmann::json CheckpointMeta::to_json() const {
    return {{"version", kCheckpointVersion},
            {"config", config.to_json()},
            {"optim", optim.to_json()},
            {"pool_sha256", pool_sha256},
            {"normalizer_ref", normalizer_ref},
            {"seed", seed},
            {"history", history.to_json()},
            {"blob_sha256", blob_sha256}};
}

CheckpointMeta CheckpointMeta::from_json(const nlohmann::json& j) {
    CheckpointMeta m;
    try {
        if (j.at("version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
        m.config = model::ModelConfig::from_json(j.at("config"));
        m.optim = OptimConfig::from_json(j.at("optim"));
        m.pool_sha256 = j.at("pool_sha256").get<std::string>();
        m.normalizer_ref = j.at("normalizer_ref");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.history = TrainHistory::from_json(j.at("history"));
        m.blob_sha256 = j.at("blob_sha256").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint sidecar: ") + e.what());
    }
    return m;
}

nlohmann::json normalizer_reference(const PreparedData& data) {
    std::string canon;
    for (const auto& [id, n] : data.prep.normalizers) {
        canon += fmt::format("{},{},{}\n", id, data::format_real(n.mean), data::format_real(n.stddev));
    }
    return {{"train_fingerprint", data.train_fingerprint}, {"normalizers_sha256", sha256_hex(canon)},
            {"series", data.prep.normalizers.size()}};
}

std::filesystem::path sidecar_path(const std::filesystem::path& blob) {
    auto p = blob;
    p += ".json";
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const model::DyneformerModel<float>& model,
                     CheckpointMeta meta) {
    std::string blob(kMagic, sizeof(kMagic));
    put<std::uint32_t>(blob, kCheckpointVersion);
    const auto params = model.parameters();
    put<std::uint32_t>(blob, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        put<std::uint32_t>(blob, static_cast<std::uint32_t>(p.name.size()));
        blob += p.name;
        const auto& v = p.tensor.value();
        put<std::int64_t>(blob, v.rows());
        put<std::int64_t>(blob, v.cols());
        blob.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(float));
    }
    meta.config = model.config();
    meta.blob_sha256 = sha256_hex(blob);
    write_file(path, blob);
    write_file(sidecar_path(path), meta.to_json().dump(1) + "\n");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<std::string>& pool_sha256) {
    nlohmann::json sidecar;
    try {
        sidecar = nlohmann::json::parse(read_file(sidecar_path(path)));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("{}: {}", sidecar_path(path).string(), e.what()));
    }
    auto meta = CheckpointMeta::from_json(sidecar);
    if (meta.config.use_gp) {
        if (!pool_sha256) throw ProvenanceError("checkpoint uses a global pool; pool file required");
        if (*pool_sha256 != meta.pool_sha256) {
            throw ProvenanceError(fmt::format("pool file hash {} does not match the checkpoint's {}", *pool_sha256,
                                              meta.pool_sha256));
        }
    }
    const std::string blob = read_file(path);
    if (sha256_hex(blob) != meta.blob_sha256) throw DataError("checkpoint blob does not match its sidecar hash");

    Reader in(blob);
    if (std::memcmp(in.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) throw DataError("not a checkpoint blob");
    if (in.get<std::uint32_t>() != kCheckpointVersion) throw DataError("unsupported checkpoint blob version");

    LoadedCheckpoint out{model::DyneformerModel<float>(meta.config, 0), meta};
    auto params = out.model.parameters();
    if (in.get<std::uint32_t>() != params.size()) throw DataError("checkpoint parameter count mismatch");
    for (auto& p : params) {
        const auto len = in.get<std::uint32_t>();
        const std::string name(in.take(len), len);
        const auto rows = in.get<std::int64_t>();
        const auto cols = in.get<std::int64_t>();
        auto& v = p.tensor.mutable_value();
        if (name != p.name || rows != v.rows() || cols != v.cols()) {
            throw DataError(fmt::format("checkpoint parameter {} does not match the model's {}", name, p.name));
        }
        std::memcpy(v.data(), in.take(static_cast<std::size_t>(v.size()) * sizeof(float)),
                    static_cast<std::size_t>(v.size()) * sizeof(float));
    }
    if (!in.done()) throw DataError("trailing bytes in checkpoint blob");
    return out;
}

} // namespace dyneformer::train
