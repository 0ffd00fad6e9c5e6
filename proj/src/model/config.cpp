#include "dyneformer/model/config.hpp"

#include "dyneformer/errors.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace dyneformer::model {

std::string_view to_string(PaddingMode mode) { return mode == PaddingMode::sync ? "sync" : "zero"; }

PaddingMode parse_padding_mode(std::string_view text) {
    if (text == "sync") return PaddingMode::sync;
    if (text == "zero") return PaddingMode::zero;
    throw ConfigError(fmt::format("padding mode must be sync or zero, got '{}'", text));
}

void ModelConfig::validate() const {
    if (d_model < 2 || d_model % 2 != 0) throw ConfigError("d_model must be a positive even number");
    if (n_heads < 1 || d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
    if (n_gp_blocks < 1) throw ConfigError("n_gp_blocks must be >= 1");
    if (m_decoder_layers < 1) throw ConfigError("m_decoder_layers must be >= 1");
    if (feedforward_dim < 1) throw ConfigError("feedforward_dim must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
    if (input_length < 1 || horizon < 1) throw ConfigError("T and L must be positive");
    if (token_length < 0 || token_length > input_length) throw ConfigError("L_token must lie in [0, T]");
    if (d_t < 1) throw ConfigError("d_t must be positive");
    if (use_sa && d_s < 1) throw ConfigError("the SA layer needs d_s >= 1");
    if (use_gp && pool_size < 1) throw ConfigError("use_gp needs a pool with at least one row");
    if (use_gp && horizon > input_length) throw ConfigError("synchronous padding needs L <= T");
    if (!use_gp && padding == PaddingMode::sync) {
        throw ConfigError("synchronous padding needs the GP layer; use padding zero with use_gp = false");
    }
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    static const char* known[] = {"d_model",     "n_heads",     "n_gp_blocks", "m_decoder_layers", "feedforward_dim",
                                  "dropout",     "T",           "L",           "L_token",          "d_t",
                                  "d_s",         "pool_size",   "use_gp",      "use_sa",           "share_sa",
                                  "padding"};
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            throw ConfigError(fmt::format("unknown model config key '{}'", key));
        }
    }
    try {
        c.d_model = j.value("d_model", c.d_model);
        c.n_heads = j.value("n_heads", c.n_heads);
        c.n_gp_blocks = j.value("n_gp_blocks", c.n_gp_blocks);
        c.m_decoder_layers = j.value("m_decoder_layers", c.m_decoder_layers);
        c.feedforward_dim = j.value("feedforward_dim", c.feedforward_dim);
        c.dropout = j.value("dropout", c.dropout);
        c.input_length = j.value("T", c.input_length);
        c.horizon = j.value("L", c.horizon);
        c.token_length = j.value("L_token", c.token_length);
        c.d_t = j.value("d_t", c.d_t);
        c.d_s = j.value("d_s", c.d_s);
        c.pool_size = j.value("pool_size", c.pool_size);
        c.use_gp = j.value("use_gp", c.use_gp);
        c.use_sa = j.value("use_sa", c.use_sa);
        c.share_sa = j.value("share_sa", c.share_sa);
        c.padding = parse_padding_mode(j.value("padding", std::string(to_string(c.padding))));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    return c;
}

nlohmann::json ModelConfig::to_json() const {
    return {{"d_model", d_model},
            {"n_heads", n_heads},
            {"n_gp_blocks", n_gp_blocks},
            {"m_decoder_layers", m_decoder_layers},
            {"feedforward_dim", feedforward_dim},
            {"dropout", dropout},
            {"T", input_length},
            {"L", horizon},
            {"L_token", token_length},
            {"d_t", d_t},
            {"d_s", d_s},
            {"pool_size", pool_size},
            {"use_gp", use_gp},
            {"use_sa", use_sa},
            {"share_sa", share_sa},
            {"padding", std::string(to_string(padding))}};
}

} // namespace dyneformer::model
