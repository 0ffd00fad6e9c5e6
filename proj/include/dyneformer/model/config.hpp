#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>

namespace dyneformer::model {

enum class PaddingMode { sync, zero };

std::string_view to_string(PaddingMode mode);
PaddingMode parse_padding_mode(std::string_view text); // throws ConfigError

struct ModelConfig {
    int d_model = 64;
    int n_heads = 4;
    int n_gp_blocks = 2;
    int m_decoder_layers = 1;
    int feedforward_dim = 256;
    double dropout = 0.1;

    int input_length = 48; // T
    int horizon = 24;      // L
    int token_length = 12; // L_token
    int d_t = 3;
    int d_s = 6;
    int pool_size = 0;     // P, taken from the pool file when use_gp

    bool use_gp = true;
    bool use_sa = true;
    bool share_sa = false; // encoder and decoder SA layers share parameters
    PaddingMode padding = PaddingMode::sync;

    int decoder_length() const noexcept { return token_length + horizon; }

    void validate() const; // throws ConfigError
    static ModelConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

} // namespace dyneformer::model
