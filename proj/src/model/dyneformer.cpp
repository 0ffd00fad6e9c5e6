#include "dyneformer/model/dyneformer.hpp"

#include <fmt/format.h>

#include <numeric>

namespace dyneformer::model {

template <typename T>
Batch<T> make_batch(const std::vector<data::WindowSample>& samples, std::span<const std::size_t> indices,
                    const ModelConfig& config) {
    std::vector<std::size_t> all;
    if (indices.empty()) {
        all.resize(samples.size());
        std::iota(all.begin(), all.end(), 0);
        indices = all;
    }
    const auto b = static_cast<Eigen::Index>(indices.size());
    const Eigen::Index steps = config.input_length;
    const Eigen::Index dec = config.decoder_length();
    const Eigen::Index dt = config.d_t;
    const Eigen::Index ds = std::max(config.d_s, 1);
    const Eigen::Index horizon = config.horizon;

    Batch<T> out;
    out.size = b;
    out.encoder.resize(b * steps, dt);
    out.decoder_known.resize(b * dec, dt);
    out.statics = Matrix<T>::Zero(b, ds);
    out.target.resize(b * horizon, 1);
    out.start_hours.reserve(indices.size());
    for (Eigen::Index i = 0; i < b; ++i) {
        const auto& s = samples.at(indices[static_cast<std::size_t>(i)]);
        if (s.encoder_input.rows() != steps || s.encoder_input.cols() != dt) {
            throw DimensionError(fmt::format("encoder input is {}x{}, model expects {}x{}", s.encoder_input.rows(),
                                             s.encoder_input.cols(), steps, dt));
        }
        if (s.decoder_known.rows() != dec || s.decoder_known.cols() != dt) {
            throw DimensionError("decoder input shape does not match L_token + L and d_t");
        }
        if (static_cast<Eigen::Index>(s.target.size()) != horizon) throw DimensionError("target length != L");
        out.encoder.middleRows(i * steps, steps) = s.encoder_input.cast<T>();
        out.decoder_known.middleRows(i * dec, dec) = s.decoder_known.cast<T>();
        for (Eigen::Index t = 0; t < horizon; ++t) out.target(i * horizon + t, 0) = static_cast<T>(s.target[static_cast<std::size_t>(t)]);
        if (config.use_sa) {
            if (static_cast<int>(s.static_attributes.size()) != config.d_s) {
                throw DimensionError(fmt::format("series {} has {} static attributes, model expects d_s = {}",
                                                 s.series_id, s.static_attributes.size(), config.d_s));
            }
            for (Eigen::Index j = 0; j < ds; ++j) out.statics(i, j) = static_cast<T>(s.static_attributes[static_cast<std::size_t>(j)]);
        }
        out.start_hours.push_back(s.start_hour());
    }
    return out;
}

template <typename T>
Matrix<T> aligned_pool_matrix(const pool::GlobalPool& pool, const std::vector<int>& start_hours) {
    const Eigen::Index t2 = pool.window_length();
    const Eigen::Index p = pool.size();
    Matrix<T> out(static_cast<Eigen::Index>(start_hours.size()) * t2, p);
    for (std::size_t b = 0; b < start_hours.size(); ++b) {
        out.middleRows(static_cast<Eigen::Index>(b) * t2, t2) = pool.aligned(start_hours[b]).transpose().cast<T>();
    }
    return out;
}

// ---------------------------------------------------------------------------

template <typename T>
SaLayer<T>::SaLayer(Eigen::Index d_model, Eigen::Index d_s, std::mt19937_64& rng)
    : query(d_model, d_s, rng), embedding(Tensor<T>::parameter(nn::xavier_uniform<T>(d_s, d_model, rng))),
      token_bias(Tensor<T>::parameter(nn::xavier_uniform<T>(d_s, d_model, rng))), norm(d_model) {}

template <typename T>
Tensor<T> SaLayer<T>::operator()(const Tensor<T>& v, const Tensor<T>& statics, Eigen::Index batch, T rate,
                                 std::mt19937_64* rng, Matrix<T>* alpha_out) const {
    if (statics.cols() != embedding.rows()) {
        throw DimensionError(fmt::format("SA layer expects d_s = {}, got {}", embedding.rows(), statics.cols()));
    }
    if (statics.rows() != batch || v.rows() % batch != 0) throw DimensionError("SA layer: batch size mismatch");
    const Eigen::Index steps = v.rows() / batch;
    auto alpha = nn::softmax_rows(query(v));
    if (alpha_out) *alpha_out = alpha.value();
    auto weighted = nn::hadamard(alpha, nn::repeat_rows(statics, steps));
    auto context = nn::add(nn::matmul(weighted, embedding), nn::matmul(alpha, token_bias));
    return norm(nn::add(v, nn::dropout(context, rate, rng)));
}

template <typename T>
void SaLayer<T>::collect(nn::ParameterList<T>& out, const std::string& prefix) const {
    query.collect(out, prefix + ".query");
    out.push_back({prefix + ".embedding", embedding});
    out.push_back({prefix + ".token_bias", token_bias});
    norm.collect(out, prefix + ".norm");
}

template <typename T>
GpLayer<T>::GpLayer(Eigen::Index steps, Eigen::Index d_model, Eigen::Index pool_size, std::mt19937_64& rng)
    : merge(steps * (d_model / 2), pool_size, rng), project(pool_size, d_model / 2, rng) {}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> GpLayer<T>::operator()(const Tensor<T>& e, const Tensor<T>& aligned,
                                                       Eigen::Index batch) const {
    const Eigen::Index half = project.weight.cols();
    if (e.cols() != 2 * half) throw DimensionError("GP layer: feature width mismatch");
    if (e.rows() % batch != 0) throw DimensionError("GP layer: rows not divisible by batch");
    const Eigen::Index steps = e.rows() / batch;
    if (steps * half != merge.weight.rows()) throw DimensionError("GP layer: sequence length mismatch");
    if (aligned.rows() != e.rows() || aligned.cols() != merge.weight.cols()) {
        throw DimensionError(fmt::format("GP layer: aligned pool is {}x{}, expected {}x{}", aligned.rows(),
                                         aligned.cols(), e.rows(), merge.weight.cols()));
    }
    auto flat = nn::reshape(nn::slice_cols(e, half, half), batch, steps * half);
    auto weights = nn::softmax_rows(merge(flat));
    auto global = nn::hadamard(nn::repeat_rows(weights, steps), aligned);
    auto v = nn::concat_cols(nn::slice_cols(e, 0, half), project(global));
    return {v, weights};
}

template <typename T>
void GpLayer<T>::collect(nn::ParameterList<T>& out, const std::string& prefix) const {
    merge.collect(out, prefix + ".merge");
    project.collect(out, prefix + ".project");
}

template <typename T>
Tensor<T> synchronous_padding(const Tensor<T>& weights, const Tensor<T>& aligned, Eigen::Index batch,
                              Eigen::Index steps, Eigen::Index horizon) {
    if (horizon > steps) throw DimensionError("synchronous padding needs L <= T2");
    auto series = nn::row_sum(nn::hadamard(nn::repeat_rows(weights, steps), aligned));
    return nn::select_block_rows(series, batch, steps - horizon, horizon);
}

template <typename T>
Tensor<T> build_decoder_input(const Matrix<T>& decoder_known, const std::optional<Tensor<T>>& weights,
                              const std::optional<Tensor<T>>& aligned, const ModelConfig& config,
                              Eigen::Index batch) {
    const Eigen::Index dec = config.decoder_length();
    if (decoder_known.rows() != batch * dec || decoder_known.cols() != config.d_t) {
        throw DimensionError("decoder input must be (B·(L_token+L)) × d_t");
    }
    auto known = Tensor<T>::constant(decoder_known);
    if (config.padding == PaddingMode::zero) return known;
    if (!weights || !aligned) throw StateError("synchronous padding requires the merge weights W^n and the pool");
    const Eigen::Index steps = aligned->rows() / batch;
    auto pad = synchronous_padding(*weights, *aligned, batch, steps, static_cast<Eigen::Index>(config.horizon));
    auto zeros_token = Tensor<T>::constant(Matrix<T>::Zero(batch * config.token_length, 1));
    auto column = nn::interleave_blocks(zeros_token, pad, batch);
    if (config.d_t > 1) column = nn::concat_cols(column, Tensor<T>::constant(Matrix<T>::Zero(batch * dec, config.d_t - 1)));
    return nn::add(known, column);
}

// ---------------------------------------------------------------------------

template <typename T>
DyneformerModel<T>::DyneformerModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const Eigen::Index d = config_.d_model;
    encoder_embedding_ = nn::Linear<T>(config_.d_t, d, rng);
    decoder_embedding_ = nn::Linear<T>(config_.d_t, d, rng);
    if (config_.use_sa) {
        encoder_sa_ = SaLayer<T>(d, config_.d_s, rng);
        if (!config_.share_sa) decoder_sa_ = SaLayer<T>(d, config_.d_s, rng);
    }
    for (int i = 0; i < config_.n_gp_blocks; ++i) {
        encoder_layers_.emplace_back(d, config_.n_heads, config_.feedforward_dim, rng);
        if (config_.use_gp) gp_layers_.emplace_back(config_.input_length, d, config_.pool_size, rng);
    }
    for (int i = 0; i < config_.m_decoder_layers; ++i) {
        decoder_layers_.emplace_back(d, config_.n_heads, config_.feedforward_dim, rng);
    }
    head_ = nn::Linear<T>(d, 1, rng);
}

template <typename T>
Tensor<T> DyneformerModel<T>::embed_and_position(const Tensor<T>& input, const nn::Linear<T>& embedding,
                                                 Eigen::Index batch) const {
    if (input.cols() != config_.d_t) {
        throw DimensionError(fmt::format("input has {} channels, model expects d_t = {}", input.cols(), config_.d_t));
    }
    const Eigen::Index steps = input.rows() / batch;
    const Matrix<T> pe = nn::sinusoidal_encoding<T>(steps, config_.d_model);
    return nn::add(embedding(input), Tensor<T>::constant(pe.replicate(batch, 1)));
}

template <typename T>
typename DyneformerModel<T>::Output DyneformerModel<T>::forward(const Batch<T>& batch, const pool::GlobalPool* pool,
                                                                std::mt19937_64* dropout_rng, bool keep_trace) const {
    return forward_tensors(Tensor<T>::constant(batch.encoder), Tensor<T>::constant(batch.statics), batch, pool,
                           dropout_rng, keep_trace);
}

template <typename T>
typename DyneformerModel<T>::Output DyneformerModel<T>::forward_tensors(const Tensor<T>& encoder,
                                                                        const Tensor<T>& statics,
                                                                        const Batch<T>& batch,
                                                                        const pool::GlobalPool* pool,
                                                                        std::mt19937_64* dropout_rng,
                                                                        bool keep_trace) const {
    if (encoder_layers_.empty()) throw StateError("model is not initialised");
    const Eigen::Index b = batch.size;
    if (b < 1) throw DimensionError("empty batch");
    const Eigen::Index steps = config_.input_length;
    if (encoder.rows() != b * steps) throw DimensionError("encoder rows != B·T");
    const T rate = static_cast<T>(config_.dropout);

    std::optional<Tensor<T>> aligned;
    if (config_.use_gp) {
        if (pool == nullptr) throw StateError("use_gp requires a global pool");
        if (pool->window_length() != steps) {
            throw DimensionError(fmt::format("pool T2 = {} differs from T = {}", pool->window_length(), steps));
        }
        if (pool->size() != config_.pool_size) {
            throw DimensionError(fmt::format("pool has P = {}, model was built for {}", pool->size(), config_.pool_size));
        }
        aligned = Tensor<T>::constant(aligned_pool_matrix<T>(*pool, batch.start_hours));
    }

    Output out;
    auto& trace = out.trace;
    auto x = embed_and_position(encoder, encoder_embedding_, b);
    if (config_.use_sa) x = encoder_sa_(x, statics, b, rate, dropout_rng, keep_trace ? &trace.encoder_alpha : nullptr);

    std::optional<Tensor<T>> weights;
    for (std::size_t i = 0; i < encoder_layers_.size(); ++i) {
        auto e = encoder_layers_[i](x, b, rate, dropout_rng);
        if (keep_trace) trace.encoder_activations.push_back(e.value());
        if (config_.use_gp) {
            auto [v, w] = gp_layers_[i](e, *aligned, b);
            x = v;
            weights = w;
            if (keep_trace) {
                trace.gp_outputs.push_back(v.value());
                trace.merge_weights.push_back(w.value());
            }
        } else {
            x = e;
        }
    }
    const auto memory = x;

    auto dec_in = build_decoder_input<T>(batch.decoder_known, weights, aligned, config_, b);
    if (keep_trace) trace.decoder_input = dec_in.value();
    auto y = embed_and_position(dec_in, decoder_embedding_, b);
    if (config_.use_sa) {
        const auto& sa = config_.share_sa ? encoder_sa_ : decoder_sa_;
        y = sa(y, statics, b, rate, dropout_rng, keep_trace ? &trace.decoder_alpha : nullptr);
    }
    for (const auto& layer : decoder_layers_) y = layer(y, memory, b, rate, dropout_rng);
    out.prediction = nn::select_block_rows(head_(y), b, config_.token_length, config_.horizon);
    if (keep_trace) trace.prediction = out.prediction.value();
    return out;
}

template <typename T>
nn::ParameterList<T> DyneformerModel<T>::parameters() const {
    nn::ParameterList<T> out;
    encoder_embedding_.collect(out, "encoder_embedding");
    decoder_embedding_.collect(out, "decoder_embedding");
    if (config_.use_sa) {
        encoder_sa_.collect(out, "encoder_sa");
        if (!config_.share_sa) decoder_sa_.collect(out, "decoder_sa");
    }
    for (std::size_t i = 0; i < encoder_layers_.size(); ++i) {
        encoder_layers_[i].collect(out, fmt::format("block{}.encoder", i));
        if (config_.use_gp) gp_layers_[i].collect(out, fmt::format("block{}.gp", i));
    }
    for (std::size_t i = 0; i < decoder_layers_.size(); ++i) decoder_layers_[i].collect(out, fmt::format("decoder{}", i));
    head_.collect(out, "head");
    return out;
}

#define DYNEFORMER_INSTANTIATE_MODEL(T)                                                                         \
    template Batch<T> make_batch<T>(const std::vector<data::WindowSample>&, std::span<const std::size_t>,       \
                                    const ModelConfig&);                                                        \
    template Matrix<T> aligned_pool_matrix<T>(const pool::GlobalPool&, const std::vector<int>&);                \
    template struct SaLayer<T>;                                                                                 \
    template struct GpLayer<T>;                                                                                 \
    template Tensor<T> synchronous_padding<T>(const Tensor<T>&, const Tensor<T>&, Eigen::Index, Eigen::Index,   \
                                              Eigen::Index);                                                    \
    template Tensor<T> build_decoder_input<T>(const Matrix<T>&, const std::optional<Tensor<T>>&,                \
                                              const std::optional<Tensor<T>>&, const ModelConfig&, Eigen::Index); \
    template class DyneformerModel<T>;

DYNEFORMER_INSTANTIATE_MODEL(float)
DYNEFORMER_INSTANTIATE_MODEL(double)

#undef DYNEFORMER_INSTANTIATE_MODEL

} // namespace dyneformer::model
