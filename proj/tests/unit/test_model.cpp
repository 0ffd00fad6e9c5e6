#include "dyneformer/errors.hpp"
#include "dyneformer/model/dyneformer.hpp"
#include "model_fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace dyneformer;
using namespace dyneformer::model;
using dyneformer::testing::random_pool;
using dyneformer::testing::random_samples;
using dyneformer::testing::tiny_config;
using Md = nn::Matrix<double>;

namespace {

Md random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    Md m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
    return m;
}

Md layer_norm_rows(const Md& x) {
    Md out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().mean();
        out.row(i) = (x.row(i).array() - mean) / std::sqrt(var + 1e-5);
    }
    return out;
}

void set_param(nn::ParameterList<double>& params, const std::string& name, const Md& value) {
    for (auto& p : params) {
        if (p.name == name) {
            REQUIRE(p.tensor.rows() == value.rows());
            REQUIRE(p.tensor.cols() == value.cols());
            p.tensor.mutable_value() = value;
            return;
        }
    }
    FAIL("no parameter " << name);
}

Md get_param(const nn::ParameterList<double>& params, const std::string& name) {
    for (const auto& p : params) {
        if (p.name == name) return p.tensor.value();
    }
    FAIL("no parameter " << name);
    return {};
}

} // namespace

TEST_SUITE("dyneformer-model") {

TEST_CASE("config validation") {
    auto c = tiny_config();
    c.validate();
    auto odd = c;
    odd.d_model = 7;
    CHECK_THROWS_AS(odd.validate(), ConfigError);
    auto heads = c;
    heads.n_heads = 3;
    CHECK_THROWS_AS(heads.validate(), ConfigError);
    auto blocks = c;
    blocks.n_gp_blocks = 0;
    CHECK_THROWS_AS(blocks.validate(), ConfigError);
    auto sync_no_gp = c;
    sync_no_gp.use_gp = false;
    CHECK_THROWS_AS(sync_no_gp.validate(), ConfigError);
    CHECK_THROWS_AS(ModelConfig::from_json({{"d_modle", 8}}), ConfigError);
    CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
    CHECK(parse_padding_mode("zero") == PaddingMode::zero);
    CHECK_THROWS_AS(parse_padding_mode("mirror"), ConfigError);

    const ModelConfig defaults;
    CHECK(defaults.d_model == 64);
    CHECK(defaults.n_heads == 4);
    CHECK(defaults.n_gp_blocks == 2);
    CHECK(defaults.m_decoder_layers == 1);
    CHECK(defaults.feedforward_dim == 4 * defaults.d_model);
}

TEST_CASE("positional encoding") {
    const auto pe = nn::sinusoidal_encoding<double>(10, 8);
    for (int i = 0; i < 8; i += 2) {
        CHECK(pe(0, i) == 0.0);
        CHECK(pe(0, i + 1) == 1.0);
    }
    CHECK(pe(3, 2) == doctest::Approx(std::sin(3.0 / std::pow(10000.0, 2.0 / 8.0))));
}

TEST_CASE("embedding shape and positional distinguishability") {
    const auto c = tiny_config();
    DyneformerModel<double> m(c, 1);
    std::mt19937_64 rng(2);
    nn::Linear<double> emb(3, 8, rng);
    Md x(2 * 8, 3);
    x.rowwise() = Eigen::RowVector3d(0.3, -0.1, 0.2);
    const auto out = m.embed_and_position(nn::Tensor<double>::constant(x), emb, 2);
    CHECK(out.rows() == 16);
    CHECK(out.cols() == 8);
    for (int t = 1; t < 8; ++t) CHECK((out.value().row(t) - out.value().row(0)).norm() > 1e-6);
    CHECK(out.value().row(3) == out.value().row(8 + 3));
}

TEST_CASE("sa layer attention is a distribution over attributes") {
    std::mt19937_64 rng(3);
    SaLayer<double> sa(8, 3, rng);
    const auto v = nn::Tensor<double>::constant(random_matrix(2 * 5, 8, rng));
    const auto s = nn::Tensor<double>::constant(random_matrix(2, 3, rng));
    Md alpha;
    const auto out = sa(v, s, 2, 0.0, nullptr, &alpha);
    CHECK(out.rows() == 10);
    CHECK(alpha.rows() == 10);
    CHECK(alpha.cols() == 3);
    for (Eigen::Index i = 0; i < alpha.rows(); ++i) {
        CHECK((alpha.row(i).array() >= 0.0).all());
        CHECK(std::abs(alpha.row(i).sum() - 1.0) <= 1e-5);
    }
    CHECK_THROWS_AS(sa(v, nn::Tensor<double>::constant(random_matrix(2, 4, rng)), 2, 0.0, nullptr), DimensionError);
}

TEST_CASE("sa layer with one attribute adds its embedding") {
    std::mt19937_64 rng(4);
    SaLayer<double> sa(8, 1, rng);
    const Md v = random_matrix(4, 8, rng);
    Md s(1, 1);
    s << 0.7;
    Md alpha;
    const auto out = sa(nn::Tensor<double>::constant(v), nn::Tensor<double>::constant(s), 1, 0.0, nullptr, &alpha);
    for (Eigen::Index i = 0; i < alpha.rows(); ++i) CHECK(alpha(i, 0) == doctest::Approx(1.0));
    Md expect = v;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        expect.row(i) += 0.7 * sa.embedding.value().row(0) + sa.token_bias.value().row(0);
    }
    expect = layer_norm_rows(expect);
    CHECK((out.value() - expect).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("gp layer against a hand evaluation") {
    // b=1, T=2, P=2, d_model=4.
    std::mt19937_64 rng(5);
    GpLayer<double> gp(2, 4, 2, rng);
    Md w1(4, 2), b1(1, 2), w2(2, 2), b2(1, 2);
    w1 << 0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8;
    b1 << 0.05, -0.05;
    w2 << 1.0, 2.0, -1.0, 0.5;
    b2 << 0.1, 0.2;
    gp.merge.weight.mutable_value() = w1;
    gp.merge.bias.mutable_value() = b1;
    gp.project.weight.mutable_value() = w2;
    gp.project.bias.mutable_value() = b2;
    Md e(2, 4);
    e << 1, 2, 3, 4, 5, 6, 7, 8;
    Md aligned(2, 2);
    aligned << 0.5, -1.0, 2.0, 0.25;

    // flatten(E[:, 2:]) = [3, 4, 7, 8]
    const double l0 = 3 * 0.1 + 4 * 0.3 + 7 * -0.5 + 8 * 0.7 + 0.05;
    const double l1 = 3 * -0.2 + 4 * 0.4 + 7 * 0.6 + 8 * -0.8 - 0.05;
    const double w_0 = 1.0 / (1.0 + std::exp(l1 - l0));
    const double w_1 = 1.0 - w_0;
    Md expect(2, 4);
    for (int t = 0; t < 2; ++t) {
        const double g0 = w_0 * aligned(t, 0), g1 = w_1 * aligned(t, 1);
        expect(t, 0) = e(t, 0);
        expect(t, 1) = e(t, 1);
        expect(t, 2) = g0 * 1.0 + g1 * -1.0 + 0.1;
        expect(t, 3) = g0 * 2.0 + g1 * 0.5 + 0.2;
    }
    const auto [v, w] = gp(nn::Tensor<double>::constant(e), nn::Tensor<double>::constant(aligned), 1);
    CHECK(std::abs(w.value()(0, 0) - w_0) <= 1e-12);
    CHECK((v.value() - expect).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("gp layer with a single pool") {
    std::mt19937_64 rng(6);
    GpLayer<double> gp(5, 8, 1, rng);
    const Md e = random_matrix(10, 8, rng);
    const Md aligned = random_matrix(10, 1, rng);
    const auto [v, w] = gp(nn::Tensor<double>::constant(e), nn::Tensor<double>::constant(aligned), 2);
    CHECK(w.value()(0, 0) == 1.0);
    CHECK(w.value()(1, 0) == 1.0);
    const Md expect = aligned * gp.project.weight.value() + gp.project.bias.value().replicate(10, 1);
    CHECK((v.value().rightCols(4) - expect).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(v.value().leftCols(4) == e.leftCols(4));
}

TEST_CASE("decoder input layout") {
    auto c = tiny_config(2);
    const Eigen::Index batch = 2, dec = c.decoder_length();
    std::mt19937_64 rng(7);
    Md known = random_matrix(batch * dec, 3, rng);
    for (Eigen::Index b = 0; b < batch; ++b) known.block(b * dec + c.token_length, 0, c.horizon, 1).setZero();
    const Md aligned = random_matrix(batch * c.input_length, 2, rng);
    Md onehot(2, 2);
    onehot << 0, 1, 1, 0;
    const auto w = nn::Tensor<double>::constant(onehot);
    const auto a = nn::Tensor<double>::constant(aligned);

    const auto x = build_decoder_input<double>(known, w, a, c, batch);
    CHECK(x.rows() == batch * dec);
    CHECK(x.cols() == c.d_t);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const int j = b == 0 ? 1 : 0;
        for (int i = 0; i < c.token_length; ++i) CHECK(x.value()(b * dec + i, 0) == known(b * dec + i, 0));
        for (int i = 0; i < c.horizon; ++i) {
            const Eigen::Index src = b * c.input_length + c.input_length - c.horizon + i;
            CHECK(x.value()(b * dec + c.token_length + i, 0) == aligned(src, j));
        }
    }
    CHECK(x.value().rightCols(2) == known.rightCols(2));

    c.padding = PaddingMode::zero;
    const auto z = build_decoder_input<double>(known, std::nullopt, std::nullopt, c, batch);
    CHECK(z.value() == known);

    c.padding = PaddingMode::sync;
    CHECK_THROWS_AS(build_decoder_input<double>(known, std::nullopt, std::nullopt, c, batch), StateError);
}

TEST_CASE("forward contracts") {
    std::mt19937_64 rng(8);
    const auto c = tiny_config(3);
    const auto pool = random_pool(3, c.input_length, rng);
    const auto samples = random_samples(c, 5, rng);
    const auto batch = make_batch<double>(samples, {}, c);
    DyneformerModel<double> m(c, 3);

    const auto out = m.forward(batch, &pool, nullptr, true);
    CHECK(out.prediction.rows() == 5 * c.horizon);
    CHECK(out.prediction.cols() == 1);
    REQUIRE(out.trace.encoder_activations.size() == 2);
    REQUIRE(out.trace.merge_weights.size() == 2);
    CHECK(out.trace.decoder_input.rows() == 5 * c.decoder_length());
    CHECK(out.trace.decoder_input.cols() == c.d_t);

    const auto again = m.forward(batch, &pool);
    CHECK(again.prediction.value() == out.prediction.value());

    for (std::size_t i = 0; i < 2; ++i) {
        const auto half = c.d_model / 2;
        CHECK(out.trace.gp_outputs[i].leftCols(half) == out.trace.encoder_activations[i].leftCols(half));
        const auto& w = out.trace.merge_weights[i];
        CHECK((w.array() >= 0.0).all());
        for (Eigen::Index r = 0; r < w.rows(); ++r) CHECK(std::abs(w.row(r).sum() - 1.0) <= 1e-5);
    }
    for (Eigen::Index r = 0; r < out.trace.encoder_alpha.rows(); ++r) {
        CHECK(std::abs(out.trace.encoder_alpha.row(r).sum() - 1.0) <= 1e-5);
    }

    // Each sample's prediction is independent of the rest of the batch.
    const std::vector<std::size_t> one{2};
    const auto single = m.forward(make_batch<double>(samples, one, c), &pool);
    const Md slice = out.prediction.value().middleRows(2 * c.horizon, c.horizon);
    CHECK((single.prediction.value() - slice).cwiseAbs().maxCoeff() <= 1e-12);

    // Two identical samples give identical outputs.
    std::vector<data::WindowSample> twins{samples[0], samples[0]};
    const auto tw = m.forward(make_batch<double>(twins, {}, c), &pool).prediction.value();
    CHECK(tw.topRows(c.horizon) == tw.bottomRows(c.horizon));

    CHECK_THROWS_AS(m.forward(batch, nullptr), StateError);
    const auto wrong = random_pool(3, c.input_length + 1, rng);
    CHECK_THROWS_AS(m.forward(batch, &wrong), DimensionError);
}

TEST_CASE("dropout only acts in training mode") {
    std::mt19937_64 rng(9);
    auto c = tiny_config(3);
    c.dropout = 0.3;
    const auto pool = random_pool(3, c.input_length, rng);
    const auto batch = make_batch<double>(random_samples(c, 3, rng), {}, c);
    DyneformerModel<double> m(c, 4);
    std::mt19937_64 drop(1);
    const auto train = m.forward(batch, &pool, &drop).prediction.value();
    const auto eval1 = m.forward(batch, &pool).prediction.value();
    const auto eval2 = m.forward(batch, &pool).prediction.value();
    CHECK(eval1 == eval2);
    CHECK(train != eval1);
}

TEST_CASE("plain transformer degeneracy") {
    std::mt19937_64 rng(10);
    auto c = tiny_config(0);
    c.use_gp = false;
    c.use_sa = false;
    c.padding = PaddingMode::zero;
    DyneformerModel<double> m(c, 5);
    const auto batch = make_batch<double>(random_samples(c, 4, rng), {}, c);
    const auto out = m.forward(batch, nullptr, nullptr, true);
    CHECK(out.prediction.rows() == 4 * c.horizon);
    CHECK(out.trace.merge_weights.empty());
    for (const auto& p : m.parameters()) {
        CHECK(p.name.find(".gp.") == std::string::npos);
        CHECK(p.name.find("_sa.") == std::string::npos);
    }
}

TEST_CASE("synchronous padding equals the traced weights times the pool") {
    std::mt19937_64 rng(11);
    const auto c = tiny_config(3);
    const auto pool = random_pool(3, c.input_length, rng);
    const auto samples = random_samples(c, 6, rng);
    const auto batch = make_batch<double>(samples, {}, c);
    DyneformerModel<double> m(c, 6);
    const auto out = m.forward(batch, &pool, nullptr, true);
    const auto& w = out.trace.merge_weights.back();
    for (std::size_t b = 0; b < samples.size(); ++b) {
        const auto aligned = pool.aligned(samples[b].start_hour());
        const Eigen::RowVectorXd series = w.row(static_cast<Eigen::Index>(b)) * aligned;
        for (int i = 0; i < c.horizon; ++i) {
            const double traced = out.trace.decoder_input(static_cast<Eigen::Index>(b) * c.decoder_length() +
                                                              c.token_length + i, 0);
            CHECK(std::abs(traced - series(c.input_length - c.horizon + i)) <= 1e-9);
        }
    }
}

TEST_CASE("pool permutation equivariance") {
    std::mt19937_64 rng(12);
    const auto c = tiny_config(3);
    const auto pool = random_pool(3, c.input_length, rng);
    const auto batch = make_batch<double>(random_samples(c, 4, rng), {}, c);
    DyneformerModel<double> m(c, 7);
    const auto base = m.forward(batch, &pool, nullptr, true);

    const std::vector<int> perm{2, 0, 1};
    auto permuted_pool = pool;
    for (int k = 0; k < 3; ++k) permuted_pool.pools.row(k) = pool.pools.row(perm[k]);
    auto q = m.cast<double>();
    auto params = q.parameters();
    for (int i = 0; i < c.n_gp_blocks; ++i) {
        const std::string prefix = "block" + std::to_string(i) + ".gp.";
        const Md mw = get_param(params, prefix + "merge.weight");
        const Md mb = get_param(params, prefix + "merge.bias");
        const Md pw = get_param(params, prefix + "project.weight");
        Md nmw = mw, nmb = mb, npw = pw;
        for (int k = 0; k < 3; ++k) {
            nmw.col(k) = mw.col(perm[k]);
            nmb(0, k) = mb(0, perm[k]);
            npw.row(k) = pw.row(perm[k]);
        }
        set_param(params, prefix + "merge.weight", nmw);
        set_param(params, prefix + "merge.bias", nmb);
        set_param(params, prefix + "project.weight", npw);
    }
    const auto out = q.forward(batch, &permuted_pool, nullptr, true);
    for (std::size_t i = 0; i < base.trace.merge_weights.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            CHECK((out.trace.merge_weights[i].col(k) - base.trace.merge_weights[i].col(perm[k])).cwiseAbs().maxCoeff() <=
                  1e-12);
        }
    }
    CHECK((out.prediction.value() - base.prediction.value()).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("float and double models agree after a cast") {
    std::mt19937_64 rng(13);
    const auto c = tiny_config(3);
    const auto pool = random_pool(3, c.input_length, rng);
    const auto samples = random_samples(c, 3, rng);
    DyneformerModel<float> f(c, 8);
    const auto d = f.cast<double>();
    const Md pf = f.forward(make_batch<float>(samples, {}, c), &pool).prediction.value().cast<double>();
    const Md pd = d.forward(make_batch<double>(samples, {}, c), &pool).prediction.value();
    CHECK((pf - pd).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("batch assembly checks shapes") {
    std::mt19937_64 rng(14);
    const auto c = tiny_config(3);
    auto samples = random_samples(c, 2, rng);
    samples[1].static_attributes.push_back(1.0);
    CHECK_THROWS_AS(make_batch<double>(samples, {}, c), DimensionError);
}

TEST_CASE("aligned pool matrix stacks per-sample rolls") {
    std::mt19937_64 rng(15);
    const auto pool = random_pool(2, 6, rng);
    const auto a = aligned_pool_matrix<double>(pool, {0, 4});
    CHECK(a.rows() == 12);
    CHECK(a.cols() == 2);
    for (int t = 0; t < 6; ++t) {
        CHECK(a(t, 1) == pool.pools(1, t));
        CHECK(a(6 + t, 0) == pool.pools(0, (t + 4) % 6));
    }
}

}
