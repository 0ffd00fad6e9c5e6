#include "dyneformer/train/ablation.hpp"

#include "dyneformer/data/csv_io.hpp"
#include "dyneformer/errors.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dyneformer::train {

double AblationResult::median_mae(const std::string& variant, const std::string& tag) const {
    std::vector<double> v;
    for (const auto& c : cells) {
        if (c.variant == variant && c.tag == tag) v.push_back(c.mae);
    }
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::vector<std::pair<std::string, model::ModelConfig>> ablation_variants(const model::ModelConfig& base) {
    auto full = base;
    full.use_gp = true;
    full.use_sa = true;
    full.padding = model::PaddingMode::sync;
    auto no_gp = full;
    no_gp.use_gp = false;
    no_gp.padding = model::PaddingMode::zero;
    auto no_sa = full;
    no_sa.use_sa = false;
    auto zero = full;
    zero.padding = model::PaddingMode::zero;
    return {{"full", full}, {"-GP", no_gp}, {"-S", no_sa}, {"0Padding", zero}};
}

std::vector<AblationCell> evaluate_cells(const std::string& variant, std::uint64_t seed,
                                         const model::DyneformerModel<float>& model,
                                         const std::vector<data::WindowSample>& test, const pool::GlobalPool* pool) {
    const auto report = evaluate(model, test, model.config().use_gp ? pool : nullptr);
    std::vector<AblationCell> out;
    out.push_back({variant, kOverallTag, seed, report.overall.mse, report.overall.mae, report.overall.n_samples});
    for (const auto& [tag, g] : report.per_tag) {
        out.push_back({variant, std::string(data::to_string(tag)), seed, g.mse, g.mae, g.n_samples});
    }
    return out;
}

AblationResult ablation_suite(const PreparedData& data, const pool::GlobalPool& pool, const model::ModelConfig& base,
                              const OptimConfig& optim, const std::vector<std::uint64_t>& seeds) {
    const bool has_switch = std::any_of(data.test.begin(), data.test.end(), [](const auto& s) {
        return s.behavior_tag == data::BehaviorTag::app_switch;
    });
    if (!has_switch) throw DataError("ablation needs app_switch-tagged test windows");
    check_pool_provenance(pool, data.train_fingerprint);

    AblationResult result;
    result.seeds = seeds;
    const auto variants = ablation_variants(base);
    for (const auto& [name, cfg] : variants) result.variants.push_back(name);
    for (const auto seed : seeds) {
        for (const auto& [name, cfg] : variants) {
            auto opt = optim;
            opt.seed = seed;
            try {
                const auto trained = train_on_windows(cfg, data.train, data.val, cfg.use_gp ? &pool : nullptr, opt);
                auto cells = evaluate_cells(name, seed, trained.model, data.test, &pool);
                result.cells.insert(result.cells.end(), cells.begin(), cells.end());
            } catch (const Error& e) {
                spdlog::error("ablation {} seed {}: {}", name, seed, e.what());
                result.errors.push_back(fmt::format("{} seed {}: {}", name, seed, e.what()));
            }
        }
    }
    return result;
}

std::string ablation_csv(const AblationResult& result) {
    std::string out = "model_variant,tag,seed,mse,mae\n";
    for (const auto& c : result.cells) {
        out += fmt::format("{},{},{},{},{}\n", c.variant, c.tag, c.seed, data::format_real(c.mse),
                           data::format_real(c.mae));
    }
    return out;
}

std::string ablation_markdown(const AblationResult& result) {
    static const char* rows[] = {kOverallTag, "app_switch", "new_device", "new_app"};
    std::string out = "| Behavior |";
    std::string rule = "|---|";
    for (const auto& v : result.variants) {
        out += fmt::format(" {} |", v);
        rule += "---|";
    }
    out += "\n" + rule + "\n";
    std::vector<double> promotion_sum(result.variants.size(), 0.0);
    std::vector<int> promotion_n(result.variants.size(), 0);
    for (const char* tag : rows) {
        out += fmt::format("| {} |", tag);
        const double full = result.median_mae("full", tag);
        for (std::size_t i = 0; i < result.variants.size(); ++i) {
            const double mae = result.median_mae(result.variants[i], tag);
            if (std::isnan(mae)) {
                out += " n/a |";
            } else if (result.variants[i] == "full" || std::isnan(full) || mae == 0.0) {
                out += fmt::format(" {:.3f} |", mae);
            } else {
                const double gain = (mae - full) / mae;
                promotion_sum[i] += gain;
                promotion_n[i] += 1;
                out += fmt::format(" {:.3f}({:.0f}%) |", mae, 100.0 * gain);
            }
        }
        out += "\n";
    }
    out += "| Promotion |";
    for (std::size_t i = 0; i < result.variants.size(); ++i) {
        if (result.variants[i] == "full" || promotion_n[i] == 0) {
            out += " - |";
        } else {
            out += fmt::format(" {:.0f}% |", 100.0 * promotion_sum[i] / promotion_n[i]);
        }
    }
    out += "\n\nMAE on the normalized scale, median over seeds.\n";
    return out;
}

} // namespace dyneformer::train
