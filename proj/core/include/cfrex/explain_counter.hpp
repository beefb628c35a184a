#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfrex/explanation.hpp"

namespace cfrex::counter {

struct CounterConfig {
    double alpha = 0.2;
    double lambda = 100.0;
    double gamma = 1.0;
    double threshold = 0.3;  // text variant: weights below this are reported
    double lr = 0.01;
    std::size_t max_steps = 500;
    std::uint64_t seed = 0;
    double magnitude_floor = 1e-6;  // deltas below this magnitude are inert

    static CounterConfig text_defaults() {
        CounterConfig cfg;
        cfg.gamma = 0.7;
        return cfg;
    }
};

struct Diagnostics {
    std::vector<double> objective_trace;
};

// Hinge relaxation of the "leaves the top-K list" constraint.
double hinge_loss(double score, double marginal, double alpha);

// Learns a non-positive shift vector over the item's explainable dims that
// minimizes ||delta||_2^2 + gamma ||delta||_1 + lambda * hinge. Dims shifted
// by more than the magnitude floor form the explanation.
Explanation explain_aspects(const scorer::ScorerModel& model, const std::string& user_id,
                            const Vec& user, const std::string& item_id, const Vec& item_vector,
                            const std::vector<std::string>& slot_names, double marginal_score,
                            const CounterConfig& cfg, Diagnostics* diag = nullptr);

// Word-vector variant: per-token weights starting at 1, clamped to [0, 1],
// optimized under gamma ||delta||_1 + lambda * hinge (no L2 term). Tokens
// with final weight below the threshold are reported; validity re-scores
// with those tokens fully removed and the field mean renormalized.
Explanation explain_text_weights(const PairContext& ctx, const CounterConfig& cfg,
                                 Diagnostics* diag = nullptr);

}  // namespace cfrex::counter
