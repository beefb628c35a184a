#include "cfrex/explain_counter.hpp"

#include <algorithm>
#include <sstream>

namespace cfrex::counter {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace

double hinge_loss(double score, double marginal, double alpha) {
    return std::max(0.0, alpha + score - marginal);
}

Explanation explain_aspects(const scorer::ScorerModel& model, const std::string& user_id,
                            const Vec& user, const std::string& item_id, const Vec& item_vector,
                            const std::vector<std::string>& slot_names, double marginal_score,
                            const CounterConfig& cfg, Diagnostics* diag) {
    if (!slot_names.empty() && slot_names.size() != item_vector.size())
        throw DimensionError("slot name list does not match item vector width");
    const double score_before = scorer::forward(model, user, item_vector);
    if (!(score_before > marginal_score))
        throw NotApplicableError("item '" + item_id + "' is not in user '" + user_id +
                                 "''s top-K list");

    const std::size_t n = item_vector.size();
    Vec delta(n, 0.0);
    Vec edited(item_vector);

    auto objective = [&](const Vec& d, double score) {
        double l2 = 0.0, l1 = 0.0;
        for (double x : d) {
            l2 += x * x;
            l1 += std::abs(x);
        }
        return l2 + cfg.gamma * l1 + cfg.lambda * hinge_loss(score, marginal_score, cfg.alpha);
    };

    std::size_t steps = 0;
    for (; steps < cfg.max_steps; ++steps) {
        for (std::size_t i = 0; i < n; ++i) edited[i] = item_vector[i] + delta[i];
        const double score = scorer::forward(model, user, edited);
        if (diag) diag->objective_trace.push_back(objective(delta, score));
        if (!std::isfinite(score))
            throw NumericalError("aspect explainer produced non-finite score");

        const bool hinge_active = cfg.alpha + score - marginal_score > 0.0;
        Vec grad(n, 0.0);
        if (hinge_active) {
            Vec score_grad = scorer::grad_item_input(model, user, edited);
            for (std::size_t i = 0; i < n; ++i) grad[i] = cfg.lambda * score_grad[i];
        }
        double max_step = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            grad[i] += 2.0 * delta[i] + cfg.gamma * (delta[i] < 0.0 ? -1.0 : 0.0);
            double next = std::min(0.0, delta[i] - cfg.lr * grad[i]);
            max_step = std::max(max_step, std::abs(next - delta[i]));
            delta[i] = next;
        }
        if (max_step < 1e-12) {
            ++steps;
            break;
        }
    }

    Explanation e;
    e.method = "counter";
    e.user_id = user_id;
    e.item_id = item_id;
    e.steps_used = steps;
    e.score_before = score_before;
    e.marginal_score = marginal_score;

    // Inert deltas are dropped; validity re-scores with only the reported
    // shifts applied.
    Vec reported(item_vector);
    for (std::size_t i = 0; i < n; ++i) {
        if (delta[i] < -cfg.magnitude_floor) {
            reported[i] += delta[i];
            FeatureEdit edit;
            edit.slot = slot_names.empty() ? "dim:" + std::to_string(i) : slot_names[i];
            edit.kind = EditKind::Shift;
            edit.old_value = fmt(item_vector[i]);
            edit.new_value = fmt(item_vector[i] + delta[i]);
            e.edits.push_back(std::move(edit));
        }
    }
    e.score_after = scorer::forward(model, user, reported);
    e.valid = !e.edits.empty() && e.score_after <= marginal_score;
    return e;
}

Explanation explain_text_weights(const PairContext& ctx, const CounterConfig& cfg,
                                 Diagnostics* diag) {
    ctx.require_in_topk();
    const ItemComposition& item = *ctx.item;
    const std::size_t z = item.token_count();
    if (z == 0) throw Error("item '" + item.item_id + "' has no tokens to explain");

    Vec delta(z, 0.0);  // weight = 1 + delta, clamped to [0, 1]
    std::vector<double> weights(z, 1.0);

    auto objective = [&](double score) {
        double l1 = 0.0;
        for (double d : delta) l1 += std::abs(d);
        return cfg.gamma * l1 + cfg.lambda * hinge_loss(score, ctx.marginal_score, cfg.alpha);
    };

    std::size_t steps = 0;
    for (; steps < cfg.max_steps; ++steps) {
        Vec v = item.assemble_token_weights(weights);
        const double score = ctx.score_item(v);
        if (diag) diag->objective_trace.push_back(objective(score));
        if (!std::isfinite(score))
            throw NumericalError("text explainer produced non-finite score");

        const bool hinge_active = cfg.alpha + score - ctx.marginal_score > 0.0;
        Vec score_grad;
        if (hinge_active) score_grad = scorer::grad_item_input(*ctx.model, *ctx.user, v);

        double max_step = 0.0;
        std::size_t slot = 0;
        for (std::size_t f = 0; f < item.fields.size(); ++f) {
            const auto& field = item.fields[f];
            const std::size_t off = item.field_offset(f);
            const double inv = field.tokens.empty()
                                   ? 0.0
                                   : 1.0 / static_cast<double>(field.tokens.size());
            for (const auto& tok : field.tokens) {
                double g = cfg.gamma * (delta[slot] < 0.0 ? -1.0 : 0.0);
                if (hinge_active) {
                    double dot = 0.0;
                    for (std::size_t d = 0; d < field.dim; ++d)
                        dot += score_grad[off + d] * tok.vector[d];
                    g += cfg.lambda * dot * inv;
                }
                const double next = std::clamp(delta[slot] - cfg.lr * g, -1.0, 0.0);
                max_step = std::max(max_step, std::abs(next - delta[slot]));
                delta[slot] = next;
                weights[slot] = 1.0 + next;
                ++slot;
            }
        }
        if (max_step < 1e-12) {
            ++steps;
            break;
        }
    }

    Explanation e;
    e.method = "counter-text";
    e.user_id = ctx.user_id;
    e.item_id = item.item_id;
    e.steps_used = steps;
    e.score_before = ctx.score_before;
    e.marginal_score = ctx.marginal_score;

    std::vector<std::uint8_t> keep(z, 1);
    for (std::size_t t = 0; t < z; ++t) {
        if (weights[t] < cfg.threshold) {
            keep[t] = 0;
            FeatureEdit edit;
            edit.slot = token_slot_label(item, t);
            edit.kind = EditKind::Remove;
            edit.old_value = item.token_at(t).token;
            e.edits.push_back(std::move(edit));
        }
    }
    const bool all_removed =
        !e.edits.empty() && e.edits.size() == z;
    e.degenerate = all_removed;
    e.score_after = e.edits.empty() ? ctx.score_before : ctx.score_item(item.assemble_masked(keep));
    e.valid = !e.edits.empty() && e.score_after <= ctx.marginal_score;
    return e;
}

}  // namespace cfrex::counter
