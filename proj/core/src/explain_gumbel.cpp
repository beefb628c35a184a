#include "cfrex/explain_gumbel.hpp"

#include <algorithm>
#include <sstream>

namespace cfrex::gumbel {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

double gumbel_noise(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u = unit(rng);
    u = std::clamp(u, 1e-300, 1.0 - 1e-16);
    return -std::log(-std::log(u));
}

constexpr double kLogitTotalFloor = 1e-6;

}  // namespace

void GumbelConfig::validate() const {
    if (!(temperature > 0.0)) throw Error("gumbel temperature must be > 0");
    if (!(lr > 0.0)) throw Error("gumbel lr must be > 0");
    if (samples_per_step < 1) throw Error("samples_per_step must be >= 1");
}

Vec gumbel_sample(const Vec& theta_row, double temperature, const Vec& noise) {
    if (theta_row.size() != noise.size())
        throw DimensionError("theta row and noise length mismatch");
    if (theta_row.empty()) throw Error("empty theta row");
    Vec out(theta_row.size());
    double max_v = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = (theta_row[k] + noise[k]) / temperature;
        max_v = std::max(max_v, out[k]);
    }
    double total = 0.0;
    for (auto& x : out) {
        x = std::exp(x - max_v);
        total += x;
    }
    for (auto& x : out) x /= total;
    return out;
}

Matrix relaxed_token_vectors(const Matrix& pi, const Matrix& candidates) {
    if (pi.cols != candidates.rows)
        throw DimensionError("pi cols != candidate rows");
    Matrix out(pi.rows, candidates.cols);
    for (std::size_t r = 0; r < pi.rows; ++r)
        for (std::size_t k = 0; k < pi.cols; ++k) {
            const double p = pi.at(r, k);
            if (p == 0.0) continue;
            const double* cand = candidates.row(k);
            double* dst = out.row(r);
            for (std::size_t d = 0; d < candidates.cols; ++d) dst[d] += p * cand[d];
        }
    return out;
}

Matrix candidate_logit_matrix(const ItemComposition& item,
                              const ingest::CandidateSet& candidates) {
    const std::size_t z = item.token_count();
    const std::size_t n_cand = candidates.n_candidates;
    Matrix logits(z, z * n_cand, -1.0);
    for (std::size_t slot = 0; slot < z; ++slot) {
        auto [f, p] = item.token_location(slot);
        ingest::SlotKey key{item.item_id, item.fields[f].name, static_cast<int>(p)};
        auto it = candidates.slots.find(key);
        if (it == candidates.slots.end())
            throw Error("no replacement candidates for slot '" + key.str() + "'");
        for (std::size_t j = 0; j < it->second.size(); ++j)
            logits.at(slot, slot * n_cand + j) = it->second[j].logit;
    }
    return logits;
}

ThetaProblem::ThetaProblem(const PairContext& pair, const ingest::CandidateSet& candidates,
                           const GumbelConfig& config, bool with_continuous,
                           const counter::CounterConfig& cont_cfg)
    : ctx(&pair), cfg(config), continuous_cfg(cont_cfg), include_continuous(with_continuous) {
    cfg.validate();
    const ItemComposition& item = *pair.item;
    const std::size_t z = item.token_count();
    const std::size_t n_cand = candidates.n_candidates;
    const std::size_t v_total = z * n_cand;

    // Global textual candidate list, slot-major; every textual row spans it.
    std::vector<std::string> all_labels;
    std::vector<const Vec*> all_vectors;
    Vec all_logits;  // own logit at the owner's offset, read per row below
    std::vector<std::vector<double>> own_logits(z);
    all_labels.reserve(v_total);
    all_vectors.reserve(v_total);
    for (std::size_t slot = 0; slot < z; ++slot) {
        auto [f, p] = item.token_location(slot);
        ingest::SlotKey key{item.item_id, item.fields[f].name, static_cast<int>(p)};
        auto it = candidates.slots.find(key);
        if (it == candidates.slots.end())
            throw Error("no replacement candidates for slot '" + key.str() + "'");
        if (it->second.size() != n_cand)
            throw Error("slot '" + key.str() + "' has " + std::to_string(it->second.size()) +
                        " candidates, expected " + std::to_string(n_cand));
        for (const auto& c : it->second) {
            if (c.vector.size() != item.fields[f].dim)
                throw DimensionError("candidate vector dim mismatch for slot '" + key.str() + "'");
            all_labels.push_back(c.token);
            all_vectors.push_back(&c.vector);
            own_logits[slot].push_back(c.logit);
        }
    }

    for (std::size_t slot = 0; slot < z; ++slot) {
        auto [f, p] = item.token_location(slot);
        const auto& field = item.fields[f];
        Row row;
        row.width = v_total;
        row.own_begin = slot * n_cand;
        row.own_end = row.own_begin + n_cand;
        row.textual = true;
        row.region_offset = item.field_offset(f);
        row.region_dim = field.dim;
        row.region_scale = 1.0 / static_cast<double>(field.tokens.size());
        row.labels = all_labels;
        row.vectors = all_vectors;
        row.logits.assign(v_total, -1.0);
        bool found_original = false;
        for (std::size_t j = 0; j < n_cand; ++j) {
            row.logits[row.own_begin + j] = own_logits[slot][j];
            if (!found_original && all_labels[row.own_begin + j] == field.tokens[p].token) {
                row.original = row.own_begin + j;
                found_original = true;
            }
        }
        if (!found_original)
            throw Error("original token '" + field.tokens[p].token +
                        "' missing from its own candidate list");
        rows.push_back(std::move(row));
    }

    for (std::size_t c = 0; c < item.categoricals.size(); ++c) {
        const auto& cat = item.categoricals[c];
        // A one-hot block built with an appended all-zero baseline keeps the
        // baseline out of the choice set; values must stay in the domain.
        std::size_t n_values = cat.encodings.size();
        if (!cat.domain.empty() && cat.domain.back().empty() && n_values == cat.domain.size())
            --n_values;
        if (n_values < 2) continue;  // nothing to replace with
        Row row;
        row.width = n_values;
        row.own_begin = 0;
        row.own_end = n_values;
        row.original = static_cast<std::size_t>(cat.original_index);
        row.textual = false;
        row.region_offset = item.categorical_offset(c);
        row.region_dim = cat.width();
        row.region_scale = 1.0;
        for (std::size_t j = 0; j < n_values; ++j) {
            row.labels.push_back(cat.domain[j]);
            row.vectors.push_back(&cat.encodings[j]);
        }
        rows.push_back(std::move(row));
    }

    base.assign(item.width(), 0.0);
    std::copy(item.continuous.begin(), item.continuous.end(), base.begin());
}

std::vector<Vec> ThetaProblem::initial_theta() const {
    std::vector<Vec> theta;
    theta.reserve(rows.size());
    for (const auto& row : rows) {
        Vec t(row.width, 0.0);
        t[row.original] = 1.0;  // factual choice selected at init
        theta.push_back(std::move(t));
    }
    return theta;
}

std::vector<Vec> ThetaProblem::sample_noise(std::mt19937_64& rng) const {
    std::vector<Vec> noise;
    noise.reserve(rows.size());
    for (const auto& row : rows) {
        Vec g(row.width);
        for (auto& x : g) x = gumbel_noise(rng);
        noise.push_back(std::move(g));
    }
    return noise;
}

std::vector<Vec> ThetaProblem::relax(const std::vector<Vec>& theta,
                                     const std::vector<Vec>& noise) const {
    std::vector<Vec> pi;
    pi.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        pi.push_back(gumbel_sample(theta[r], cfg.temperature, noise[r]));
    return pi;
}

Vec ThetaProblem::assemble_relaxed(const std::vector<Vec>& pi, const Vec& delta) const {
    Vec v = base;
    if (!delta.empty())
        for (std::size_t i = 0; i < delta.size(); ++i) v[i] += delta[i];
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Row& row = rows[r];
        for (std::size_t k = 0; k < row.width; ++k) {
            const double w = row.region_scale * pi[r][k];
            if (w == 0.0) continue;
            const Vec& cand = *row.vectors[k];
            for (std::size_t d = 0; d < row.region_dim; ++d)
                v[row.region_offset + d] += w * cand[d];
        }
    }
    return v;
}

std::vector<std::size_t> ThetaProblem::harden(const std::vector<Vec>& theta) const {
    std::vector<std::size_t> choice(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Row& row = rows[r];
        std::size_t best = row.own_begin;
        for (std::size_t k = row.own_begin + 1; k < row.own_end; ++k)
            if (theta[r][k] > theta[r][best]) best = k;
        choice[r] = best;
    }
    return choice;
}

Vec ThetaProblem::assemble_hard(const std::vector<std::size_t>& choice, const Vec& delta) const {
    Vec v = base;
    if (!delta.empty())
        for (std::size_t i = 0; i < delta.size(); ++i) v[i] += delta[i];
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Row& row = rows[r];
        const Vec& cand = *row.vectors[choice[r]];
        for (std::size_t d = 0; d < row.region_dim; ++d)
            v[row.region_offset + d] += row.region_scale * cand[d];
    }
    return v;
}

ThetaProblem::Eval ThetaProblem::eval_objective(const std::vector<Vec>& theta,
                                                const std::vector<Vec>& noise,
                                                const std::vector<Vec>& pi_main, const Vec& delta,
                                                bool with_gradient) const {
    Eval out;
    std::vector<Vec> pi = relax(theta, noise);
    Vec v = assemble_relaxed(pi, delta);
    out.score = ctx->score_item(v);
    out.hinge = std::max(0.0, cfg.alpha + out.score - ctx->marginal_score);
    const bool hinge_active = cfg.alpha + out.score - ctx->marginal_score > 0.0;

    double logit_total = 0.0;
    bool any_textual = false;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!rows[r].textual) continue;
        any_textual = true;
        for (std::size_t k = 0; k < rows[r].width; ++k)
            logit_total += pi[r][k] * rows[r].logits[k];
    }

    double replace_penalty = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t k = 0; k < rows[r].width; ++k)
            replace_penalty += std::abs(pi_main[r][k] - pi[r][k]);

    out.value = cfg.lambda * out.hinge + cfg.gamma * replace_penalty;
    if (any_textual) out.value += cfg.beta / std::max(logit_total, kLogitTotalFloor);
    if (include_continuous && !delta.empty()) {
        double l2 = 0.0, l1 = 0.0;
        for (double d : delta) {
            l2 += d * d;
            l1 += std::abs(d);
        }
        out.value += l2 + continuous_cfg.gamma * l1;
    }
    if (!with_gradient) return out;

    Vec score_grad;
    if (hinge_active) score_grad = scorer::grad_item_input(*ctx->model, *ctx->user, v);

    out.theta_grad.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Row& row = rows[r];
        // dObj/dpi, then through the softmax Jacobian (1/T) pi (I - pi^T).
        Vec dpi(row.width, 0.0);
        for (std::size_t k = 0; k < row.width; ++k) {
            if (hinge_active) {
                const Vec& cand = *row.vectors[k];
                double dot = 0.0;
                for (std::size_t d = 0; d < row.region_dim; ++d)
                    dot += score_grad[row.region_offset + d] * cand[d];
                dpi[k] += cfg.lambda * row.region_scale * dot;
            }
            if (row.textual && logit_total > kLogitTotalFloor)
                dpi[k] -= cfg.beta * row.logits[k] / (logit_total * logit_total);
            const double diff = pi[r][k] - pi_main[r][k];
            dpi[k] += cfg.gamma * (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0);
        }
        double inner = 0.0;
        for (std::size_t k = 0; k < row.width; ++k) inner += dpi[k] * pi[r][k];
        Vec dtheta(row.width);
        for (std::size_t k = 0; k < row.width; ++k)
            dtheta[k] = pi[r][k] * (dpi[k] - inner) / cfg.temperature;
        out.theta_grad[r] = std::move(dtheta);
    }

    if (include_continuous && !delta.empty()) {
        out.delta_grad.assign(delta.size(), 0.0);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            out.delta_grad[i] = 2.0 * delta[i] +
                                continuous_cfg.gamma * (delta[i] < 0.0 ? -1.0 : 0.0);
            if (hinge_active) out.delta_grad[i] += cfg.lambda * score_grad[i];
        }
    }
    return out;
}

namespace {

Explanation run_optimizer(const PairContext& ctx, const ingest::CandidateSet& candidates,
                          const GumbelConfig& cfg, bool include_continuous,
                          const counter::CounterConfig& cont_cfg, const char* method) {
    ctx.require_in_topk();
    const ItemComposition& item = *ctx.item;
    ThetaProblem problem(ctx, candidates, cfg, include_continuous, cont_cfg);

    std::mt19937_64 rng(cfg.seed);
    std::vector<Vec> theta = problem.initial_theta();
    std::vector<Vec> init_noise = problem.sample_noise(rng);
    std::vector<Vec> pi_main = problem.relax(theta, init_noise);
    Vec delta;
    if (include_continuous) delta.assign(item.continuous.size(), 0.0);

    std::size_t steps = 0;
    double last_hinge = cfg.alpha + ctx.score_before - ctx.marginal_score;
    for (; steps < cfg.max_steps; ++steps) {
        // Fresh noise each step; gradients averaged over samples_per_step draws.
        std::vector<Vec> grad_acc(theta.size());
        for (std::size_t r = 0; r < theta.size(); ++r) grad_acc[r].assign(theta[r].size(), 0.0);
        Vec delta_acc(delta.size(), 0.0);
        double hinge = 0.0;
        for (std::size_t s = 0; s < cfg.samples_per_step; ++s) {
            std::vector<Vec> noise = problem.sample_noise(rng);
            auto eval = problem.eval_objective(theta, noise, pi_main, delta, true);
            if (!std::isfinite(eval.value))
                throw NumericalError("gumbel objective became non-finite");
            hinge += eval.hinge;
            for (std::size_t r = 0; r < theta.size(); ++r)
                for (std::size_t k = 0; k < theta[r].size(); ++k)
                    grad_acc[r][k] += eval.theta_grad[r][k];
            for (std::size_t i = 0; i < delta.size(); ++i) delta_acc[i] += eval.delta_grad[i];
        }
        const double inv = 1.0 / static_cast<double>(cfg.samples_per_step);
        last_hinge = hinge * inv;
        double max_step = 0.0;
        for (std::size_t r = 0; r < theta.size(); ++r)
            for (std::size_t k = 0; k < theta[r].size(); ++k) {
                const double step = cfg.lr * grad_acc[r][k] * inv;
                theta[r][k] -= step;
                max_step = std::max(max_step, std::abs(step));
            }
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double next = std::min(0.0, delta[i] - cfg.lr * delta_acc[i] * inv);
            max_step = std::max(max_step, std::abs(next - delta[i]));
            delta[i] = next;
        }
        if (max_step < 1e-12) {
            ++steps;
            break;
        }
    }

    Explanation e;
    e.method = method;
    e.user_id = ctx.user_id;
    e.item_id = item.item_id;
    e.steps_used = steps;
    e.score_before = ctx.score_before;
    e.marginal_score = ctx.marginal_score;

    std::vector<std::size_t> choice = problem.harden(theta);
    const std::size_t z = item.token_count();
    for (std::size_t r = 0; r < problem.rows.size(); ++r) {
        const auto& row = problem.rows[r];
        if (choice[r] == row.original) continue;
        FeatureEdit edit;
        edit.kind = EditKind::Replace;
        if (row.textual) {
            edit.slot = token_slot_label(item, r);
            edit.old_value = item.token_at(r).token;
        } else {
            const std::size_t c = r - z;
            edit.slot = item.categoricals[c].name;
            edit.old_value = item.categoricals[c].domain[item.categoricals[c].original_index];
        }
        edit.new_value = row.labels[choice[r]];
        e.edits.push_back(std::move(edit));
    }

    // Only shifts past the magnitude floor count as edits or affect the
    // validated item.
    Vec reported_delta;
    if (include_continuous) {
        reported_delta.assign(delta.size(), 0.0);
        for (std::size_t i = 0; i < delta.size(); ++i) {
            if (delta[i] >= -cont_cfg.magnitude_floor) continue;
            reported_delta[i] = delta[i];
            FeatureEdit edit;
            edit.kind = EditKind::Shift;
            edit.slot = i < item.continuous_names.size() ? item.continuous_names[i]
                                                         : "dim:" + std::to_string(i);
            const double mean = i < item.continuous_mean.size() ? item.continuous_mean[i] : 0.0;
            const double sd = i < item.continuous_std.size() ? item.continuous_std[i] : 1.0;
            edit.old_value = fmt(mean + sd * item.continuous[i]);
            edit.new_value = fmt(mean + sd * (item.continuous[i] + delta[i]));
            e.edits.push_back(std::move(edit));
        }
    }

    e.score_after = ctx.score_item(problem.assemble_hard(choice, reported_delta));
    e.valid = !e.edits.empty() && e.score_after <= ctx.marginal_score;
    if (!e.valid && last_hinge <= 0.0) e.relaxation_gap = true;
    return e;
}

}  // namespace

Explanation optimize_theta(const PairContext& ctx, const ingest::CandidateSet& candidates,
                           const GumbelConfig& cfg) {
    return run_optimizer(ctx, candidates, cfg, false, counter::CounterConfig{}, "gumbel");
}

Explanation optimize_mixed(const PairContext& ctx, const ingest::CandidateSet& candidates,
                           const GumbelConfig& cfg, const counter::CounterConfig& continuous_cfg) {
    return run_optimizer(ctx, candidates, cfg, true, continuous_cfg, "mixed");
}

}  // namespace cfrex::gumbel
