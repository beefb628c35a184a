#include "cfrex/metrics.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace cfrex::metrics {

using nlohmann::json;

std::optional<Prf> user_based_prf(const std::set<std::string>& explanation_features,
                                  const std::set<std::string>& ground_truth) {
    if (explanation_features.empty()) return std::nullopt;
    std::size_t hits = 0;
    for (const auto& e : explanation_features)
        if (ground_truth.count(e)) ++hits;
    Prf out;
    out.precision = static_cast<double>(hits) / static_cast<double>(explanation_features.size());
    out.recall = ground_truth.empty()
                     ? 0.0
                     : static_cast<double>(hits) / static_cast<double>(ground_truth.size());
    out.f1 = out.precision + out.recall > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

std::set<std::string> explanation_features(const Explanation& e) {
    std::set<std::string> out;
    for (const auto& edit : e.edits) {
        // Token slots are labeled field:pos:token; the token is the feature.
        if (edit.kind != EditKind::Shift && !edit.old_value.empty() &&
            edit.slot.find(':') != std::string::npos)
            out.insert(edit.old_value);
        else
            out.insert(edit.slot);
    }
    return out;
}

namespace {

struct ParsedEdits {
    std::vector<std::size_t> token_slots;
    std::vector<std::string> categorical_names;
    std::map<std::size_t, double> continuous_shift;  // dim -> scaled delta
};

std::optional<std::size_t> find_token_slot(const ItemComposition& item, const std::string& label) {
    for (std::size_t t = 0; t < item.token_count(); ++t)
        if (token_slot_label(item, t) == label) return t;
    return std::nullopt;
}

ParsedEdits parse_edits(const ItemComposition& item, const Explanation& e) {
    ParsedEdits out;
    for (const auto& edit : e.edits) {
        if (edit.kind == EditKind::Shift) {
            auto it = std::find(item.continuous_names.begin(), item.continuous_names.end(),
                                edit.slot);
            std::size_t dim;
            if (it != item.continuous_names.end()) {
                dim = static_cast<std::size_t>(it - item.continuous_names.begin());
            } else if (edit.slot.rfind("dim:", 0) == 0) {
                dim = std::stoul(edit.slot.substr(4));
            } else {
                throw Error("unknown continuous slot '" + edit.slot + "'");
            }
            if (dim >= item.continuous.size())
                throw Error("shift slot '" + edit.slot + "' is outside the continuous block");
            const double sd = dim < item.continuous_std.size() ? item.continuous_std[dim] : 1.0;
            out.continuous_shift[dim] =
                (std::stod(edit.new_value) - std::stod(edit.old_value)) / sd;
            continue;
        }
        if (auto slot = find_token_slot(item, edit.slot)) {
            out.token_slots.push_back(*slot);
            continue;
        }
        bool is_cat = false;
        for (const auto& cat : item.categoricals)
            if (cat.name == edit.slot) {
                is_cat = true;
                break;
            }
        if (!is_cat)
            throw Error("edit slot '" + edit.slot + "' matches no feature of item '" +
                        item.item_id + "'");
        out.categorical_names.push_back(edit.slot);
    }
    return out;
}

// Removal semantics: explanation tokens dropped (renormalized mean),
// explanation categoricals to baseline, explanation shifts applied.
Vec apply_pn(const ItemComposition& item, const ParsedEdits& edits) {
    ItemComposition::Edits e;
    if (!edits.token_slots.empty()) {
        e.token_keep.assign(item.token_count(), 1);
        for (std::size_t t : edits.token_slots) e.token_keep[t] = 0;
    }
    if (!edits.categorical_names.empty()) {
        e.categorical_choice.assign(item.categoricals.size(), -1);
        for (std::size_t c = 0; c < item.categoricals.size(); ++c)
            for (const auto& name : edits.categorical_names)
                if (item.categoricals[c].name == name)
                    e.categorical_choice[c] = item.categoricals[c].baseline_index;
    }
    if (!edits.continuous_shift.empty()) {
        e.continuous_shift.assign(item.continuous.size(), 0.0);
        for (const auto& [dim, shift] : edits.continuous_shift) e.continuous_shift[dim] = shift;
    }
    return item.assemble_edited(e);
}

// Keep-only semantics: non-explanation tokens dropped, non-explanation
// categoricals to baseline, non-explanation continuous dims to the dataset
// mean (scaled zero).
Vec apply_ps(const ItemComposition& item, const ParsedEdits& edits) {
    ItemComposition::Edits e;
    e.token_keep.assign(item.token_count(), 0);
    for (std::size_t t : edits.token_slots) e.token_keep[t] = 1;
    e.categorical_choice.assign(item.categoricals.size(), -1);
    for (std::size_t c = 0; c < item.categoricals.size(); ++c) {
        bool in_explanation = false;
        for (const auto& name : edits.categorical_names)
            if (item.categoricals[c].name == name) in_explanation = true;
        if (!in_explanation) e.categorical_choice[c] = item.categoricals[c].baseline_index;
    }
    Vec v = item.assemble_edited(e);
    for (std::size_t i = 0; i < item.continuous.size(); ++i)
        if (!edits.continuous_shift.count(i)) v[i] = 0.0;
    return v;
}

bool in_topk(const scorer::ScorerModel& model, const UserContext& user,
             const std::string& item_id, const Vec& edited, std::size_t k) {
    std::vector<std::pair<std::string, const Vec*>> candidates = user.candidates;
    bool found = false;
    for (auto& [id, vec] : candidates)
        if (id == item_id) {
            vec = &edited;
            found = true;
        }
    if (!found) throw Error("item '" + item_id + "' not among the user's candidates");
    auto ranked = scorer::rank_topk(model, "", user.user, candidates, k);
    for (const auto& entry : ranked.top)
        if (entry.item_id == item_id) return true;
    return false;
}

}  // namespace

PnPsResult pn_ps(const PnPsInputs& inputs, const std::vector<Explanation>& explanations) {
    if (!inputs.model) throw Error("pn_ps: model required");
    PnPsResult out;
    double pn_sum = 0.0, ps_sum = 0.0;
    for (const auto& e : explanations) {
        if (!e.valid) continue;  // found-rate accounts for these
        auto user_it = inputs.users.find(e.user_id);
        auto item_it = inputs.items.find(e.item_id);
        if (user_it == inputs.users.end() || item_it == inputs.items.end())
            throw Error("pn_ps: missing context for pair (" + e.user_id + ", " + e.item_id + ")");
        const ItemComposition& item = *item_it->second;
        ParsedEdits edits = parse_edits(item, e);
        const bool pn_flag = !in_topk(*inputs.model, user_it->second, e.item_id,
                                      apply_pn(item, edits), inputs.k);
        const bool ps_flag = in_topk(*inputs.model, user_it->second, e.item_id,
                                     apply_ps(item, edits), inputs.k);
        out.flags.emplace_back(pn_flag, ps_flag);
        pn_sum += pn_flag;
        ps_sum += ps_flag;
        ++out.evaluated;
    }
    if (out.evaluated) {
        out.pn = pn_sum / static_cast<double>(out.evaluated);
        out.ps = ps_sum / static_cast<double>(out.evaluated);
        out.fns = out.pn + out.ps > 0.0 ? 2.0 * out.pn * out.ps / (out.pn + out.ps) : 0.0;
    }
    return out;
}

double stability(const std::vector<std::set<std::string>>& runs) {
    const std::size_t n = runs.size();
    if (n < 2) throw Error("stability needs at least 2 runs");
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
            if (k == l) continue;
            std::size_t inter = 0;
            for (const auto& f : runs[k])
                if (runs[l].count(f)) ++inter;
            const std::size_t uni = runs[k].size() + runs[l].size() - inter;
            total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        }
    }
    return total / static_cast<double>(n * (n - 1));
}

FoundStats found_rate_and_avg(const std::vector<Explanation>& explanations) {
    FoundStats out;
    out.attempted = explanations.size();
    std::size_t feature_total = 0;
    for (const auto& e : explanations) {
        if (!e.valid) continue;
        ++out.valid;
        feature_total += e.edits.size();
    }
    if (out.attempted)
        out.found_rate = static_cast<double>(out.valid) / static_cast<double>(out.attempted);
    if (out.valid)
        out.features_avg = static_cast<double>(feature_total) / static_cast<double>(out.valid);
    return out;
}

void EvalReport::aggregate() {
    double p = 0.0, r = 0.0, f = 0.0;
    std::size_t n_prf = 0;
    double pn_sum = 0.0, ps_sum = 0.0;
    std::size_t n_flags = 0;
    std::size_t n_valid = 0, n_features = 0;
    prf_excluded = 0;
    for (const auto& row : rows) {
        if (row.precision) {
            p += *row.precision;
            r += *row.recall;
            f += *row.f1;
            ++n_prf;
        } else {
            ++prf_excluded;
        }
        if (row.pn_flag) {
            pn_sum += *row.pn_flag;
            ps_sum += *row.ps_flag;
            ++n_flags;
        }
        if (row.found) {
            ++n_valid;
            n_features += row.n_features;
        }
    }
    if (n_prf) {
        precision = p / n_prf;
        recall = r / n_prf;
        f1 = f / n_prf;
    }
    if (n_flags) {
        pn = pn_sum / n_flags;
        ps = ps_sum / n_flags;
        fns = *pn + *ps > 0.0 ? 2.0 * *pn * *ps / (*pn + *ps) : 0.0;
    }
    found_rate = rows.empty() ? 0.0 : static_cast<double>(n_valid) / rows.size();
    features_avg = n_valid ? std::optional<double>(static_cast<double>(n_features) / n_valid)
                           : std::nullopt;
}

namespace {

json opt_to_json(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

std::optional<double> opt_from_json(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

void save_report(const std::string& path, const EvalReport& report) {
    json j;
    j["aggregates"] = {
        {"precision", opt_to_json(report.precision)},
        {"recall", opt_to_json(report.recall)},
        {"f1", opt_to_json(report.f1)},
        {"pn", opt_to_json(report.pn)},
        {"ps", opt_to_json(report.ps)},
        {"fns", opt_to_json(report.fns)},
        {"found_rate", report.found_rate},
        {"features_avg", opt_to_json(report.features_avg)},
        {"stability", opt_to_json(report.stability)},
        {"ndcg", opt_to_json(report.ndcg)},
        {"prf_excluded", report.prf_excluded},
    };
    j["rows"] = json::array();
    for (const auto& row : report.rows) {
        json r;
        r["user_id"] = row.user_id;
        r["item_id"] = row.item_id;
        r["precision"] = opt_to_json(row.precision);
        r["recall"] = opt_to_json(row.recall);
        r["f1"] = opt_to_json(row.f1);
        r["pn_flag"] = row.pn_flag ? json(*row.pn_flag) : json(nullptr);
        r["ps_flag"] = row.ps_flag ? json(*row.ps_flag) : json(nullptr);
        r["n_features"] = row.n_features;
        r["found"] = row.found;
        j["rows"].push_back(std::move(r));
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write report file: " + path);
    out << j.dump(2) << "\n";
}

EvalReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open report file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("report parse error: " + std::string(e.what()));
    }
    EvalReport report;
    const json& a = j.at("aggregates");
    report.precision = opt_from_json(a, "precision");
    report.recall = opt_from_json(a, "recall");
    report.f1 = opt_from_json(a, "f1");
    report.pn = opt_from_json(a, "pn");
    report.ps = opt_from_json(a, "ps");
    report.fns = opt_from_json(a, "fns");
    report.found_rate = a.value("found_rate", 0.0);
    report.features_avg = opt_from_json(a, "features_avg");
    report.stability = opt_from_json(a, "stability");
    report.ndcg = opt_from_json(a, "ndcg");
    report.prf_excluded = a.value("prf_excluded", 0u);
    for (const auto& r : j.value("rows", json::array())) {
        PairRow row;
        row.user_id = r.at("user_id").get<std::string>();
        row.item_id = r.at("item_id").get<std::string>();
        row.precision = opt_from_json(r, "precision");
        row.recall = opt_from_json(r, "recall");
        row.f1 = opt_from_json(r, "f1");
        if (!r.at("pn_flag").is_null()) row.pn_flag = r.at("pn_flag").get<bool>();
        if (!r.at("ps_flag").is_null()) row.ps_flag = r.at("ps_flag").get<bool>();
        row.n_features = r.value("n_features", 0u);
        row.found = r.value("found", false);
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace cfrex::metrics
