#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cfrex/explanation.hpp"
#include "cfrex/scorer.hpp"

namespace cfrex::metrics {

struct GroundTruthReview {
    std::string user_id;
    std::string item_id;
    std::set<std::string> tokens;  // lowercased, deduplicated
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Precision/recall/F1 of the explanation feature set against the user's
// review tokens; undefined (nullopt) when the explanation set is empty.
std::optional<Prf> user_based_prf(const std::set<std::string>& explanation_features,
                                  const std::set<std::string>& ground_truth);

struct UserContext {
    Vec user;
    std::vector<std::pair<std::string, const Vec*>> candidates;  // full ranking pool
};

struct PnPsInputs {
    const scorer::ScorerModel* model = nullptr;
    std::size_t k = 5;
    std::map<std::string, UserContext> users;              // by user id
    std::map<std::string, const ItemComposition*> items;    // by item id
};

struct PnPsResult {
    double pn = 0.0;
    double ps = 0.0;
    double fns = 0.0;
    std::size_t evaluated = 0;  // valid explanations entering the averages
    std::vector<std::pair<bool, bool>> flags;  // per evaluated pair (pn, ps)
};

// Necessity: removing exactly the explanation slots pushes the item out of
// the user's top-K. Sufficiency: keeping only the explanation slots retains
// it. Both re-rank through rank_topk on the user's full candidate list.
PnPsResult pn_ps(const PnPsInputs& inputs, const std::vector<Explanation>& explanations);

// Per-pair stability: mean pairwise Jaccard similarity across runs; two
// empty sets count as identical.
double stability(const std::vector<std::set<std::string>>& runs);

struct FoundStats {
    double found_rate = 0.0;
    std::optional<double> features_avg;  // absent when no explanation is valid
    std::size_t attempted = 0;
    std::size_t valid = 0;
};

FoundStats found_rate_and_avg(const std::vector<Explanation>& explanations);

// Explanation feature set used by the user-based and stability metrics:
// token strings for textual edits, slot names otherwise.
std::set<std::string> explanation_features(const Explanation& e);

struct PairRow {
    std::string user_id;
    std::string item_id;
    std::optional<double> precision, recall, f1;
    std::optional<bool> pn_flag, ps_flag;
    std::size_t n_features = 0;
    bool found = false;
};

struct EvalReport {
    std::vector<PairRow> rows;
    std::optional<double> precision, recall, f1;
    std::optional<double> pn, ps, fns;
    double found_rate = 0.0;
    std::optional<double> features_avg;
    std::optional<double> stability;
    std::optional<double> ndcg;
    std::size_t prf_excluded = 0;  // pairs with empty explanation sets

    // Recompute aggregates from rows (pn/ps/fns, prf means, found stats).
    void aggregate();
};

void save_report(const std::string& path, const EvalReport& report);
EvalReport load_report(const std::string& path);

}  // namespace cfrex::metrics
