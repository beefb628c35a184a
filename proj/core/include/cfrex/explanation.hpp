#pragma once

#include <string>
#include <vector>

#include "cfrex/common.hpp"
#include "cfrex/item_composition.hpp"
#include "cfrex/scorer.hpp"

namespace cfrex {

enum class EditKind { Remove, Replace, Shift };

const char* edit_kind_name(EditKind k);
EditKind edit_kind_from_name(const std::string& name);

struct FeatureEdit {
    std::string slot;  // aspect/feature name, or field:position:token for text
    EditKind kind = EditKind::Remove;
    std::string old_value;
    std::string new_value;
};

struct Explanation {
    std::string method;
    std::string user_id;
    std::string item_id;
    std::vector<FeatureEdit> edits;
    bool valid = false;
    bool degenerate = false;       // e.g. every token removed
    bool relaxation_gap = false;   // relaxed objective satisfied, hardened item not
    std::size_t steps_used = 0;
    double score_before = 0.0;
    double score_after = 0.0;
    double marginal_score = 0.0;
};

// One JSON record per line.
std::string to_jsonl(const Explanation& e);
Explanation explanation_from_json(const std::string& line);
void save_explanations(const std::string& path, const std::vector<Explanation>& explanations);
std::vector<Explanation> load_explanations(const std::string& path);

// Everything an explainer needs about one (user, item) pair. The model and
// item data are read-only; each call owns its own optimizer state.
struct PairContext {
    const scorer::ScorerModel* model = nullptr;
    std::string user_id;
    const Vec* user = nullptr;
    const ItemComposition* item = nullptr;
    double score_before = 0.0;
    double marginal_score = 0.0;

    double score_item(const Vec& item_vector) const {
        return scorer::forward(*model, *user, item_vector);
    }
    void require_in_topk() const {
        if (!(score_before > marginal_score))
            throw NotApplicableError("item '" + item->item_id + "' is not in user '" + user_id +
                                     "''s top-K list");
    }
};

// Slot label used for token edits: field:position:token.
std::string token_slot_label(const ItemComposition& item, std::size_t slot);

}  // namespace cfrex
