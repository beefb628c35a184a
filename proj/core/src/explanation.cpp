#include "cfrex/explanation.hpp"

#include <fstream>

#include "json.hpp"

namespace cfrex {

using nlohmann::json;

const char* edit_kind_name(EditKind k) {
    switch (k) {
        case EditKind::Remove: return "remove";
        case EditKind::Replace: return "replace";
        case EditKind::Shift: return "shift";
    }
    return "?";
}

EditKind edit_kind_from_name(const std::string& name) {
    if (name == "remove") return EditKind::Remove;
    if (name == "replace") return EditKind::Replace;
    if (name == "shift") return EditKind::Shift;
    throw Error("unknown edit kind '" + name + "'");
}

std::string to_jsonl(const Explanation& e) {
    json j;
    j["method"] = e.method;
    j["user_id"] = e.user_id;
    j["item_id"] = e.item_id;
    j["valid"] = e.valid;
    if (e.degenerate) j["degenerate"] = true;
    if (e.relaxation_gap) j["relaxation_gap"] = true;
    j["steps_used"] = e.steps_used;
    j["score_before"] = e.score_before;
    j["score_after"] = e.score_after;
    j["marginal_score"] = e.marginal_score;
    j["edits"] = json::array();
    for (const auto& edit : e.edits)
        j["edits"].push_back({{"slot", edit.slot},
                              {"kind", edit_kind_name(edit.kind)},
                              {"old", edit.old_value},
                              {"new", edit.new_value}});
    return j.dump();
}

Explanation explanation_from_json(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw Error("bad explanation record: " + std::string(e.what()));
    }
    Explanation e;
    e.method = j.at("method").get<std::string>();
    e.user_id = j.at("user_id").get<std::string>();
    e.item_id = j.at("item_id").get<std::string>();
    e.valid = j.at("valid").get<bool>();
    e.degenerate = j.value("degenerate", false);
    e.relaxation_gap = j.value("relaxation_gap", false);
    e.steps_used = j.value("steps_used", 0u);
    e.score_before = j.value("score_before", 0.0);
    e.score_after = j.value("score_after", 0.0);
    e.marginal_score = j.value("marginal_score", 0.0);
    for (const auto& edit : j.value("edits", json::array())) {
        FeatureEdit fe;
        fe.slot = edit.at("slot").get<std::string>();
        fe.kind = edit_kind_from_name(edit.at("kind").get<std::string>());
        fe.old_value = edit.value("old", "");
        fe.new_value = edit.value("new", "");
        e.edits.push_back(std::move(fe));
    }
    return e;
}

void save_explanations(const std::string& path, const std::vector<Explanation>& explanations) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write explanations file: " + path);
    for (const auto& e : explanations) out << to_jsonl(e) << "\n";
}

std::vector<Explanation> load_explanations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open explanations file: " + path);
    std::vector<Explanation> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;  // provenance/comment lines
        out.push_back(explanation_from_json(line));
    }
    return out;
}

std::string token_slot_label(const ItemComposition& item, std::size_t slot) {
    auto [f, p] = item.token_location(slot);
    return item.fields[f].name + ":" + std::to_string(p) + ":" + item.fields[f].tokens[p].token;
}

}  // namespace cfrex
