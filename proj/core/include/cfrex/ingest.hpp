#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfrex/common.hpp"

namespace cfrex::ingest {

enum class Split { Train, Valid, Test };

const char* split_name(Split s);

struct Interaction {
    std::string user_id;
    std::string item_id;
    int label = 1;  // 1 observed, 0 sampled negative
    Split split = Split::Train;
};

struct SplitPolicy {
    std::size_t min_user_reviews = 5;
    std::size_t min_item_reviews = 10;
    std::size_t min_items_for_eval = 15;
    std::size_t holdout_valid = 5;
    std::size_t holdout_test = 5;
    std::size_t neg_ratio = 5;
    std::uint64_t seed = 0;
};

struct SplitWarning {
    std::string user_id;
    Split split;
    std::size_t wanted;
    std::size_t got;
};

struct SplitResult {
    std::vector<Interaction> interactions;
    std::vector<SplitWarning> warnings;  // users short of negative candidates
};

// Key for one token occurrence: (item_id, field, position).
struct SlotKey {
    std::string item_id;
    std::string field;
    int position = 0;

    bool operator<(const SlotKey& o) const {
        if (item_id != o.item_id) return item_id < o.item_id;
        if (field != o.field) return field < o.field;
        return position < o.position;
    }
    bool operator==(const SlotKey& o) const = default;
    std::string str() const;
};

struct SlotEntry {
    std::string token;
    Vec vector;
};

struct EmbeddingTable {
    std::size_t dim = 0;
    std::map<SlotKey, SlotEntry> entries;

    const SlotEntry* find(const SlotKey& key) const;
};

struct Candidate {
    std::string token;
    Vec vector;
    double logit = 0.0;
};

// Replacement candidates for one token slot; the original token is one of them.
struct CandidateSet {
    std::map<SlotKey, std::vector<Candidate>> slots;
    std::size_t dim = 0;
    std::size_t n_candidates = 5;
};

// Interactions TSV: user_id \t item_id \t timestamp (timestamp optional).
SplitResult load_interactions(const std::string& path, const SplitPolicy& policy);

// Same splitting applied to already-parsed rows; load_interactions delegates here.
struct RawInteraction {
    std::string user_id;
    std::string item_id;
    std::int64_t timestamp = 0;
    std::size_t order = 0;  // file order, tie-break and fallback
};
SplitResult split_interactions(std::vector<RawInteraction> rows, const SplitPolicy& policy);

// Embeddings file: header "dim=<d> count=<n>", then "item:field:pos:token \t v1 .. vd".
EmbeddingTable load_embeddings(const std::string& path);
void save_embeddings(const std::string& path, const EmbeddingTable& table);

// Candidates file: item_id \t field \t position \t token \t logit \t v1 .. vd
CandidateSet load_candidates(const std::string& path);
void save_candidates(const std::string& path, const CandidateSet& set);

// Deterministic unit-norm stand-in for contextual word vectors.
Vec toy_embed(const std::string& token, std::size_t dim, std::uint64_t seed);

}  // namespace cfrex::ingest
