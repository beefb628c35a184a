#pragma once

#include <string>
#include <vector>

#include "cfrex/explanation.hpp"
#include "cfrex/ingest.hpp"
#include "cfrex/scorer.hpp"
#include "cfrex/vectorize.hpp"

namespace cfrex::testsupport {

// Network whose output is exactly sigmoid(item_weights . item + bias); the
// user half of the input is ignored. Layer 1 is [I; -I] so ReLU passes the
// signal through, layer 2 adds a large bias to keep its ReLU active.
scorer::ScorerModel planted_model(std::size_t d_user, const Vec& item_weights, double bias,
                                  double passthrough_bias = 1e4);

// Single-field composition with toy embeddings for the given tokens.
ItemComposition text_item(const std::string& id, const std::vector<std::string>& tokens,
                          std::size_t dim, std::uint64_t seed);

// Owns the storage a PairContext points into.
struct PairFixture {
    scorer::ScorerModel model;
    Vec user;
    ItemComposition item;
    Vec item_vector;
    double marginal = 0.0;
    PairContext ctx;

    void finalize(const std::string& user_id = "u0");
};

// Replacement candidates per token slot: the original first, then toy
// alternatives, with logits in (0.2, 1).
ingest::CandidateSet candidates_for(const ItemComposition& item, std::size_t n_candidates,
                                    std::uint64_t seed);

std::string make_temp_dir(const std::string& tag);

// Small end-to-end dataset (interactions, schema, items, embeddings,
// candidates, ground truth) plus a run config pointing at it.
struct CliDataset {
    std::string dir;
    std::string config_path;
};
CliDataset write_cli_dataset(const std::string& tag, std::uint64_t seed);

}  // namespace cfrex::testsupport
