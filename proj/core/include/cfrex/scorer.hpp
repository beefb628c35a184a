#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfrex/common.hpp"

namespace cfrex::scorer {

// Two-hidden-layer ranking network over [user; item] with ReLU hidden
// activations and a sigmoid output.
struct ScorerModel {
    std::size_t d_in = 0;
    Matrix w1;  // h1 x d_in
    Vec b1;
    Matrix w2;  // h2 x h1
    Vec b2;
    Vec w3;  // h2
    double b3 = 0.0;

    std::size_t h1() const { return w1.rows; }
    std::size_t h2() const { return w2.rows; }
};

struct TrainConfig {
    double lr = 0.01;
    std::size_t epochs = 50;
    std::size_t batch_size = 256;
    std::size_t hidden1 = 512;
    std::size_t hidden2 = 256;
    std::uint64_t seed = 0;
};

// Symmetric uniform init, bound sqrt(6 / (fan_in + fan_out)) per layer.
ScorerModel init_model(std::size_t d_in, std::size_t hidden1, std::size_t hidden2,
                       std::uint64_t seed);

double forward(const ScorerModel& model, const Vec& user, const Vec& item);
double forward_concat(const ScorerModel& model, const Vec& input);

struct Gradients {
    Matrix w1;
    Vec b1;
    Matrix w2;
    Vec b2;
    Vec w3;
    double b3 = 0.0;
};

struct Sample {
    Vec input;  // [user; item]
    int label = 0;
};

// Exact gradients of mean binary cross-entropy over the batch; the ReLU
// subgradient at 0 is taken as 0.
Gradients backward_params(const ScorerModel& model, const std::vector<Sample>& batch);

// d score / d item-vector at the given pair.
Vec grad_item_input(const ScorerModel& model, const Vec& user, const Vec& item);
Vec grad_input_concat(const ScorerModel& model, const Vec& input);

struct TrainResult {
    ScorerModel model;
    std::vector<double> epoch_loss;
};

TrainResult train(const std::vector<Sample>& samples, const TrainConfig& cfg);

struct ScoredItem {
    std::string item_id;
    double score = 0.0;
};

struct RankedList {
    std::string user_id;
    std::vector<ScoredItem> top;  // size K, scores non-increasing
    std::size_t k = 0;
    double marginal_score = 0.0;  // score of the item at rank K+1
};

// Top K by score, ties broken by ascending item id; requires > K candidates
// so a marginal item exists.
RankedList rank_topk(const ScorerModel& model, const std::string& user_id, const Vec& user,
                     const std::vector<std::pair<std::string, const Vec*>>& candidates,
                     std::size_t k);

// Binary-relevance NDCG@K with log2 discount, averaged over users. Each entry
// pairs one user's ranked ids with that user's positive-id set.
double ndcg(const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>&
                ranked_vs_truth,
            std::size_t k);

struct ModelHeader {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

void save_model(const std::string& path, const ScorerModel& model, const ModelHeader& header);
ScorerModel load_model(const std::string& path, ModelHeader* header = nullptr);

}  // namespace cfrex::scorer
