#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cfrex/explain_counter.hpp"
#include "cfrex/explain_genetic.hpp"
#include "cfrex/explain_gumbel.hpp"
#include "cfrex/ingest.hpp"
#include "cfrex/metrics.hpp"
#include "cfrex/scorer.hpp"
#include "cfrex/vectorize.hpp"

namespace cfrex::cli {

struct RunConfig {
    std::string interactions_path;
    std::string embeddings_path;
    std::string candidates_path;
    std::string schema_path;
    std::string items_path;  // optional TSV of continuous/categorical values
    std::string ground_truth_path;
    std::string model_path;
    std::string output_dir;
    std::size_t k = 5;
    std::string method = "counter-text";
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    bool with_stability = false;
    std::size_t stability_runs = 10;
    std::size_t stability_pairs = 10;

    ingest::SplitPolicy split;
    scorer::TrainConfig train;
    counter::CounterConfig counter_cfg;
    counter::CounterConfig counter_text_cfg = counter::CounterConfig::text_defaults();
    genetic::GeneticConfig genetic_cfg;
    gumbel::GumbelConfig gumbel_cfg;

    std::uint64_t config_hash = 0;  // over the loaded config document
};

RunConfig load_config(const std::string& path);

// Assembled artifacts shared by the commands.
struct Pipeline {
    RunConfig cfg;
    vectorize::FeatureSchema schema;
    ingest::EmbeddingTable embeddings;
    ingest::SplitResult split;
    std::map<std::string, vectorize::ItemRecord> items;  // by item id
    std::map<std::string, Vec> user_vectors;             // eval users only
    // Per user, the test-split ranking pool (positives + sampled negatives).
    std::map<std::string, std::vector<std::string>> test_pool;
    std::map<std::string, std::vector<std::string>> test_positives;
};

Pipeline build_pipeline(const RunConfig& cfg);

struct EligiblePair {
    std::string user_id;
    std::string item_id;
    double score_before = 0.0;
    double marginal_score = 0.0;
};

// Test positives currently inside the user's top-K over the test pool.
std::vector<EligiblePair> eligible_pairs(const Pipeline& p, const scorer::ScorerModel& model);

Explanation explain_pair(const Pipeline& p, const scorer::ScorerModel& model,
                         const EligiblePair& pair, const std::string& method,
                         std::uint64_t seed_override);

std::vector<scorer::Sample> training_samples(const Pipeline& p, ingest::Split split);

double test_ndcg(const Pipeline& p, const scorer::ScorerModel& model);

std::map<std::pair<std::string, std::string>, std::set<std::string>> load_ground_truth(
    const std::string& path);

int log_level();  // 0 quiet, 1 info, 2 debug (CFREX_LOG)
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace cfrex::cli
