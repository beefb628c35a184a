#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfrex/explanation.hpp"

namespace cfrex::genetic {

enum class CountSemantics { Kept, Removed };

struct GeneticConfig {
    std::size_t population = 200;
    double p_one = 0.9;  // initial Bernoulli probability of a 1 (kept) gene
    double crossover_rate = 0.99;
    double mutation_rate = 0.10;
    double mutation_pop_frac = 0.5;
    double mutation_gene_frac = 0.10;
    double lambda = 10.0;
    double beta = 10.0;
    double alpha = 1.0;
    double fitness_stop = 1.0;
    std::size_t min_iters = 10;
    std::size_t max_iters = 50;
    std::uint64_t seed = 0;
    CountSemantics count_semantics = CountSemantics::Kept;

    void validate() const;
};

struct Chromosome {
    std::vector<std::uint8_t> genes;  // 1 = token kept
    double fitness = 0.0;
};

struct GenerationStats {
    std::size_t generation = 0;
    double best_fitness = 0.0;
    double mean_fitness = 0.0;
};

// Fitness of a keep-mask: a score-drop reward plus a gene-count term whose
// branch flips on whether the masked item still beats the marginal score.
double fitness(const PairContext& ctx, const std::vector<std::uint8_t>& genes,
               const GeneticConfig& cfg);
double fitness_from_score(double score, std::size_t kept, std::size_t z, double marginal,
                          const GeneticConfig& cfg);

// Full evolutionary search; the explanation removes the tokens whose gene is
// 0 in the best counterfactual chromosome found across all generations.
Explanation evolve(const PairContext& ctx, const GeneticConfig& cfg,
                   std::vector<GenerationStats>* trace = nullptr);

}  // namespace cfrex::genetic
