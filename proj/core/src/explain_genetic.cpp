#include "cfrex/explain_genetic.hpp"

#include <algorithm>
#include <numeric>

namespace cfrex::genetic {

void GeneticConfig::validate() const {
    if (population < 2 || population % 2 != 0)
        throw Error("genetic population must be even and >= 2");
    for (double r : {p_one, crossover_rate, mutation_rate, mutation_pop_frac, mutation_gene_frac})
        if (r < 0.0 || r > 1.0) throw Error("genetic rates must lie in [0, 1]");
    if (min_iters > max_iters) throw Error("genetic min_iters must be <= max_iters");
}

double fitness_from_score(double score, std::size_t kept, std::size_t z, double marginal,
                          const GeneticConfig& cfg) {
    const double diff = cfg.alpha + score - marginal;
    // alpha usually keeps the denominator positive; the floor covers the
    // near-zero totals it does not.
    const double first = 1.0 / (cfg.lambda * std::max(diff, 1e-6));
    const std::size_t counted = cfg.count_semantics == CountSemantics::Kept ? kept : z - kept;
    const double frac = static_cast<double>(counted) / static_cast<double>(z);
    const double count_score = score > marginal ? 0.5 * (1.0 - frac) : cfg.beta * frac;
    return first + count_score;
}

double fitness(const PairContext& ctx, const std::vector<std::uint8_t>& genes,
               const GeneticConfig& cfg) {
    const std::size_t z = genes.size();
    const std::size_t kept =
        static_cast<std::size_t>(std::count(genes.begin(), genes.end(), std::uint8_t{1}));
    const double score = ctx.score_item(ctx.item->assemble_masked(genes));
    return fitness_from_score(score, kept, z, ctx.marginal_score, cfg);
}

namespace {

struct Evaluated {
    std::vector<std::uint8_t> genes;
    double fitness = 0.0;
    double score = 0.0;
};

Evaluated evaluate(const PairContext& ctx, std::vector<std::uint8_t> genes,
                   const GeneticConfig& cfg) {
    Evaluated e;
    const std::size_t z = genes.size();
    const std::size_t kept =
        static_cast<std::size_t>(std::count(genes.begin(), genes.end(), std::uint8_t{1}));
    e.score = ctx.score_item(ctx.item->assemble_masked(genes));
    e.fitness = fitness_from_score(e.score, kept, z, ctx.marginal_score, cfg);
    e.genes = std::move(genes);
    return e;
}

}  // namespace

Explanation evolve(const PairContext& ctx, const GeneticConfig& cfg,
                   std::vector<GenerationStats>* trace) {
    cfg.validate();
    ctx.require_in_topk();
    const ItemComposition& item = *ctx.item;
    const std::size_t z = item.token_count();
    if (z == 0) throw Error("item '" + item.item_id + "' has no tokens to explain");

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Evaluated> population;
    population.reserve(cfg.population);
    for (std::size_t i = 0; i < cfg.population; ++i) {
        std::vector<std::uint8_t> genes(z);
        for (auto& g : genes) g = unit(rng) < cfg.p_one ? 1 : 0;
        population.push_back(evaluate(ctx, std::move(genes), cfg));
    }

    // Best-of-history, overall and restricted to counterfactual masks.
    Evaluated best_overall = population.front();
    bool have_valid = false;
    Evaluated best_valid;
    auto consider = [&](const Evaluated& e) {
        if (e.fitness > best_overall.fitness) best_overall = e;
        if (e.score <= ctx.marginal_score && (!have_valid || e.fitness > best_valid.fitness)) {
            best_valid = e;
            have_valid = true;
        }
    };
    for (const auto& e : population) consider(e);

    std::size_t generations = 0;
    for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
        if (iter >= cfg.min_iters && best_overall.fitness > cfg.fitness_stop) break;
        ++generations;

        // Fitness-proportional selection.
        double total = 0.0;
        for (const auto& e : population) total += e.fitness;
        std::vector<Evaluated> selected;
        selected.reserve(cfg.population);
        for (std::size_t i = 0; i < cfg.population; ++i) {
            double pick = unit(rng) * total;
            std::size_t idx = 0;
            for (; idx + 1 < population.size(); ++idx) {
                pick -= population[idx].fitness;
                if (pick <= 0.0) break;
            }
            selected.push_back(population[idx]);
        }

        // Single-point crossover on adjacent pairs.
        std::vector<std::vector<std::uint8_t>> next_genes;
        next_genes.reserve(cfg.population);
        for (std::size_t i = 0; i + 1 < selected.size(); i += 2) {
            auto a = selected[i].genes;
            auto b = selected[i + 1].genes;
            if (z > 1 && unit(rng) < cfg.crossover_rate) {
                std::uniform_int_distribution<std::size_t> cut(1, z - 1);
                const std::size_t point = cut(rng);
                for (std::size_t gidx = point; gidx < z; ++gidx) std::swap(a[gidx], b[gidx]);
            }
            next_genes.push_back(std::move(a));
            next_genes.push_back(std::move(b));
        }

        // Mutation gates per chromosome, on at most mutation_pop_frac of the
        // population, flipping at most mutation_gene_frac of the genes.
        const std::size_t exposed = static_cast<std::size_t>(
            static_cast<double>(cfg.population) * cfg.mutation_pop_frac);
        std::vector<std::size_t> order(cfg.population);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t max_flips =
            std::max<std::size_t>(1, static_cast<std::size_t>(cfg.mutation_gene_frac *
                                                              static_cast<double>(z)));
        for (std::size_t i = 0; i < exposed; ++i) {
            if (unit(rng) >= cfg.mutation_rate) continue;
            auto& genes = next_genes[order[i]];
            std::uniform_int_distribution<std::size_t> nflips(1, max_flips);
            std::uniform_int_distribution<std::size_t> pos(0, z - 1);
            const std::size_t flips = nflips(rng);
            for (std::size_t f = 0; f < flips; ++f) {
                const std::size_t p = pos(rng);
                genes[p] ^= 1;
            }
        }

        population.clear();
        for (auto& genes : next_genes) population.push_back(evaluate(ctx, std::move(genes), cfg));
        for (const auto& e : population) consider(e);

        if (trace) {
            double sum = 0.0;
            for (const auto& e : population) sum += e.fitness;
            trace->push_back({generations, best_overall.fitness,
                              sum / static_cast<double>(population.size())});
        }
    }

    Explanation result;
    result.method = "genetic";
    result.user_id = ctx.user_id;
    result.item_id = item.item_id;
    result.steps_used = generations;
    result.score_before = ctx.score_before;
    result.marginal_score = ctx.marginal_score;

    const Evaluated& chosen = have_valid ? best_valid : best_overall;
    for (std::size_t t = 0; t < z; ++t) {
        if (chosen.genes[t]) continue;
        FeatureEdit edit;
        edit.slot = token_slot_label(item, t);
        edit.kind = EditKind::Remove;
        edit.old_value = item.token_at(t).token;
        result.edits.push_back(std::move(edit));
    }
    result.degenerate = !result.edits.empty() && result.edits.size() == z;
    // Independent re-score of the chosen mask, not the cached fitness score.
    result.score_after = result.edits.empty()
                             ? ctx.score_before
                             : ctx.score_item(item.assemble_masked(chosen.genes));
    result.valid = have_valid && !result.edits.empty() &&
                   result.score_after <= ctx.marginal_score;
    return result;
}

}  // namespace cfrex::genetic
