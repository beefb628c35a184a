#include <benchmark/benchmark.h>

#include <random>

#include "cfrex/explain_counter.hpp"
#include "cfrex/explain_genetic.hpp"
#include "cfrex/explain_gumbel.hpp"
#include "cfrex/scorer.hpp"

using namespace cfrex;

namespace {

Vec random_vec(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Basis-token item plus a model with one heavy dimension, the shape the
// explainers see in practice.
struct BenchPair {
    scorer::ScorerModel model;
    Vec user;
    ItemComposition item;
    Vec item_vector;
    PairContext ctx;
    ingest::CandidateSet candidates;
    std::vector<Vec> storage;

    explicit BenchPair(std::size_t z) {
        ItemComposition it;
        it.item_id = "bench";
        ItemComposition::Field field;
        field.name = "review";
        field.dim = z;
        for (std::size_t t = 0; t < z; ++t) {
            Vec v(z, 0.0);
            v[t] = 1.0;
            field.tokens.push_back({"tok" + std::to_string(t), v});
        }
        it.fields.push_back(std::move(field));
        item = std::move(it);

        std::mt19937_64 rng(17);
        model = scorer::init_model(z, 64, 32, 17);
        // Bias the output up so the pair sits inside the top-K.
        model.b3 = 4.0;
        item_vector = item.assemble();
        ctx.model = &model;
        ctx.user_id = "u";
        ctx.user = &user;
        ctx.item = &item;
        ctx.score_before = scorer::forward(model, user, item_vector);
        ctx.marginal_score = 0.5;

        candidates.dim = z;
        candidates.n_candidates = 4;
        for (std::size_t t = 0; t < z; ++t) {
            ingest::SlotKey key{"bench", "review", static_cast<int>(t)};
            std::vector<ingest::Candidate> list;
            list.push_back({"tok" + std::to_string(t), item.fields[0].tokens[t].vector, 0.9});
            for (int a = 0; a < 3; ++a) {
                storage.push_back(random_vec(rng, z));
                list.push_back({"alt" + std::to_string(a), storage.back(), 0.6});
            }
            candidates.slots[key] = list;
        }
    }
};

void bm_forward(benchmark::State& state) {
    std::mt19937_64 rng(1);
    auto model = scorer::init_model(static_cast<std::size_t>(state.range(0)), 512, 256, 1);
    Vec input = random_vec(rng, model.d_in);
    for (auto _ : state) benchmark::DoNotOptimize(scorer::forward_concat(model, input));
}
BENCHMARK(bm_forward)->Arg(64)->Arg(256);

void bm_backward(benchmark::State& state) {
    std::mt19937_64 rng(2);
    auto model = scorer::init_model(128, 512, 256, 2);
    std::vector<scorer::Sample> batch;
    for (int i = 0; i < 32; ++i) batch.push_back({random_vec(rng, 128), i % 2});
    for (auto _ : state) benchmark::DoNotOptimize(scorer::backward_params(model, batch));
}
BENCHMARK(bm_backward);

void bm_text_explainer(benchmark::State& state) {
    BenchPair pair(static_cast<std::size_t>(state.range(0)));
    auto cfg = counter::CounterConfig::text_defaults();
    cfg.max_steps = 100;
    for (auto _ : state) benchmark::DoNotOptimize(counter::explain_text_weights(pair.ctx, cfg));
}
BENCHMARK(bm_text_explainer)->Arg(8)->Arg(32);

void bm_genetic(benchmark::State& state) {
    BenchPair pair(static_cast<std::size_t>(state.range(0)));
    genetic::GeneticConfig cfg;
    cfg.population = 50;
    cfg.min_iters = 5;
    cfg.max_iters = 5;
    for (auto _ : state) benchmark::DoNotOptimize(genetic::evolve(pair.ctx, cfg));
}
BENCHMARK(bm_genetic)->Arg(8)->Arg(32);

void bm_gumbel(benchmark::State& state) {
    BenchPair pair(static_cast<std::size_t>(state.range(0)));
    gumbel::GumbelConfig cfg;
    cfg.max_steps = 20;
    for (auto _ : state)
        benchmark::DoNotOptimize(gumbel::optimize_theta(pair.ctx, pair.candidates, cfg));
}
BENCHMARK(bm_gumbel)->Arg(8)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
