#include "doctest.h"

#include <random>

#include "cfrex/explain_gumbel.hpp"
#include "fixtures.hpp"

using namespace cfrex;
using namespace cfrex::gumbel;

namespace {

// Tokens are basis vectors; the candidate list for each slot holds the
// original plus its negation, so a replacement can flip the score exactly.
struct GumbelFixture {
    testsupport::PairFixture pair;
    ingest::CandidateSet candidates;
    std::vector<Vec> storage;

    GumbelFixture(std::size_t n_tokens, const Vec& field_weights, double marginal,
                  double alt_logit = 0.9) {
        ItemComposition item;
        item.item_id = "i1";
        ItemComposition::Field field;
        field.name = "review";
        field.dim = n_tokens;
        for (std::size_t t = 0; t < n_tokens; ++t) {
            Vec v(n_tokens, 0.0);
            v[t] = 1.0;
            field.tokens.push_back({"tok" + std::to_string(t), v});
        }
        item.fields.push_back(std::move(field));
        pair.model = testsupport::planted_model(0, field_weights, 0.0);
        pair.item = std::move(item);
        pair.marginal = marginal;
        pair.finalize();

        candidates.dim = n_tokens;
        candidates.n_candidates = 2;
        for (std::size_t t = 0; t < n_tokens; ++t) {
            Vec neg(n_tokens, 0.0);
            neg[t] = -1.0;
            storage.push_back(std::move(neg));
        }
        for (std::size_t t = 0; t < n_tokens; ++t) {
            ingest::SlotKey key{"i1", "review", static_cast<int>(t)};
            candidates.slots[key] = {
                {"tok" + std::to_string(t), pair.item.fields[0].tokens[t].vector, 0.9},
                {"neg" + std::to_string(t), storage[t], alt_logit}};
        }
    }
};

}  // namespace

TEST_CASE("relaxed rows are probability distributions") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int row = 0; row < 1000; ++row) {
        Vec theta(7), noise(7);
        for (auto& x : theta) x = u(rng);
        for (auto& x : noise) x = u(rng);
        Vec pi = gumbel_sample(theta, 2.0, noise);
        double total = 0.0;
        for (double p : pi) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            total += p;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(gumbel_sample({1.0}, 2.0, {1.0, 2.0}), DimensionError);
}

TEST_CASE("equal logits relax to the uniform distribution") {
    Vec pi = gumbel_sample(Vec(5, 0.7), 2.0, Vec(5, 0.0));
    for (double p : pi) CHECK(p == doctest::Approx(0.2));
}

TEST_CASE("low temperature concentrates the mass") {
    Vec theta = {1.0, 0.0, 0.0};
    Vec hot = gumbel_sample(theta, 10.0, Vec(3, 0.0));
    Vec cold = gumbel_sample(theta, 0.05, Vec(3, 0.0));
    CHECK(cold[0] > hot[0]);
    CHECK(cold[0] > 0.999);
    CHECK(hot[0] < 0.5);
}

TEST_CASE("relaxed token vectors match the naive matrix product") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix pi(3, 4), cands(4, 5);
    for (auto& x : pi.data) x = u(rng);
    for (auto& x : cands.data) x = u(rng);
    Matrix out = relaxed_token_vectors(pi, cands);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t d = 0; d < 5; ++d) {
            double want = 0.0;
            for (std::size_t k = 0; k < 4; ++k) want += pi.at(r, k) * cands.at(k, d);
            CHECK(out.at(r, d) == doctest::Approx(want));
        }
    CHECK_THROWS_AS(relaxed_token_vectors(Matrix(3, 4), Matrix(5, 2)), DimensionError);
}

TEST_CASE("the candidate logit matrix is -1 outside each slot's own block") {
    GumbelFixture fx(3, {1.0, 1.0, 1.0}, 0.5);
    Matrix logits = candidate_logit_matrix(fx.pair.item, fx.candidates);
    REQUIRE(logits.rows == 3);
    REQUIRE(logits.cols == 6);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 6; ++c) {
            if (c / 2 == r)
                CHECK(logits.at(r, c) == doctest::Approx(0.9));
            else
                CHECK(logits.at(r, c) == doctest::Approx(-1.0));
        }
}

TEST_CASE("objective gradients agree with finite differences at fixed noise") {
    GumbelFixture fx(2, {4.0, -1.0}, 0.5);
    GumbelConfig cfg;
    cfg.seed = 11;
    counter::CounterConfig cont;
    ThetaProblem problem(fx.pair.ctx, fx.candidates, cfg, true, cont);

    std::mt19937_64 rng(13);
    auto theta = problem.initial_theta();
    auto noise = problem.sample_noise(rng);
    auto pi_main = problem.relax(theta, problem.sample_noise(rng));
    // Start away from the init so no term sits exactly at a kink, and bias
    // each row toward its own candidates so the logit-mass term is off its
    // floor and contributes a live gradient.
    for (std::size_t r = 0; r < theta.size(); ++r) {
        for (auto& x : theta[r]) x += 0.1 * std::uniform_real_distribution<double>(-1, 1)(rng);
        for (std::size_t k = problem.rows[r].own_begin; k < problem.rows[r].own_end; ++k)
            theta[r][k] += 3.0;
    }
    Vec delta;  // the composition has no continuous block
    auto eval = problem.eval_objective(theta, noise, pi_main, delta, true);
    const double h = 1e-5;
    for (std::size_t r = 0; r < theta.size(); ++r)
        for (std::size_t k = 0; k < theta[r].size(); ++k) {
            auto up = theta, down = theta;
            up[r][k] += h;
            down[r][k] -= h;
            const double fd = (problem.eval_objective(up, noise, pi_main, delta, false).value -
                               problem.eval_objective(down, noise, pi_main, delta, false).value) /
                              (2.0 * h);
            const double got = eval.theta_grad[r][k];
            const double scale = std::max({std::abs(fd), std::abs(got), 1e-6});
            CHECK(std::abs(fd - got) / scale < 1e-3);
        }
}

TEST_CASE("delta gradients agree with finite differences") {
    // Continuous-only composition exercises the mixed objective's shift term.
    testsupport::PairFixture fx;
    fx.model = testsupport::planted_model(0, Vec{3.0, -2.0}, 0.0);
    fx.item.item_id = "c1";
    fx.item.continuous = {0.8, 0.1};
    fx.item.continuous_names = {"a", "b"};
    fx.marginal = 0.5;
    fx.finalize();

    ingest::CandidateSet empty_cands;
    GumbelConfig cfg;
    counter::CounterConfig cont;
    ThetaProblem problem(fx.ctx, empty_cands, cfg, true, cont);
    CHECK(problem.rows.empty());

    Vec delta = {-0.3, -0.05};
    auto eval = problem.eval_objective({}, {}, {}, delta, true);
    const double h = 1e-5;
    for (std::size_t i = 0; i < delta.size(); ++i) {
        Vec up = delta, down = delta;
        up[i] += h;
        down[i] -= h;
        const double fd = (problem.eval_objective({}, {}, {}, up, false).value -
                           problem.eval_objective({}, {}, {}, down, false).value) /
                          (2.0 * h);
        CHECK(eval.delta_grad[i] == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("hardening restricts every slot to its own candidates") {
    GumbelFixture fx(3, {1.0, 1.0, 1.0}, 0.5);
    GumbelConfig cfg;
    counter::CounterConfig cont;
    ThetaProblem problem(fx.pair.ctx, fx.candidates, cfg, false, cont);
    auto theta = problem.initial_theta();
    // Huge mass on a foreign candidate must not leak into slot 0's choice.
    theta[0][4] = 50.0;
    theta[0][1] = 2.0;
    auto choice = problem.harden(theta);
    CHECK(choice[0] == 1);  // slot 0's own alternates are columns 0 and 1
    CHECK(choice[1] == 2);
    CHECK(choice[2] == 4);
}

TEST_CASE("replacement search flips the planted token") {
    GumbelFixture fx(3, {6.0, 0.0, 0.0}, 0.55);
    GumbelConfig cfg;
    cfg.seed = 2;
    auto e = optimize_theta(fx.pair.ctx, fx.candidates, cfg);
    CHECK(e.method == "gumbel");
    CHECK(e.valid);
    bool flipped = false;
    for (const auto& edit : e.edits)
        if (edit.slot == "review:0:tok0" && edit.kind == EditKind::Replace &&
            edit.new_value == "neg0")
            flipped = true;
    CHECK(flipped);
    CHECK(e.score_after <= e.marginal_score);
}

TEST_CASE("replacement search is deterministic per seed") {
    auto run = [](std::uint64_t seed) {
        GumbelFixture fx(3, {5.0, 1.0, 0.0}, 0.55);
        GumbelConfig cfg;
        cfg.seed = seed;
        cfg.max_steps = 60;
        return optimize_theta(fx.pair.ctx, fx.candidates, cfg);
    };
    auto a = run(7), b = run(7);
    REQUIRE(a.edits.size() == b.edits.size());
    for (std::size_t i = 0; i < a.edits.size(); ++i) {
        CHECK(a.edits[i].slot == b.edits[i].slot);
        CHECK(a.edits[i].new_value == b.edits[i].new_value);
    }
    CHECK(a.score_after == doctest::Approx(b.score_after));
}

TEST_CASE("the mixed search on a continuous-only item matches the shift explainer") {
    testsupport::PairFixture fx;
    fx.model = testsupport::planted_model(0, Vec{4.0, 0.5, 0.0}, 0.0);
    fx.item.item_id = "c1";
    fx.item.continuous = {1.0, 0.4, -0.3};
    fx.item.continuous_names = {"a", "b", "c"};
    fx.marginal = 0.5;
    fx.finalize();

    counter::CounterConfig cont;  // alpha 0.2, lambda 100, gamma 1, lr 0.01
    GumbelConfig cfg;
    cfg.lr = cont.lr;
    cfg.alpha = cont.alpha;
    cfg.lambda = cont.lambda;
    cfg.max_steps = cont.max_steps;
    ingest::CandidateSet empty_cands;
    auto mixed = optimize_mixed(fx.ctx, empty_cands, cfg, cont);
    auto direct = counter::explain_aspects(fx.model, "u0", fx.user, "c1", fx.item_vector,
                                           fx.item.continuous_names, fx.marginal, cont);
    CHECK(mixed.method == "mixed");
    CHECK(mixed.steps_used == direct.steps_used);
    REQUIRE(mixed.edits.size() == direct.edits.size());
    for (std::size_t i = 0; i < mixed.edits.size(); ++i) {
        CHECK(mixed.edits[i].slot == direct.edits[i].slot);
        CHECK(mixed.edits[i].old_value == direct.edits[i].old_value);
        CHECK(mixed.edits[i].new_value == direct.edits[i].new_value);
    }
    CHECK(mixed.score_after == doctest::Approx(direct.score_after).epsilon(1e-12));
    CHECK(mixed.valid == direct.valid);
}

TEST_CASE("config validation and missing candidates") {
    GumbelConfig cfg;
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = GumbelConfig{};
    cfg.samples_per_step = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);

    GumbelFixture fx(2, {3.0, 0.0}, 0.5);
    ingest::CandidateSet missing;
    missing.n_candidates = 2;
    CHECK_THROWS_AS(optimize_theta(fx.pair.ctx, missing, GumbelConfig{}), Error);
}
