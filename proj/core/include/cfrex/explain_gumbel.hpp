#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfrex/explain_counter.hpp"
#include "cfrex/explanation.hpp"
#include "cfrex/ingest.hpp"

namespace cfrex::gumbel {

struct GumbelConfig {
    double temperature = 2.0;
    double lr = 0.5;
    double alpha = 0.2;
    double lambda = 100.0;
    double beta = 1000.0;
    double gamma = 1.0;
    std::size_t max_steps = 500;
    std::size_t samples_per_step = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

// One row of relaxed probabilities: softmax((theta + noise) / T), stabilized
// by max-subtraction.
Vec gumbel_sample(const Vec& theta_row, double temperature, const Vec& noise);

// pi (z x V) times candidates (V x dim): one mixed vector per token slot.
Matrix relaxed_token_vectors(const Matrix& pi, const Matrix& candidates);

// Candidate logit matrix over the textual slots: the ingested logit where
// candidate k belongs to slot r's list, -1 elsewhere.
Matrix candidate_logit_matrix(const ItemComposition& item, const ingest::CandidateSet& candidates);

// Replacement search over textual slots (per-slot candidate lists) and
// categorical slots (value domains with flat logits). Each textual row's
// softmax runs over the full V = n_candidates * z candidate list; hardening
// restricts every slot to its own candidates.
Explanation optimize_theta(const PairContext& ctx, const ingest::CandidateSet& candidates,
                           const GumbelConfig& cfg);

// Mixed-type objective: continuous dims carry an additive non-positive shift
// with the L2+L1 penalty of the relaxed aspect search; textual and
// categorical slots use the replacement terms. One joint hinge covers the
// combined perturbed score.
Explanation optimize_mixed(const PairContext& ctx, const ingest::CandidateSet& candidates,
                           const GumbelConfig& cfg, const counter::CounterConfig& continuous_cfg);

// Shared engine behind the two entry points, exposed so tests can check the
// analytic objective gradient against finite differences at a fixed noise
// draw. Rows 0..z-1 are the textual slots (width V); one extra row per
// categorical slot follows (width = domain size).
struct ThetaProblem {
    struct Row {
        std::size_t width = 0;
        std::size_t own_begin = 0;  // hardening support within the row
        std::size_t own_end = 0;
        std::size_t original = 0;   // index selecting the factual choice
        bool textual = false;
        std::size_t region_offset = 0;  // target range in the item vector
        std::size_t region_dim = 0;
        double region_scale = 1.0;
        std::vector<std::string> labels;      // candidate tokens / values
        std::vector<const Vec*> vectors;      // candidate vectors/encodings
        Vec logits;                            // -1 fill outside own support
    };

    const PairContext* ctx = nullptr;
    GumbelConfig cfg;
    counter::CounterConfig continuous_cfg;
    bool include_continuous = false;
    std::vector<Row> rows;
    Vec base;  // item vector with all replaceable regions zeroed

    ThetaProblem(const PairContext& ctx, const ingest::CandidateSet& candidates,
                 const GumbelConfig& cfg, bool include_continuous,
                 const counter::CounterConfig& continuous_cfg);

    std::vector<Vec> initial_theta() const;
    std::vector<Vec> sample_noise(std::mt19937_64& rng) const;
    std::vector<Vec> relax(const std::vector<Vec>& theta, const std::vector<Vec>& noise) const;
    Vec assemble_relaxed(const std::vector<Vec>& pi, const Vec& delta) const;
    std::vector<std::size_t> harden(const std::vector<Vec>& theta) const;
    Vec assemble_hard(const std::vector<std::size_t>& choice, const Vec& delta) const;

    struct Eval {
        double value = 0.0;
        double score = 0.0;
        double hinge = 0.0;
        std::vector<Vec> theta_grad;
        Vec delta_grad;
    };
    Eval eval_objective(const std::vector<Vec>& theta, const std::vector<Vec>& noise,
                        const std::vector<Vec>& pi_main, const Vec& delta,
                        bool with_gradient) const;
};

}  // namespace cfrex::gumbel
