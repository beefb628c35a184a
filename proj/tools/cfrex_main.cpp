#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "pipeline.hpp"

namespace {

using namespace cfrex;
using cli::EligiblePair;
using cli::Pipeline;
using cli::RunConfig;

constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitNumerical = 4;

std::string artifact_path(const RunConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.output_dir);
    return (std::filesystem::path(cfg.output_dir) / name).string();
}

std::string provenance_line(const RunConfig& cfg) {
    std::ostringstream os;
    os << "# cfrex config_hash=" << cfg.config_hash << " seed=" << cfg.seed
       << " method=" << cfg.method << " k=" << cfg.k;
    return os.str();
}

int cmd_prepare(const RunConfig& cfg) {
    Pipeline p = cli::build_pipeline(cfg);
    const std::string path = artifact_path(cfg, "split.tsv");
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << provenance_line(cfg) << "\n";
    for (const auto& i : p.split.interactions)
        out << i.user_id << "\t" << i.item_id << "\t" << i.label << "\t"
            << ingest::split_name(i.split) << "\n";
    cli::log_info("wrote " + path + " (" + std::to_string(p.split.interactions.size()) +
                  " rows, " + std::to_string(p.split.warnings.size()) + " warnings)");
    std::cout << "prepared " << p.split.interactions.size() << " interactions, "
              << p.items.size() << " items, " << p.user_vectors.size() << " eval users\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    Pipeline p = cli::build_pipeline(cfg);
    auto samples = cli::training_samples(p, ingest::Split::Train);
    if (samples.empty()) throw Error("no training samples after filtering");
    auto train_cfg = cfg.train;
    train_cfg.seed = cfg.seed;
    auto result = scorer::train(samples, train_cfg);
    if (cfg.model_path.empty()) throw Error("config: paths.model is required for train");
    scorer::save_model(cfg.model_path, result.model, {cfg.config_hash, cfg.seed});
    std::cout << std::setprecision(6) << "trained on " << samples.size()
              << " samples, final epoch loss " << result.epoch_loss.back() << "\n";
    cli::log_info("model written to " + cfg.model_path);
    return 0;
}

scorer::ScorerModel load_model_checked(const RunConfig& cfg) {
    if (cfg.model_path.empty()) throw Error("config: paths.model is required");
    return scorer::load_model(cfg.model_path);
}

int cmd_recommend(const RunConfig& cfg) {
    Pipeline p = cli::build_pipeline(cfg);
    auto model = load_model_checked(cfg);
    const std::string path = artifact_path(cfg, "recommendations.tsv");
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << provenance_line(cfg) << "\n";
    out << std::setprecision(17);
    std::size_t users = 0;
    for (const auto& [user, pool] : p.test_pool) {
        auto uv = p.user_vectors.find(user);
        if (uv == p.user_vectors.end()) continue;
        std::vector<std::pair<std::string, const Vec*>> candidates;
        for (const auto& id : pool) candidates.emplace_back(id, &p.items.at(id).vector);
        if (candidates.size() < cfg.k + 1) continue;
        auto ranked = scorer::rank_topk(model, user, uv->second, candidates, cfg.k);
        for (std::size_t r = 0; r < ranked.top.size(); ++r)
            out << user << "\t" << r + 1 << "\t" << ranked.top[r].item_id << "\t"
                << ranked.top[r].score << "\n";
        ++users;
    }
    std::cout << "ranked top-" << cfg.k << " for " << users << " users -> " << path << "\n";
    return 0;
}

std::vector<Explanation> run_explanations(const Pipeline& p, const scorer::ScorerModel& model,
                                          const std::vector<EligiblePair>& pairs,
                                          const std::string& method, std::uint64_t seed,
                                          std::size_t jobs) {
    std::vector<Explanation> out(pairs.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < pairs.size(); ++i)
            out[i] = cli::explain_pair(p, model, pairs[i], method, seed);
        return out;
    }
    // Per-pair seeds make the result independent of the thread schedule.
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::atomic<bool> failed{false};
    std::string error_msg;
    std::mutex error_mutex;
    for (std::size_t t = 0; t < jobs; ++t) {
        workers.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= pairs.size() || failed.load()) return;
                try {
                    out[i] = cli::explain_pair(p, model, pairs[i], method, seed);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    failed = true;
                    error_msg = e.what();
                    return;
                }
            }
        });
    }
    for (auto& w : workers) w.join();
    if (failed) throw Error(error_msg);
    return out;
}

int cmd_explain(const RunConfig& cfg) {
    Pipeline p = cli::build_pipeline(cfg);
    auto model = load_model_checked(cfg);
    auto pairs = cli::eligible_pairs(p, model);
    cli::log_info(std::to_string(pairs.size()) + " eligible (user, item) pairs");
    auto explanations = run_explanations(p, model, pairs, cfg.method, cfg.seed, cfg.jobs);
    const std::string path = artifact_path(cfg, "explanations.jsonl");
    {
        std::ofstream out(path);
        if (!out) throw Error("cannot write " + path);
        out << provenance_line(cfg) << "\n";
        for (const auto& e : explanations) out << to_jsonl(e) << "\n";
    }
    auto stats = metrics::found_rate_and_avg(explanations);
    std::cout << std::setprecision(6) << "explained " << stats.attempted << " pairs, "
              << stats.valid << " valid (found rate " << stats.found_rate << ") -> " << path
              << "\n";
    return 0;
}

metrics::PnPsInputs pn_ps_inputs(const Pipeline& p, const scorer::ScorerModel& model,
                                 const RunConfig& cfg) {
    metrics::PnPsInputs inputs;
    inputs.model = &model;
    inputs.k = cfg.k;
    for (const auto& [user, pool] : p.test_pool) {
        auto uv = p.user_vectors.find(user);
        if (uv == p.user_vectors.end()) continue;
        metrics::UserContext ctx;
        ctx.user = uv->second;
        for (const auto& id : pool) ctx.candidates.emplace_back(id, &p.items.at(id).vector);
        inputs.users.emplace(user, std::move(ctx));
    }
    for (const auto& [id, record] : p.items) inputs.items.emplace(id, &record.composition);
    return inputs;
}

int cmd_eval(const RunConfig& cfg) {
    Pipeline p = cli::build_pipeline(cfg);
    auto model = load_model_checked(cfg);
    auto explanations = load_explanations(artifact_path(cfg, "explanations.jsonl"));

    std::map<std::pair<std::string, std::string>, std::set<std::string>> truth;
    if (!cfg.ground_truth_path.empty()) truth = cli::load_ground_truth(cfg.ground_truth_path);

    auto inputs = pn_ps_inputs(p, model, cfg);
    auto pnps = metrics::pn_ps(inputs, explanations);

    metrics::EvalReport report;
    std::size_t flag_idx = 0;
    for (const auto& e : explanations) {
        metrics::PairRow row;
        row.user_id = e.user_id;
        row.item_id = e.item_id;
        row.found = e.valid;
        auto features = metrics::explanation_features(e);
        row.n_features = features.size();
        if (auto it = truth.find({e.user_id, e.item_id}); it != truth.end()) {
            if (auto prf = metrics::user_based_prf(features, it->second)) {
                row.precision = prf->precision;
                row.recall = prf->recall;
                row.f1 = prf->f1;
            }
        }
        if (e.valid && flag_idx < pnps.flags.size()) {
            row.pn_flag = pnps.flags[flag_idx].first;
            row.ps_flag = pnps.flags[flag_idx].second;
            ++flag_idx;
        }
        report.rows.push_back(std::move(row));
    }
    report.aggregate();
    report.ndcg = cli::test_ndcg(p, model);

    if (cfg.with_stability) {
        // Stability over repeated runs with distinct seeds on a sampled pair
        // subset.
        auto pairs = cli::eligible_pairs(p, model);
        std::mt19937_64 rng(mix_seed(cfg.seed, "stability-sample"));
        std::shuffle(pairs.begin(), pairs.end(), rng);
        if (pairs.size() > cfg.stability_pairs) pairs.resize(cfg.stability_pairs);
        double total = 0.0;
        std::size_t counted = 0;
        for (const auto& pair : pairs) {
            std::vector<std::set<std::string>> runs;
            for (std::size_t r = 0; r < cfg.stability_runs; ++r) {
                auto e = cli::explain_pair(p, model, pair, cfg.method,
                                           mix_seed(cfg.seed, "run" + std::to_string(r)));
                runs.push_back(metrics::explanation_features(e));
            }
            total += metrics::stability(runs);
            ++counted;
        }
        if (counted) report.stability = total / counted;
    }

    const std::string path = artifact_path(cfg, "report.json");
    metrics::save_report(path, report);
    std::cout << std::setprecision(6);
    std::cout << "evaluated " << report.rows.size() << " explanations -> " << path << "\n";
    if (report.precision)
        std::cout << "  precision " << *report.precision << " recall " << *report.recall
                  << " f1 " << *report.f1 << "\n";
    if (report.pn)
        std::cout << "  pn " << *report.pn << " ps " << *report.ps << " fns " << *report.fns
                  << "\n";
    std::cout << "  found rate " << report.found_rate;
    if (report.features_avg) std::cout << " avg features " << *report.features_avg;
    if (report.ndcg) std::cout << " ndcg " << *report.ndcg;
    if (report.stability) std::cout << " stability " << *report.stability;
    std::cout << "\n";
    return 0;
}

int cmd_stability(const RunConfig& cfg) {
    Pipeline p = cli::build_pipeline(cfg);
    auto model = load_model_checked(cfg);
    auto pairs = cli::eligible_pairs(p, model);
    std::mt19937_64 rng(mix_seed(cfg.seed, "stability-sample"));
    std::shuffle(pairs.begin(), pairs.end(), rng);
    if (pairs.size() > cfg.stability_pairs) pairs.resize(cfg.stability_pairs);
    if (pairs.empty()) throw Error("no eligible pairs to measure");
    std::cout << std::setprecision(6);
    double total = 0.0;
    for (const auto& pair : pairs) {
        std::vector<std::set<std::string>> runs;
        for (std::size_t r = 0; r < cfg.stability_runs; ++r) {
            auto e = cli::explain_pair(p, model, pair, cfg.method,
                                       mix_seed(cfg.seed, "run" + std::to_string(r)));
            runs.push_back(metrics::explanation_features(e));
        }
        const double s = metrics::stability(runs);
        total += s;
        std::cout << pair.user_id << "\t" << pair.item_id << "\t" << s << "\n";
    }
    std::cout << "stability " << total / pairs.size() << " over " << pairs.size()
              << " pairs x " << cfg.stability_runs << " runs\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"counterfactual explanation toolkit for a learned recommender"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::string> method;
    std::optional<std::size_t> k;
    bool with_stability = false;

    app.add_option("--config", config_path, "JSON run configuration")->required();
    app.add_option("--seed", seed, "override the configured seed");
    app.add_option("--jobs", jobs, "worker threads for explanation search");
    app.add_option("--method", method, "counter | counter-text | genetic | gumbel | mixed");
    app.add_option("--k", k, "size of the top-K list");
    app.add_flag("--stability", with_stability, "include the stability metric in eval");

    auto* prepare = app.add_subcommand("prepare", "filter, split, and vectorize the dataset");
    auto* train = app.add_subcommand("train", "train the ranking network");
    auto* recommend = app.add_subcommand("recommend", "write each eval user's top-K list");
    auto* explain = app.add_subcommand("explain", "search counterfactual edits per pair");
    auto* eval = app.add_subcommand("eval", "score saved explanations");
    auto* stability = app.add_subcommand("stability", "repeat-run agreement per pair");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        RunConfig cfg = cfrex::cli::load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (jobs) cfg.jobs = *jobs;
        if (method) cfg.method = *method;
        if (k) cfg.k = *k;
        if (with_stability) cfg.with_stability = true;

        if (prepare->parsed()) return cmd_prepare(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (recommend->parsed()) return cmd_recommend(cfg);
        if (explain->parsed()) return cmd_explain(cfg);
        if (eval->parsed()) return cmd_eval(cfg);
        if (stability->parsed()) return cmd_stability(cfg);
        return kExitUsage;
    } catch (const cfrex::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const cfrex::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}
