#include "pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace cfrex::cli {

using nlohmann::json;

int log_level() {
    static int level = [] {
        const char* env = std::getenv("CFREX_LOG");
        if (!env) return 1;
        std::string v(env);
        if (v == "quiet" || v == "0") return 0;
        if (v == "debug" || v == "2") return 2;
        return 1;
    }();
    return level;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[cfrex] " << msg << "\n";
}

void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::cerr << "[cfrex:debug] " << msg << "\n";
}

namespace {

void read_counter_cfg(const json& j, counter::CounterConfig& cfg) {
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.threshold = j.value("threshold", cfg.threshold);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.max_steps = j.value("max_steps", cfg.max_steps);
}

}  // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("config parse error: " + std::string(e.what()));
    }

    RunConfig cfg;
    const json paths = j.value("paths", json::object());
    cfg.interactions_path = paths.value("interactions", "");
    cfg.embeddings_path = paths.value("embeddings", "");
    cfg.candidates_path = paths.value("candidates", "");
    cfg.schema_path = paths.value("schema", "");
    cfg.items_path = paths.value("items", "");
    cfg.ground_truth_path = paths.value("ground_truth", "");
    cfg.model_path = paths.value("model", "");
    cfg.output_dir = paths.value("output_dir", ".");
    cfg.k = j.value("k", cfg.k);
    cfg.method = j.value("method", cfg.method);
    cfg.seed = j.value("seed", cfg.seed);

    if (j.contains("split")) {
        const json& s = j["split"];
        cfg.split.min_user_reviews = s.value("min_user_reviews", cfg.split.min_user_reviews);
        cfg.split.min_item_reviews = s.value("min_item_reviews", cfg.split.min_item_reviews);
        cfg.split.min_items_for_eval = s.value("min_items_for_eval", cfg.split.min_items_for_eval);
        cfg.split.holdout_valid = s.value("holdout_valid", cfg.split.holdout_valid);
        cfg.split.holdout_test = s.value("holdout_test", cfg.split.holdout_test);
        cfg.split.neg_ratio = s.value("neg_ratio", cfg.split.neg_ratio);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        cfg.train.lr = t.value("lr", cfg.train.lr);
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.hidden1 = t.value("hidden1", cfg.train.hidden1);
        cfg.train.hidden2 = t.value("hidden2", cfg.train.hidden2);
    }
    if (j.contains("counter")) read_counter_cfg(j["counter"], cfg.counter_cfg);
    if (j.contains("counter_text")) read_counter_cfg(j["counter_text"], cfg.counter_text_cfg);
    if (j.contains("genetic")) {
        const json& g = j["genetic"];
        auto& gc = cfg.genetic_cfg;
        gc.population = g.value("population", gc.population);
        gc.p_one = g.value("p_one", gc.p_one);
        gc.crossover_rate = g.value("crossover_rate", gc.crossover_rate);
        gc.mutation_rate = g.value("mutation_rate", gc.mutation_rate);
        gc.mutation_pop_frac = g.value("mutation_pop_frac", gc.mutation_pop_frac);
        gc.mutation_gene_frac = g.value("mutation_gene_frac", gc.mutation_gene_frac);
        gc.lambda = g.value("lambda", gc.lambda);
        gc.beta = g.value("beta", gc.beta);
        gc.alpha = g.value("alpha", gc.alpha);
        gc.fitness_stop = g.value("fitness_stop", gc.fitness_stop);
        gc.min_iters = g.value("min_iters", gc.min_iters);
        gc.max_iters = g.value("max_iters", gc.max_iters);
        const std::string sem = g.value("count_semantics", "kept");
        gc.count_semantics =
            sem == "removed" ? genetic::CountSemantics::Removed : genetic::CountSemantics::Kept;
    }
    if (j.contains("gumbel")) {
        const json& g = j["gumbel"];
        auto& gc = cfg.gumbel_cfg;
        gc.temperature = g.value("temperature", gc.temperature);
        gc.lr = g.value("lr", gc.lr);
        gc.alpha = g.value("alpha", gc.alpha);
        gc.lambda = g.value("lambda", gc.lambda);
        gc.beta = g.value("beta", gc.beta);
        gc.gamma = g.value("gamma", gc.gamma);
        gc.max_steps = g.value("max_steps", gc.max_steps);
        gc.samples_per_step = g.value("samples_per_step", gc.samples_per_step);
    }
    if (j.contains("stability")) {
        const json& s = j["stability"];
        cfg.stability_runs = s.value("runs", cfg.stability_runs);
        cfg.stability_pairs = s.value("pairs", cfg.stability_pairs);
    }
    cfg.config_hash = fnv1a(j.dump());
    return cfg;
}

namespace {

std::map<std::string, vectorize::RawItemFeatures> load_items_file(const std::string& path) {
    std::map<std::string, vectorize::RawItemFeatures> out;
    if (path.empty()) return out;
    std::ifstream in(path);
    if (!in) throw Error("cannot open items file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string item_id, feature, value;
        if (!std::getline(is, item_id, '\t') || !std::getline(is, feature, '\t') ||
            !std::getline(is, value, '\t'))
            throw ParseError("expected item \\t feature \\t value", line_no);
        auto& raw = out[item_id];
        raw.item_id = item_id;
        char* end = nullptr;
        const double num = std::strtod(value.c_str(), &end);
        if (end && *end == '\0' && end != value.c_str())
            raw.continuous[feature] = num;
        else
            raw.categorical[feature] = value;
    }
    return out;
}

}  // namespace

Pipeline build_pipeline(const RunConfig& cfg) {
    Pipeline p;
    p.cfg = cfg;
    p.cfg.split.seed = cfg.seed;

    if (cfg.schema_path.empty()) throw Error("config: paths.schema is required");
    if (cfg.interactions_path.empty()) throw Error("config: paths.interactions is required");
    p.schema = vectorize::load_schema(cfg.schema_path);
    if (!p.schema.textual_fields.empty()) {
        if (cfg.embeddings_path.empty())
            throw Error("config: paths.embeddings is required for textual schemas");
        p.embeddings = ingest::load_embeddings(cfg.embeddings_path);
        if (p.embeddings.dim != p.schema.embedding_dim)
            throw DimensionError("embeddings dim " + std::to_string(p.embeddings.dim) +
                                 " != schema embedding_dim " +
                                 std::to_string(p.schema.embedding_dim));
    }
    p.split = ingest::load_interactions(cfg.interactions_path, p.cfg.split);
    for (const auto& w : p.split.warnings)
        log_info("user " + w.user_id + ": only " + std::to_string(w.got) + " of " +
                 std::to_string(w.wanted) + " negatives available for " +
                 std::string(ingest::split_name(w.split)));

    auto raw_items = load_items_file(cfg.items_path);
    const bool needs_raw = !p.schema.continuous.empty() || !p.schema.categorical.empty();

    std::set<std::string> item_ids;
    for (const auto& i : p.split.interactions) item_ids.insert(i.item_id);
    for (const auto& id : item_ids) {
        vectorize::RawItemFeatures raw;
        if (auto it = raw_items.find(id); it != raw_items.end()) {
            raw = it->second;
        } else if (needs_raw) {
            throw Error("item '" + id + "' missing from items file (schema has " +
                        "continuous/categorical features)");
        }
        raw.item_id = id;
        p.items[id] = vectorize::assemble_item_vector(raw, p.schema, p.embeddings);
    }

    // User vectors from train positives; ranking pools from the test split.
    std::map<std::string, std::vector<const Vec*>> train_pos;
    for (const auto& i : p.split.interactions) {
        if (i.split == ingest::Split::Train && i.label == 1)
            train_pos[i.user_id].push_back(&p.items.at(i.item_id).vector);
        if (i.split == ingest::Split::Test) {
            p.test_pool[i.user_id].push_back(i.item_id);
            if (i.label == 1) p.test_positives[i.user_id].push_back(i.item_id);
        }
    }
    for (const auto& [user, items] : p.test_pool) {
        auto it = train_pos.find(user);
        if (it == train_pos.end()) continue;
        p.user_vectors[user] = vectorize::build_user_vector(user, it->second);
    }
    log_info("pipeline: " + std::to_string(p.items.size()) + " items, " +
             std::to_string(p.user_vectors.size()) + " eval users");
    return p;
}

std::vector<scorer::Sample> training_samples(const Pipeline& p, ingest::Split split) {
    std::map<std::string, std::vector<const Vec*>> train_pos;
    for (const auto& i : p.split.interactions)
        if (i.split == ingest::Split::Train && i.label == 1)
            train_pos[i.user_id].push_back(&p.items.at(i.item_id).vector);

    std::vector<scorer::Sample> samples;
    for (const auto& i : p.split.interactions) {
        if (i.split != split) continue;
        auto it = train_pos.find(i.user_id);
        if (it == train_pos.end()) continue;
        Vec user = vectorize::build_user_vector(i.user_id, it->second);
        const Vec& item = p.items.at(i.item_id).vector;
        scorer::Sample s;
        s.input.reserve(user.size() + item.size());
        s.input.insert(s.input.end(), user.begin(), user.end());
        s.input.insert(s.input.end(), item.begin(), item.end());
        s.label = i.label;
        samples.push_back(std::move(s));
    }
    return samples;
}

namespace {

std::vector<std::pair<std::string, const Vec*>> pool_candidates(const Pipeline& p,
                                                                const std::string& user) {
    std::vector<std::pair<std::string, const Vec*>> out;
    for (const auto& id : p.test_pool.at(user)) out.emplace_back(id, &p.items.at(id).vector);
    return out;
}

}  // namespace

std::vector<EligiblePair> eligible_pairs(const Pipeline& p, const scorer::ScorerModel& model) {
    std::vector<EligiblePair> out;
    for (const auto& [user, positives] : p.test_positives) {
        auto uv = p.user_vectors.find(user);
        if (uv == p.user_vectors.end()) continue;
        auto candidates = pool_candidates(p, user);
        if (candidates.size() < p.cfg.k + 1) continue;
        auto ranked = scorer::rank_topk(model, user, uv->second, candidates, p.cfg.k);
        for (const auto& entry : ranked.top) {
            if (std::find(positives.begin(), positives.end(), entry.item_id) == positives.end())
                continue;
            out.push_back({user, entry.item_id, entry.score, ranked.marginal_score});
        }
    }
    std::sort(out.begin(), out.end(), [](const EligiblePair& a, const EligiblePair& b) {
        if (a.user_id != b.user_id) return a.user_id < b.user_id;
        return a.item_id < b.item_id;
    });
    return out;
}

Explanation explain_pair(const Pipeline& p, const scorer::ScorerModel& model,
                         const EligiblePair& pair, const std::string& method,
                         std::uint64_t seed_override) {
    PairContext ctx;
    ctx.model = &model;
    ctx.user_id = pair.user_id;
    ctx.user = &p.user_vectors.at(pair.user_id);
    ctx.item = &p.items.at(pair.item_id).composition;
    ctx.score_before = pair.score_before;
    ctx.marginal_score = pair.marginal_score;

    const std::uint64_t pair_seed =
        mix_seed(seed_override, pair.user_id + "|" + pair.item_id);
    if (method == "counter") {
        auto cfg = p.cfg.counter_cfg;
        cfg.seed = pair_seed;
        const auto& record = p.items.at(pair.item_id);
        std::vector<std::string> names;
        // Aspect-style search over the whole item vector; dims are labeled
        // from the composition layout.
        for (std::size_t i = 0; i < record.vector.size(); ++i)
            names.push_back("dim:" + std::to_string(i));
        for (std::size_t i = 0; i < record.composition.continuous_names.size(); ++i)
            names[i] = record.composition.continuous_names[i];
        return counter::explain_aspects(model, pair.user_id, *ctx.user, pair.item_id,
                                        record.vector, names, pair.marginal_score, cfg);
    }
    if (method == "counter-text") {
        auto cfg = p.cfg.counter_text_cfg;
        cfg.seed = pair_seed;
        return counter::explain_text_weights(ctx, cfg);
    }
    if (method == "genetic") {
        auto cfg = p.cfg.genetic_cfg;
        cfg.seed = pair_seed;
        return genetic::evolve(ctx, cfg);
    }
    if (method == "gumbel" || method == "mixed") {
        if (p.cfg.candidates_path.empty())
            throw Error("method=" + method + " requires paths.candidates in the config");
        static thread_local std::map<std::string, ingest::CandidateSet> cache;
        auto it = cache.find(p.cfg.candidates_path);
        if (it == cache.end())
            it = cache.emplace(p.cfg.candidates_path,
                               ingest::load_candidates(p.cfg.candidates_path))
                     .first;
        auto cfg = p.cfg.gumbel_cfg;
        cfg.seed = pair_seed;
        if (method == "gumbel") return gumbel::optimize_theta(ctx, it->second, cfg);
        return gumbel::optimize_mixed(ctx, it->second, cfg, p.cfg.counter_cfg);
    }
    throw Error("unknown method '" + method + "'");
}

double test_ndcg(const Pipeline& p, const scorer::ScorerModel& model) {
    std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> ranked_vs_truth;
    for (const auto& [user, pool] : p.test_pool) {
        auto uv = p.user_vectors.find(user);
        if (uv == p.user_vectors.end()) continue;
        auto candidates = pool_candidates(p, user);
        if (candidates.size() < p.cfg.k + 1) continue;
        auto ranked = scorer::rank_topk(model, user, uv->second, candidates, p.cfg.k);
        std::vector<std::string> ids;
        for (const auto& e : ranked.top) ids.push_back(e.item_id);
        auto truth = p.test_positives.count(user) ? p.test_positives.at(user)
                                                  : std::vector<std::string>{};
        ranked_vs_truth.emplace_back(std::move(ids), std::move(truth));
    }
    return scorer::ndcg(ranked_vs_truth, p.cfg.k);
}

std::map<std::pair<std::string, std::string>, std::set<std::string>> load_ground_truth(
    const std::string& path) {
    std::map<std::pair<std::string, std::string>, std::set<std::string>> out;
    std::ifstream in(path);
    if (!in) throw Error("cannot open ground-truth file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string user, item, tokens;
        if (!std::getline(is, user, '\t') || !std::getline(is, item, '\t') ||
            !std::getline(is, tokens))
            throw ParseError("expected user \\t item \\t tokens", line_no);
        std::istringstream ts(tokens);
        std::string tok;
        auto& set = out[{user, item}];
        while (ts >> tok) {
            std::transform(tok.begin(), tok.end(), tok.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            set.insert(tok);
        }
    }
    return out;
}

}  // namespace cfrex::cli
