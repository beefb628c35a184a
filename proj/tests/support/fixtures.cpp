#include "fixtures.hpp"

#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

namespace cfrex::testsupport {

scorer::ScorerModel planted_model(std::size_t d_user, const Vec& item_weights, double bias,
                                  double passthrough_bias) {
    const std::size_t d_item = item_weights.size();
    const std::size_t d_in = d_user + d_item;
    scorer::ScorerModel m;
    m.d_in = d_in;
    m.w1 = Matrix(2 * d_in, d_in);
    for (std::size_t i = 0; i < d_in; ++i) {
        m.w1.at(i, i) = 1.0;
        m.w1.at(d_in + i, i) = -1.0;
    }
    m.b1.assign(2 * d_in, 0.0);
    m.w2 = Matrix(1, 2 * d_in);
    for (std::size_t i = 0; i < d_item; ++i) {
        m.w2.at(0, d_user + i) = item_weights[i];
        m.w2.at(0, d_in + d_user + i) = -item_weights[i];
    }
    m.b2.assign(1, passthrough_bias);
    m.w3.assign(1, 1.0);
    m.b3 = -passthrough_bias + bias;
    return m;
}

ItemComposition text_item(const std::string& id, const std::vector<std::string>& tokens,
                          std::size_t dim, std::uint64_t seed) {
    ItemComposition item;
    item.item_id = id;
    ItemComposition::Field field;
    field.name = "review";
    field.dim = dim;
    for (const auto& t : tokens)
        field.tokens.push_back({t, ingest::toy_embed(t, dim, seed)});
    item.fields.push_back(std::move(field));
    return item;
}

void PairFixture::finalize(const std::string& user_id) {
    item_vector = item.assemble();
    if (user.empty()) user.assign(model.d_in - item_vector.size(), 0.0);
    ctx.model = &model;
    ctx.user_id = user_id;
    ctx.user = &user;
    ctx.item = &item;
    ctx.score_before = scorer::forward(model, user, item_vector);
    ctx.marginal_score = marginal;
}

ingest::CandidateSet candidates_for(const ItemComposition& item, std::size_t n_candidates,
                                    std::uint64_t seed) {
    ingest::CandidateSet set;
    set.n_candidates = n_candidates;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> logit(0.2, 1.0);
    for (std::size_t t = 0; t < item.token_count(); ++t) {
        auto [f, p] = item.token_location(t);
        const auto& field = item.fields[f];
        set.dim = field.dim;
        ingest::SlotKey key{item.item_id, field.name, static_cast<int>(p)};
        std::vector<ingest::Candidate> cands;
        cands.push_back({field.tokens[p].token, field.tokens[p].vector, logit(rng)});
        for (std::size_t k = 1; k < n_candidates; ++k) {
            const std::string token = "alt" + std::to_string(t) + "_" + std::to_string(k);
            cands.push_back({token, ingest::toy_embed(token, field.dim, seed + 17), logit(rng)});
        }
        set.slots.emplace(std::move(key), std::move(cands));
    }
    return set;
}

std::string make_temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("cfrex-test-" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

CliDataset write_cli_dataset(const std::string& tag, std::uint64_t seed) {
    CliDataset out;
    out.dir = make_temp_dir(tag);
    const auto path = [&](const std::string& name) { return out.dir + "/" + name; };
    const std::size_t n_users = 20, n_items = 30, per_user = 15, dim = 4;
    const std::vector<std::string> fits = {"small", "true", "large"};

    std::vector<std::string> vocab;
    for (std::size_t w = 0; w < 20; ++w) vocab.push_back("word" + std::to_string(w));
    auto item_id = [](std::size_t i) {
        return "i" + std::string(i < 10 ? "0" : "") + std::to_string(i);
    };
    auto item_tokens = [&](std::size_t i) {
        return std::vector<std::string>{vocab[i % 20], vocab[(i * 3 + 1) % 20],
                                        vocab[(i * 5 + 2) % 20], vocab[(i * 7 + 3) % 20]};
    };

    {
        std::ofstream f(path("interactions.tsv"));
        for (std::size_t u = 0; u < n_users; ++u) {
            const std::string user = "u" + std::string(u < 10 ? "0" : "") + std::to_string(u);
            for (std::size_t j = 0; j < per_user; ++j)
                f << user << "\t" << item_id((u * 7 + j) % n_items) << "\t" << j << "\n";
        }
    }

    std::vector<vectorize::RawItemFeatures> raws;
    {
        std::ofstream f(path("items.tsv"));
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> price(5.0, 50.0);
        std::uniform_real_distribution<double> rating(1.0, 5.0);
        for (std::size_t i = 0; i < n_items; ++i) {
            vectorize::RawItemFeatures raw;
            raw.item_id = item_id(i);
            raw.continuous["price"] = price(rng);
            raw.continuous["rating"] = rating(rng);
            raw.categorical["fit"] = fits[i % 3];
            f << raw.item_id << "\tprice\t" << raw.continuous["price"] << "\n";
            f << raw.item_id << "\trating\t" << raw.continuous["rating"] << "\n";
            f << raw.item_id << "\tfit\t" << raw.categorical["fit"] << "\n";
            raws.push_back(std::move(raw));
        }
    }

    vectorize::FeatureSchema schema;
    schema.continuous.push_back({"price", {}});
    schema.continuous.push_back({"rating", {}});
    schema.categorical.push_back({"fit", fits, vectorize::CategoricalEncoding::Tri});
    schema.textual_fields.push_back({"review", 8});
    schema.embedding_dim = dim;
    vectorize::fit_scalers(schema, raws);
    vectorize::save_schema(path("schema.json"), schema);

    ingest::EmbeddingTable table;
    table.dim = dim;
    ingest::CandidateSet cands;
    cands.dim = dim;
    cands.n_candidates = 3;
    for (std::size_t i = 0; i < n_items; ++i) {
        auto tokens = item_tokens(i);
        for (std::size_t p = 0; p < tokens.size(); ++p) {
            ingest::SlotKey key{item_id(i), "review", static_cast<int>(p)};
            table.entries[key] = {tokens[p], ingest::toy_embed(tokens[p], dim, seed)};
            std::vector<ingest::Candidate> slot;
            slot.push_back({tokens[p], ingest::toy_embed(tokens[p], dim, seed), 0.9});
            for (std::size_t k = 1; k < 3; ++k) {
                const auto& alt = vocab[(i + p + 7 * k) % 20];
                slot.push_back({alt, ingest::toy_embed(alt, dim, seed), 0.4});
            }
            cands.slots.emplace(std::move(key), std::move(slot));
        }
    }
    ingest::save_embeddings(path("embeddings.tsv"), table);
    ingest::save_candidates(path("candidates.tsv"), cands);

    {
        std::ofstream f(path("ground_truth.tsv"));
        for (std::size_t u = 0; u < n_users; ++u) {
            const std::string user = "u" + std::string(u < 10 ? "0" : "") + std::to_string(u);
            for (std::size_t j = 0; j < per_user; ++j) {
                const std::size_t i = (u * 7 + j) % n_items;
                auto tokens = item_tokens(i);
                f << user << "\t" << item_id(i) << "\t" << tokens[0] << " " << tokens[1] << "\n";
            }
        }
    }

    nlohmann::json cfg;
    cfg["paths"] = {{"interactions", path("interactions.tsv")},
                    {"embeddings", path("embeddings.tsv")},
                    {"candidates", path("candidates.tsv")},
                    {"schema", path("schema.json")},
                    {"items", path("items.tsv")},
                    {"ground_truth", path("ground_truth.tsv")},
                    {"model", path("model.bin")},
                    {"output_dir", path("out")}};
    cfg["k"] = 3;
    cfg["method"] = "counter-text";
    cfg["seed"] = seed;
    cfg["split"] = {{"min_user_reviews", 5}, {"min_item_reviews", 5},
                    {"min_items_for_eval", 15}, {"holdout_valid", 5},
                    {"holdout_test", 5},       {"neg_ratio", 1}};
    cfg["train"] = {{"lr", 0.05}, {"epochs", 8}, {"batch_size", 64},
                    {"hidden1", 16}, {"hidden2", 8}};
    cfg["stability"] = {{"runs", 3}, {"pairs", 3}};
    out.config_path = path("config.json");
    std::ofstream(out.config_path) << cfg.dump(2) << "\n";
    return out;
}

}  // namespace cfrex::testsupport
