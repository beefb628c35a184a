#include "cfrex/vectorize.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"

namespace cfrex::vectorize {

using nlohmann::json;

int CategoricalFeature::domain_index(const std::string& value) const {
    auto it = std::find(domain.begin(), domain.end(), value);
    return it == domain.end() ? -1 : static_cast<int>(it - domain.begin());
}

Vec CategoricalFeature::encode(const std::string& value) const {
    const int idx = domain_index(value);
    if (idx < 0)
        throw Error("unknown value '" + value + "' for categorical feature '" + name + "'");
    if (encoding == CategoricalEncoding::Tri) return Vec{static_cast<double>(idx - 1)};
    Vec v(domain.size(), 0.0);
    v[idx] = 1.0;
    return v;
}

Vec CategoricalFeature::encode_baseline() const {
    if (encoding == CategoricalEncoding::Tri) return Vec{0.0};
    return Vec(domain.size(), 0.0);
}

std::size_t FeatureSchema::width() const {
    std::size_t w = continuous.size();
    for (const auto& c : categorical) w += c.width();
    w += textual_fields.size() * embedding_dim;
    return w;
}

void FeatureSchema::validate() const {
    std::set<std::string> names;
    auto check_name = [&](const std::string& n, const char* group) {
        if (n.empty()) throw Error(std::string(group) + " feature with empty name");
        if (!names.insert(n).second) throw Error("duplicate feature name '" + n + "'");
    };
    for (const auto& c : continuous) {
        check_name(c.name, "continuous");
        if (!(c.scaler.std > 0.0))
            throw Error("scaler std must be > 0 for feature '" + c.name + "'");
    }
    for (const auto& c : categorical) {
        check_name(c.name, "categorical");
        if (c.domain.empty()) throw Error("empty domain for categorical feature '" + c.name + "'");
        if (c.encoding == CategoricalEncoding::Tri && c.domain.size() != 3)
            throw Error("tri encoding requires a 3-value domain for feature '" + c.name + "'");
    }
    for (const auto& f : textual_fields) check_name(f.name, "textual");
    if (!textual_fields.empty() && embedding_dim == 0)
        throw Error("schema with textual fields must declare embedding_dim");
}

FeatureSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open schema file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("schema parse error: " + std::string(e.what()));
    }
    FeatureSchema schema;
    schema.embedding_dim = j.value("embedding_dim", 0u);
    for (const auto& c : j.value("continuous", json::array())) {
        ContinuousFeature f;
        f.name = c.at("name").get<std::string>();
        f.scaler.mean = c.value("mean", 0.0);
        f.scaler.std = c.value("std", 1.0);
        schema.continuous.push_back(std::move(f));
    }
    for (const auto& c : j.value("categorical", json::array())) {
        CategoricalFeature f;
        f.name = c.at("name").get<std::string>();
        f.domain = c.at("domain").get<std::vector<std::string>>();
        const std::string enc = c.value("encoding", "tri");
        if (enc == "tri")
            f.encoding = CategoricalEncoding::Tri;
        else if (enc == "onehot")
            f.encoding = CategoricalEncoding::OneHot;
        else
            throw Error("unknown categorical encoding '" + enc + "'");
        schema.categorical.push_back(std::move(f));
    }
    for (const auto& t : j.value("textual", json::array())) {
        TextualField f;
        f.name = t.at("name").get<std::string>();
        f.max_tokens = t.value("max_tokens", 32u);
        schema.textual_fields.push_back(std::move(f));
    }
    schema.validate();
    return schema;
}

void save_schema(const std::string& path, const FeatureSchema& schema) {
    json j;
    j["embedding_dim"] = schema.embedding_dim;
    j["continuous"] = json::array();
    for (const auto& c : schema.continuous)
        j["continuous"].push_back({{"name", c.name}, {"mean", c.scaler.mean}, {"std", c.scaler.std}});
    j["categorical"] = json::array();
    for (const auto& c : schema.categorical)
        j["categorical"].push_back(
            {{"name", c.name},
             {"domain", c.domain},
             {"encoding", c.encoding == CategoricalEncoding::Tri ? "tri" : "onehot"}});
    j["textual"] = json::array();
    for (const auto& t : schema.textual_fields)
        j["textual"].push_back({{"name", t.name}, {"max_tokens", t.max_tokens}});
    std::ofstream out(path);
    if (!out) throw Error("cannot write schema file: " + path);
    out << j.dump(2) << "\n";
}

double user_aspect_score(double freq, int rating_scale) {
    return 1.0 + (rating_scale - 1) * (2.0 / (1.0 + std::exp(-freq)) - 1.0);
}

double item_aspect_score(double freq, double sentiment, int rating_scale) {
    return 1.0 + (rating_scale - 1) / (1.0 + std::exp(-freq * sentiment));
}

AspectMatrices build_aspect_matrices(const MentionStats& stats, const AspectConfig& cfg) {
    if (cfg.rating_scale < 2) throw Error("rating scale must be >= 2");
    const std::size_t r = cfg.aspects.size();
    const std::size_t m = stats.user_freq.rows;
    const std::size_t n = stats.item_freq.rows;
    if (stats.user_freq.cols != r || stats.item_freq.cols != r ||
        stats.item_sentiment.cols != r || stats.item_sentiment.rows != n ||
        stats.user_mask.size() != m || stats.item_mask.size() != n)
        throw DimensionError("mention stats shape does not match aspect config");

    AspectMatrices out;
    out.user_pref = Matrix(m, r);
    out.item_quality = Matrix(n, r);
    for (std::size_t i = 0; i < m; ++i) {
        if (stats.user_mask[i].size() != r) throw DimensionError("user mask row width mismatch");
        for (std::size_t k = 0; k < r; ++k)
            out.user_pref.at(i, k) =
                stats.user_mask[i][k] ? user_aspect_score(stats.user_freq.at(i, k), cfg.rating_scale)
                                      : 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (stats.item_mask[j].size() != r) throw DimensionError("item mask row width mismatch");
        for (std::size_t k = 0; k < r; ++k)
            out.item_quality.at(j, k) =
                stats.item_mask[j][k]
                    ? item_aspect_score(stats.item_freq.at(j, k), stats.item_sentiment.at(j, k),
                                        cfg.rating_scale)
                    : 0.0;
    }
    return out;
}

ItemRecord assemble_item_vector(const RawItemFeatures& raw, const FeatureSchema& schema,
                                const ingest::EmbeddingTable& table, const AssembleOptions& opts) {
    schema.validate();
    ItemRecord record;
    ItemComposition& comp = record.composition;
    comp.item_id = raw.item_id;

    for (const auto& f : schema.continuous) {
        auto it = raw.continuous.find(f.name);
        if (it == raw.continuous.end())
            throw Error("item '" + raw.item_id + "' missing continuous feature '" + f.name + "'");
        if (!std::isfinite(it->second))
            throw Error("non-finite value for feature '" + f.name + "' of item '" + raw.item_id +
                        "'");
        comp.continuous_names.push_back(f.name);
        comp.continuous.push_back((it->second - f.scaler.mean) / f.scaler.std);
        comp.continuous_mean.push_back(f.scaler.mean);
        comp.continuous_std.push_back(f.scaler.std);
    }

    for (const auto& f : schema.categorical) {
        auto it = raw.categorical.find(f.name);
        if (it == raw.categorical.end())
            throw Error("item '" + raw.item_id + "' missing categorical feature '" + f.name + "'");
        ItemComposition::Categorical cat;
        cat.name = f.name;
        cat.domain = f.domain;
        for (const auto& value : f.domain) cat.encodings.push_back(f.encode(value));
        cat.original_index = f.domain_index(it->second);
        if (cat.original_index < 0)
            throw Error("unknown value '" + it->second + "' for categorical feature '" + f.name +
                        "' of item '" + raw.item_id + "'");
        // For tri encodings the middle (0-encoded) value is the baseline;
        // for one-hot the baseline is the all-zero block, marked as -1 and
        // handled by encode_baseline at edit time.
        cat.baseline_index =
            f.encoding == CategoricalEncoding::Tri ? 1 : cat.original_index;
        if (f.encoding == CategoricalEncoding::OneHot) {
            cat.encodings.push_back(f.encode_baseline());
            cat.baseline_index = static_cast<int>(cat.encodings.size()) - 1;
            cat.domain.push_back("");
        }
        comp.categoricals.push_back(std::move(cat));
    }

    for (const auto& tf : schema.textual_fields) {
        ItemComposition::Field field;
        field.name = tf.name;
        field.dim = schema.embedding_dim;
        for (std::size_t pos = 0; pos < tf.max_tokens; ++pos) {
            ingest::SlotKey key{raw.item_id, tf.name, static_cast<int>(pos)};
            const ingest::SlotEntry* entry = table.find(key);
            if (!entry) break;  // positions are contiguous from 0
            if (entry->vector.size() == schema.embedding_dim) {
                field.tokens.push_back({entry->token, entry->vector});
            } else if (entry->vector.empty() && opts.toy_fallback) {
                field.tokens.push_back(
                    {entry->token, ingest::toy_embed(entry->token, schema.embedding_dim,
                                                     opts.toy_seed)});
            } else if (entry->vector.empty()) {
                throw Error("no embedding for slot '" + key.str() +
                            "' and toy fallback disabled");
            } else {
                throw DimensionError("embedding for slot '" + key.str() + "' has dim " +
                                     std::to_string(entry->vector.size()) + ", schema expects " +
                                     std::to_string(schema.embedding_dim));
            }
        }
        comp.fields.push_back(std::move(field));
    }

    record.vector = comp.assemble();
    return record;
}

Vec build_user_vector(const std::string& user_id, const std::vector<const Vec*>& item_vectors) {
    if (item_vectors.empty())
        throw Error("user '" + user_id + "' has no train-split positive items");
    const std::size_t dim = item_vectors.front()->size();
    Vec out(dim, 0.0);
    for (const Vec* v : item_vectors) {
        if (v->size() != dim) throw DimensionError("item vector width mismatch for user vector");
        for (std::size_t d = 0; d < dim; ++d) out[d] += (*v)[d];
    }
    const double inv = 1.0 / static_cast<double>(item_vectors.size());
    for (auto& x : out) x *= inv;
    return out;
}

void fit_scalers(FeatureSchema& schema, const std::vector<RawItemFeatures>& items) {
    for (auto& f : schema.continuous) {
        double sum = 0.0, sum_sq = 0.0;
        std::size_t n = 0;
        for (const auto& item : items) {
            auto it = item.continuous.find(f.name);
            if (it == item.continuous.end()) continue;
            sum += it->second;
            sum_sq += it->second * it->second;
            ++n;
        }
        if (n == 0) continue;
        const double mean = sum / n;
        const double var = std::max(0.0, sum_sq / n - mean * mean);
        f.scaler.mean = mean;
        f.scaler.std = std::max(std::sqrt(var), 1e-12);
    }
}

}  // namespace cfrex::vectorize
