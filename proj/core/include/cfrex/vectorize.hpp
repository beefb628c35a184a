#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cfrex/common.hpp"
#include "cfrex/ingest.hpp"
#include "cfrex/item_composition.hpp"

namespace cfrex::vectorize {

struct Scaler {
    double mean = 0.0;
    double std = 1.0;
};

enum class CategoricalEncoding { Tri, OneHot };

struct ContinuousFeature {
    std::string name;
    Scaler scaler;
};

struct CategoricalFeature {
    std::string name;
    std::vector<std::string> domain;  // ordered; fixes encoding layout
    CategoricalEncoding encoding = CategoricalEncoding::Tri;
    // Tri maps domain index i (of exactly 3 values) to i-1, i.e. {-1, 0, +1};
    // the middle value is the "not specified" baseline.
    std::size_t width() const { return encoding == CategoricalEncoding::Tri ? 1 : domain.size(); }
    Vec encode(const std::string& value) const;  // throws on unknown value
    Vec encode_baseline() const;
    int domain_index(const std::string& value) const;  // -1 if unknown
};

struct TextualField {
    std::string name;
    std::size_t max_tokens = 32;
};

struct FeatureSchema {
    std::vector<ContinuousFeature> continuous;
    std::vector<CategoricalFeature> categorical;
    std::vector<TextualField> textual_fields;
    std::size_t embedding_dim = 0;

    std::size_t width() const;
    void validate() const;  // unique names, std > 0, non-empty domains
};

FeatureSchema load_schema(const std::string& path);
void save_schema(const std::string& path, const FeatureSchema& schema);

struct AspectConfig {
    int rating_scale = 5;  // N in the preference/quality score formulas
    std::vector<std::string> aspects;
};

struct MentionStats {
    // user_freq: m x r mention frequencies; item_freq/item_sentiment: n x r.
    Matrix user_freq;
    Matrix item_freq;
    Matrix item_sentiment;  // averages in [-1, 1]
    std::vector<std::vector<bool>> user_mask;  // true = mentioned
    std::vector<std::vector<bool>> item_mask;  // true = reviewed
};

struct AspectMatrices {
    Matrix user_pref;    // m x r
    Matrix item_quality;  // n x r
};

// Sigmoid-shaped preference/quality scores; masked entries are 0, unmasked
// user entries lie in (1, N) and item entries in (1, 1 + (N-1)).
AspectMatrices build_aspect_matrices(const MentionStats& stats, const AspectConfig& cfg);

double user_aspect_score(double freq, int rating_scale);
double item_aspect_score(double freq, double sentiment, int rating_scale);

struct RawItemFeatures {
    std::string item_id;
    std::map<std::string, double> continuous;       // by feature name
    std::map<std::string, std::string> categorical;  // by feature name
};

struct ItemRecord {
    ItemComposition composition;
    Vec vector;  // composition.assemble(), cached
};

struct AssembleOptions {
    bool toy_fallback = false;  // fill missing embeddings from toy_embed
    std::uint64_t toy_seed = 0;
};

// Scales continuous values, encodes categoricals, averages token vectors per
// textual field (zero block when a field has no tokens), and concatenates the
// blocks in schema order: continuous, categorical, textual fields.
ItemRecord assemble_item_vector(const RawItemFeatures& raw, const FeatureSchema& schema,
                                const ingest::EmbeddingTable& table,
                                const AssembleOptions& opts = {});

// Componentwise mean of the user's train-split positive item vectors.
Vec build_user_vector(const std::string& user_id, const std::vector<const Vec*>& item_vectors);

// Fit scalers (mean, population std) for the schema's continuous features on
// the given raw items; std floors at 1e-12 for constant features.
void fit_scalers(FeatureSchema& schema, const std::vector<RawItemFeatures>& items);

}  // namespace cfrex::vectorize
