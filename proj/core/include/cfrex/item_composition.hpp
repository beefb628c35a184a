#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfrex/common.hpp"

namespace cfrex {

// One item's vector broken into its editable parts. Explainers edit the
// parts (token weights/masks, categorical choices, continuous shifts) and
// reassemble; layout is fixed: continuous dims, categorical blocks, then one
// averaged block per textual field.
struct ItemComposition {
    struct Token {
        std::string token;
        Vec vector;  // embedding, length = field dim
    };
    struct Field {
        std::string name;
        std::vector<Token> tokens;
        std::size_t dim = 0;
    };
    struct Categorical {
        std::string name;
        std::vector<std::string> domain;
        std::vector<Vec> encodings;  // per domain value, all same width
        int original_index = 0;
        int baseline_index = 0;  // "not specified" value used for removal
        std::size_t width() const { return encodings.empty() ? 0 : encodings[0].size(); }
    };

    std::string item_id;
    std::vector<std::string> continuous_names;
    Vec continuous;  // scaled values
    // Scaler stats, kept so edits can report raw feature values; empty when
    // the item was built without a schema.
    Vec continuous_mean;
    Vec continuous_std;
    std::vector<Categorical> categoricals;
    std::vector<Field> fields;

    std::size_t width() const;
    std::size_t continuous_offset(std::size_t i) const { return i; }
    std::size_t categorical_offset(std::size_t i) const;
    std::size_t field_offset(std::size_t f) const;

    // Total token slots across fields; slot index t maps to (field, position)
    // in field order.
    std::size_t token_count() const;
    std::pair<std::size_t, std::size_t> token_location(std::size_t slot) const;
    const Token& token_at(std::size_t slot) const;

    // Factual vector.
    Vec assemble() const;

    // Weighted token mean with denominator = token count (optimization-time
    // semantics of the text-weight explainer).
    Vec assemble_token_weights(const std::vector<double>& weights) const;

    // Kept-token mean renormalized over the kept count; a field with nothing
    // kept contributes a zero block.
    Vec assemble_masked(const std::vector<std::uint8_t>& keep) const;

    // Per-slot candidate replacement: chosen[t] < 0 keeps the original token.
    Vec assemble_with_tokens(const std::vector<const Vec*>& token_vectors) const;

    // Variant with categorical choices and continuous shifts applied as well.
    struct Edits {
        std::vector<std::uint8_t> token_keep;          // empty = keep all
        std::vector<const Vec*> token_replacements;    // empty = none; null = original
        std::vector<int> categorical_choice;           // empty = original; else domain index
        Vec continuous_shift;                          // empty = none
        bool renormalize_kept = true;
    };
    Vec assemble_edited(const Edits& edits) const;
};

}  // namespace cfrex
