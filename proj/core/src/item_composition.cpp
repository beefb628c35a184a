#include "cfrex/item_composition.hpp"

#include <algorithm>

namespace cfrex {

std::size_t ItemComposition::width() const {
    std::size_t w = continuous.size();
    for (const auto& c : categoricals) w += c.width();
    for (const auto& f : fields) w += f.dim;
    return w;
}

std::size_t ItemComposition::categorical_offset(std::size_t i) const {
    std::size_t off = continuous.size();
    for (std::size_t k = 0; k < i; ++k) off += categoricals[k].width();
    return off;
}

std::size_t ItemComposition::field_offset(std::size_t f) const {
    std::size_t off = categorical_offset(categoricals.size());
    for (std::size_t k = 0; k < f; ++k) off += fields[k].dim;
    return off;
}

std::size_t ItemComposition::token_count() const {
    std::size_t n = 0;
    for (const auto& f : fields) n += f.tokens.size();
    return n;
}

std::pair<std::size_t, std::size_t> ItemComposition::token_location(std::size_t slot) const {
    for (std::size_t f = 0; f < fields.size(); ++f) {
        if (slot < fields[f].tokens.size()) return {f, slot};
        slot -= fields[f].tokens.size();
    }
    throw Error("token slot out of range");
}

const ItemComposition::Token& ItemComposition::token_at(std::size_t slot) const {
    auto [f, p] = token_location(slot);
    return fields[f].tokens[p];
}

Vec ItemComposition::assemble() const {
    return assemble_edited(Edits{});
}

Vec ItemComposition::assemble_token_weights(const std::vector<double>& weights) const {
    if (weights.size() != token_count())
        throw DimensionError("token weight vector length mismatch");
    Vec out(width(), 0.0);
    std::copy(continuous.begin(), continuous.end(), out.begin());
    for (std::size_t c = 0; c < categoricals.size(); ++c) {
        const Vec& enc = categoricals[c].encodings[categoricals[c].original_index];
        std::copy(enc.begin(), enc.end(), out.begin() + categorical_offset(c));
    }
    std::size_t slot = 0;
    for (std::size_t f = 0; f < fields.size(); ++f) {
        const auto& field = fields[f];
        const std::size_t off = field_offset(f);
        if (field.tokens.empty()) continue;
        const double inv = 1.0 / static_cast<double>(field.tokens.size());
        for (const auto& tok : field.tokens) {
            const double w = weights[slot++] * inv;
            for (std::size_t d = 0; d < field.dim; ++d) out[off + d] += w * tok.vector[d];
        }
    }
    return out;
}

Vec ItemComposition::assemble_masked(const std::vector<std::uint8_t>& keep) const {
    Edits e;
    e.token_keep = keep;
    return assemble_edited(e);
}

Vec ItemComposition::assemble_with_tokens(const std::vector<const Vec*>& token_vectors) const {
    Edits e;
    e.token_replacements = token_vectors;
    return assemble_edited(e);
}

Vec ItemComposition::assemble_edited(const Edits& edits) const {
    if (!edits.token_keep.empty() && edits.token_keep.size() != token_count())
        throw DimensionError("token keep mask length mismatch");
    if (!edits.token_replacements.empty() && edits.token_replacements.size() != token_count())
        throw DimensionError("token replacement list length mismatch");
    if (!edits.continuous_shift.empty() && edits.continuous_shift.size() != continuous.size())
        throw DimensionError("continuous shift length mismatch");
    if (!edits.categorical_choice.empty() && edits.categorical_choice.size() != categoricals.size())
        throw DimensionError("categorical choice list length mismatch");

    Vec out(width(), 0.0);
    for (std::size_t i = 0; i < continuous.size(); ++i)
        out[i] = continuous[i] + (edits.continuous_shift.empty() ? 0.0 : edits.continuous_shift[i]);

    for (std::size_t c = 0; c < categoricals.size(); ++c) {
        int idx = categoricals[c].original_index;
        if (!edits.categorical_choice.empty() && edits.categorical_choice[c] >= 0)
            idx = edits.categorical_choice[c];
        const Vec& enc = categoricals[c].encodings[idx];
        std::copy(enc.begin(), enc.end(), out.begin() + categorical_offset(c));
    }

    std::size_t slot_base = 0;
    for (std::size_t f = 0; f < fields.size(); ++f) {
        const auto& field = fields[f];
        const std::size_t off = field_offset(f);
        std::size_t kept = 0;
        Vec sum(field.dim, 0.0);
        for (std::size_t p = 0; p < field.tokens.size(); ++p) {
            const std::size_t slot = slot_base + p;
            if (!edits.token_keep.empty() && !edits.token_keep[slot]) continue;
            const Vec* v = &field.tokens[p].vector;
            if (!edits.token_replacements.empty() && edits.token_replacements[slot])
                v = edits.token_replacements[slot];
            for (std::size_t d = 0; d < field.dim; ++d) sum[d] += (*v)[d];
            ++kept;
        }
        const std::size_t denom =
            edits.renormalize_kept ? kept : field.tokens.size();
        if (kept > 0 && denom > 0) {
            const double inv = 1.0 / static_cast<double>(denom);
            for (std::size_t d = 0; d < field.dim; ++d) out[off + d] = sum[d] * inv;
        }
        slot_base += field.tokens.size();
    }
    return out;
}

}  // namespace cfrex
