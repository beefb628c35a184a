#include "cfrex/ingest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cfrex::ingest {

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    return "?";
}

std::string SlotKey::str() const {
    return item_id + ":" + field + ":" + std::to_string(position);
}

const SlotEntry* EmbeddingTable::find(const SlotKey& key) const {
    auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& s, std::size_t line_no, const std::string& what) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError("bad " + what + " value '" + s + "'", line_no);
    }
}

Vec parse_vector(const std::string& blob, std::size_t line_no) {
    Vec v;
    std::istringstream is(blob);
    std::string tok;
    while (is >> tok) v.push_back(parse_double(tok, line_no, "vector"));
    return v;
}

}  // namespace

SplitResult split_interactions(std::vector<RawInteraction> rows, const SplitPolicy& policy) {
    if (policy.holdout_valid + policy.holdout_test >= policy.min_items_for_eval)
        throw Error("split policy: holdout_valid + holdout_test must be < min_items_for_eval");
    if (policy.neg_ratio < 1) throw Error("split policy: neg_ratio must be >= 1");

    // Drop users/items below the review thresholds.
    std::map<std::string, std::size_t> user_count, item_count;
    for (const auto& r : rows) {
        ++user_count[r.user_id];
        ++item_count[r.item_id];
    }
    std::vector<RawInteraction> kept;
    kept.reserve(rows.size());
    for (auto& r : rows) {
        if (user_count[r.user_id] >= policy.min_user_reviews &&
            item_count[r.item_id] >= policy.min_item_reviews)
            kept.push_back(std::move(r));
    }

    // Item universe for negative sampling: items surviving the filter.
    std::set<std::string> universe_set;
    for (const auto& r : kept) universe_set.insert(r.item_id);
    std::vector<std::string> universe(universe_set.begin(), universe_set.end());

    // Group per user, ordered by timestamp then file order ("last" holdouts).
    std::map<std::string, std::vector<RawInteraction>> by_user;
    for (auto& r : kept) by_user[r.user_id].push_back(std::move(r));

    SplitResult result;
    for (auto& [user, items] : by_user) {
        std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
            if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
            return a.order < b.order;
        });
        // De-duplicate repeat interactions with the same item, keeping the first.
        std::set<std::string> seen;
        std::vector<const RawInteraction*> uniq;
        for (const auto& r : items)
            if (seen.insert(r.item_id).second) uniq.push_back(&r);

        const bool eval_user = uniq.size() >= policy.min_items_for_eval;
        const std::size_t n = uniq.size();
        const std::size_t n_test = eval_user ? policy.holdout_test : 0;
        const std::size_t n_valid = eval_user ? policy.holdout_valid : 0;
        const std::size_t n_train = n - n_valid - n_test;

        std::size_t pos_per_split[3] = {n_train, n_valid, n_test};
        for (std::size_t i = 0; i < n; ++i) {
            Split sp = i < n_train              ? Split::Train
                       : i < n_train + n_valid  ? Split::Valid
                                                : Split::Test;
            result.interactions.push_back({user, uniq[i]->item_id, 1, sp});
        }

        // Negatives: one seeded shuffle of the user's non-interacted items,
        // consumed in disjoint chunks per split so no negative leaks across splits.
        std::vector<std::string> pool;
        pool.reserve(universe.size());
        for (const auto& it : universe)
            if (!seen.count(it)) pool.push_back(it);
        std::mt19937_64 rng(mix_seed(policy.seed, user));
        std::shuffle(pool.begin(), pool.end(), rng);

        std::size_t cursor = 0;
        const Split order[3] = {Split::Train, Split::Valid, Split::Test};
        for (int s = 0; s < 3; ++s) {
            const std::size_t want = pos_per_split[s] * policy.neg_ratio;
            const std::size_t avail = pool.size() - cursor;
            const std::size_t take = std::min(want, avail);
            for (std::size_t i = 0; i < take; ++i)
                result.interactions.push_back({user, pool[cursor + i], 0, order[s]});
            cursor += take;
            if (take < want)
                result.warnings.push_back({user, order[s], want, take});
        }
    }
    return result;
}

SplitResult load_interactions(const std::string& path, const SplitPolicy& policy) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open interactions file: " + path);
    std::vector<RawInteraction> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() < 2 || fields[0].empty() || fields[1].empty())
            throw ParseError("expected user_id \\t item_id [\\t timestamp]", line_no);
        RawInteraction r;
        r.user_id = fields[0];
        r.item_id = fields[1];
        if (fields.size() >= 3 && !fields[2].empty()) {
            try {
                r.timestamp = std::stoll(fields[2]);
            } catch (const std::exception&) {
                throw ParseError("bad timestamp '" + fields[2] + "'", line_no);
            }
        }
        r.order = line_no;
        rows.push_back(std::move(r));
    }
    return split_interactions(std::move(rows), policy);
}

namespace {

SlotKey parse_slot_key(const std::string& key, std::size_t line_no, std::string* token_out) {
    // item:field:position[:token] with ':'-free item and field names.
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
        std::size_t pos = key.find(':', start);
        if (pos == std::string::npos) {
            if (i < 2) throw ParseError("bad slot key '" + key + "'", line_no);
            parts.push_back(key.substr(start));
            start = key.size();
            break;
        }
        parts.push_back(key.substr(start, pos - start));
        start = pos + 1;
    }
    SlotKey k;
    k.item_id = parts[0];
    k.field = parts[1];
    try {
        k.position = std::stoi(parts[2]);
    } catch (const std::exception&) {
        throw ParseError("bad slot position in key '" + key + "'", line_no);
    }
    if (token_out && start < key.size()) *token_out = key.substr(start);
    return k;
}

}  // namespace

EmbeddingTable load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open embeddings file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw ParseError("missing header", 1);
    std::size_t dim = 0, count = 0;
    if (std::sscanf(header.c_str(), "dim=%zu count=%zu", &dim, &count) != 2)
        throw ParseError("header must be 'dim=<d> count=<n>'", 1);
    if (dim == 0) throw ParseError("dim must be >= 1", 1);

    EmbeddingTable table;
    table.dim = dim;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos) throw ParseError("expected key \\t values", line_no);
        std::string token;
        SlotKey key = parse_slot_key(line.substr(0, tab), line_no, &token);
        Vec v = parse_vector(line.substr(tab + 1), line_no);
        // Token-only entries (no values) are allowed; the assembly step fills
        // them from the toy embedder when configured.
        if (!v.empty() && v.size() != dim)
            throw DimensionError("embedding '" + key.str() + ":" + token + "' has " +
                                 std::to_string(v.size()) + " values, header declares dim=" +
                                 std::to_string(dim));
        for (double x : v)
            if (!std::isfinite(x))
                throw ParseError("non-finite value for key '" + key.str() + "'", line_no);
        table.entries[key] = SlotEntry{token, std::move(v)};
    }
    if (table.entries.size() != count)
        throw Error("embeddings file declares count=" + std::to_string(count) + " but has " +
                    std::to_string(table.entries.size()) + " entries");
    return table;
}

void save_embeddings(const std::string& path, const EmbeddingTable& table) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write embeddings file: " + path);
    out.precision(17);
    out << "dim=" << table.dim << " count=" << table.entries.size() << "\n";
    for (const auto& [key, entry] : table.entries) {
        out << key.str() << ":" << entry.token << "\t";
        for (std::size_t i = 0; i < entry.vector.size(); ++i)
            out << (i ? " " : "") << entry.vector[i];
        out << "\n";
    }
}

CandidateSet load_candidates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open candidates file: " + path);
    CandidateSet set;
    set.dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_tabs(line);
        if (fields.size() != 6)
            throw ParseError("expected item \\t field \\t pos \\t token \\t logit \\t values",
                             line_no);
        SlotKey key;
        key.item_id = fields[0];
        key.field = fields[1];
        try {
            key.position = std::stoi(fields[2]);
        } catch (const std::exception&) {
            throw ParseError("bad position '" + fields[2] + "'", line_no);
        }
        Candidate c;
        c.token = fields[3];
        c.logit = parse_double(fields[4], line_no, "logit");
        c.vector = parse_vector(fields[5], line_no);
        if (set.dim == 0) set.dim = c.vector.size();
        if (c.vector.size() != set.dim)
            throw DimensionError("candidate '" + c.token + "' for slot '" + key.str() +
                                 "' has dim " + std::to_string(c.vector.size()) +
                                 ", expected " + std::to_string(set.dim));
        set.slots[key].push_back(std::move(c));
    }
    std::size_t n = 0;
    for (const auto& [key, list] : set.slots) {
        if (n == 0) n = list.size();
        if (list.size() != n)
            throw Error("slot '" + key.str() + "' has " + std::to_string(list.size()) +
                        " candidates, expected " + std::to_string(n));
    }
    if (n) set.n_candidates = n;
    return set;
}

void save_candidates(const std::string& path, const CandidateSet& set) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write candidates file: " + path);
    out.precision(17);
    for (const auto& [key, list] : set.slots) {
        for (const auto& c : list) {
            out << key.item_id << "\t" << key.field << "\t" << key.position << "\t" << c.token
                << "\t" << c.logit << "\t";
            for (std::size_t i = 0; i < c.vector.size(); ++i)
                out << (i ? " " : "") << c.vector[i];
            out << "\n";
        }
    }
}

Vec toy_embed(const std::string& token, std::size_t dim, std::uint64_t seed) {
    if (dim < 1) throw Error("toy_embed: dim must be >= 1");
    std::mt19937_64 rng(mix_seed(seed, token));
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(dim);
    double norm_sq = 0.0;
    do {
        norm_sq = 0.0;
        for (auto& x : v) {
            x = normal(rng);
            norm_sq += x * x;
        }
    } while (norm_sq == 0.0);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& x : v) x *= inv;
    return v;
}

}  // namespace cfrex::ingest
