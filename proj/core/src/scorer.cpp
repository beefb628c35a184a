#include "cfrex/scorer.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

namespace cfrex::scorer {

namespace {

constexpr char kModelMagic[8] = {'C', 'F', 'R', 'X', 'M', 'D', 'L', '1'};

struct ForwardTrace {
    Vec z1, a1;  // pre/post first hidden layer
    Vec z2, a2;
    double z3 = 0.0;
    double score = 0.0;
};

ForwardTrace run_forward(const ScorerModel& model, const Vec& input) {
    if (input.size() != model.d_in)
        throw DimensionError("scorer input width " + std::to_string(input.size()) +
                             " != d_in " + std::to_string(model.d_in));
    ForwardTrace t;
    const std::size_t h1 = model.h1(), h2 = model.h2();
    t.z1.resize(h1);
    t.a1.resize(h1);
    for (std::size_t i = 0; i < h1; ++i) {
        double z = model.b1[i];
        const double* row = model.w1.row(i);
        for (std::size_t j = 0; j < model.d_in; ++j) z += row[j] * input[j];
        t.z1[i] = z;
        t.a1[i] = z > 0.0 ? z : 0.0;
    }
    t.z2.resize(h2);
    t.a2.resize(h2);
    for (std::size_t i = 0; i < h2; ++i) {
        double z = model.b2[i];
        const double* row = model.w2.row(i);
        for (std::size_t j = 0; j < h1; ++j) z += row[j] * t.a1[j];
        t.z2[i] = z;
        t.a2[i] = z > 0.0 ? z : 0.0;
    }
    t.z3 = model.b3;
    for (std::size_t i = 0; i < h2; ++i) t.z3 += model.w3[i] * t.a2[i];
    t.score = sigmoid(t.z3);
    return t;
}

Vec concat(const Vec& user, const Vec& item) {
    Vec input;
    input.reserve(user.size() + item.size());
    input.insert(input.end(), user.begin(), user.end());
    input.insert(input.end(), item.begin(), item.end());
    return input;
}

}  // namespace

ScorerModel init_model(std::size_t d_in, std::size_t hidden1, std::size_t hidden2,
                       std::uint64_t seed) {
    if (d_in == 0 || hidden1 == 0 || hidden2 == 0)
        throw Error("model dimensions must be >= 1");
    ScorerModel m;
    m.d_in = d_in;
    m.w1 = Matrix(hidden1, d_in);
    m.b1.assign(hidden1, 0.0);
    m.w2 = Matrix(hidden2, hidden1);
    m.b2.assign(hidden2, 0.0);
    m.w3.assign(hidden2, 0.0);
    m.b3 = 0.0;

    std::mt19937_64 rng(seed);
    auto fill = [&rng](double* data, std::size_t n, std::size_t fan_in, std::size_t fan_out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t i = 0; i < n; ++i) data[i] = u(rng);
    };
    fill(m.w1.data.data(), m.w1.data.size(), d_in, hidden1);
    fill(m.w2.data.data(), m.w2.data.size(), hidden1, hidden2);
    fill(m.w3.data(), m.w3.size(), hidden2, 1);
    return m;
}

double forward_concat(const ScorerModel& model, const Vec& input) {
    return run_forward(model, input).score;
}

double forward(const ScorerModel& model, const Vec& user, const Vec& item) {
    return forward_concat(model, concat(user, item));
}

Gradients backward_params(const ScorerModel& model, const std::vector<Sample>& batch) {
    if (batch.empty()) throw Error("empty batch");
    const std::size_t h1 = model.h1(), h2 = model.h2();
    Gradients g;
    g.w1 = Matrix(h1, model.d_in);
    g.b1.assign(h1, 0.0);
    g.w2 = Matrix(h2, h1);
    g.b2.assign(h2, 0.0);
    g.w3.assign(h2, 0.0);
    g.b3 = 0.0;

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const auto& sample : batch) {
        if (sample.label != 0 && sample.label != 1) throw Error("labels must be 0 or 1");
        ForwardTrace t = run_forward(model, sample.input);
        // d BCE / d z3 = sigmoid(z3) - y
        const double dz3 = (t.score - sample.label) * inv_n;
        g.b3 += dz3;
        Vec dz2(h2);
        for (std::size_t i = 0; i < h2; ++i) {
            g.w3[i] += dz3 * t.a2[i];
            dz2[i] = t.z2[i] > 0.0 ? dz3 * model.w3[i] : 0.0;
        }
        Vec dz1(h1, 0.0);
        for (std::size_t i = 0; i < h2; ++i) {
            if (dz2[i] == 0.0) continue;
            g.b2[i] += dz2[i];
            double* grow = g.w2.row(i);
            const double* wrow = model.w2.row(i);
            for (std::size_t j = 0; j < h1; ++j) {
                grow[j] += dz2[i] * t.a1[j];
                dz1[j] += dz2[i] * wrow[j];
            }
        }
        for (std::size_t i = 0; i < h1; ++i) {
            if (t.z1[i] <= 0.0) continue;
            g.b1[i] += dz1[i];
            double* grow = g.w1.row(i);
            for (std::size_t j = 0; j < model.d_in; ++j) grow[j] += dz1[i] * sample.input[j];
        }
    }
    return g;
}

Vec grad_input_concat(const ScorerModel& model, const Vec& input) {
    ForwardTrace t = run_forward(model, input);
    const std::size_t h1 = model.h1(), h2 = model.h2();
    // d score / d z3 = score (1 - score)
    const double dz3 = t.score * (1.0 - t.score);
    Vec dz1(h1, 0.0);
    for (std::size_t i = 0; i < h2; ++i) {
        if (t.z2[i] <= 0.0) continue;
        const double dz2 = dz3 * model.w3[i];
        const double* wrow = model.w2.row(i);
        for (std::size_t j = 0; j < h1; ++j) dz1[j] += dz2 * wrow[j];
    }
    Vec grad(model.d_in, 0.0);
    for (std::size_t i = 0; i < h1; ++i) {
        if (t.z1[i] <= 0.0 || dz1[i] == 0.0) continue;
        const double* wrow = model.w1.row(i);
        for (std::size_t j = 0; j < model.d_in; ++j) grad[j] += dz1[i] * wrow[j];
    }
    return grad;
}

Vec grad_item_input(const ScorerModel& model, const Vec& user, const Vec& item) {
    Vec full = grad_input_concat(model, concat(user, item));
    return Vec(full.begin() + static_cast<std::ptrdiff_t>(user.size()), full.end());
}

TrainResult train(const std::vector<Sample>& samples, const TrainConfig& cfg) {
    if (samples.empty()) throw Error("no training samples");
    if (!(cfg.lr >= 0.0)) throw Error("learning rate must be >= 0");
    const std::size_t d_in = samples.front().input.size();
    TrainResult result;
    result.model = init_model(d_in, cfg.hidden1, cfg.hidden2, cfg.seed);
    ScorerModel& m = result.model;

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(cfg.seed, "shuffle"));

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            std::vector<Sample> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);
            Gradients g = backward_params(m, batch);

            for (std::size_t i = 0; i < m.w1.data.size(); ++i) m.w1.data[i] -= cfg.lr * g.w1.data[i];
            for (std::size_t i = 0; i < m.b1.size(); ++i) m.b1[i] -= cfg.lr * g.b1[i];
            for (std::size_t i = 0; i < m.w2.data.size(); ++i) m.w2.data[i] -= cfg.lr * g.w2.data[i];
            for (std::size_t i = 0; i < m.b2.size(); ++i) m.b2[i] -= cfg.lr * g.b2[i];
            for (std::size_t i = 0; i < m.w3.size(); ++i) m.w3[i] -= cfg.lr * g.w3[i];
            m.b3 -= cfg.lr * g.b3;

            double batch_loss = 0.0;
            for (const auto& s : batch) {
                const double p = forward_concat(m, s.input);
                const double eps = 1e-12;
                batch_loss -= s.label ? std::log(p + eps) : std::log(1.0 - p + eps);
            }
            batch_loss /= static_cast<double>(batch.size());
            if (!std::isfinite(batch_loss))
                throw NumericalError("training diverged (non-finite loss) at epoch " +
                                     std::to_string(epoch));
            epoch_loss += batch_loss;
            ++n_batches;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(n_batches));
    }
    return result;
}

RankedList rank_topk(const ScorerModel& model, const std::string& user_id, const Vec& user,
                     const std::vector<std::pair<std::string, const Vec*>>& candidates,
                     std::size_t k) {
    if (candidates.size() < k + 1)
        throw Error("rank_topk for user '" + user_id + "' needs at least K+1=" +
                    std::to_string(k + 1) + " candidates, got " +
                    std::to_string(candidates.size()));
    std::vector<ScoredItem> scored;
    scored.reserve(candidates.size());
    for (const auto& [id, vec] : candidates)
        scored.push_back({id, forward(model, user, *vec)});
    std::sort(scored.begin(), scored.end(), [](const ScoredItem& a, const ScoredItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.item_id < b.item_id;
    });
    RankedList out;
    out.user_id = user_id;
    out.k = k;
    out.top.assign(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k));
    out.marginal_score = scored[k].score;
    return out;
}

double ndcg(const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>&
                ranked_vs_truth,
            std::size_t k) {
    if (ranked_vs_truth.empty()) return 0.0;
    double total = 0.0;
    for (const auto& [ranked, truth] : ranked_vs_truth) {
        std::set<std::string> positives(truth.begin(), truth.end());
        double dcg = 0.0;
        const std::size_t depth = std::min(k, ranked.size());
        for (std::size_t p = 0; p < depth; ++p)
            if (positives.count(ranked[p])) dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
        double idcg = 0.0;
        const std::size_t ideal = std::min(k, positives.size());
        for (std::size_t p = 0; p < ideal; ++p)
            idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
        total += idcg > 0.0 ? dcg / idcg : 0.0;
    }
    return total / static_cast<double>(ranked_vs_truth.size());
}

namespace {

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const char* what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in) throw Error(std::string("model file truncated while reading ") + what);
}

}  // namespace

void save_model(const std::string& path, const ScorerModel& model, const ModelHeader& header) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model file: " + path);
    write_bytes(out, kModelMagic, sizeof(kModelMagic));
    std::uint64_t dims[3] = {model.d_in, model.h1(), model.h2()};
    write_bytes(out, dims, sizeof(dims));
    std::uint64_t meta[2] = {header.config_hash, header.seed};
    write_bytes(out, meta, sizeof(meta));
    write_bytes(out, model.w1.data.data(), model.w1.data.size() * sizeof(double));
    write_bytes(out, model.b1.data(), model.b1.size() * sizeof(double));
    write_bytes(out, model.w2.data.data(), model.w2.data.size() * sizeof(double));
    write_bytes(out, model.b2.data(), model.b2.size() * sizeof(double));
    write_bytes(out, model.w3.data(), model.w3.size() * sizeof(double));
    write_bytes(out, &model.b3, sizeof(double));
    if (!out) throw Error("write failed for model file: " + path);
}

ScorerModel load_model(const std::string& path, ModelHeader* header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model file: " + path);
    char magic[8];
    read_bytes(in, magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
        throw Error("not a model file (bad magic): " + path);
    std::uint64_t dims[3];
    read_bytes(in, dims, sizeof(dims), "dims");
    std::uint64_t meta[2];
    read_bytes(in, meta, sizeof(meta), "header");
    if (header) {
        header->config_hash = meta[0];
        header->seed = meta[1];
    }
    ScorerModel m;
    m.d_in = dims[0];
    m.w1 = Matrix(dims[1], dims[0]);
    m.b1.assign(dims[1], 0.0);
    m.w2 = Matrix(dims[2], dims[1]);
    m.b2.assign(dims[2], 0.0);
    m.w3.assign(dims[2], 0.0);
    read_bytes(in, m.w1.data.data(), m.w1.data.size() * sizeof(double), "w1");
    read_bytes(in, m.b1.data(), m.b1.size() * sizeof(double), "b1");
    read_bytes(in, m.w2.data.data(), m.w2.data.size() * sizeof(double), "w2");
    read_bytes(in, m.b2.data(), m.b2.size() * sizeof(double), "b2");
    read_bytes(in, m.w3.data(), m.w3.size() * sizeof(double), "w3");
    read_bytes(in, &m.b3, sizeof(double), "b3");
    return m;
}

}  // namespace cfrex::scorer
