#include "kpgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "kpgen/error.hpp"
#include "kpgen/io.hpp"

namespace kpgen {
namespace {

// Indices into the pooled batch: candidate c for query i is positives[i] (c=0),
// negatives[i] (c=1), then positives[k] for k != i in ascending order.
struct CandidateRef {
    bool is_negative;
    std::size_t item;
};

std::vector<CandidateRef> candidates_for(std::size_t i, std::size_t batch) {
    std::vector<CandidateRef> refs;
    refs.reserve(batch + 1);
    refs.push_back({false, i});
    refs.push_back({true, i});
    for (std::size_t k = 0; k < batch; ++k) {
        if (k != i) refs.push_back({false, k});
    }
    return refs;
}

// Mean in-batch-negative loss; fills coeff[i][c] = dL/dscore_{i,c} when requested.
double ibn_loss(std::span<const SparseTermVector> queries, std::span<const SparseTermVector> positives,
                std::span<const SparseTermVector> negatives, std::vector<std::vector<double>>* coeff) {
    const std::size_t batch = queries.size();
    if (batch == 0) throw std::invalid_argument("rank_loss_ibn: empty batch");
    if (positives.size() != batch || negatives.size() != batch) {
        throw std::invalid_argument("rank_loss_ibn: batch sizes differ");
    }
    if (coeff != nullptr) coeff->assign(batch, {});
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const auto refs = candidates_for(i, batch);
        std::vector<double> scores;
        scores.reserve(refs.size());
        for (const auto& r : refs) scores.push_back(dot(queries[i], r.is_negative ? negatives[r.item] : positives[r.item]));
        const double top = *std::max_element(scores.begin(), scores.end());
        double z = 0.0;
        for (double s : scores) z += std::exp(s - top);
        const double log_z = top + std::log(z);
        total += log_z - scores[0];
        if (coeff != nullptr) {
            auto& row = (*coeff)[i];
            row.resize(scores.size());
            for (std::size_t c = 0; c < scores.size(); ++c) {
                row[c] = (std::exp(scores[c] - log_z) - (c == 0 ? 1.0 : 0.0)) / static_cast<double>(batch);
            }
        }
    }
    return total / static_cast<double>(batch);
}

// Forward pass keeping, per stored entry, the pooled raw logit and the input
// token that attained the max.
struct Encoded {
    SparseTermVector vec;
    std::vector<TermId> argmax;
    std::vector<double> raw;
    std::vector<double> grad;  // dL/dw per entry
};

Encoded encode(const MicroImportanceModel& model, std::span<const TermId> ids) {
    if (ids.empty()) throw DataError("empty document");
    const std::size_t vocab = model.vocab_size();
    std::vector<TermId> distinct(ids.begin(), ids.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<double> pooled(vocab, -std::numeric_limits<double>::infinity());
    std::vector<TermId> arg(vocab, 0);
    for (const TermId t : distinct) {
        const auto raw = model.raw_logits(t);
        for (std::size_t j = 1; j < vocab; ++j) {
            if (raw[j] > pooled[j]) {
                pooled[j] = raw[j];
                arg[j] = t;
            }
        }
    }
    Encoded enc;
    std::vector<SparseTermVector::Entry> entries;
    for (std::size_t j = 1; j < vocab; ++j) {
        if (pooled[j] > 0.0) {
            entries.emplace_back(static_cast<TermId>(j), std::log1p(pooled[j]));
            enc.argmax.push_back(arg[j]);
            enc.raw.push_back(pooled[j]);
        }
    }
    enc.vec = SparseTermVector::from_entries({}, std::move(entries));
    enc.grad.assign(enc.vec.nnz(), 0.0);
    return enc;
}

// Weight of id j in `enc`, or 0.
double lookup(const Encoded& enc, TermId j) { return enc.vec.weight(j); }

void add_scaled(Encoded& target, const Encoded& source, double scale) {
    const auto& entries = target.vec.entries();
    for (std::size_t e = 0; e < entries.size(); ++e) target.grad[e] += scale * lookup(source, entries[e].first);
}

double flops_with_grad(std::vector<Encoded*>& side, std::size_t vocab, double lambda, bool want_grad) {
    const double n = static_cast<double>(side.size());
    std::vector<double> mean(vocab, 0.0);
    for (const auto* enc : side) {
        for (const auto& [j, w] : enc->vec.entries()) mean[j] += w;
    }
    double reg = 0.0;
    for (auto& m : mean) {
        m /= n;
        reg += m * m;
    }
    if (want_grad) {
        for (auto* enc : side) {
            const auto& entries = enc->vec.entries();
            for (std::size_t e = 0; e < entries.size(); ++e) enc->grad[e] += lambda * 2.0 * mean[entries[e].first] / n;
        }
    }
    return reg;
}

}  // namespace

double rank_loss_ibn(std::span<const SparseTermVector> queries, std::span<const SparseTermVector> positives,
                     std::span<const SparseTermVector> negatives) {
    return ibn_loss(queries, positives, negatives, nullptr);
}

double flops_reg(std::span<const SparseTermVector> batch, std::size_t vocab_size) {
    if (batch.empty()) throw std::invalid_argument("flops_reg: empty batch");
    std::vector<double> mean(vocab_size, 0.0);
    for (const auto& v : batch) {
        for (const auto& [j, w] : v.entries()) {
            if (j >= vocab_size) throw std::invalid_argument("flops_reg: term id outside vocabulary");
            mean[j] += w;
        }
    }
    const double n = static_cast<double>(batch.size());
    double reg = 0.0;
    for (double m : mean) reg += (m / n) * (m / n);
    return reg;
}

LossBreakdown batch_loss(const MicroImportanceModel& model, std::span<const EncodedTriplet> batch, double lambda_q,
                         double lambda_d, ModelGradient* gradient) {
    const std::size_t b = batch.size();
    if (b == 0) throw std::invalid_argument("batch_loss: empty batch");
    std::vector<Encoded> queries;
    std::vector<Encoded> positives;
    std::vector<Encoded> negatives;
    for (const auto& t : batch) {
        queries.push_back(encode(model, t.reference));
        positives.push_back(encode(model, t.positive));
        negatives.push_back(encode(model, t.negative));
    }
    std::vector<SparseTermVector> qv, pv, nv;
    for (std::size_t i = 0; i < b; ++i) {
        qv.push_back(queries[i].vec);
        pv.push_back(positives[i].vec);
        nv.push_back(negatives[i].vec);
    }
    const bool want_grad = gradient != nullptr;
    std::vector<std::vector<double>> coeff;
    LossBreakdown loss;
    loss.lambda_q = lambda_q;
    loss.lambda_d = lambda_d;
    loss.rank_loss = ibn_loss(qv, pv, nv, want_grad ? &coeff : nullptr);

    if (want_grad) {
        for (std::size_t i = 0; i < b; ++i) {
            const auto refs = candidates_for(i, b);
            for (std::size_t c = 0; c < refs.size(); ++c) {
                Encoded& doc = refs[c].is_negative ? negatives[refs[c].item] : positives[refs[c].item];
                add_scaled(queries[i], doc, coeff[i][c]);
                add_scaled(doc, queries[i], coeff[i][c]);
            }
        }
    }

    std::vector<Encoded*> query_side;
    std::vector<Encoded*> doc_side;
    for (auto& q : queries) query_side.push_back(&q);
    for (auto& p : positives) doc_side.push_back(&p);
    for (auto& n : negatives) doc_side.push_back(&n);
    loss.query_reg = flops_with_grad(query_side, model.vocab_size(), lambda_q, want_grad);
    loss.doc_reg = flops_with_grad(doc_side, model.vocab_size(), lambda_d, want_grad);
    loss.total = loss.rank_loss + lambda_q * loss.query_reg + lambda_d * loss.doc_reg;

    if (want_grad) {
        const std::size_t vocab = model.vocab_size();
        const std::size_t dim = model.dim();
        gradient->embeddings.assign(model.embeddings().size(), 0.0);
        gradient->projection.assign(model.projection().size(), 0.0);
        gradient->bias.assign(model.bias().size(), 0.0);
        const auto& emb = model.embeddings();
        const auto& proj = model.projection();
        auto backprop = [&](const Encoded& enc) {
            const auto& entries = enc.vec.entries();
            for (std::size_t e = 0; e < entries.size(); ++e) {
                if (enc.grad[e] == 0.0) continue;
                const std::size_t j = entries[e].first;
                const std::size_t t = enc.argmax[e];
                const double g = enc.grad[e] / (1.0 + enc.raw[e]);
                for (std::size_t k = 0; k < dim; ++k) {
                    gradient->embeddings[t * dim + k] += g * proj[k * vocab + j];
                    gradient->projection[k * vocab + j] += g * emb[t * dim + k];
                }
                if (model.has_bias()) gradient->bias[j] += g;
            }
        };
        for (const auto* enc : query_side) backprop(*enc);
        for (const auto* enc : doc_side) backprop(*enc);
    }
    return loss;
}

TrainConfig TrainConfig::from_key_values(const std::map<std::string, std::string>& kv) {
    TrainConfig c;
    for (const auto& [key, value] : kv) {
        if (key == "lr") c.lr = parse_double(value, key);
        else if (key == "batch") c.batch = parse_uint(value, key);
        else if (key == "steps") c.steps = parse_uint(value, key);
        else if (key == "lambda_q") c.lambda_q = parse_double(value, key);
        else if (key == "lambda_d") c.lambda_d = parse_double(value, key);
        else if (key == "seed") c.seed = parse_uint(value, key);
        else if (key == "d") c.dim = parse_uint(value, key);
        else if (key == "momentum") c.momentum = parse_double(value, key);
        else if (key == "init_scale") c.init_scale = parse_double(value, key);
        else throw ConfigError("unknown training key '" + key + "'");
    }
    if (c.batch == 0) throw ConfigError("batch must be >= 1");
    if (c.dim == 0) throw ConfigError("d must be >= 1");
    if (!(c.lr > 0.0)) throw ConfigError("lr must be > 0");
    if (c.lambda_q < 0.0 || c.lambda_d < 0.0) throw ConfigError("lambda_q and lambda_d must be >= 0");
    if (c.momentum < 0.0 || c.momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    return c;
}

std::map<std::string, std::string> TrainConfig::to_key_values() const {
    return {{"lr", format_double(lr)},
            {"batch", std::to_string(batch)},
            {"steps", std::to_string(steps)},
            {"lambda_q", format_double(lambda_q)},
            {"lambda_d", format_double(lambda_d)},
            {"seed", std::to_string(seed)},
            {"d", std::to_string(dim)},
            {"momentum", format_double(momentum)},
            {"init_scale", format_double(init_scale)}};
}

std::vector<TrainLogEntry> train(MicroImportanceModel& model, std::span<const EncodedTriplet> data,
                                 const TrainConfig& config) {
    std::vector<TrainLogEntry> log;
    if (config.steps == 0) return log;
    if (data.empty()) throw DataError("no training triplets");
    const std::size_t batch_size = std::min(config.batch, data.size());

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto reshuffle = [&] {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    };
    reshuffle();
    std::size_t cursor = 0;

    ModelGradient grad;
    std::vector<double> vel_e(model.embeddings().size(), 0.0);
    std::vector<double> vel_p(model.projection().size(), 0.0);
    std::vector<double> vel_b(model.bias().size(), 0.0);
    auto apply = [&](std::vector<double>& param, std::vector<double>& vel, const std::vector<double>& g) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            vel[i] = config.momentum * vel[i] - config.lr * g[i];
            param[i] += vel[i];
        }
    };

    std::vector<EncodedTriplet> batch;
    for (std::size_t step = 0; step < config.steps; ++step) {
        batch.clear();
        while (batch.size() < batch_size) {
            if (cursor == order.size()) {
                reshuffle();
                cursor = 0;
            }
            batch.push_back(data[order[cursor++]]);
        }
        const auto loss = batch_loss(model, batch, config.lambda_q, config.lambda_d, &grad);
        if (!std::isfinite(loss.total)) {
            throw std::runtime_error("non-finite loss at step " + std::to_string(step) + " (rank " +
                                     format_double(loss.rank_loss) + ", query reg " + format_double(loss.query_reg) +
                                     ", doc reg " + format_double(loss.doc_reg) + "); lower the learning rate");
        }
        log.push_back({step, loss});
        apply(model.embeddings(), vel_e, grad.embeddings);
        apply(model.projection(), vel_p, grad.projection);
        apply(model.bias(), vel_b, grad.bias);
    }
    return log;
}

}  // namespace kpgen
