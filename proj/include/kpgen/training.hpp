#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kpgen/importance_model.hpp"
#include "kpgen/sparse_vector.hpp"

namespace kpgen {

struct LossBreakdown {
    double rank_loss = 0.0;
    double query_reg = 0.0;
    double doc_reg = 0.0;
    double total = 0.0;
    double lambda_q = 0.0;
    double lambda_d = 0.0;
};

/// Contrastive loss with in-batch negatives: for query i the softmax runs over
/// its positive, its paired negative and every other item's positive.
double rank_loss_ibn(std::span<const SparseTermVector> queries, std::span<const SparseTermVector> positives,
                     std::span<const SparseTermVector> negatives);

/// FLOPS regulariser: sum over terms of the squared mean activation in the batch.
double flops_reg(std::span<const SparseTermVector> batch, std::size_t vocab_size);

/// One training example as term-id sequences.
struct EncodedTriplet {
    std::vector<TermId> reference;
    std::vector<TermId> positive;
    std::vector<TermId> negative;
};

struct ModelGradient {
    std::vector<double> embeddings;
    std::vector<double> projection;
    std::vector<double> bias;
};

/// Total loss rank + lambda_q * FLOPS(references) + lambda_d * FLOPS(positives
/// and negatives) for one batch, and its gradient w.r.t. every parameter when
/// `gradient` is non-null.
LossBreakdown batch_loss(const MicroImportanceModel& model, std::span<const EncodedTriplet> batch, double lambda_q,
                         double lambda_d, ModelGradient* gradient = nullptr);

struct TrainConfig {
    double lr = 0.05;
    std::size_t batch = 32;
    std::size_t steps = 500;
    double lambda_q = 0.05;
    double lambda_d = 0.03;
    std::uint64_t seed = 42;
    std::size_t dim = 16;
    double momentum = 0.9;
    double init_scale = 1.0;

    /// Keys: lr, batch, steps, lambda_q, lambda_d, seed, d, momentum, init_scale.
    static TrainConfig from_key_values(const std::map<std::string, std::string>& kv);
    std::map<std::string, std::string> to_key_values() const;
};

struct TrainLogEntry {
    std::size_t step = 0;
    LossBreakdown loss;
};

/// Mini-batch SGD with momentum on batch_loss().total. Batches are drawn from
/// a seeded per-epoch shuffle, so (seed, data order, config) fix the result.
/// Throws std::runtime_error if the loss becomes non-finite.
std::vector<TrainLogEntry> train(MicroImportanceModel& model, std::span<const EncodedTriplet> data,
                                 const TrainConfig& config);

}  // namespace kpgen
