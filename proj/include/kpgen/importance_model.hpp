#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kpgen/sparse_vector.hpp"
#include "kpgen/vocabulary.hpp"

namespace kpgen {

/// Maps a term-id sequence to nonnegative importances over the vocabulary.
class TermImportancePredictor {
public:
    virtual ~TermImportancePredictor() = default;
    virtual SparseTermVector predict(std::span<const TermId> term_ids) const = 0;
    virtual std::size_t vocab_size() const = 0;
};

/// Context-free expansion model: raw logit of output term j for input token t
/// is `embedding[t] . projection[:, j] + bias[j]`; document weights are the
/// max over tokens of log(1 + ReLU(raw)). The OOV id has an input row but
/// never receives an output weight.
class MicroImportanceModel final : public TermImportancePredictor {
public:
    MicroImportanceModel(std::size_t vocab_size, std::size_t dim, bool use_bias = true);

    /// Gaussian embeddings ~ N(0, scale^2) with the projection tied to them
    /// (column j = embedding row j / sqrt(dim)), so every token starts out
    /// predicting itself; bias ~ N(0, (scale/10)^2).
    static MicroImportanceModel random(std::size_t vocab_size, std::size_t dim, std::uint64_t seed,
                                       double scale = 1.0, bool use_bias = true);

    SparseTermVector predict(std::span<const TermId> term_ids) const override;
    std::size_t vocab_size() const override { return vocab_size_; }
    std::size_t dim() const { return dim_; }
    bool has_bias() const { return has_bias_; }

    /// Raw logits for one input token, length vocab_size().
    std::vector<double> raw_logits(TermId token) const;

    // Row-major: embeddings is V x d (row per input token), projection is d x V.
    std::vector<double>& embeddings() { return embeddings_; }
    std::vector<double>& projection() { return projection_; }
    std::vector<double>& bias() { return bias_; }
    const std::vector<double>& embeddings() const { return embeddings_; }
    const std::vector<double>& projection() const { return projection_; }
    const std::vector<double>& bias() const { return bias_; }

    /// Binary checkpoint; load() reports truncation with the byte offset.
    void save(const std::filesystem::path& path) const;
    static MicroImportanceModel load(const std::filesystem::path& path);

    friend bool operator==(const MicroImportanceModel& a, const MicroImportanceModel& b) {
        return a.vocab_size_ == b.vocab_size_ && a.dim_ == b.dim_ && a.has_bias_ == b.has_bias_ &&
               a.embeddings_ == b.embeddings_ && a.projection_ == b.projection_ && a.bias_ == b.bias_;
    }

private:
    std::size_t vocab_size_;
    std::size_t dim_;
    bool has_bias_;
    std::vector<double> embeddings_;
    std::vector<double> projection_;
    std::vector<double> bias_;
};

/// Returns precomputed vectors for documents keyed by id; falls back to a
/// predictor when an id is unknown (and throws if there is none).
class VectorLookup {
public:
    VectorLookup(const VectorStore* store, const TermImportancePredictor* predictor)
        : store_(store), predictor_(predictor) {}
    SparseTermVector vector_for(const std::string& doc_id, std::span<const TermId> term_ids) const;

private:
    const VectorStore* store_;
    const TermImportancePredictor* predictor_;
};

}  // namespace kpgen
