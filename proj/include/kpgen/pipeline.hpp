#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "kpgen/corpus_index.hpp"
#include "kpgen/datasets.hpp"
#include "kpgen/importance_model.hpp"
#include "kpgen/pos_tagger.hpp"
#include "kpgen/text.hpp"

namespace kpgen {

struct PipelineConfig {
    double alpha = 0.8;
    double beta = 0.8;
    double gamma = -0.25;
    double lambda = 1.5;
    std::size_t neighbors = 100;
    std::size_t candidate_cap = 100;
    std::size_t per_neighbor_cap = 10;
    std::size_t top_k = 10;

    // Debug hooks: constant multipliers on the two experts, and optional
    // sum-normalisation of informativeness over the candidate set.
    double informativeness_scale = 1.0;
    double phraseness_scale = 1.0;
    bool normalize_informativeness = false;
    /// With alpha = beta = 1 the neighborhood cannot change any output, so
    /// retrieval is skipped. Turning this off computes it anyway.
    bool short_circuit_extraction = true;

    bool extraction_mode() const { return alpha == 1.0 && beta == 1.0; }
    /// Throws ConfigError on out-of-range values.
    void validate() const;

    static PipelineConfig from_key_values(const std::map<std::string, std::string>& kv);
    static PipelineConfig from_key_values(const std::map<std::string, std::string>& kv, PipelineConfig base);
    std::map<std::string, std::string> to_key_values() const;
};

struct ScoredKeyphrase {
    CandidatePhrase phrase;
    double phraseness = 0.0;
    double informativeness = 0.0;
    double position_penalty = 1.0;
    double score = 0.0;
    bool is_present = false;
};

struct KeyphraseResult {
    std::string doc_id;
    std::vector<ScoredKeyphrase> present;
    std::vector<ScoredKeyphrase> absent;
    Neighborhood neighborhood;
    std::size_t given_candidates = 0;  // |C_x|
    std::size_t total_candidates = 0;  // |Ĉ_x|
};

/// Evidence from one retrieved neighbor: its normalised similarity, term
/// vector and pruned candidates C̃ (at most the per-neighbor cap, in f order).
struct NeighborEvidence {
    double similarity = 0.0;
    const SparseTermVector* vector = nullptr;
    std::vector<const CandidatePhrase*> pruned;
    std::unordered_set<std::string> pruned_keys;
};

/// 1 + 1/log2(P + 2) for a present phrase at word index P; 1 when absent.
double position_penalty(std::size_t position);

/// β·P(c|C_x) + (1-β)·Σ s̃·P(c|C̃), with P(c|C) = 1/|C| for members.
double phraseness(const std::string& key, const std::unordered_set<std::string>& given_keys,
                  std::span<const NeighborEvidence> neighbors, double beta);

/// Σ ŵ[c_i] / (|c| - γ), ŵ = α·w^x + (1-α)·Σ s̃·w^{x'}.
double informativeness(std::span<const TermId> term_ids, const SparseTermVector& x_vector,
                       std::span<const NeighborEvidence> neighbors, double alpha, double gamma);

/// C_x followed by the neighbor phrases that make the top `cap` of C_N by
/// phraseness (ties: key ascending) and are not already in C_x. Neighbor
/// phrases found in the document get their real position.
std::vector<CandidatePhrase> assemble_candidates(std::span<const CandidatePhrase> given, const StemmedDocument& doc,
                                                 std::span<const NeighborEvidence> neighbors, double beta,
                                                 std::size_t cap);

class KeyphraseGenerator {
public:
    KeyphraseGenerator(const CorpusIndex& index, const VectorLookup& vectors, const PosTagger& tagger)
        : index_(index), vectors_(vectors), tagger_(tagger) {}

    /// Scores every candidate of Ĉ_x and returns the top-k present and
    /// absent lists. Throws DataError for a document without words.
    KeyphraseResult generate(const Document& doc, const PipelineConfig& config) const;

    /// Per-document parallel batch; results follow input order.
    std::vector<KeyphraseResult> generate_all(std::span<const Document> docs, const PipelineConfig& config,
                                              std::size_t threads = 1) const;

private:
    const CorpusIndex& index_;
    const VectorLookup& vectors_;
    const PosTagger& tagger_;
};

Json result_to_json(const KeyphraseResult& result);

}  // namespace kpgen
