#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kpgen/bm25.hpp"
#include "kpgen/datasets.hpp"
#include "kpgen/importance_model.hpp"
#include "kpgen/pos_tagger.hpp"
#include "kpgen/sparse_vector.hpp"
#include "kpgen/text.hpp"
#include "kpgen/vocabulary.hpp"

namespace kpgen {

/// A document after tokenization, tagging and chunking.
struct AnalyzedDocument {
    std::vector<TaggedToken> tokens;
    std::vector<std::string> words;
    std::vector<TermId> term_ids;
    /// Distinct noun phrases in first-occurrence order, term ids assigned.
    std::vector<CandidatePhrase> candidates;
};

/// Uses the document's pre-tagged tokens when present, else tokenizes and tags.
AnalyzedDocument analyze(const Document& doc, const PosTagger& tagger, const Vocabulary& vocab);

/// Length-normalised sum of term weights: sum_i w[c_i] / (|c| - gamma).
double aggregate_importance(std::span<const TermId> term_ids, const SparseTermVector& weights, double gamma);

struct NeighborEntry {
    std::uint32_t doc = 0;
    std::string id;
    double score = 0.0;       // raw BM25 similarity
    double similarity = 0.0;  // score / sum of scores over the neighborhood
};

struct Neighborhood {
    std::string query_id;
    std::vector<NeighborEntry> entries;
};

/// Top-n BM25 neighbors of a query document, excluding the document itself
/// when it is indexed. A zero score mass yields an empty neighborhood.
Neighborhood retrieve_neighbors(const Bm25Index& index, std::span<const std::string> query_words,
                                const std::string& query_id, std::size_t n);

struct ScoredCandidate {
    CandidatePhrase phrase;
    double f = 0.0;
};

struct PrecomputedDocEntry {
    std::string doc_id;
    SparseTermVector vector;
    /// At most top_n candidates by f descending (ties: phrase key ascending).
    std::vector<ScoredCandidate> top;
    /// Indices into `top` of the candidates that survive the glossary filter.
    std::vector<std::size_t> pruned;

    friend bool operator==(const PrecomputedDocEntry& a, const PrecomputedDocEntry& b);
};

/// Phrases that rank among the top candidates of at least `min_support` documents.
struct Glossary {
    std::map<std::string, std::size_t> support;
    std::size_t min_support = 3;

    bool contains(const std::string& key) const;
    std::size_t size() const;
    friend bool operator==(const Glossary&, const Glossary&) = default;
};

struct PrecomputeOptions {
    double gamma = -0.25;
    std::size_t top_n = 10;
    std::size_t threads = 1;
};

/// Pass 1: per-document vectors and top-n candidates (pruned left empty).
std::vector<PrecomputedDocEntry> precompute_entries(std::span<const Document> docs, const VectorLookup& vectors,
                                                    const PosTagger& tagger, const Vocabulary& vocab,
                                                    const PrecomputeOptions& options = {});
/// Pass 2.
Glossary build_glossary(std::span<const PrecomputedDocEntry> entries, std::size_t min_support = 3);
/// Pass 3: fills `pruned` with top ∩ glossary.
void apply_glossary(std::span<PrecomputedDocEntry> entries, const Glossary& glossary);

struct IndexConfig {
    Bm25Params bm25;
    PrecomputeOptions precompute;
    std::size_t glossary_min_support = 3;
    /// Canonical "key=value;..." string hashed into the manifest.
    std::string canonical() const;
};

/// The background collection: vocabulary, BM25 postings, per-document
/// entries (aligned with BM25 document order) and the glossary.
struct CorpusIndex {
    Vocabulary vocab;
    Bm25Index bm25;
    std::vector<PrecomputedDocEntry> entries;
    Glossary glossary;
    IndexConfig config;

    static CorpusIndex build(std::span<const Document> docs, Vocabulary vocab, const VectorLookup& vectors,
                             const PosTagger& tagger, const IndexConfig& config);

    const PrecomputedDocEntry& entry(std::uint32_t doc) const { return entries.at(doc); }

    /// Directory layout: manifest.json, vocab.txt, bm25.bin, entries.jsonl, glossary.tsv.
    void save(const std::filesystem::path& dir) const;
    static CorpusIndex load(const std::filesystem::path& dir);
};

/// Words a document contributes to BM25: pre-tagged surfaces, else split_words(text()).
std::vector<std::string> index_words(const Document& doc);

Bm25Index build_bm25(std::span<const Document> docs, Bm25Params params = {});

void save_entries(std::span<const PrecomputedDocEntry> entries, const std::filesystem::path& path);
std::vector<PrecomputedDocEntry> load_entries(const std::filesystem::path& path, const Vocabulary& vocab);
void save_glossary(const Glossary& glossary, const std::filesystem::path& path);
Glossary load_glossary(const std::filesystem::path& path, std::size_t min_support);

inline constexpr int kIndexFormatVersion = 1;

}  // namespace kpgen
