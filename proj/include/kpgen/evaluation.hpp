#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kpgen/bm25.hpp"
#include "kpgen/datasets.hpp"
#include "kpgen/pipeline.hpp"

namespace kpgen {

/// Porter-stems each phrase (tokens joined by one space), drops empty ones
/// and removes duplicates keeping the first occurrence.
std::vector<std::string> normalize_phrases(std::span<const std::string> phrases);

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Precision always divides by k, so short prediction lists are padded with
/// misses. Returns nullopt when gold is empty after normalisation.
std::optional<PrecisionRecall> f1_at_k(std::span<const std::string> predicted, std::span<const std::string> gold,
                                       std::size_t k);
std::optional<double> recall_at_k(std::span<const std::string> predicted, std::span<const std::string> gold,
                                  std::size_t k);

struct GoldKeyphrases {
    std::vector<std::string> present;
    std::vector<std::string> absent;
};

/// {"id","present":[...],"absent":[...]} or {"id","keyphrases":[...]}; the
/// second form is split by stemmed-subsequence match against the document
/// of the same id in `docs`, which must then contain it.
std::map<std::string, GoldKeyphrases> load_gold(const std::filesystem::path& path,
                                                std::span<const Document> docs = {});
/// Splits gold phrases into present/absent against a document.
GoldKeyphrases split_gold(const Document& doc, std::span<const std::string> keyphrases);
/// Gold carried inside the corpus records.
std::map<std::string, GoldKeyphrases> gold_from_documents(std::span<const Document> docs);

struct DocumentScores {
    std::string id;
    std::optional<PrecisionRecall> f1_5, f1_10;
    std::optional<double> r_5, r_10;
};

struct KpEvalResult {
    double f1_5 = 0.0, f1_10 = 0.0;  // present, macro
    double r_5 = 0.0, r_10 = 0.0;    // absent, macro
    std::size_t present_docs = 0, absent_docs = 0;
    std::size_t skipped_present = 0, skipped_absent = 0;
    std::size_t missing_predictions = 0;
    std::vector<DocumentScores> per_document;  // gold order (id ascending)
};

/// Predictions are ranked phrase strings keyed by document id. A gold
/// document without predictions is scored against an empty list.
struct Predictions {
    std::vector<std::string> present;
    std::vector<std::string> absent;
};
KpEvalResult evaluate_keyphrases(const std::map<std::string, Predictions>& predictions,
                                 const std::map<std::string, GoldKeyphrases>& gold);
Predictions predictions_from_result(const KeyphraseResult& result);
/// Reads the generate output format.
std::map<std::string, Predictions> load_predictions(const std::filesystem::path& path);

Json to_json(const KpEvalResult& result);
std::string to_table(const KpEvalResult& result);

// ---- retrieval expansion ----------------------------------------------------

enum class Expansion { None, Query, Doc, Both };
std::string to_string(Expansion e);
Expansion parse_expansion(const std::string& name);

/// query id -> doc id -> relevance grade.
using Qrels = std::map<std::string, std::map<std::string, int>>;
/// TREC format: "qid iteration docid relevance" per line.
Qrels load_qrels(const std::filesystem::path& path);

struct Query {
    std::string id;
    std::string text;
};
/// {"id","text"} per line.
std::vector<Query> load_queries(const std::filesystem::path& path);

/// Keyphrase strings per query or document id.
using KeyphraseMap = std::map<std::string, std::vector<std::string>>;

/// words + split_words of each distinct keyphrase, appended once in order.
std::vector<std::string> expand_words(std::vector<std::string> words, std::span<const std::string> keyphrases);

struct RetrievalEvalResult {
    Expansion expansion = Expansion::None;
    double recall = 0.0;  // mean R@depth
    std::size_t depth = 1000;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;  // queries without judged relevant documents
    /// Ranked documents per query id (doc indices follow corpus order).
    std::map<std::string, std::vector<ScoredDoc>> rankings;
};

struct RetrievalEvalOptions {
    Expansion expansion = Expansion::None;
    Bm25Params bm25;
    std::size_t depth = 1000;
    std::size_t threads = 1;
};

RetrievalEvalResult eval_retrieval(std::span<const Document> docs, std::span<const Query> queries,
                                   const Qrels& qrels, const KeyphraseMap& query_keyphrases,
                                   const KeyphraseMap& doc_keyphrases, const RetrievalEvalOptions& options);

Json to_json(const RetrievalEvalResult& result);
std::string to_table(const RetrievalEvalResult& result);

// ---- throughput -------------------------------------------------------------

struct ThroughputResult {
    std::size_t neighbors = 0;
    std::size_t documents = 0;
    std::size_t repetitions = 0;
    double mean_docs_per_second = 0.0;
    double std_docs_per_second = 0.0;  // sample std; 0 for one repetition
    double mean_total_seconds = 0.0;
    double mean_seconds_per_doc = 0.0;
};

/// Times generate() one document at a time (batch size 1) for each
/// neighborhood size. One untimed warm-up call precedes each setting.
std::vector<ThroughputResult> bench_throughput(const KeyphraseGenerator& generator, std::span<const Document> docs,
                                               const PipelineConfig& config,
                                               std::span<const std::size_t> neighbor_settings,
                                               std::size_t repetitions);

Json to_json(std::span<const ThroughputResult> results, const PipelineConfig& config);
std::string to_table(std::span<const ThroughputResult> results);

}  // namespace kpgen
