#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kpgen {

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct ScoredDoc {
    std::uint32_t doc = 0;
    double score = 0.0;
};

/// Okapi BM25 over lowercased word terms with the Lucene idf
/// ln(1 + (N - df + 0.5) / (df + 0.5)). A query term repeated m times
/// contributes m times its single-occurrence score.
class Bm25Index {
public:
    struct Posting {
        std::uint32_t doc;
        std::uint32_t tf;
        friend bool operator==(const Posting&, const Posting&) = default;
    };

    /// `doc_terms[i]` are the tokens of document `doc_ids[i]`. Throws on an
    /// empty corpus or duplicate ids.
    static Bm25Index build(std::span<const std::vector<std::string>> doc_terms, std::vector<std::string> doc_ids,
                           Bm25Params params = {});

    /// Top-n documents by score (descending; ties by doc id ascending). Only
    /// documents sharing at least one term are returned.
    std::vector<ScoredDoc> search(std::span<const std::string> query, std::size_t n,
                                  std::optional<std::uint32_t> exclude = std::nullopt) const;

    double idf(const std::string& term) const;
    std::size_t doc_count() const { return doc_ids_.size(); }
    const std::string& doc_id(std::uint32_t doc) const { return doc_ids_.at(doc); }
    std::optional<std::uint32_t> find_doc(const std::string& id) const;
    std::uint32_t doc_length(std::uint32_t doc) const { return doc_lengths_.at(doc); }
    double average_doc_length() const { return avgdl_; }
    const Bm25Params& params() const { return params_; }
    const std::vector<Posting>* postings(const std::string& term) const;
    std::size_t term_count() const { return terms_.size(); }

    void save(const std::filesystem::path& path) const;
    static Bm25Index load(const std::filesystem::path& path);

    friend bool operator==(const Bm25Index& a, const Bm25Index& b) {
        return a.params_.k1 == b.params_.k1 && a.params_.b == b.params_.b && a.doc_ids_ == b.doc_ids_ &&
               a.doc_lengths_ == b.doc_lengths_ && a.terms_ == b.terms_ && a.postings_ == b.postings_;
    }

private:
    void finalize();

    Bm25Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::vector<std::string> terms_;  // sorted
    std::vector<std::vector<Posting>> postings_;
    // Derived on build/load.
    double avgdl_ = 0.0;
    std::vector<double> length_norm_;  // k1 * (1 - b + b * dl / avgdl)
    std::vector<double> idf_;
    std::unordered_map<std::string, std::uint32_t> term_index_;
    std::unordered_map<std::string, std::uint32_t> doc_index_;
};

}  // namespace kpgen
