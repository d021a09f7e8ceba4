#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kpgen/io.hpp"
#include "kpgen/text.hpp"

namespace kpgen {

struct Document {
    std::string id;
    std::string title;
    std::string abstract;
    /// Pre-tagged tokens, when the corpus arrives tagged.
    std::optional<std::vector<TaggedToken>> tagged;
    std::optional<std::vector<std::string>> gold_present;
    std::optional<std::vector<std::string>> gold_absent;

    /// title + " " + abstract (either part may be empty).
    /// Title and abstract joined by a sentence break.
    std::string text() const;
};

/// Accepts {"id","title","abstract"}, {"id","text"} or {"id","tokens":[[surface,pos],...]}.
Document document_from_json(const Json& record);
Json document_to_json(const Document& doc);

/// Loads a JSON-lines corpus; malformed lines and duplicate ids raise
/// DataError with the line number.
std::vector<Document> load_corpus(const std::filesystem::path& path);
void save_corpus(std::span<const Document> docs, const std::filesystem::path& path);

enum class RefType { Query, Citation, Title };
std::string to_string(RefType type);
RefType parse_ref_type(const std::string& name);

struct ReferenceTriplet {
    std::string reference;
    Document positive;
    Document negative;
    RefType type = RefType::Query;
};

struct BuildStats {
    std::size_t emitted = 0;
    std::size_t skipped = 0;
};

/// Negative choice: ordering-based by default; a seed switches to seeded sampling.
struct NegativeSelection {
    std::optional<std::uint64_t> random_seed;
};

struct QueryRecord {
    struct Candidate {
        Document doc;
        double relevance = 0.0;
    };
    std::string query;
    std::vector<Candidate> candidates;
};
QueryRecord query_record_from_json(const Json& record);

/// Positives (relevance > 0) x negatives (relevance == 0), at most `cap` per query.
std::vector<ReferenceTriplet> triplets_from_query_relevance(std::span<const QueryRecord> records, std::size_t cap = 4,
                                                            BuildStats* stats = nullptr,
                                                            const NegativeSelection& selection = {});

struct CitingSentence {
    std::string text;
    /// One inner list per citation marker; a marker may cite several papers collectively.
    std::vector<std::vector<std::string>> groups;
};
struct CitingSection {
    std::string name;
    std::vector<CitingSentence> sentences;
};
struct CitingPaper {
    std::vector<CitingSection> sections;
    std::map<std::string, Document> cited_docs;
};
/// "cited_ids" may be a list of ids (one group each) or a list of id lists.
CitingPaper citing_paper_from_json(const Json& record);

/// Sentences citing exactly one group; the negative is cited in another section.
std::vector<ReferenceTriplet> triplets_from_citations(std::span<const CitingPaper> papers, BuildStats* stats = nullptr,
                                                      const NegativeSelection& selection = {});

struct TitledPaper {
    Document doc;
    std::vector<Document> cited_docs;
};
TitledPaper titled_paper_from_json(const Json& record);

/// Title as reference, own abstract as positive, a cited abstract as negative.
std::vector<ReferenceTriplet> triplets_from_titles(std::span<const TitledPaper> papers, std::size_t per_paper = 1,
                                                   BuildStats* stats = nullptr, const NegativeSelection& selection = {});

/// Drops triplets whose type is in `excluded` (ablations).
std::vector<ReferenceTriplet> filter_by_type(std::vector<ReferenceTriplet> triplets, const std::set<RefType>& excluded);
std::map<RefType, std::size_t> count_by_type(std::span<const ReferenceTriplet> triplets);

/// {"ref","pos_id","neg_id","type"} lines plus a sidecar document store.
void save_triplets(std::span<const ReferenceTriplet> triplets, const std::filesystem::path& triplets_path,
                   const std::filesystem::path& docs_path);
std::vector<ReferenceTriplet> load_triplets(const std::filesystem::path& triplets_path,
                                            const std::filesystem::path& docs_path);

}  // namespace kpgen
