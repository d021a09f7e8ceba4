#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kpgen {

using TermId = std::uint32_t;

/// Word-level term dictionary with dense ids in [0, size()). Id 0 is the
/// reserved out-of-vocabulary slot and never maps to a surface term.
class Vocabulary {
public:
    static constexpr TermId kOov = 0;
    static constexpr std::string_view kOovToken = "<oov>";

    Vocabulary();

    /// Appends a term and returns its id; returns the existing id if present.
    TermId add(std::string_view term);

    TermId id_of(std::string_view term) const;
    bool contains(std::string_view term) const;
    const std::string& term(TermId id) const;
    std::size_t size() const { return terms_.size(); }

    std::vector<TermId> to_term_ids(std::span<const std::string> tokens) const;

    /// One term per line, line number = id, first line is "<oov>".
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.terms_ == b.terms_; }

private:
    struct Hash {
        using is_transparent = void;
        std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
    };
    std::vector<std::string> terms_;
    std::unordered_map<std::string, TermId, Hash, std::equal_to<>> ids_;
};

/// Accumulates corpus term frequencies, then freezes them into a Vocabulary
/// ordered by frequency (descending) and term (ascending).
class VocabularyBuilder {
public:
    void add_document(std::span<const std::string> words);
    Vocabulary finish(std::size_t min_frequency = 2, std::size_t max_size = 50000) const;

private:
    std::unordered_map<std::string, std::size_t> counts_;
};

}  // namespace kpgen
