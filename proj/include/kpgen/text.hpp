#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kpgen/vocabulary.hpp"

namespace kpgen {

class PosTagger;

/// A lowercased word token. Punctuation is not a token; it sets
/// `boundary_before` on the following word so chunks and phrase matches never
/// span it.
struct TaggedToken {
    std::string surface;
    std::string pos;
    std::size_t char_offset = 0;
    std::size_t word_index = 0;
    bool boundary_before = false;

    friend bool operator==(const TaggedToken&, const TaggedToken&) = default;
};

/// Splits text into word tokens (untagged). Hyphens and apostrophes between
/// word characters split silently; digit groups such as "3.5" stay whole.
std::vector<TaggedToken> split_tokens(std::string_view text);

/// Surfaces of split_tokens(text), for indexing and model input.
std::vector<std::string> split_words(std::string_view text);

/// split_tokens followed by tagging.
std::vector<TaggedToken> tokenize(std::string_view text, const PosTagger& tagger);

/// Builds tokens from a pre-tagged [surface, pos] sequence. Entries without
/// any word character are treated as punctuation boundaries.
std::vector<TaggedToken> from_pretagged(std::span<const std::pair<std::string, std::string>> tagged);

inline constexpr std::size_t kAbsentPosition = std::numeric_limits<std::size_t>::max();

enum class PhraseSource { GivenDoc, Neighbor };

struct CandidatePhrase {
    std::vector<std::string> tokens;
    std::vector<TermId> term_ids;
    std::size_t first_position = kAbsentPosition;
    PhraseSource source = PhraseSource::GivenDoc;
    /// Whitespace-joined Porter stems; the phrase identity.
    std::string key;

    bool is_present() const { return first_position != kAbsentPosition; }
    std::string surface() const;
};

/// Identity of a token sequence: stems joined by single spaces.
std::string phrase_key(std::span<const std::string> tokens);

/// Builds a CandidatePhrase from a whitespace-separated phrase string.
CandidatePhrase make_phrase(std::string_view text, PhraseSource source = PhraseSource::Neighbor);

/// Noun-phrase chunker for the grammar (<NN.*|JJ.*>+<NN.*|CD>)|<NN.*>, with
/// leftmost longest non-overlapping matches. Duplicates under phrase_key keep
/// the earliest occurrence. term_ids are left empty.
std::vector<CandidatePhrase> chunk_noun_phrases(std::span<const TaggedToken> tokens);

void assign_term_ids(const Vocabulary& vocab, CandidatePhrase& phrase);

/// Stemmed view of a document for locating phrases by contiguous stem match.
class StemmedDocument {
public:
    explicit StemmedDocument(std::span<const TaggedToken> tokens);

    /// word_index of the first contiguous match of `stems` that does not cross
    /// a punctuation boundary, or nullopt.
    std::optional<std::size_t> find(std::span<const std::string> stems) const;
    std::optional<std::size_t> find_key(std::string_view key) const;

    std::size_t size() const { return stems_.size(); }

private:
    std::vector<std::string> stems_;
    std::vector<bool> boundary_;
    std::vector<std::size_t> word_index_;
};

std::vector<std::string> split_on_space(std::string_view s);

}  // namespace kpgen
