#include "kpgen/text.hpp"

#include <unordered_set>

#include "kpgen/porter_stemmer.hpp"
#include "kpgen/pos_tagger.hpp"

namespace kpgen {
namespace {

bool is_word_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Length of a UTF-8 sequence starting at text[i] that acts as punctuation or
// space (U+00A0, U+2000..U+206F), else 0.
std::size_t unicode_separator_length(std::string_view text, std::size_t i) {
    const auto c0 = static_cast<unsigned char>(text[i]);
    if (c0 == 0xC2 && i + 1 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0xA0) return 2;
    if (c0 == 0xE2 && i + 2 < text.size()) {
        const auto c1 = static_cast<unsigned char>(text[i + 1]);
        if (c1 == 0x80 || c1 == 0x81) return 3;
    }
    return 0;
}

char lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

bool is_noun(std::string_view pos) { return pos.size() >= 2 && pos[0] == 'N' && pos[1] == 'N'; }
bool is_adjective(std::string_view pos) { return pos.size() >= 2 && pos[0] == 'J' && pos[1] == 'J'; }
bool is_cardinal(std::string_view pos) { return pos == "CD"; }

}  // namespace

std::vector<TaggedToken> split_tokens(std::string_view text) {
    std::vector<TaggedToken> tokens;
    bool boundary = false;
    std::size_t i = 0;
    const std::size_t n = text.size();
    auto word_at = [&](std::size_t p) { return p < n && is_word_byte(static_cast<unsigned char>(text[p])) &&
                                               unicode_separator_length(text, p) == 0; };
    while (i < n) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_space(c)) {
            ++i;
            continue;
        }
        if (const auto sep = unicode_separator_length(text, i); sep > 0) {
            if (sep != 2) boundary = true;  // U+00A0 is a space
            i += sep;
            continue;
        }
        if (!is_word_byte(c)) {
            // Possessive 's: drop it and break the phrase.
            if (c == '\'' && i > 0 && word_at(i - 1) && i + 1 < n && lower(text[i + 1]) == 's' && !word_at(i + 2)) {
                boundary = true;
                i += 2;
                continue;
            }
            if ((c == '-' || c == '\'') && i > 0 && word_at(i - 1) && word_at(i + 1)) {
                ++i;
                continue;
            }
            boundary = true;
            ++i;
            continue;
        }
        TaggedToken token;
        token.char_offset = i;
        token.boundary_before = boundary && !tokens.empty();
        token.word_index = tokens.size();
        boundary = false;
        while (i < n) {
            if (word_at(i)) {
                token.surface.push_back(lower(text[i]));
                ++i;
            } else if ((text[i] == '.' || text[i] == ',') && i > 0 && is_digit(static_cast<unsigned char>(text[i - 1])) &&
                       i + 1 < n && is_digit(static_cast<unsigned char>(text[i + 1]))) {
                token.surface.push_back(text[i]);
                ++i;
            } else {
                break;
            }
        }
        tokens.push_back(std::move(token));
    }
    return tokens;
}

std::vector<std::string> split_words(std::string_view text) {
    auto tokens = split_tokens(text);
    std::vector<std::string> words;
    words.reserve(tokens.size());
    for (auto& t : tokens) words.push_back(std::move(t.surface));
    return words;
}

std::vector<TaggedToken> tokenize(std::string_view text, const PosTagger& tagger) {
    auto tokens = split_tokens(text);
    std::vector<std::string> words;
    words.reserve(tokens.size());
    for (const auto& t : tokens) words.push_back(t.surface);
    auto tags = tagger.tag(words);
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i].pos = std::move(tags[i]);
    return tokens;
}

std::vector<TaggedToken> from_pretagged(std::span<const std::pair<std::string, std::string>> tagged) {
    std::vector<TaggedToken> tokens;
    bool boundary = false;
    std::size_t offset = 0;
    for (const auto& [surface, pos] : tagged) {
        bool has_word = false;
        for (unsigned char c : surface) has_word = has_word || is_word_byte(c);
        if (!has_word) {
            boundary = true;
            offset += surface.size() + 1;
            continue;
        }
        TaggedToken token;
        for (char c : surface) token.surface.push_back(lower(c));
        token.pos = pos;
        token.char_offset = offset;
        token.word_index = tokens.size();
        token.boundary_before = boundary && !tokens.empty();
        boundary = false;
        offset += surface.size() + 1;
        tokens.push_back(std::move(token));
    }
    return tokens;
}

std::string CandidatePhrase::surface() const {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out.push_back(' ');
        out += t;
    }
    return out;
}

std::string phrase_key(std::span<const std::string> tokens) {
    std::string key;
    for (const auto& t : tokens) {
        if (!key.empty()) key.push_back(' ');
        key += porter_stem(t);
    }
    return key;
}

std::vector<std::string> split_on_space(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ') ++i;
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ') ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

CandidatePhrase make_phrase(std::string_view text, PhraseSource source) {
    CandidatePhrase phrase;
    phrase.tokens = split_words(text);
    phrase.key = phrase_key(phrase.tokens);
    phrase.source = source;
    return phrase;
}

std::vector<CandidatePhrase> chunk_noun_phrases(std::span<const TaggedToken> tokens) {
    std::vector<CandidatePhrase> phrases;
    std::unordered_set<std::string> seen;
    const std::size_t n = tokens.size();
    auto joins = [&](std::size_t p) { return !tokens[p].boundary_before; };

    std::size_t i = 0;
    while (i < n) {
        std::size_t end = i;  // exclusive end of the match, == i when none
        const auto& first_pos = tokens[i].pos;
        if (is_noun(first_pos) || is_adjective(first_pos)) {
            std::size_t run = i + 1;
            while (run < n && joins(run) && (is_noun(tokens[run].pos) || is_adjective(tokens[run].pos))) ++run;
            if (run < n && joins(run) && is_cardinal(tokens[run].pos)) {
                end = run + 1;
            } else {
                for (std::size_t last = run - 1; last > i; --last) {
                    if (is_noun(tokens[last].pos)) {
                        end = last + 1;
                        break;
                    }
                }
            }
            if (end == i && is_noun(first_pos)) end = i + 1;
        }
        if (end == i) {
            ++i;
            continue;
        }
        CandidatePhrase phrase;
        for (std::size_t p = i; p < end; ++p) phrase.tokens.push_back(tokens[p].surface);
        phrase.key = phrase_key(phrase.tokens);
        phrase.first_position = tokens[i].word_index;
        phrase.source = PhraseSource::GivenDoc;
        if (seen.insert(phrase.key).second) phrases.push_back(std::move(phrase));
        i = end;
    }
    return phrases;
}

void assign_term_ids(const Vocabulary& vocab, CandidatePhrase& phrase) {
    phrase.term_ids = vocab.to_term_ids(phrase.tokens);
}

StemmedDocument::StemmedDocument(std::span<const TaggedToken> tokens) {
    stems_.reserve(tokens.size());
    for (const auto& t : tokens) {
        stems_.push_back(porter_stem(t.surface));
        boundary_.push_back(t.boundary_before);
        word_index_.push_back(t.word_index);
    }
}

std::optional<std::size_t> StemmedDocument::find(std::span<const std::string> stems) const {
    const std::size_t len = stems.size();
    if (len == 0 || len > stems_.size()) return std::nullopt;
    for (std::size_t s = 0; s + len <= stems_.size(); ++s) {
        if (stems_[s] != stems[0]) continue;
        bool ok = true;
        for (std::size_t k = 1; k < len && ok; ++k) ok = !boundary_[s + k] && stems_[s + k] == stems[k];
        if (ok) return word_index_[s];
    }
    return std::nullopt;
}

std::optional<std::size_t> StemmedDocument::find_key(std::string_view key) const {
    const auto stems = split_on_space(key);
    return find(stems);
}

}  // namespace kpgen
