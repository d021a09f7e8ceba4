#include "kpgen/vocabulary.hpp"

#include <algorithm>
#include <fstream>

#include "kpgen/error.hpp"
#include "kpgen/io.hpp"

namespace kpgen {

Vocabulary::Vocabulary() {
    terms_.emplace_back(kOovToken);
}

TermId Vocabulary::add(std::string_view term) {
    if (term == kOovToken) return kOov;
    if (auto it = ids_.find(term); it != ids_.end()) return it->second;
    const auto id = static_cast<TermId>(terms_.size());
    terms_.emplace_back(term);
    ids_.emplace(std::string(term), id);
    return id;
}

TermId Vocabulary::id_of(std::string_view term) const {
    auto it = ids_.find(term);
    return it == ids_.end() ? kOov : it->second;
}

bool Vocabulary::contains(std::string_view term) const {
    return ids_.find(term) != ids_.end();
}

const std::string& Vocabulary::term(TermId id) const {
    if (id >= terms_.size()) throw DataError("term id " + std::to_string(id) + " out of range");
    return terms_[id];
}

std::vector<TermId> Vocabulary::to_term_ids(std::span<const std::string> tokens) const {
    std::vector<TermId> out;
    out.reserve(tokens.size());
    for (const auto& token : tokens) out.push_back(id_of(token));
    return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    AtomicFileWriter writer(path);
    for (const auto& term : terms_) writer.stream() << term << '\n';
    writer.commit();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file " + path.string());
    Vocabulary vocab;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            if (line != kOovToken) {
                throw DataError(path.string() + ":1: expected reserved token <oov>");
            }
            continue;
        }
        if (line.empty() || line == kOovToken || vocab.contains(line)) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty or duplicate term");
        }
        vocab.add(line);
    }
    if (line_no == 0) throw DataError(path.string() + ": empty vocabulary file");
    return vocab;
}

void VocabularyBuilder::add_document(std::span<const std::string> words) {
    for (const auto& w : words) ++counts_[w];
}

Vocabulary VocabularyBuilder::finish(std::size_t min_frequency, std::size_t max_size) const {
    std::vector<std::pair<std::string, std::size_t>> entries;
    for (const auto& [term, count] : counts_) {
        if (count >= min_frequency && term != Vocabulary::kOovToken) entries.emplace_back(term, count);
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary vocab;
    for (const auto& [term, count] : entries) {
        if (vocab.size() >= max_size) break;
        vocab.add(term);
    }
    return vocab;
}

}  // namespace kpgen
