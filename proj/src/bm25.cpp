#include "kpgen/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "kpgen/error.hpp"
#include "kpgen/io.hpp"

namespace kpgen {

Bm25Index Bm25Index::build(std::span<const std::vector<std::string>> doc_terms, std::vector<std::string> doc_ids,
                           Bm25Params params) {
    if (!(params.k1 >= 0.0) || !std::isfinite(params.k1)) throw ConfigError("BM25 k1 must be a finite value >= 0");
    if (!(params.b >= 0.0 && params.b <= 1.0)) throw ConfigError("BM25 b must lie in [0, 1]");
    if (doc_terms.empty()) throw DataError("cannot build a BM25 index over an empty corpus");
    if (doc_terms.size() != doc_ids.size()) throw std::invalid_argument("doc_terms and doc_ids differ in length");
    Bm25Index index;
    index.params_ = params;
    index.doc_ids_ = std::move(doc_ids);
    std::map<std::string, std::vector<Posting>> lists;
    for (std::size_t d = 0; d < doc_terms.size(); ++d) {
        std::map<std::string_view, std::uint32_t> tf;
        for (const auto& t : doc_terms[d]) ++tf[t];
        for (const auto& [term, count] : tf) lists[std::string(term)].push_back({static_cast<std::uint32_t>(d), count});
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(doc_terms[d].size()));
    }
    for (auto& [term, postings] : lists) {
        index.terms_.push_back(term);
        index.postings_.push_back(std::move(postings));
    }
    index.finalize();
    return index;
}

void Bm25Index::finalize() {
    doc_index_.clear();
    for (std::uint32_t d = 0; d < doc_ids_.size(); ++d) {
        if (!doc_index_.emplace(doc_ids_[d], d).second) throw DataError("duplicate document id '" + doc_ids_[d] + "'");
    }
    double total = 0.0;
    for (auto len : doc_lengths_) total += len;
    const double n = static_cast<double>(doc_ids_.size());
    avgdl_ = total / n;
    length_norm_.resize(doc_lengths_.size());
    for (std::size_t d = 0; d < doc_lengths_.size(); ++d) {
        const double rel = avgdl_ > 0.0 ? static_cast<double>(doc_lengths_[d]) / avgdl_ : 0.0;
        length_norm_[d] = params_.k1 * (1.0 - params_.b + params_.b * rel);
    }
    term_index_.clear();
    idf_.resize(terms_.size());
    for (std::uint32_t t = 0; t < terms_.size(); ++t) {
        term_index_.emplace(terms_[t], t);
        const double df = static_cast<double>(postings_[t].size());
        idf_[t] = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    }
}

double Bm25Index::idf(const std::string& term) const {
    auto it = term_index_.find(term);
    return it == term_index_.end() ? 0.0 : idf_[it->second];
}

std::optional<std::uint32_t> Bm25Index::find_doc(const std::string& id) const {
    auto it = doc_index_.find(id);
    if (it == doc_index_.end()) return std::nullopt;
    return it->second;
}

const std::vector<Bm25Index::Posting>* Bm25Index::postings(const std::string& term) const {
    auto it = term_index_.find(term);
    return it == term_index_.end() ? nullptr : &postings_[it->second];
}

std::vector<ScoredDoc> Bm25Index::search(std::span<const std::string> query, std::size_t n,
                                         std::optional<std::uint32_t> exclude) const {
    if (n == 0 || query.empty()) return {};
    // Terms in ascending order so every document accumulates in the same order.
    std::map<std::string_view, std::uint32_t> qtf;
    for (const auto& t : query) ++qtf[t];

    thread_local std::vector<double> acc;
    thread_local std::vector<std::uint32_t> touched;
    acc.assign(doc_ids_.size(), 0.0);
    touched.clear();
    const double k1_plus_1 = params_.k1 + 1.0;
    for (const auto& [term, count] : qtf) {
        auto it = term_index_.find(std::string(term));
        if (it == term_index_.end()) continue;
        const double idf = idf_[it->second];
        const double mult = static_cast<double>(count);
        for (const auto& p : postings_[it->second]) {
            const double tf = static_cast<double>(p.tf);
            if (acc[p.doc] == 0.0) touched.push_back(p.doc);
            acc[p.doc] += mult * (idf * tf * k1_plus_1 / (tf + length_norm_[p.doc]));
        }
    }
    std::vector<ScoredDoc> hits;
    hits.reserve(touched.size());
    for (auto d : touched) {
        if (exclude && *exclude == d) continue;
        hits.push_back({d, acc[d]});
    }
    auto better = [this](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return doc_ids_[a.doc] < doc_ids_[b.doc];
    };
    if (hits.size() > n) {
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(), better);
        hits.resize(n);
    } else {
        std::sort(hits.begin(), hits.end(), better);
    }
    return hits;
}

namespace {
constexpr char kMagic[8] = {'K', 'P', 'G', 'B', 'M', '2', '5', '1'};
}

void Bm25Index::save(const std::filesystem::path& path) const {
    AtomicFileWriter writer(path, /*binary=*/true);
    auto& out = writer.stream();
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, params_.k1);
    write_pod(out, params_.b);
    write_pod<std::uint64_t>(out, doc_ids_.size());
    for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
        write_string(out, doc_ids_[d]);
        write_pod<std::uint32_t>(out, doc_lengths_[d]);
    }
    write_pod<std::uint64_t>(out, terms_.size());
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        write_string(out, terms_[t]);
        write_pod<std::uint64_t>(out, postings_[t].size());
        for (const auto& p : postings_[t]) {
            write_pod(out, p.doc);
            write_pod(out, p.tf);
        }
    }
    writer.commit();
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open BM25 index " + path.string());
    CheckedReader reader(in, path.string());
    char magic[8];
    reader.read(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, 7) != 0) throw DataError(path.string() + ": not a BM25 index file");
    if (magic[7] != kMagic[7]) {
        throw DataError(path.string() + ": BM25 index version mismatch (file " + std::string(1, magic[7]) +
                        ", expected " + std::string(1, kMagic[7]) + ")");
    }
    Bm25Index index;
    index.params_.k1 = reader.pod<double>();
    index.params_.b = reader.pod<double>();
    const auto ndocs = reader.pod<std::uint64_t>();
    if (ndocs == 0 || ndocs > (1ULL << 32)) throw DataError(path.string() + ": corrupt document count");
    for (std::uint64_t d = 0; d < ndocs; ++d) {
        index.doc_ids_.push_back(reader.string());
        index.doc_lengths_.push_back(reader.pod<std::uint32_t>());
    }
    const auto nterms = reader.pod<std::uint64_t>();
    if (nterms > (1ULL << 32)) throw DataError(path.string() + ": corrupt term count");
    for (std::uint64_t t = 0; t < nterms; ++t) {
        index.terms_.push_back(reader.string());
        const auto np = reader.pod<std::uint64_t>();
        if (np > ndocs) throw DataError(path.string() + ": corrupt posting count at byte offset " +
                                        std::to_string(reader.offset() - 8));
        std::vector<Posting> list(np);
        for (auto& p : list) {
            p.doc = reader.pod<std::uint32_t>();
            p.tf = reader.pod<std::uint32_t>();
            if (p.doc >= ndocs) throw DataError(path.string() + ": posting doc out of range at byte offset " +
                                                std::to_string(reader.offset() - 8));
        }
        index.postings_.push_back(std::move(list));
    }
    if (!reader.at_end()) throw DataError(path.string() + ": trailing bytes after offset " + std::to_string(reader.offset()));
    index.finalize();
    return index;
}

}  // namespace kpgen
