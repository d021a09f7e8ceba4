#include "kpgen/corpus_index.hpp"

#include <algorithm>
#include <fstream>

#include "kpgen/error.hpp"
#include "kpgen/io.hpp"
#include "kpgen/parallel.hpp"

namespace kpgen {

AnalyzedDocument analyze(const Document& doc, const PosTagger& tagger, const Vocabulary& vocab) {
    AnalyzedDocument a;
    a.tokens = doc.tagged ? *doc.tagged : tokenize(doc.text(), tagger);
    a.words.reserve(a.tokens.size());
    for (const auto& t : a.tokens) a.words.push_back(t.surface);
    a.term_ids = vocab.to_term_ids(a.words);
    a.candidates = chunk_noun_phrases(a.tokens);
    for (auto& c : a.candidates) assign_term_ids(vocab, c);
    return a;
}

double aggregate_importance(std::span<const TermId> term_ids, const SparseTermVector& weights, double gamma) {
    double sum = 0.0;
    for (const TermId t : term_ids) sum += weights.weight(t);
    return sum / (static_cast<double>(term_ids.size()) - gamma);
}

Neighborhood retrieve_neighbors(const Bm25Index& index, std::span<const std::string> query_words,
                                const std::string& query_id, std::size_t n) {
    Neighborhood hood;
    hood.query_id = query_id;
    if (n == 0) return hood;
    const auto hits = index.search(query_words, n, index.find_doc(query_id));
    double mass = 0.0;
    for (const auto& h : hits) mass += h.score;
    if (!(mass > 0.0)) return hood;
    for (const auto& h : hits) hood.entries.push_back({h.doc, index.doc_id(h.doc), h.score, h.score / mass});
    return hood;
}

bool operator==(const PrecomputedDocEntry& a, const PrecomputedDocEntry& b) {
    if (a.doc_id != b.doc_id || !(a.vector == b.vector) || a.pruned != b.pruned || a.top.size() != b.top.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.top.size(); ++i) {
        const auto& x = a.top[i];
        const auto& y = b.top[i];
        if (x.f != y.f || x.phrase.tokens != y.phrase.tokens || x.phrase.key != y.phrase.key ||
            x.phrase.term_ids != y.phrase.term_ids) {
            return false;
        }
    }
    return true;
}

bool Glossary::contains(const std::string& key) const {
    auto it = support.find(key);
    return it != support.end() && it->second >= min_support;
}

std::size_t Glossary::size() const {
    return static_cast<std::size_t>(
        std::count_if(support.begin(), support.end(), [this](const auto& kv) { return kv.second >= min_support; }));
}

std::vector<PrecomputedDocEntry> precompute_entries(std::span<const Document> docs, const VectorLookup& vectors,
                                                    const PosTagger& tagger, const Vocabulary& vocab,
                                                    const PrecomputeOptions& options) {
    if (!(1.0 - options.gamma > 0.0)) throw ConfigError("gamma must be < 1 so that |c| - gamma > 0");
    std::vector<PrecomputedDocEntry> entries(docs.size());
    parallel_for(docs.size(), options.threads, [&](std::size_t i) {
        const auto& doc = docs[i];
        auto analyzed = analyze(doc, tagger, vocab);
        auto& entry = entries[i];
        entry.doc_id = doc.id;
        if (!analyzed.term_ids.empty()) entry.vector = vectors.vector_for(doc.id, analyzed.term_ids);
        entry.vector.set_owner(doc.id);
        std::vector<ScoredCandidate> scored;
        scored.reserve(analyzed.candidates.size());
        for (auto& c : analyzed.candidates) {
            const double f = aggregate_importance(c.term_ids, entry.vector, options.gamma);
            scored.push_back({std::move(c), f});
        }
        std::sort(scored.begin(), scored.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
            if (a.f != b.f) return a.f > b.f;
            return a.phrase.key < b.phrase.key;
        });
        if (scored.size() > options.top_n) scored.resize(options.top_n);
        for (auto& s : scored) s.phrase.source = PhraseSource::Neighbor;
        entry.top = std::move(scored);
    });
    return entries;
}

Glossary build_glossary(std::span<const PrecomputedDocEntry> entries, std::size_t min_support) {
    std::map<std::string, std::size_t> counts;
    for (const auto& e : entries) {
        for (const auto& c : e.top) ++counts[c.phrase.key];
    }
    Glossary g;
    g.min_support = min_support;
    for (auto& [key, n] : counts) {
        if (n >= min_support) g.support.emplace(key, n);
    }
    return g;
}

void apply_glossary(std::span<PrecomputedDocEntry> entries, const Glossary& glossary) {
    for (auto& e : entries) {
        e.pruned.clear();
        for (std::size_t i = 0; i < e.top.size(); ++i) {
            if (glossary.contains(e.top[i].phrase.key)) e.pruned.push_back(i);
        }
    }
}

std::string IndexConfig::canonical() const {
    return "k1=" + format_double(bm25.k1) + ";b=" + format_double(bm25.b) + ";gamma=" +
           format_double(precompute.gamma) + ";top_n=" + std::to_string(precompute.top_n) +
           ";min_support=" + std::to_string(glossary_min_support);
}

std::vector<std::string> index_words(const Document& doc) {
    if (!doc.tagged) return split_words(doc.text());
    std::vector<std::string> words;
    words.reserve(doc.tagged->size());
    for (const auto& t : *doc.tagged) words.push_back(t.surface);
    return words;
}

Bm25Index build_bm25(std::span<const Document> docs, Bm25Params params) {
    std::vector<std::vector<std::string>> terms;
    std::vector<std::string> ids;
    terms.reserve(docs.size());
    for (const auto& d : docs) {
        terms.push_back(index_words(d));
        ids.push_back(d.id);
    }
    return Bm25Index::build(terms, std::move(ids), params);
}

CorpusIndex CorpusIndex::build(std::span<const Document> docs, Vocabulary vocab, const VectorLookup& vectors,
                               const PosTagger& tagger, const IndexConfig& config) {
    CorpusIndex index;
    index.config = config;
    index.bm25 = build_bm25(docs, config.bm25);
    index.entries = precompute_entries(docs, vectors, tagger, vocab, config.precompute);
    index.glossary = build_glossary(index.entries, config.glossary_min_support);
    apply_glossary(index.entries, index.glossary);
    index.vocab = std::move(vocab);
    return index;
}

namespace {
constexpr const char* kEntriesFormat = "kpgen-entries";
constexpr const char* kIndexFormat = "kpgen-index";
}  // namespace

void save_entries(std::span<const PrecomputedDocEntry> entries, const std::filesystem::path& path) {
    AtomicFileWriter writer(path);
    auto& out = writer.stream();
    out << Json{{"format", kEntriesFormat}, {"version", kIndexFormatVersion}, {"count", entries.size()}}.dump()
        << '\n';
    for (const auto& e : entries) {
        Json v = Json::array();
        for (const auto& [t, w] : e.vector.entries()) v.push_back(Json::array({t, w}));
        Json top = Json::array();
        for (const auto& c : e.top) top.push_back(Json{{"tokens", c.phrase.tokens}, {"f", c.f}});
        out << Json{{"id", e.doc_id}, {"v", std::move(v)}, {"top", std::move(top)}, {"pruned", e.pruned}}.dump()
            << '\n';
    }
    writer.commit();
}

std::vector<PrecomputedDocEntry> load_entries(const std::filesystem::path& path, const Vocabulary& vocab) {
    std::vector<PrecomputedDocEntry> entries;
    bool header = false;
    std::size_t expected = 0;
    for_each_json_line(path, [&](const Json& r, std::size_t line) {
        const std::string where = path.string() + ":" + std::to_string(line);
        if (!header) {
            if (r.value("format", "") != kEntriesFormat) throw DataError(where + ": missing entries header");
            if (r.value("version", 0) != kIndexFormatVersion) {
                throw DataError(where + ": entries version mismatch (file " + std::to_string(r.value("version", 0)) +
                                ", expected " + std::to_string(kIndexFormatVersion) + ")");
            }
            expected = r.at("count").get<std::size_t>();
            header = true;
            return;
        }
        PrecomputedDocEntry e;
        e.doc_id = r.at("id").get<std::string>();
        std::vector<SparseTermVector::Entry> v;
        for (const auto& p : r.at("v")) v.emplace_back(p.at(0).get<TermId>(), p.at(1).get<double>());
        try {
            e.vector = SparseTermVector::from_entries(e.doc_id, std::move(v));
        } catch (const DataError& err) {
            throw DataError(where + ": " + err.what());
        }
        for (const auto& c : r.at("top")) {
            ScoredCandidate sc;
            sc.phrase.tokens = c.at("tokens").get<std::vector<std::string>>();
            if (sc.phrase.tokens.empty()) throw DataError(where + ": empty candidate phrase");
            sc.phrase.key = phrase_key(sc.phrase.tokens);
            sc.phrase.source = PhraseSource::Neighbor;
            assign_term_ids(vocab, sc.phrase);
            sc.f = c.at("f").get<double>();
            e.top.push_back(std::move(sc));
        }
        e.pruned = r.at("pruned").get<std::vector<std::size_t>>();
        for (auto idx : e.pruned) {
            if (idx >= e.top.size()) throw DataError(where + ": pruned index out of range");
        }
        entries.push_back(std::move(e));
    });
    if (!header) throw DataError(path.string() + ": missing entries header");
    if (entries.size() != expected) {
        throw DataError(path.string() + ": header announces " + std::to_string(expected) + " entries, found " +
                        std::to_string(entries.size()) + " (truncated file?)");
    }
    return entries;
}

void save_glossary(const Glossary& glossary, const std::filesystem::path& path) {
    AtomicFileWriter writer(path);
    for (const auto& [key, n] : glossary.support) {
        if (n >= glossary.min_support) writer.stream() << key << '\t' << n << '\n';
    }
    writer.commit();
}

Glossary load_glossary(const std::filesystem::path& path, std::size_t min_support) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open glossary " + path.string());
    Glossary g;
    g.min_support = min_support;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos || tab == 0) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected '<phrase>\\t<support>'");
        }
        const auto n = parse_uint(line.substr(tab + 1), "support");
        if (n < min_support) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": support below glossary threshold");
        }
        g.support.emplace(line.substr(0, tab), n);
    }
    return g;
}

void CorpusIndex::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    vocab.save(dir / "vocab.txt");
    bm25.save(dir / "bm25.bin");
    save_entries(entries, dir / "entries.jsonl");
    save_glossary(glossary, dir / "glossary.tsv");
    const auto canonical = config.canonical();
    Json manifest{{"format", kIndexFormat},
                  {"version", kIndexFormatVersion},
                  {"config", canonical},
                  {"config_hash", sha256_hex(canonical)},
                  {"k1", config.bm25.k1},
                  {"b", config.bm25.b},
                  {"gamma", config.precompute.gamma},
                  {"top_n", config.precompute.top_n},
                  {"min_support", config.glossary_min_support},
                  {"doc_count", bm25.doc_count()},
                  {"vocab_size", vocab.size()},
                  {"glossary_size", glossary.size()}};
    AtomicFileWriter writer(dir / "manifest.json");
    writer.stream() << manifest.dump(2) << '\n';
    writer.commit();
}

CorpusIndex CorpusIndex::load(const std::filesystem::path& dir) {
    Json manifest;
    try {
        manifest = Json::parse(read_file(dir / "manifest.json"));
    } catch (const Json::exception& e) {
        throw DataError((dir / "manifest.json").string() + ": malformed manifest (" + e.what() + ")");
    }
    if (manifest.value("format", "") != kIndexFormat) throw DataError(dir.string() + ": not an index directory");
    if (manifest.value("version", 0) != kIndexFormatVersion) {
        throw DataError(dir.string() + ": index version mismatch (found " + std::to_string(manifest.value("version", 0)) +
                        ", expected " + std::to_string(kIndexFormatVersion) + ")");
    }
    CorpusIndex index;
    try {
        index.config.bm25.k1 = manifest.at("k1").get<double>();
        index.config.bm25.b = manifest.at("b").get<double>();
        index.config.precompute.gamma = manifest.at("gamma").get<double>();
        index.config.precompute.top_n = manifest.at("top_n").get<std::size_t>();
        index.config.glossary_min_support = manifest.at("min_support").get<std::size_t>();
    } catch (const Json::exception& e) {
        throw DataError(dir.string() + ": incomplete manifest (" + e.what() + ")");
    }
    index.vocab = Vocabulary::load(dir / "vocab.txt");
    index.bm25 = Bm25Index::load(dir / "bm25.bin");
    index.entries = load_entries(dir / "entries.jsonl", index.vocab);
    index.glossary = load_glossary(dir / "glossary.tsv", index.config.glossary_min_support);
    if (index.entries.size() != index.bm25.doc_count()) {
        throw DataError(dir.string() + ": entries and BM25 index disagree on document count");
    }
    for (std::uint32_t d = 0; d < index.entries.size(); ++d) {
        if (index.entries[d].doc_id != index.bm25.doc_id(d)) {
            throw DataError(dir.string() + ": entries are not aligned with BM25 documents at index " + std::to_string(d));
        }
    }
    return index;
}

}  // namespace kpgen
