#include "kpgen/datasets.hpp"

#include <algorithm>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "kpgen/error.hpp"

namespace kpgen {

std::string Document::text() const {
    if (title.empty()) return abstract;
    if (abstract.empty()) return title;
    // A sentence break keeps noun phrases from running across the seam.
    const char last = title.back();
    const bool closed = last == '.' || last == '?' || last == '!' || last == ':' || last == ';';
    return title + (closed ? " " : ". ") + abstract;
}

Document document_from_json(const Json& record) {
    Document doc;
    const auto& id = record.at("id");
    doc.id = id.is_string() ? id.get<std::string>() : id.dump();
    if (record.contains("tokens")) {
        std::vector<std::pair<std::string, std::string>> tagged;
        for (const auto& pair : record.at("tokens")) {
            tagged.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
        }
        std::string joined;
        for (const auto& [surface, pos] : tagged) {
            if (!joined.empty()) joined.push_back(' ');
            joined += surface;
        }
        doc.abstract = std::move(joined);
        doc.tagged = from_pretagged(tagged);
    } else if (record.contains("text")) {
        doc.abstract = record.at("text").get<std::string>();
    } else {
        doc.title = record.value("title", "");
        doc.abstract = record.value("abstract", "");
    }
    if (record.contains("present")) doc.gold_present = record.at("present").get<std::vector<std::string>>();
    if (record.contains("absent")) doc.gold_absent = record.at("absent").get<std::vector<std::string>>();
    return doc;
}

Json document_to_json(const Document& doc) {
    Json j{{"id", doc.id}};
    if (doc.tagged) {
        Json tokens = Json::array();
        for (const auto& t : *doc.tagged) tokens.push_back(Json::array({t.surface, t.pos}));
        j["tokens"] = std::move(tokens);
    } else {
        j["title"] = doc.title;
        j["abstract"] = doc.abstract;
    }
    if (doc.gold_present) j["present"] = *doc.gold_present;
    if (doc.gold_absent) j["absent"] = *doc.gold_absent;
    return j;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
    std::vector<Document> docs;
    std::unordered_set<std::string> ids;
    for_each_json_line(path, [&](const Json& record, std::size_t line) {
        auto doc = document_from_json(record);
        if (!ids.insert(doc.id).second) {
            throw DataError(path.string() + ":" + std::to_string(line) + ": duplicate document id '" + doc.id + "'");
        }
        docs.push_back(std::move(doc));
    });
    return docs;
}

void save_corpus(std::span<const Document> docs, const std::filesystem::path& path) {
    AtomicFileWriter writer(path);
    for (const auto& d : docs) writer.stream() << document_to_json(d).dump() << '\n';
    writer.commit();
}

std::string to_string(RefType type) {
    switch (type) {
        case RefType::Query: return "query";
        case RefType::Citation: return "citation";
        case RefType::Title: return "title";
    }
    return "query";
}

RefType parse_ref_type(const std::string& name) {
    if (name == "query") return RefType::Query;
    if (name == "citation") return RefType::Citation;
    if (name == "title") return RefType::Title;
    throw DataError("unknown reference type '" + name + "'");
}

namespace {

Document plain_document(const Json& j, std::string fallback_id = {}) {
    Document d;
    d.id = j.contains("id") ? j.at("id").get<std::string>() : std::move(fallback_id);
    d.title = j.value("title", "");
    d.abstract = j.value("abstract", "");
    return d;
}

bool usable_text(const std::string& s) { return s.find_first_not_of(" \t\r\n") != std::string::npos; }

}  // namespace

QueryRecord query_record_from_json(const Json& record) {
    QueryRecord q;
    q.query = record.at("query").get<std::string>();
    for (const auto& c : record.at("candidates")) {
        q.candidates.push_back({plain_document(c.at("doc")), c.at("relevance").get<double>()});
    }
    return q;
}

std::vector<ReferenceTriplet> triplets_from_query_relevance(std::span<const QueryRecord> records, std::size_t cap,
                                                            BuildStats* stats, const NegativeSelection& selection) {
    std::vector<ReferenceTriplet> out;
    BuildStats local;
    std::mt19937_64 rng(selection.random_seed.value_or(0));
    for (const auto& record : records) {
        std::vector<const Document*> positives;
        std::vector<const Document*> negatives;
        for (const auto& c : record.candidates) {
            if (c.relevance > 0.0) positives.push_back(&c.doc);
            else if (c.relevance == 0.0) negatives.push_back(&c.doc);
        }
        if (!usable_text(record.query) || positives.empty() || negatives.empty()) {
            ++local.skipped;
            continue;
        }
        std::vector<std::pair<const Document*, const Document*>> pairs;
        for (const auto* p : positives) {
            for (const auto* n : negatives) {
                if (p->id != n->id) pairs.emplace_back(p, n);
            }
        }
        if (selection.random_seed) {
            for (std::size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[rng() % i]);
        }
        if (pairs.size() > cap) pairs.resize(cap);
        if (pairs.empty()) ++local.skipped;
        for (const auto& [p, n] : pairs) {
            out.push_back({record.query, *p, *n, RefType::Query});
            ++local.emitted;
        }
    }
    if (stats != nullptr) *stats = local;
    return out;
}

CitingPaper citing_paper_from_json(const Json& record) {
    CitingPaper paper;
    for (const auto& s : record.at("sections")) {
        CitingSection section;
        section.name = s.value("name", "");
        for (const auto& sent : s.at("sentences")) {
            CitingSentence cs;
            cs.text = sent.at("text").get<std::string>();
            for (const auto& g : sent.at("cited_ids")) {
                if (g.is_array()) cs.groups.push_back(g.get<std::vector<std::string>>());
                else cs.groups.push_back({g.get<std::string>()});
            }
            section.sentences.push_back(std::move(cs));
        }
        paper.sections.push_back(std::move(section));
    }
    const auto& cited = record.at("cited_docs");
    if (cited.is_object()) {
        for (const auto& [id, d] : cited.items()) paper.cited_docs.emplace(id, plain_document(d, id));
    } else {
        for (const auto& d : cited) {
            auto doc = plain_document(d);
            paper.cited_docs.emplace(doc.id, std::move(doc));
        }
    }
    return paper;
}

std::vector<ReferenceTriplet> triplets_from_citations(std::span<const CitingPaper> papers, BuildStats* stats,
                                                      const NegativeSelection& selection) {
    std::vector<ReferenceTriplet> out;
    BuildStats local;
    std::mt19937_64 rng(selection.random_seed.value_or(0));
    for (const auto& paper : papers) {
        // Cited ids per section, sorted, restricted to documents we can resolve.
        std::vector<std::set<std::string>> cited_in_section;
        for (const auto& section : paper.sections) {
            std::set<std::string> ids;
            for (const auto& sent : section.sentences) {
                for (const auto& group : sent.groups) {
                    for (const auto& id : group) {
                        if (paper.cited_docs.count(id) > 0) ids.insert(id);
                    }
                }
            }
            cited_in_section.push_back(std::move(ids));
        }
        for (std::size_t s = 0; s < paper.sections.size(); ++s) {
            for (const auto& sent : paper.sections[s].sentences) {
                if (sent.groups.size() != 1 || sent.groups[0].empty() || !usable_text(sent.text)) {
                    ++local.skipped;
                    continue;
                }
                const auto& group = sent.groups[0];
                bool resolvable = true;
                for (const auto& id : group) resolvable = resolvable && paper.cited_docs.count(id) > 0;
                if (!resolvable) {
                    ++local.skipped;
                    continue;
                }
                const std::set<std::string> group_ids(group.begin(), group.end());
                std::vector<std::string> candidates;
                for (std::size_t other = 0; other < paper.sections.size(); ++other) {
                    if (other == s) continue;
                    for (const auto& id : cited_in_section[other]) {
                        if (group_ids.count(id) == 0 &&
                            std::find(candidates.begin(), candidates.end(), id) == candidates.end()) {
                            candidates.push_back(id);
                        }
                    }
                }
                if (candidates.empty()) {
                    ++local.skipped;
                    continue;
                }
                const std::string& neg_id =
                    selection.random_seed ? candidates[rng() % candidates.size()] : candidates.front();
                Document positive;
                if (group.size() == 1) {
                    positive = paper.cited_docs.at(group[0]);
                } else {
                    for (const auto& id : group) {
                        const auto& d = paper.cited_docs.at(id);
                        positive.id += (positive.id.empty() ? "" : "+") + id;
                        positive.title += (positive.title.empty() ? "" : " ") + d.title;
                        positive.abstract += (positive.abstract.empty() ? "" : " ") + d.abstract;
                    }
                }
                out.push_back({sent.text, std::move(positive), paper.cited_docs.at(neg_id), RefType::Citation});
                ++local.emitted;
            }
        }
    }
    if (stats != nullptr) *stats = local;
    return out;
}

TitledPaper titled_paper_from_json(const Json& record) {
    TitledPaper paper;
    paper.doc = plain_document(record.at("doc"));
    for (const auto& d : record.at("cited_docs")) paper.cited_docs.push_back(plain_document(d));
    return paper;
}

std::vector<ReferenceTriplet> triplets_from_titles(std::span<const TitledPaper> papers, std::size_t per_paper,
                                                   BuildStats* stats, const NegativeSelection& selection) {
    std::vector<ReferenceTriplet> out;
    BuildStats local;
    std::mt19937_64 rng(selection.random_seed.value_or(0));
    auto abstract_only = [](const Document& d) {
        Document a;
        a.id = d.id + "#abstract";
        a.abstract = d.abstract;
        return a;
    };
    for (const auto& paper : papers) {
        std::vector<const Document*> negatives;
        for (const auto& c : paper.cited_docs) {
            if (c.id != paper.doc.id && usable_text(c.abstract)) negatives.push_back(&c);
        }
        std::sort(negatives.begin(), negatives.end(), [](const Document* a, const Document* b) { return a->id < b->id; });
        if (!usable_text(paper.doc.title) || !usable_text(paper.doc.abstract) || negatives.empty()) {
            ++local.skipped;
            continue;
        }
        if (selection.random_seed) {
            for (std::size_t i = negatives.size(); i > 1; --i) std::swap(negatives[i - 1], negatives[rng() % i]);
        }
        const std::size_t n = std::min(per_paper, negatives.size());
        for (std::size_t i = 0; i < n; ++i) {
            out.push_back({paper.doc.title, abstract_only(paper.doc), abstract_only(*negatives[i]), RefType::Title});
            ++local.emitted;
        }
    }
    if (stats != nullptr) *stats = local;
    return out;
}

std::vector<ReferenceTriplet> filter_by_type(std::vector<ReferenceTriplet> triplets,
                                             const std::set<RefType>& excluded) {
    std::erase_if(triplets, [&](const ReferenceTriplet& t) { return excluded.count(t.type) > 0; });
    return triplets;
}

std::map<RefType, std::size_t> count_by_type(std::span<const ReferenceTriplet> triplets) {
    std::map<RefType, std::size_t> counts;
    for (const auto& t : triplets) ++counts[t.type];
    return counts;
}

void save_triplets(std::span<const ReferenceTriplet> triplets, const std::filesystem::path& triplets_path,
                   const std::filesystem::path& docs_path) {
    AtomicFileWriter tw(triplets_path);
    AtomicFileWriter dw(docs_path);
    std::unordered_set<std::string> written;
    auto store = [&](const Document& d) {
        if (written.insert(d.id).second) dw.stream() << document_to_json(d).dump() << '\n';
    };
    for (const auto& t : triplets) {
        store(t.positive);
        store(t.negative);
        tw.stream() << Json{{"ref", t.reference}, {"pos_id", t.positive.id}, {"neg_id", t.negative.id},
                            {"type", to_string(t.type)}}
                           .dump()
                    << '\n';
    }
    dw.commit();
    tw.commit();
}

std::vector<ReferenceTriplet> load_triplets(const std::filesystem::path& triplets_path,
                                            const std::filesystem::path& docs_path) {
    std::unordered_map<std::string, Document> docs;
    for (auto& d : load_corpus(docs_path)) {
        auto id = d.id;
        docs.emplace(std::move(id), std::move(d));
    }
    std::vector<ReferenceTriplet> out;
    for_each_json_line(triplets_path, [&](const Json& r, std::size_t line) {
        auto resolve = [&](const std::string& id) -> const Document& {
            auto it = docs.find(id);
            if (it == docs.end()) {
                throw DataError(triplets_path.string() + ":" + std::to_string(line) + ": unknown document id '" + id +
                                "'");
            }
            return it->second;
        };
        ReferenceTriplet t;
        t.reference = r.at("ref").get<std::string>();
        t.positive = resolve(r.at("pos_id").get<std::string>());
        t.negative = resolve(r.at("neg_id").get<std::string>());
        t.type = parse_ref_type(r.value("type", "query"));
        out.push_back(std::move(t));
    });
    return out;
}

}  // namespace kpgen
