#include "kpgen/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "kpgen/corpus_index.hpp"
#include "kpgen/error.hpp"
#include "kpgen/io.hpp"
#include "kpgen/parallel.hpp"

namespace kpgen {

namespace {

std::string normalize_phrase(std::string_view phrase) { return phrase_key(split_words(phrase)); }

std::size_t count_matches(std::span<const std::string> predicted, std::span<const std::string> gold) {
    const std::unordered_set<std::string> g(gold.begin(), gold.end());
    return static_cast<std::size_t>(
        std::count_if(predicted.begin(), predicted.end(), [&](const std::string& p) { return g.contains(p); }));
}

std::vector<std::string> normalized_top(std::span<const std::string> predicted, std::size_t k) {
    auto p = normalize_phrases(predicted);
    if (p.size() > k) p.resize(k);
    return p;
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::vector<TaggedToken> document_tokens(const Document& doc) {
    return doc.tagged ? *doc.tagged : split_tokens(doc.text());
}

}  // namespace

std::vector<std::string> normalize_phrases(std::span<const std::string> phrases) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& p : phrases) {
        auto key = normalize_phrase(p);
        if (!key.empty() && seen.insert(key).second) out.push_back(std::move(key));
    }
    return out;
}

std::optional<PrecisionRecall> f1_at_k(std::span<const std::string> predicted, std::span<const std::string> gold,
                                       std::size_t k) {
    if (k == 0) throw std::invalid_argument("k must be >= 1");
    const auto g = normalize_phrases(gold);
    if (g.empty()) return std::nullopt;
    const auto p = normalized_top(predicted, k);
    const auto hits = static_cast<double>(count_matches(p, g));
    PrecisionRecall r;
    r.precision = hits / static_cast<double>(k);
    r.recall = hits / static_cast<double>(g.size());
    r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

std::optional<double> recall_at_k(std::span<const std::string> predicted, std::span<const std::string> gold,
                                  std::size_t k) {
    if (k == 0) throw std::invalid_argument("k must be >= 1");
    const auto g = normalize_phrases(gold);
    if (g.empty()) return std::nullopt;
    const auto p = normalized_top(predicted, k);
    return static_cast<double>(count_matches(p, g)) / static_cast<double>(g.size());
}

GoldKeyphrases split_gold(const Document& doc, std::span<const std::string> keyphrases) {
    const auto tokens = document_tokens(doc);
    const StemmedDocument stemmed(tokens);
    GoldKeyphrases g;
    for (const auto& k : keyphrases) {
        const auto key = normalize_phrase(k);
        if (key.empty()) continue;
        (stemmed.find_key(key) ? g.present : g.absent).push_back(k);
    }
    return g;
}

std::map<std::string, GoldKeyphrases> load_gold(const std::filesystem::path& path, std::span<const Document> docs) {
    std::map<std::string, const Document*> by_id;
    for (const auto& d : docs) by_id.emplace(d.id, &d);
    std::map<std::string, GoldKeyphrases> gold;
    for_each_json_line(path, [&](const Json& r, std::size_t line) {
        const std::string where = path.string() + ":" + std::to_string(line);
        if (!r.is_object() || !r.contains("id")) throw DataError(where + ": gold record needs an id");
        const auto id = r.at("id").get<std::string>();
        GoldKeyphrases g;
        if (r.contains("keyphrases")) {
            auto it = by_id.find(id);
            if (it == by_id.end()) throw DataError(where + ": no document '" + id + "' to split keyphrases against");
            g = split_gold(*it->second, r.at("keyphrases").get<std::vector<std::string>>());
        } else {
            g.present = r.value("present", std::vector<std::string>{});
            g.absent = r.value("absent", std::vector<std::string>{});
        }
        if (!gold.emplace(id, std::move(g)).second) throw DataError(where + ": duplicate gold id '" + id + "'");
    });
    return gold;
}

std::map<std::string, GoldKeyphrases> gold_from_documents(std::span<const Document> docs) {
    std::map<std::string, GoldKeyphrases> gold;
    for (const auto& d : docs) {
        if (!d.gold_present && !d.gold_absent) continue;
        gold[d.id] = {d.gold_present.value_or(std::vector<std::string>{}),
                      d.gold_absent.value_or(std::vector<std::string>{})};
    }
    return gold;
}

KpEvalResult evaluate_keyphrases(const std::map<std::string, Predictions>& predictions,
                                 const std::map<std::string, GoldKeyphrases>& gold) {
    KpEvalResult r;
    const Predictions none;
    for (const auto& [id, g] : gold) {
        auto it = predictions.find(id);
        if (it == predictions.end()) ++r.missing_predictions;
        const Predictions& p = it == predictions.end() ? none : it->second;
        DocumentScores s;
        s.id = id;
        s.f1_5 = f1_at_k(p.present, g.present, 5);
        s.f1_10 = f1_at_k(p.present, g.present, 10);
        s.r_5 = recall_at_k(p.absent, g.absent, 5);
        s.r_10 = recall_at_k(p.absent, g.absent, 10);
        if (s.f1_5) {
            ++r.present_docs;
            r.f1_5 += s.f1_5->f1;
            r.f1_10 += s.f1_10->f1;
        } else {
            ++r.skipped_present;
        }
        if (s.r_5) {
            ++r.absent_docs;
            r.r_5 += *s.r_5;
            r.r_10 += *s.r_10;
        } else {
            ++r.skipped_absent;
        }
        r.per_document.push_back(std::move(s));
    }
    if (r.present_docs > 0) {
        r.f1_5 /= static_cast<double>(r.present_docs);
        r.f1_10 /= static_cast<double>(r.present_docs);
    }
    if (r.absent_docs > 0) {
        r.r_5 /= static_cast<double>(r.absent_docs);
        r.r_10 /= static_cast<double>(r.absent_docs);
    }
    return r;
}

Predictions predictions_from_result(const KeyphraseResult& result) {
    Predictions p;
    for (const auto& s : result.present) p.present.push_back(s.phrase.surface());
    for (const auto& s : result.absent) p.absent.push_back(s.phrase.surface());
    return p;
}

std::map<std::string, Predictions> load_predictions(const std::filesystem::path& path) {
    std::map<std::string, Predictions> out;
    for_each_json_line(path, [&](const Json& r, std::size_t line) {
        const std::string where = path.string() + ":" + std::to_string(line);
        Predictions p;
        try {
            for (const auto& e : r.at("present")) p.present.push_back(e.at("phrase").get<std::string>());
            for (const auto& e : r.value("absent", Json::array())) p.absent.push_back(e.at("phrase").get<std::string>());
            if (!out.emplace(r.at("id").get<std::string>(), std::move(p)).second) {
                throw DataError(where + ": duplicate prediction id");
            }
        } catch (const Json::exception& e) {
            throw DataError(where + ": bad prediction record (" + e.what() + ")");
        }
    });
    return out;
}

Json to_json(const KpEvalResult& r) {
    Json per = Json::array();
    for (const auto& d : r.per_document) {
        Json j{{"id", d.id}};
        j["f1@5"] = d.f1_5 ? Json(d.f1_5->f1) : Json(nullptr);
        j["f1@10"] = d.f1_10 ? Json(d.f1_10->f1) : Json(nullptr);
        j["r@5"] = d.r_5 ? Json(*d.r_5) : Json(nullptr);
        j["r@10"] = d.r_10 ? Json(*d.r_10) : Json(nullptr);
        per.push_back(std::move(j));
    }
    return Json{{"present", {{"f1@5", r.f1_5}, {"f1@10", r.f1_10}, {"documents", r.present_docs},
                             {"skipped_empty_gold", r.skipped_present}}},
                {"absent", {{"r@5", r.r_5}, {"r@10", r.r_10}, {"documents", r.absent_docs},
                            {"skipped_empty_gold", r.skipped_absent}}},
                {"missing_predictions", r.missing_predictions},
                {"per_document", std::move(per)}};
}

std::string to_table(const KpEvalResult& r) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s\n", "", "F1@5", "F1@10", "R@5", "R@10");
    out << line;
    std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s\n", "macro", fixed(r.f1_5).c_str(),
                  fixed(r.f1_10).c_str(), fixed(r.r_5).c_str(), fixed(r.r_10).c_str());
    out << line;
    out << "present docs " << r.present_docs << " (skipped " << r.skipped_present << "), absent docs "
        << r.absent_docs << " (skipped " << r.skipped_absent << ")\n";
    return out.str();
}

std::string to_string(Expansion e) {
    switch (e) {
        case Expansion::None: return "NONE";
        case Expansion::Query: return "QUERY";
        case Expansion::Doc: return "DOC";
        case Expansion::Both: return "BOTH";
    }
    return "NONE";
}

Expansion parse_expansion(const std::string& name) {
    std::string up;
    for (char c : name) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (up == "NONE") return Expansion::None;
    if (up == "QUERY") return Expansion::Query;
    if (up == "DOC") return Expansion::Doc;
    if (up == "BOTH") return Expansion::Both;
    throw ConfigError("unknown expansion setting '" + name + "' (expected NONE, QUERY, DOC or BOTH)");
}

Qrels load_qrels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open qrels " + path.string());
    Qrels qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string qid, iter, docid, rel, extra;
        if (!(fields >> qid)) continue;
        if (!(fields >> iter >> docid >> rel) || (fields >> extra)) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'qid iter docid rel'");
        }
        int grade = 0;
        try {
            std::size_t used = 0;
            grade = std::stoi(rel, &used);
            if (used != rel.size()) throw std::invalid_argument(rel);
        } catch (const std::exception&) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": relevance is not an integer");
        }
        qrels[qid][docid] = grade;
    }
    return qrels;
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
    std::vector<Query> out;
    std::set<std::string> ids;
    for_each_json_line(path, [&](const Json& r, std::size_t line) {
        const std::string where = path.string() + ":" + std::to_string(line);
        try {
            Query q{r.at("id").get<std::string>(), r.at("text").get<std::string>()};
            if (!ids.insert(q.id).second) throw DataError(where + ": duplicate query id '" + q.id + "'");
            out.push_back(std::move(q));
        } catch (const Json::exception& e) {
            throw DataError(where + ": bad query record (" + e.what() + ")");
        }
    });
    return out;
}

std::vector<std::string> expand_words(std::vector<std::string> words, std::span<const std::string> keyphrases) {
    std::unordered_set<std::string> seen;
    for (const auto& k : keyphrases) {
        if (!seen.insert(normalize_phrase(k)).second) continue;
        for (auto& w : split_words(k)) words.push_back(std::move(w));
    }
    return words;
}

RetrievalEvalResult eval_retrieval(std::span<const Document> docs, std::span<const Query> queries,
                                   const Qrels& qrels, const KeyphraseMap& query_keyphrases,
                                   const KeyphraseMap& doc_keyphrases, const RetrievalEvalOptions& options) {
    const bool expand_docs = options.expansion == Expansion::Doc || options.expansion == Expansion::Both;
    const bool expand_queries = options.expansion == Expansion::Query || options.expansion == Expansion::Both;
    static const std::vector<std::string> kNone;
    auto lookup = [](const KeyphraseMap& m, const std::string& id) -> const std::vector<std::string>& {
        auto it = m.find(id);
        return it == m.end() ? kNone : it->second;
    };

    std::vector<std::vector<std::string>> doc_words;
    std::vector<std::string> ids;
    for (const auto& d : docs) {
        auto words = index_words(d);
        doc_words.push_back(expand_docs ? expand_words(std::move(words), lookup(doc_keyphrases, d.id)) : words);
        ids.push_back(d.id);
    }
    const auto index = Bm25Index::build(doc_words, std::move(ids), options.bm25);

    RetrievalEvalResult result;
    result.expansion = options.expansion;
    result.depth = options.depth;
    std::vector<std::vector<ScoredDoc>> ranked(queries.size());
    parallel_for(queries.size(), options.threads, [&](std::size_t i) {
        auto words = split_words(queries[i].text);
        if (expand_queries) words = expand_words(std::move(words), lookup(query_keyphrases, queries[i].id));
        ranked[i] = index.search(words, options.depth);
    });

    double total = 0.0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto& q = queries[i];
        std::set<std::string> relevant;
        if (auto it = qrels.find(q.id); it != qrels.end()) {
            for (const auto& [doc, grade] : it->second) {
                if (grade > 0) relevant.insert(doc);
            }
        }
        if (relevant.empty()) {
            ++result.skipped;
        } else {
            std::size_t hits = 0;
            for (const auto& s : ranked[i]) hits += relevant.count(index.doc_id(s.doc));
            total += static_cast<double>(hits) / static_cast<double>(relevant.size());
            ++result.evaluated;
        }
        result.rankings[q.id] = std::move(ranked[i]);
    }
    if (result.evaluated > 0) result.recall = total / static_cast<double>(result.evaluated);
    return result;
}

Json to_json(const RetrievalEvalResult& r) {
    return Json{{"expansion", to_string(r.expansion)},
                {"recall@" + std::to_string(r.depth), r.recall},
                {"queries", r.evaluated},
                {"skipped_no_relevant", r.skipped}};
}

std::string to_table(const RetrievalEvalResult& r) {
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %10s %8s %8s\n%-10s %10s %8zu %8zu\n", "expansion",
                  ("R@" + std::to_string(r.depth)).c_str(), "queries", "skipped", to_string(r.expansion).c_str(),
                  fixed(r.recall).c_str(), r.evaluated, r.skipped);
    return line;
}

std::vector<ThroughputResult> bench_throughput(const KeyphraseGenerator& generator, std::span<const Document> docs,
                                               const PipelineConfig& config,
                                               std::span<const std::size_t> neighbor_settings,
                                               std::size_t repetitions) {
    if (repetitions == 0) throw ConfigError("repetitions must be >= 1");
    if (docs.empty()) throw DataError("no documents to benchmark");
    using clock = std::chrono::steady_clock;
    std::vector<ThroughputResult> out;
    for (const std::size_t n : neighbor_settings) {
        PipelineConfig c = config;
        c.neighbors = n;
        (void)generator.generate(docs.front(), c);
        std::vector<double> rates, totals;
        for (std::size_t rep = 0; rep < repetitions; ++rep) {
            double seconds = 0.0;
            for (const auto& d : docs) {
                const auto t0 = clock::now();
                auto r = generator.generate(d, c);
                seconds += std::chrono::duration<double>(clock::now() - t0).count();
                (void)r;
            }
            totals.push_back(seconds);
            rates.push_back(static_cast<double>(docs.size()) / seconds);
        }
        ThroughputResult t;
        t.neighbors = n;
        t.documents = docs.size();
        t.repetitions = repetitions;
        for (double r : rates) t.mean_docs_per_second += r;
        t.mean_docs_per_second /= static_cast<double>(repetitions);
        for (double s : totals) t.mean_total_seconds += s;
        t.mean_total_seconds /= static_cast<double>(repetitions);
        t.mean_seconds_per_doc = t.mean_total_seconds / static_cast<double>(docs.size());
        if (repetitions > 1) {
            double ss = 0.0;
            for (double r : rates) ss += (r - t.mean_docs_per_second) * (r - t.mean_docs_per_second);
            t.std_docs_per_second = std::sqrt(ss / static_cast<double>(repetitions - 1));
        }
        out.push_back(t);
    }
    return out;
}

Json to_json(std::span<const ThroughputResult> results, const PipelineConfig& config) {
    Json runs = Json::array();
    for (const auto& t : results) {
        runs.push_back(Json{{"neighbors", t.neighbors},
                            {"documents", t.documents},
                            {"repetitions", t.repetitions},
                            {"docs_per_second", t.mean_docs_per_second},
                            {"docs_per_second_std", t.std_docs_per_second},
                            {"total_seconds", t.mean_total_seconds},
                            {"seconds_per_doc", t.mean_seconds_per_doc}});
    }
    Json cfg = Json::object();
    for (const auto& [k, v] : config.to_key_values()) cfg[k] = v;
    return Json{{"config", std::move(cfg)}, {"runs", std::move(runs)}};
}

std::string to_table(std::span<const ThroughputResult> results) {
    std::ostringstream out;
    char line[200];
    std::snprintf(line, sizeof line, "%9s %7s %5s %12s %10s %10s %12s\n", "neighbors", "docs", "reps", "docs/sec",
                  "std", "total_s", "ms/doc");
    out << line;
    for (const auto& t : results) {
        std::snprintf(line, sizeof line, "%9zu %7zu %5zu %12.2f %10.2f %10.3f %12.3f\n", t.neighbors, t.documents,
                      t.repetitions, t.mean_docs_per_second, t.std_docs_per_second, t.mean_total_seconds,
                      1000.0 * t.mean_seconds_per_doc);
        out << line;
    }
    return out.str();
}

}  // namespace kpgen
