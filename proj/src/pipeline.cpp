#include "kpgen/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "kpgen/error.hpp"
#include "kpgen/io.hpp"
#include "kpgen/parallel.hpp"

namespace kpgen {

void PipelineConfig::validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(alpha)) throw ConfigError("alpha must lie in [0, 1], got " + format_double(alpha));
    if (!unit(beta)) throw ConfigError("beta must lie in [0, 1], got " + format_double(beta));
    if (!(gamma < 1.0)) throw ConfigError("gamma must be < 1 so that |c| - gamma > 0, got " + format_double(gamma));
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
    if (top_k == 0) throw ConfigError("top_k must be >= 1");
    if (!(informativeness_scale > 0.0) || !(phraseness_scale > 0.0)) throw ConfigError("expert scales must be > 0");
}

PipelineConfig PipelineConfig::from_key_values(const std::map<std::string, std::string>& kv, PipelineConfig c) {
    auto real = [&](const char* key, double& dst) {
        if (auto it = kv.find(key); it != kv.end()) dst = parse_double(it->second, key);
    };
    auto count = [&](const char* key, std::size_t& dst) {
        if (auto it = kv.find(key); it != kv.end()) dst = parse_uint(it->second, key);
    };
    real("alpha", c.alpha);
    real("beta", c.beta);
    real("gamma", c.gamma);
    real("lambda", c.lambda);
    count("neighbors", c.neighbors);
    count("candidate_cap", c.candidate_cap);
    count("per_neighbor_cap", c.per_neighbor_cap);
    count("top_k", c.top_k);
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::from_key_values(const std::map<std::string, std::string>& kv) {
    return from_key_values(kv, PipelineConfig{});
}

std::map<std::string, std::string> PipelineConfig::to_key_values() const {
    return {{"alpha", format_double(alpha)},
            {"beta", format_double(beta)},
            {"gamma", format_double(gamma)},
            {"lambda", format_double(lambda)},
            {"neighbors", std::to_string(neighbors)},
            {"candidate_cap", std::to_string(candidate_cap)},
            {"per_neighbor_cap", std::to_string(per_neighbor_cap)},
            {"top_k", std::to_string(top_k)}};
}

double position_penalty(std::size_t position) {
    if (position == kAbsentPosition) return 1.0;
    return 1.0 + 1.0 / std::log2(static_cast<double>(position) + 2.0);
}

double phraseness(const std::string& key, const std::unordered_set<std::string>& given_keys,
                  std::span<const NeighborEvidence> neighbors, double beta) {
    const double own = given_keys.contains(key) ? 1.0 / static_cast<double>(given_keys.size()) : 0.0;
    double related = 0.0;
    for (const auto& n : neighbors) {
        if (n.pruned_keys.contains(key)) related += n.similarity / static_cast<double>(n.pruned.size());
    }
    return beta * own + (1.0 - beta) * related;
}

double informativeness(std::span<const TermId> term_ids, const SparseTermVector& x_vector,
                       std::span<const NeighborEvidence> neighbors, double alpha, double gamma) {
    double sum = 0.0;
    for (const TermId t : term_ids) {
        double related = 0.0;
        for (const auto& n : neighbors) related += n.similarity * n.vector->weight(t);
        sum += alpha * x_vector.weight(t) + (1.0 - alpha) * related;
    }
    return sum / (static_cast<double>(term_ids.size()) - gamma);
}

std::vector<CandidatePhrase> assemble_candidates(std::span<const CandidatePhrase> given, const StemmedDocument& doc,
                                                 std::span<const NeighborEvidence> neighbors, double beta,
                                                 std::size_t cap) {
    std::vector<CandidatePhrase> out(given.begin(), given.end());
    if (neighbors.empty() || cap == 0) return out;

    std::unordered_set<std::string> given_keys;
    for (const auto& c : given) given_keys.insert(c.key);

    // C_N in neighbor rank order; the first neighbor holding a phrase supplies its tokens.
    std::vector<const CandidatePhrase*> pool;
    std::unordered_set<std::string> seen;
    for (const auto& n : neighbors) {
        for (const auto* p : n.pruned) {
            if (seen.insert(p->key).second) pool.push_back(p);
        }
    }
    std::vector<std::pair<double, const CandidatePhrase*>> ranked;
    ranked.reserve(pool.size());
    for (const auto* p : pool) ranked.emplace_back(phraseness(p->key, given_keys, neighbors, beta), p);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second->key < b.second->key;
    });
    if (ranked.size() > cap) ranked.resize(cap);

    for (const auto& [score, p] : ranked) {
        if (given_keys.contains(p->key)) continue;
        CandidatePhrase c = *p;
        c.source = PhraseSource::Neighbor;
        const auto pos = doc.find_key(c.key);
        c.first_position = pos ? *pos : kAbsentPosition;
        out.push_back(std::move(c));
    }
    return out;
}

KeyphraseResult KeyphraseGenerator::generate(const Document& doc, const PipelineConfig& config) const {
    config.validate();
    const AnalyzedDocument analyzed = analyze(doc, tagger_, index_.vocab);
    if (analyzed.words.empty()) throw DataError("document '" + doc.id + "' has no words");
    const SparseTermVector x_vector = vectors_.vector_for(doc.id, analyzed.term_ids);

    KeyphraseResult result;
    result.doc_id = doc.id;
    result.neighborhood.query_id = doc.id;
    const bool skip = config.neighbors == 0 || (config.short_circuit_extraction && config.extraction_mode());
    if (!skip) result.neighborhood = retrieve_neighbors(index_.bm25, analyzed.words, doc.id, config.neighbors);

    std::vector<NeighborEvidence> evidence;
    evidence.reserve(result.neighborhood.entries.size());
    for (const auto& n : result.neighborhood.entries) {
        const auto& entry = index_.entry(n.doc);
        NeighborEvidence e;
        e.similarity = n.similarity;
        e.vector = &entry.vector;
        for (std::size_t idx : entry.pruned) {
            if (e.pruned.size() == config.per_neighbor_cap) break;
            e.pruned.push_back(&entry.top[idx].phrase);
            e.pruned_keys.insert(entry.top[idx].phrase.key);
        }
        evidence.push_back(std::move(e));
    }

    std::unordered_set<std::string> given_keys;
    for (const auto& c : analyzed.candidates) given_keys.insert(c.key);
    const StemmedDocument stemmed(analyzed.tokens);
    auto candidates = assemble_candidates(analyzed.candidates, stemmed, evidence, config.beta, config.candidate_cap);
    result.given_candidates = analyzed.candidates.size();
    result.total_candidates = candidates.size();

    std::vector<ScoredKeyphrase> scored;
    scored.reserve(candidates.size());
    for (auto& c : candidates) {
        const double pn = phraseness(c.key, given_keys, evidence, config.beta);
        // A phrase drawn from no candidate set has zero probability and is not emitted.
        if (pn == 0.0) continue;
        ScoredKeyphrase s;
        s.phraseness = pn * config.phraseness_scale;
        s.informativeness =
            informativeness(c.term_ids, x_vector, evidence, config.alpha, config.gamma) * config.informativeness_scale;
        s.is_present = c.is_present();
        s.position_penalty = position_penalty(c.first_position);
        s.phrase = std::move(c);
        scored.push_back(std::move(s));
    }
    if (config.normalize_informativeness) {
        double total = 0.0;
        for (const auto& s : scored) total += s.informativeness;
        if (total > 0.0) {
            for (auto& s : scored) s.informativeness /= total;
        }
    }
    for (auto& s : scored) s.score = s.position_penalty * std::pow(s.phraseness, config.lambda) * s.informativeness;

    std::sort(scored.begin(), scored.end(), [](const ScoredKeyphrase& a, const ScoredKeyphrase& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.phrase.key < b.phrase.key;
    });
    for (auto& s : scored) {
        auto& list = s.is_present ? result.present : result.absent;
        if (list.size() < config.top_k) list.push_back(std::move(s));
    }
    return result;
}

std::vector<KeyphraseResult> KeyphraseGenerator::generate_all(std::span<const Document> docs,
                                                              const PipelineConfig& config,
                                                              std::size_t threads) const {
    std::vector<KeyphraseResult> results(docs.size());
    parallel_for(docs.size(), threads, [&](std::size_t i) { results[i] = generate(docs[i], config); });
    return results;
}

Json result_to_json(const KeyphraseResult& result) {
    auto list = [](const std::vector<ScoredKeyphrase>& items) {
        Json arr = Json::array();
        for (const auto& s : items) arr.push_back(Json{{"phrase", s.phrase.surface()}, {"score", s.score}});
        return arr;
    };
    return Json{{"id", result.doc_id}, {"present", list(result.present)}, {"absent", list(result.absent)}};
}

}  // namespace kpgen
