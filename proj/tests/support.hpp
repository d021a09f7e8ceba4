#pragma once

// Shared helpers for the test binaries: fixture paths, scratch directories,
// pre-tagged documents and a deterministic synthetic corpus.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kpgen/datasets.hpp"
#include "kpgen/importance_model.hpp"
#include "kpgen/text.hpp"
#include "kpgen/training.hpp"

namespace kpgen::testing {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(KPGEN_FIXTURE_DIR) / name;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("kpgen-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// "word/TAG word/TAG ..." -> tokens. A bare "./." or ",/," becomes a boundary.
inline std::vector<TaggedToken> tagged(const std::string& spec) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::istringstream in(spec);
    std::string item;
    while (in >> item) {
        const auto slash = item.rfind('/');
        pairs.emplace_back(item.substr(0, slash), item.substr(slash + 1));
    }
    return from_pretagged(pairs);
}

inline Document tagged_doc(const std::string& id, const std::string& spec) {
    Document d;
    d.id = id;
    d.tagged = tagged(spec);
    std::string text;
    for (const auto& t : *d.tagged) text += (text.empty() ? "" : " ") + t.surface;
    d.abstract = text;
    return d;
}

/// Predictor that looks weights up in a fixed table: raw(t, j) = table[t][j],
/// pooled with max over tokens of log(1 + ReLU(raw)).
class ScriptedPredictor final : public TermImportancePredictor {
public:
    ScriptedPredictor(std::size_t vocab_size, std::uint64_t seed, double density = 0.3) : v_(vocab_size) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> value(0.05, 3.0);
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        table_.assign(v_ * v_, -1.0);
        for (std::size_t t = 0; t < v_; ++t) {
            for (std::size_t j = 1; j < v_; ++j) {
                if (t == j || coin(rng) < density) table_[t * v_ + j] = value(rng);
            }
        }
    }

    SparseTermVector predict(std::span<const TermId> ids) const override {
        if (ids.empty()) throw std::invalid_argument("empty document");
        std::vector<double> dense(v_, 0.0);
        for (TermId t : ids) {
            for (std::size_t j = 1; j < v_; ++j) {
                const double raw = table_[t * v_ + j];
                if (raw > 0.0) dense[j] = std::max(dense[j], std::log1p(raw));
            }
        }
        return SparseTermVector::from_dense("", dense);
    }

    std::size_t vocab_size() const override { return v_; }

private:
    std::size_t v_;
    std::vector<double> table_;
};

/// Pronounceable pseudo-word for index i ("bako", "bake", ...), stable across runs.
inline std::string pseudo_word(std::size_t i) {
    static const char* consonants = "bdfgklmnprstvz";
    static const char* vowels = "aeiou";
    std::string w;
    std::size_t x = i + 14;
    do {
        w.push_back(consonants[x % 14]);
        x /= 14;
        w.push_back(vowels[x % 5]);
        x /= 5;
    } while (x > 0);
    return w + "x";
}

struct SyntheticCorpusOptions {
    std::size_t documents = 40;
    std::size_t topics = 5;
    std::size_t nouns_per_topic = 8;
    std::size_t adjectives_per_topic = 4;
    std::size_t min_sentences = 3;
    std::size_t max_sentences = 6;
    double on_topic = 0.8;
    std::uint64_t seed = 7;
    std::string id_prefix = "d";
};

/// Pre-tagged documents built from topic word pools, so noun phrases recur
/// across documents of the same topic and the glossary is non-trivial.
inline std::vector<Document> synthetic_corpus(const SyntheticCorpusOptions& o) {
    std::mt19937_64 rng(o.seed);
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    auto coin = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };
    auto noun = [&](std::size_t topic) { return pseudo_word(topic * 100 + pick(o.nouns_per_topic)); };
    auto adj = [&](std::size_t topic) { return pseudo_word(topic * 100 + 50 + pick(o.adjectives_per_topic)); };
    static const char* verbs[] = {"improves", "describes", "uses", "extends", "reduces"};
    static const char* preps[] = {"for", "with", "in", "of"};
    std::vector<Document> docs;
    for (std::size_t d = 0; d < o.documents; ++d) {
        const std::size_t main_topic = pick(o.topics);
        auto topic = [&] { return coin(o.on_topic) ? main_topic : pick(o.topics); };
        std::string spec;
        const std::size_t sentences = o.min_sentences + pick(o.max_sentences - o.min_sentences + 1);
        for (std::size_t s = 0; s < sentences; ++s) {
            const std::size_t t1 = topic(), t2 = topic();
            spec += "the/DT ";
            if (coin(0.5)) spec += adj(t1) + "/JJ ";
            spec += noun(t1) + "/NN ";
            if (coin(0.5)) spec += noun(t1) + "/NN ";
            spec += std::string(verbs[pick(5)]) + "/VBZ " + preps[pick(4)] + "/IN a/DT ";
            if (coin(0.3)) spec += adj(t2) + "/JJ ";
            spec += noun(t2) + "/NN ";
            if (coin(0.2)) spec += std::to_string(1 + pick(9)) + "/CD ";
            spec += "./. ";
        }
        docs.push_back(tagged_doc(o.id_prefix + std::to_string(d), spec));
    }
    return docs;
}

/// Synthetic training data over term ids 1..V-1: ids [1, keywords] are
/// keywords, the rest filler. A positive holds one keyword and five filler
/// words; its reference holds that keyword and two filler words absent from
/// the positive, so the keyword is the only shared term. The negative holds a
/// different keyword.
struct SyntheticTriplets {
    std::size_t vocab_size = 61;
    std::size_t keywords = 20;
    std::vector<EncodedTriplet> triplets;
    std::vector<TermId> shared;  // the keyword of each triplet
};

inline SyntheticTriplets synthetic_triplets(std::size_t count, std::uint64_t seed) {
    SyntheticTriplets out;
    std::mt19937_64 rng(seed);
    const std::size_t filler = out.vocab_size - 1 - out.keywords;
    auto keyword = [&] { return static_cast<TermId>(1 + rng() % out.keywords); };
    auto filler_word = [&] { return static_cast<TermId>(1 + out.keywords + rng() % filler); };
    auto fillers = [&](std::size_t n, const std::vector<TermId>& avoid) {
        std::vector<TermId> f;
        while (f.size() < n) {
            const TermId t = filler_word();
            if (std::find(f.begin(), f.end(), t) == f.end() && std::find(avoid.begin(), avoid.end(), t) == avoid.end()) {
                f.push_back(t);
            }
        }
        return f;
    };
    for (std::size_t i = 0; i < count; ++i) {
        const TermId k = keyword();
        TermId k2 = keyword();
        while (k2 == k) k2 = keyword();
        auto pos = fillers(5, {});
        pos.insert(pos.begin() + static_cast<long>(rng() % 6), k);
        auto ref = fillers(2, pos);
        ref.insert(ref.begin() + static_cast<long>(rng() % 3), k);
        auto neg = fillers(5, {});
        neg.insert(neg.begin() + static_cast<long>(rng() % 6), k2);
        out.triplets.push_back({ref, pos, neg});
        out.shared.push_back(k);
    }
    return out;
}

/// Random micro-model and batch for gradient checks. Instances where a raw
/// logit sits near the ReLU kink or two tokens nearly tie for the max pool
/// are redrawn, since finite differences are not valid there.
struct GradientInstance {
    MicroImportanceModel model{2, 1};
    std::vector<EncodedTriplet> batch;
};

inline bool near_kink(const MicroImportanceModel& m, const std::vector<TermId>& ids, double margin) {
    std::vector<std::vector<double>> raws;
    for (TermId t : ids) raws.push_back(m.raw_logits(t));
    for (std::size_t j = 1; j < m.vocab_size(); ++j) {
        std::vector<double> col;
        for (const auto& r : raws) col.push_back(r[j]);
        std::sort(col.begin(), col.end());
        col.erase(std::unique(col.begin(), col.end()), col.end());
        for (double v : col) {
            if (std::fabs(v) < margin) return true;
        }
        if (col.size() >= 2 && col[col.size() - 1] > 0.0 && col[col.size() - 1] - col[col.size() - 2] < margin) {
            return true;
        }
    }
    return false;
}

inline GradientInstance random_gradient_instance(std::mt19937_64& rng) {
    while (true) {
        GradientInstance g;
        const std::size_t v = 5 + rng() % 26;   // V <= 30
        const std::size_t d = 1 + rng() % 8;    // d <= 8
        const std::size_t b = 1 + rng() % 4;    // batch <= 4
        g.model = MicroImportanceModel::random(v, d, rng(), 1.0, rng() % 2 == 0);
        auto seq = [&] {
            std::vector<TermId> ids;
            const std::size_t n = 1 + rng() % 5;
            for (std::size_t i = 0; i < n; ++i) ids.push_back(static_cast<TermId>(rng() % v));
            return ids;
        };
        bool ok = true;
        for (std::size_t i = 0; i < b && ok; ++i) {
            EncodedTriplet t{seq(), seq(), seq()};
            std::vector<TermId> distinct;
            for (const auto* side : {&t.reference, &t.positive, &t.negative}) {
                std::vector<TermId> ids(*side);
                std::sort(ids.begin(), ids.end());
                ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
                ok = ok && !near_kink(g.model, ids, 1e-3);
            }
            g.batch.push_back(std::move(t));
        }
        if (ok) return g;
    }
}

struct GradientCheckResult {
    double max_relative_error = 0.0;  // vector-level ||a - n|| / max(||a||, ||n||)
    std::size_t parameters = 0;
};

/// Compares batch_loss gradients with central differences on every parameter.
inline GradientCheckResult gradient_check(GradientInstance& g, double lambda_q, double lambda_d, double h = 1e-6) {
    ModelGradient analytic;
    batch_loss(g.model, g.batch, lambda_q, lambda_d, &analytic);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    std::size_t count = 0;
    auto probe = [&](std::vector<double>& params, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double saved = params[i];
            params[i] = saved + h;
            const double up = batch_loss(g.model, g.batch, lambda_q, lambda_d).total;
            params[i] = saved - h;
            const double down = batch_loss(g.model, g.batch, lambda_q, lambda_d).total;
            params[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            diff2 += (numeric - grad[i]) * (numeric - grad[i]);
            a2 += grad[i] * grad[i];
            n2 += numeric * numeric;
            ++count;
        }
    };
    probe(g.model.embeddings(), analytic.embeddings);
    probe(g.model.projection(), analytic.projection);
    if (g.model.has_bias()) probe(g.model.bias(), analytic.bias);
    GradientCheckResult r;
    r.parameters = count;
    const double scale = std::max(std::sqrt(a2), std::sqrt(n2));
    r.max_relative_error = scale > 0.0 ? std::sqrt(diff2) / scale : 0.0;
    return r;
}

}  // namespace kpgen::testing
