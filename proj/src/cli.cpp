#include "kpgen/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include "kpgen/corpus_index.hpp"
#include "kpgen/datasets.hpp"
#include "kpgen/error.hpp"
#include "kpgen/evaluation.hpp"
#include "kpgen/importance_model.hpp"
#include "kpgen/io.hpp"
#include "kpgen/pipeline.hpp"
#include "kpgen/pos_tagger.hpp"
#include "kpgen/training.hpp"
#include "kpgen/vocabulary.hpp"

namespace kpgen::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kPipelineKeys{"alpha", "beta", "gamma", "lambda", "neighbors",
                                          "candidate_cap", "per_neighbor_cap", "top_k"};
const std::set<std::string> kTrainKeys{"lr", "batch", "steps", "lambda_q", "lambda_d",
                                       "d", "momentum", "init_scale"};
const std::set<std::string> kIndexKeys{"k1", "b", "top_n", "min_support", "min_freq", "max_vocab"};
const std::set<std::string> kGeneralKeys{"seed", "threads", "tagger"};

const std::map<std::string, std::string> kDefaults{
    {"k1", "0.9"},     {"b", "0.4"},        {"top_n", "10"}, {"min_support", "3"},
    {"min_freq", "2"}, {"max_vocab", "50000"}, {"seed", "42"}, {"threads", "1"},
    {"tagger", "rules"}};

bool known_key(const std::string& key) {
    return kPipelineKeys.contains(key) || kTrainKeys.contains(key) || kIndexKeys.contains(key) ||
           kGeneralKeys.contains(key);
}

/// Merged key/value settings: defaults, then the config file, then flags.
class Settings {
public:
    void load(const std::optional<std::string>& config_flag, const std::map<std::string, std::string>& overrides) {
        values_ = kDefaults;
        std::optional<fs::path> path;
        if (config_flag) {
            path = *config_flag;
        } else if (const char* env = std::getenv(kConfigEnv); env != nullptr && *env != '\0') {
            path = env;
        }
        if (path) {
            if (!fs::exists(*path)) throw UsageError("config file not found: " + path->string());
            for (auto& [k, v] : load_key_values(*path)) {
                if (!known_key(k)) throw ConfigError(path->string() + ": unknown key '" + k + "'");
                values_[k] = v;
            }
        }
        for (const auto& [k, v] : overrides) values_[k] = v;
    }

    std::map<std::string, std::string> subset(const std::set<std::string>& keys) const {
        std::map<std::string, std::string> out;
        for (const auto& [k, v] : values_) {
            if (keys.contains(k)) out.emplace(k, v);
        }
        return out;
    }
    const std::string& get(const std::string& key) const { return values_.at(key); }
    double real(const std::string& key) const { return parse_double(get(key), key); }
    std::uint64_t count(const std::string& key) const { return parse_uint(get(key), key); }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

    PipelineConfig pipeline() const { return PipelineConfig::from_key_values(subset(kPipelineKeys)); }
    TrainConfig training() const {
        auto kv = subset(kTrainKeys);
        kv["seed"] = get("seed");
        return TrainConfig::from_key_values(kv);
    }
    IndexConfig index() const {
        IndexConfig c;
        c.bm25.k1 = real("k1");
        c.bm25.b = real("b");
        c.precompute.gamma = pipeline().gamma;
        c.precompute.top_n = count("top_n");
        c.precompute.threads = std::max<std::uint64_t>(1, count("threads"));
        c.glossary_min_support = count("min_support");
        return c;
    }
    std::size_t threads() const { return std::max<std::uint64_t>(1, count("threads")); }

private:
    std::map<std::string, std::string> values_;
};

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError("missing required " + what);
    if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path);
}

void require_dir(const std::string& path, const std::string& what) {
    if (path.empty()) throw UsageError("missing required " + what);
    if (!fs::is_directory(path)) throw UsageError(what + " not found: " + path);
}

std::string file_sha(const fs::path& p) { return sha256_hex(read_file(p)); }

std::string config_hash(const std::map<std::string, std::string>& config) {
    std::string canonical;
    for (const auto& [k, v] : config) canonical += k + "=" + v + "\n";
    return sha256_hex(canonical);
}

/// Records what produced a set of outputs so an unchanged rerun can be skipped.
class Provenance {
public:
    Provenance(std::string command, std::map<std::string, std::string> config)
        : command_(std::move(command)), config_(std::move(config)) {}

    void input(const std::string& role, const fs::path& path) {
        inputs_[role] = Json{{"path", path.string()}, {"sha256", file_sha(path)}};
    }

    std::string hash() const { return config_hash(config_); }

    bool up_to_date(const fs::path& manifest, const std::vector<fs::path>& outputs) const {
        if (!fs::exists(manifest)) return false;
        Json m;
        try {
            m = Json::parse(read_file(manifest));
        } catch (const Json::exception&) {
            return false;
        }
        if (m.value("command", "") != command_ || m.value("config_hash", "") != hash() ||
            m.value("inputs", Json::object()) != inputs_) {
            return false;
        }
        const Json recorded = m.value("outputs", Json::object());
        for (const auto& o : outputs) {
            if (!fs::exists(o) || !recorded.contains(o.string()) || recorded[o.string()] != file_sha(o)) return false;
        }
        return true;
    }

    void write(const fs::path& manifest, const std::vector<fs::path>& outputs) const {
        Json outs = Json::object();
        for (const auto& o : outputs) outs[o.string()] = file_sha(o);
        Json cfg = Json::object();
        for (const auto& [k, v] : config_) cfg[k] = v;
        Json m{{"command", command_}, {"config", std::move(cfg)}, {"config_hash", hash()},
               {"inputs", inputs_},   {"outputs", std::move(outs)}};
        AtomicFileWriter w(manifest);
        w.stream() << m.dump(2) << '\n';
        w.commit();
    }

private:
    std::string command_;
    std::map<std::string, std::string> config_;
    Json inputs_ = Json::object();
};

fs::path manifest_for(const fs::path& output) { return output.string() + ".manifest.json"; }

std::unique_ptr<PosTagger> tagger_from(const Settings& s, Provenance* prov) {
    const auto& spec = s.get("tagger");
    if (spec.rfind("perceptron:", 0) == 0) {
        const std::string path = spec.substr(std::string("perceptron:").size());
        require_file(path, "tagger model");
        if (prov) prov->input("tagger", path);
    }
    return make_tagger(spec);
}

std::vector<std::size_t> parse_list(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(parse_uint(item, what));
    }
    if (out.empty()) throw UsageError(what + " must list at least one value");
    return out;
}

/// Predictor sources for inference commands: a checkpoint, a vector store, or both.
struct Predictors {
    std::optional<MicroImportanceModel> model;
    std::optional<VectorStore> store;
    std::unique_ptr<VectorLookup> lookup;

    void load(const std::string& model_path, const std::string& vectors_path, Provenance& prov) {
        if (model_path.empty() && vectors_path.empty()) throw UsageError("one of --model or --vectors is required");
        if (!model_path.empty()) {
            require_file(model_path, "model checkpoint");
            prov.input("model", model_path);
            model = MicroImportanceModel::load(model_path);
        }
        if (!vectors_path.empty()) {
            require_file(vectors_path, "vector store");
            prov.input("vectors", vectors_path);
            store = load_vectors(vectors_path);
        }
        lookup = std::make_unique<VectorLookup>(store ? &*store : nullptr, model ? &*model : nullptr);
    }
};

void check_model_vocab(const Predictors& p, const Vocabulary& vocab) {
    if (p.model && p.model->vocab_size() != vocab.size()) {
        throw DataError("model vocabulary size " + std::to_string(p.model->vocab_size()) +
                        " does not match index vocabulary size " + std::to_string(vocab.size()));
    }
}

/// Options shared by every command.
struct Common {
    std::optional<std::string> config;
    std::map<std::string, std::string> overrides;
    bool force = false;
};

void add_override(CLI::App* app, Common& common, const std::string& flag, const std::string& key,
                  const std::string& help) {
    app->add_option_function<std::string>(
        flag, [&common, key](const std::string& v) { common.overrides[key] = v; }, help);
}

struct Args {
    std::string corpus, vocab, out, index, model, vectors, input, triplets, docs, docs_out, log;
    std::string queries, citations, titles, data, pred, gold, qrels, query_kp, doc_kp;
    std::string expansion = "NONE";
    std::string neighbors_list = "10,100";
    std::vector<std::string> exclude;
    std::size_t cap = 4, per_paper = 1, depth = 1000, repetitions = 3, limit = 0;
    int iterations = 8;
    bool random_negatives = false;
};

int cmd_build_vocab(const Args& a, const Settings& s, bool force, std::ostream& out, std::ostream& err) {
    require_file(a.corpus, "corpus");
    if (a.out.empty()) throw UsageError("missing required --out");
    Provenance prov("build-vocab", s.subset({"min_freq", "max_vocab"}));
    prov.input("corpus", a.corpus);
    const fs::path manifest = manifest_for(a.out);
    if (!force && prov.up_to_date(manifest, {a.out})) {
        out << "up to date\n";
        return kExitOk;
    }
    const auto docs = load_corpus(a.corpus);
    VocabularyBuilder builder;
    for (const auto& d : docs) builder.add_document(index_words(d));
    const auto vocab = builder.finish(s.count("min_freq"), s.count("max_vocab"));
    vocab.save(a.out);
    prov.write(manifest, {a.out});
    err << "vocabulary: " << vocab.size() << " terms from " << docs.size() << " documents\n";
    out << Json{{"vocab", a.out}, {"size", vocab.size()}, {"config_hash", prov.hash()}}.dump() << '\n';
    return kExitOk;
}

int cmd_build_index(const Args& a, const Settings& s, bool force, std::ostream& out, std::ostream& err) {
    require_file(a.corpus, "corpus");
    require_file(a.vocab, "vocabulary");
    if (a.out.empty()) throw UsageError("missing required --out");
    Provenance prov("build-index", s.subset({"k1", "b"}));
    prov.input("corpus", a.corpus);
    prov.input("vocab", a.vocab);
    const fs::path dir = a.out;
    const std::vector<fs::path> outputs{dir / "vocab.txt", dir / "bm25.bin"};
    const fs::path manifest = dir / "bm25.provenance.json";
    if (!force && prov.up_to_date(manifest, outputs)) {
        out << "up to date\n";
        return kExitOk;
    }
    const auto docs = load_corpus(a.corpus);
    const auto vocab = Vocabulary::load(a.vocab);
    const auto bm25 = build_bm25(docs, s.index().bm25);
    fs::create_directories(dir);
    vocab.save(dir / "vocab.txt");
    bm25.save(dir / "bm25.bin");
    prov.write(manifest, outputs);
    err << "bm25: " << bm25.doc_count() << " documents, " << bm25.term_count() << " terms\n";
    out << Json{{"index", dir.string()}, {"documents", bm25.doc_count()}, {"config_hash", prov.hash()}}.dump()
        << '\n';
    return kExitOk;
}

int cmd_precompute(const Args& a, const Settings& s, bool force, std::ostream& out, std::ostream& err) {
    require_file(a.corpus, "corpus");
    require_dir(a.index, "index directory");
    const fs::path dir = a.index;
    require_file((dir / "bm25.bin").string(), "BM25 index (run build-index first)");
    require_file((dir / "vocab.txt").string(), "index vocabulary");
    const auto config = s.index();
    Provenance prov("precompute", {{"index", config.canonical()}, {"tagger", s.get("tagger")}});
    prov.input("corpus", a.corpus);
    prov.input("bm25", dir / "bm25.bin");
    prov.input("vocab", dir / "vocab.txt");
    Predictors predictors;
    predictors.load(a.model, a.vectors, prov);
    auto tagger = tagger_from(s, &prov);
    const std::vector<fs::path> outputs{dir / "entries.jsonl", dir / "glossary.tsv", dir / "manifest.json"};
    const fs::path manifest = dir / "precompute.provenance.json";
    if (!force && prov.up_to_date(manifest, outputs)) {
        out << "up to date\n";
        return kExitOk;
    }
    const auto docs = load_corpus(a.corpus);
    CorpusIndex index;
    index.vocab = Vocabulary::load(dir / "vocab.txt");
    index.bm25 = Bm25Index::load(dir / "bm25.bin");
    check_model_vocab(predictors, index.vocab);
    if (index.bm25.doc_count() != docs.size()) throw DataError("corpus does not match the BM25 index");
    for (std::uint32_t i = 0; i < docs.size(); ++i) {
        if (index.bm25.doc_id(i) != docs[i].id) throw DataError("corpus does not match the BM25 index");
    }
    index.config = config;
    index.config.bm25 = index.bm25.params();
    index.entries = precompute_entries(docs, *predictors.lookup, *tagger, index.vocab, config.precompute);
    index.glossary = build_glossary(index.entries, config.glossary_min_support);
    apply_glossary(index.entries, index.glossary);
    index.save(dir);
    prov.write(manifest, outputs);
    err << "precomputed " << index.entries.size() << " entries; glossary " << index.glossary.size() << " phrases\n";
    out << Json{{"index", dir.string()},
                {"entries", index.entries.size()},
                {"glossary", index.glossary.size()},
                {"config_hash", sha256_hex(index.config.canonical())}}
               .dump()
        << '\n';
    return kExitOk;
}

int cmd_embed(const Args& a, const Settings& s, bool force, std::ostream& out, std::ostream& err) {
    require_file(a.corpus, "corpus");
    require_file(a.vocab, "vocabulary");
    require_file(a.model, "model checkpoint");
    if (a.out.empty()) throw UsageError("missing required --out");
    Provenance prov("embed", {});
    prov.input("corpus", a.corpus);
    prov.input("vocab", a.vocab);
    prov.input("model", a.model);
    const fs::path manifest = manifest_for(a.out);
    if (!force && prov.up_to_date(manifest, {a.out})) {
        out << "up to date\n";
        return kExitOk;
    }
    const auto docs = load_corpus(a.corpus);
    const auto vocab = Vocabulary::load(a.vocab);
    const auto model = MicroImportanceModel::load(a.model);
    if (model.vocab_size() != vocab.size()) throw DataError("model and vocabulary sizes differ");
    std::vector<SparseTermVector> vectors(docs.size());
    std::size_t empty = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto ids = vocab.to_term_ids(index_words(docs[i]));
        if (ids.empty()) {
            ++empty;
            vectors[i] = SparseTermVector::from_entries(docs[i].id, {});
        } else {
            vectors[i] = model.predict(ids);
            vectors[i].set_owner(docs[i].id);
        }
    }
    (void)s;
    VectorStore store;
    for (std::size_t i = 0; i < docs.size(); ++i) store.emplace(docs[i].id, std::move(vectors[i]));
    save_vectors(store, a.out);
    prov.write(manifest, {a.out});
    if (empty > 0) err << "note: " << empty << " documents without words got empty vectors\n";
    out << Json{{"vectors", a.out}, {"documents", store.size()}}.dump() << '\n';
    return kExitOk;
}

template <typename Record, typename Parse>
std::vector<Record> load_records(const std::string& path, Parse parse) {
    std::vector<Record> out;
    for_each_json_line(path, [&](const Json& r, std::size_t line) {
        try {
            out.push_back(parse(r));
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(line) + ": " + e.what());
        } catch (const Json::exception& e) {
            throw DataError(path + ":" + std::to_string(line) + ": " + e.what());
        }
    });
    return out;
}

int cmd_build_triplets(const Args& a, const Settings& s, bool force, std::ostream& out, std::ostream& err) {
    if (a.queries.empty() && a.citations.empty() && a.titles.empty()) {
        throw UsageError("give at least one of --queries, --citations, --titles");
    }
    if (a.out.empty() || a.docs_out.empty()) throw UsageError("missing required --out or --docs-out");
    std::set<RefType> excluded;
    for (const auto& e : a.exclude) excluded.insert(parse_ref_type(e));
    std::string excluded_names;
    for (auto t : excluded) excluded_names += (excluded_names.empty() ? "" : ",") + to_string(t);
    Provenance prov("build-triplets", {{"cap", std::to_string(a.cap)},
                                       {"per_paper", std::to_string(a.per_paper)},
                                       {"exclude", excluded_names},
                                       {"random_negatives", a.random_negatives ? s.get("seed") : "off"}});
    for (const auto& [role, path] : {std::pair{"queries", a.queries}, {"citations", a.citations}, {"titles", a.titles}}) {
        if (!path.empty()) {
            require_file(path, role);
            prov.input(role, path);
        }
    }
    const std::vector<fs::path> outputs{a.out, a.docs_out};
    if (!force && prov.up_to_date(manifest_for(a.out), outputs)) {
        out << "up to date\n";
        return kExitOk;
    }
    NegativeSelection sel;
    if (a.random_negatives) sel.random_seed = s.count("seed");
    std::vector<ReferenceTriplet> all;
    BuildStats stats;
    auto append = [&](std::vector<ReferenceTriplet> t) {
        for (auto& x : t) all.push_back(std::move(x));
    };
    if (!a.queries.empty()) {
        append(triplets_from_query_relevance(load_records<QueryRecord>(a.queries, query_record_from_json), a.cap,
                                             &stats, sel));
    }
    if (!a.citations.empty()) {
        append(triplets_from_citations(load_records<CitingPaper>(a.citations, citing_paper_from_json), &stats, sel));
    }
    if (!a.titles.empty()) {
        append(triplets_from_titles(load_records<TitledPaper>(a.titles, titled_paper_from_json), a.per_paper, &stats,
                                    sel));
    }
    all = filter_by_type(std::move(all), excluded);
    save_triplets(all, a.out, a.docs_out);
    prov.write(manifest_for(a.out), outputs);
    Json counts = Json::object();
    for (const auto& [t, n] : count_by_type(all)) counts[to_string(t)] = n;
    err << "triplets: " << all.size() << " emitted, " << stats.skipped << " skipped\n";
    out << Json{{"triplets", all.size()}, {"skipped", stats.skipped}, {"by_type", counts}}.dump() << '\n';
    return kExitOk;
}

int cmd_train(const Args& a, const Settings& s, bool force, std::ostream& out, std::ostream& err) {
    require_file(a.triplets, "triplet file");
    require_file(a.docs, "triplet document store");
    require_file(a.vocab, "vocabulary");
    if (a.out.empty()) throw UsageError("missing required --out");
    const auto config = s.training();
    Provenance prov("train", config.to_key_values());
    prov.input("triplets", a.triplets);
    prov.input("docs", a.docs);
    prov.input("vocab", a.vocab);
    const fs::path log_path = a.log.empty() ? fs::path(a.out + ".loss.tsv") : fs::path(a.log);
    const std::vector<fs::path> outputs{a.out, log_path};
    if (!force && prov.up_to_date(manifest_for(a.out), outputs)) {
        out << "up to date\n";
        return kExitOk;
    }
    const auto vocab = Vocabulary::load(a.vocab);
    const auto triplets = load_triplets(a.triplets, a.docs);
    std::vector<EncodedTriplet> data;
    std::size_t dropped = 0;
    for (const auto& t : triplets) {
        EncodedTriplet e{vocab.to_term_ids(split_words(t.reference)), vocab.to_term_ids(index_words(t.positive)),
                         vocab.to_term_ids(index_words(t.negative))};
        if (e.reference.empty() || e.positive.empty() || e.negative.empty()) {
            ++dropped;
            continue;
        }
        data.push_back(std::move(e));
    }
    auto model = MicroImportanceModel::random(vocab.size(), config.dim, config.seed, config.init_scale);
    const auto log = train(model, data, config);
    model.save(a.out);
    {
        AtomicFileWriter w(log_path);
        w.stream() << "step\ttotal\trank\tquery_reg\tdoc_reg\n";
        for (const auto& e : log) {
            w.stream() << e.step << '\t' << format_double(e.loss.total) << '\t' << format_double(e.loss.rank_loss)
                       << '\t' << format_double(e.loss.query_reg) << '\t' << format_double(e.loss.doc_reg) << '\n';
        }
        w.commit();
    }
    prov.write(manifest_for(a.out), outputs);
    if (dropped > 0) err << "note: dropped " << dropped << " triplets with an empty side\n";
    Json summary{{"model", a.out}, {"triplets", data.size()}, {"steps", log.size()}, {"config_hash", prov.hash()}};
    if (!log.empty()) {
        summary["loss_first"] = log.front().loss.total;
        summary["loss_last"] = log.back().loss.total;
        err << "loss " << log.front().loss.total << " -> " << log.back().loss.total << " over " << log.size()
            << " steps\n";
    }
    out << summary.dump() << '\n';
    return kExitOk;
}

int cmd_train_tagger(const Args& a, const Settings& s, bool force, std::ostream& out, std::ostream& err) {
    require_file(a.data, "tagged training data");
    if (a.out.empty()) throw UsageError("missing required --out");
    if (a.iterations < 1) throw UsageError("--iterations must be >= 1");
    Provenance prov("train-tagger", {{"iterations", std::to_string(a.iterations)}, {"seed", s.get("seed")}});
    prov.input("data", a.data);
    if (!force && prov.up_to_date(manifest_for(a.out), {a.out})) {
        out << "up to date\n";
        return kExitOk;
    }
    const auto sentences = load_tagged_sentences(a.data);
    PerceptronTagger tagger;
    PerceptronTagger::TrainOptions opts;
    opts.iterations = a.iterations;
    opts.seed = s.count("seed");
    tagger.train(sentences, opts);
    tagger.save(a.out);
    prov.write(manifest_for(a.out), {a.out});
    err << "tagger trained on " << sentences.size() << " sentences\n";
    out << Json{{"tagger", a.out}, {"sentences", sentences.size()}}.dump() << '\n';
    return kExitOk;
}

int cmd_generate(const Args& a, Settings s, bool extract, bool force, std::ostream& out, std::ostream& err) {
    require_dir(a.index, "index directory");
    require_file(a.input, "input documents");
    if (a.out.empty()) throw UsageError("missing required --out");
    if (extract) {
        s.set("alpha", "1");
        s.set("beta", "1");
    }
    const auto config = s.pipeline();
    auto kv = config.to_key_values();
    kv["tagger"] = s.get("tagger");
    Provenance prov(extract ? "extract" : "generate", kv);
    prov.input("input", a.input);
    prov.input("index", fs::path(a.index) / "manifest.json");
    prov.input("entries", fs::path(a.index) / "entries.jsonl");
    Predictors predictors;
    predictors.load(a.model, a.vectors, prov);
    auto tagger = tagger_from(s, &prov);
    if (!force && prov.up_to_date(manifest_for(a.out), {a.out})) {
        out << "up to date\n";
        return kExitOk;
    }
    const auto index = CorpusIndex::load(a.index);
    check_model_vocab(predictors, index.vocab);
    const auto docs = load_corpus(a.input);
    const KeyphraseGenerator generator(index, *predictors.lookup, *tagger);
    const auto results = generator.generate_all(docs, config, s.threads());
    AtomicFileWriter w(a.out);
    for (const auto& r : results) {
        Json j = result_to_json(r);
        if (extract) j.erase("absent");
        w.stream() << j.dump() << '\n';
    }
    w.commit();
    prov.write(manifest_for(a.out), {a.out});
    err << (extract ? "extracted" : "generated") << " keyphrases for " << results.size() << " documents\n";
    out << Json{{"output", a.out}, {"documents", results.size()}, {"config_hash", prov.hash()}}.dump() << '\n';
    return kExitOk;
}

int cmd_eval_kp(const Args& a, std::ostream& out, std::ostream& err) {
    require_file(a.pred, "prediction file");
    if (a.gold.empty() && a.corpus.empty()) throw UsageError("give --gold or a --corpus carrying gold keyphrases");
    std::vector<Document> docs;
    if (!a.corpus.empty()) {
        require_file(a.corpus, "corpus");
        docs = load_corpus(a.corpus);
    }
    std::map<std::string, GoldKeyphrases> gold;
    if (!a.gold.empty()) {
        require_file(a.gold, "gold file");
        gold = load_gold(a.gold, docs);
    } else {
        gold = gold_from_documents(docs);
    }
    const auto result = evaluate_keyphrases(load_predictions(a.pred), gold);
    out << to_json(result).dump() << '\n';
    err << to_table(result);
    return kExitOk;
}

KeyphraseMap keyphrases_from(const std::string& path) {
    KeyphraseMap m;
    for (auto& [id, p] : load_predictions(path)) {
        auto& list = m[id];
        list = std::move(p.present);
        list.insert(list.end(), p.absent.begin(), p.absent.end());
    }
    return m;
}

int cmd_eval_retrieval(const Args& a, const Settings& s, std::ostream& out, std::ostream& err) {
    require_file(a.corpus, "corpus");
    require_file(a.queries, "query file");
    require_file(a.qrels, "qrels file");
    RetrievalEvalOptions opts;
    opts.expansion = parse_expansion(a.expansion);
    opts.bm25 = s.index().bm25;
    opts.depth = a.depth;
    opts.threads = s.threads();
    KeyphraseMap qkp, dkp;
    if (opts.expansion == Expansion::Query || opts.expansion == Expansion::Both) {
        require_file(a.query_kp, "--query-kp keyphrase file");
        qkp = keyphrases_from(a.query_kp);
    }
    if (opts.expansion == Expansion::Doc || opts.expansion == Expansion::Both) {
        require_file(a.doc_kp, "--doc-kp keyphrase file");
        dkp = keyphrases_from(a.doc_kp);
    }
    const auto docs = load_corpus(a.corpus);
    const auto queries = load_queries(a.queries);
    const auto result = eval_retrieval(docs, queries, load_qrels(a.qrels), qkp, dkp, opts);
    out << to_json(result).dump() << '\n';
    err << to_table(result);
    return kExitOk;
}

int cmd_bench(const Args& a, const Settings& s, std::ostream& out, std::ostream& err) {
    require_dir(a.index, "index directory");
    require_file(a.input, "input documents");
    if (a.repetitions == 0) throw UsageError("--repetitions must be >= 1");
    const auto settings = parse_list(a.neighbors_list, "--neighbors-list");
    const auto config = s.pipeline();
    Provenance prov("bench", {});
    Predictors predictors;
    predictors.load(a.model, a.vectors, prov);
    auto tagger = tagger_from(s, nullptr);
    const auto index = CorpusIndex::load(a.index);
    check_model_vocab(predictors, index.vocab);
    auto docs = load_corpus(a.input);
    if (a.limit > 0 && docs.size() > a.limit) docs.resize(a.limit);
    const KeyphraseGenerator generator(index, *predictors.lookup, *tagger);
    const auto results = bench_throughput(generator, docs, config, settings, a.repetitions);
    out << to_json(results, config).dump() << '\n';
    err << to_table(results);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Unsupervised keyphrase generation toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    Common common;
    Args a;

    auto wire_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config, "Config file of key = value lines (default: $KPGEN_CONFIG)");
        add_override(sub, common, "--seed", "seed", "Seed for every random choice");
        add_override(sub, common, "--threads", "threads", "Worker threads (output order is input order)");
        add_override(sub, common, "--tagger", "tagger", "rules | perceptron:<model.json>");
        sub->add_flag("--force", common.force, "Rebuild even when outputs are up to date");
    };
    auto wire_pipeline = [&](CLI::App* sub) {
        add_override(sub, common, "--alpha", "alpha", "Informativeness interpolation weight");
        add_override(sub, common, "--beta", "beta", "Phraseness interpolation weight");
        add_override(sub, common, "--gamma", "gamma", "Length penalty");
        add_override(sub, common, "--lambda", "lambda", "Phraseness exponent");
        add_override(sub, common, "--neighbors", "neighbors", "Neighborhood size");
        add_override(sub, common, "--candidate-cap", "candidate_cap", "Neighbor candidates kept");
        add_override(sub, common, "--per-neighbor-cap", "per_neighbor_cap", "Candidates taken per neighbor");
        add_override(sub, common, "--top-k", "top_k", "Output list length");
    };
    auto wire_bm25 = [&](CLI::App* sub) {
        add_override(sub, common, "--k1", "k1", "BM25 k1");
        add_override(sub, common, "--b", "b", "BM25 b");
    };
    auto wire_predictor = [&](CLI::App* sub) {
        sub->add_option("--model", a.model, "Model checkpoint");
        sub->add_option("--vectors", a.vectors, "Precomputed document vectors");
    };

    auto* build_vocab = app.add_subcommand("build-vocab", "Build the term vocabulary from a corpus");
    wire_common(build_vocab);
    build_vocab->add_option("--corpus", a.corpus, "Corpus JSON-lines");
    build_vocab->add_option("--out", a.out, "Vocabulary file");
    add_override(build_vocab, common, "--min-freq", "min_freq", "Minimum document frequency count");
    add_override(build_vocab, common, "--max-size", "max_vocab", "Maximum vocabulary size, OOV included");

    auto* build_index = app.add_subcommand("build-index", "Build the BM25 index of the background corpus");
    wire_common(build_index);
    wire_bm25(build_index);
    build_index->add_option("--corpus", a.corpus, "Corpus JSON-lines");
    build_index->add_option("--vocab", a.vocab, "Vocabulary file");
    build_index->add_option("--out", a.out, "Index directory");

    auto* precompute = app.add_subcommand("precompute", "Precompute vectors, top candidates and the glossary");
    wire_common(precompute);
    wire_predictor(precompute);
    precompute->add_option("--corpus", a.corpus, "Corpus JSON-lines (same order as build-index)");
    precompute->add_option("--index", a.index, "Index directory");
    add_override(precompute, common, "--gamma", "gamma", "Length penalty");
    add_override(precompute, common, "--top-n", "top_n", "Candidates kept per document");
    add_override(precompute, common, "--min-support", "min_support", "Glossary support threshold");

    auto* embed = app.add_subcommand("embed", "Predict and store document term vectors");
    wire_common(embed);
    embed->add_option("--corpus", a.corpus, "Corpus JSON-lines");
    embed->add_option("--vocab", a.vocab, "Vocabulary file");
    embed->add_option("--model", a.model, "Model checkpoint");
    embed->add_option("--out", a.out, "Vector store");

    auto* build_triplets = app.add_subcommand("build-triplets", "Build reference triplets for training");
    wire_common(build_triplets);
    build_triplets->add_option("--queries", a.queries, "Query relevance records");
    build_triplets->add_option("--citations", a.citations, "Citing-paper records");
    build_triplets->add_option("--titles", a.titles, "Titled-paper records");
    build_triplets->add_option("--out", a.out, "Triplet file");
    build_triplets->add_option("--docs-out", a.docs_out, "Document store for the triplets");
    build_triplets->add_option("--cap", a.cap, "Triplets per query");
    build_triplets->add_option("--per-paper", a.per_paper, "Title triplets per paper");
    build_triplets->add_option("--exclude", a.exclude, "Reference types to drop (query, citation, title)");
    build_triplets->add_flag("--random-negatives", a.random_negatives, "Sample negatives with --seed");

    auto* train_cmd = app.add_subcommand("train", "Train the term importance model");
    wire_common(train_cmd);
    train_cmd->add_option("--triplets", a.triplets, "Triplet file");
    train_cmd->add_option("--docs", a.docs, "Triplet document store");
    train_cmd->add_option("--vocab", a.vocab, "Vocabulary file");
    train_cmd->add_option("--out", a.out, "Model checkpoint");
    train_cmd->add_option("--log", a.log, "Loss curve (default <out>.loss.tsv)");
    for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
             {"--lr", "lr"}, {"--batch", "batch"}, {"--steps", "steps"}, {"--lambda-q", "lambda_q"},
             {"--lambda-d", "lambda_d"}, {"--dim", "d"}, {"--momentum", "momentum"},
             {"--init-scale", "init_scale"}}) {
        add_override(train_cmd, common, flag, key, "Training setting '" + key + "'");
    }

    auto* train_tagger = app.add_subcommand("train-tagger", "Train the averaged perceptron tagger");
    wire_common(train_tagger);
    train_tagger->add_option("--data", a.data, "Tagged sentences JSON-lines");
    train_tagger->add_option("--out", a.out, "Tagger model");
    train_tagger->add_option("--iterations", a.iterations, "Training epochs");

    CLI::App* gen_cmds[2];
    for (int i = 0; i < 2; ++i) {
        auto* sub = app.add_subcommand(i == 0 ? "generate" : "extract",
                                       i == 0 ? "Generate present and absent keyphrases"
                                              : "Extract present keyphrases only (alpha = beta = 1)");
        wire_common(sub);
        wire_pipeline(sub);
        wire_predictor(sub);
        sub->add_option("--index", a.index, "Index directory");
        sub->add_option("--input", a.input, "Documents JSON-lines");
        sub->add_option("--out", a.out, "Keyphrase output JSON-lines");
        gen_cmds[i] = sub;
    }

    auto* eval_kp = app.add_subcommand("eval-kp", "Score keyphrases against gold");
    wire_common(eval_kp);
    eval_kp->add_option("--pred", a.pred, "Keyphrase output JSON-lines");
    eval_kp->add_option("--gold", a.gold, "Gold keyphrases JSON-lines");
    eval_kp->add_option("--corpus", a.corpus, "Corpus with gold fields, or for splitting 'keyphrases' lists");

    auto* eval_ret = app.add_subcommand("eval-retrieval", "BM25 R@depth with keyphrase expansion");
    wire_common(eval_ret);
    wire_bm25(eval_ret);
    eval_ret->add_option("--corpus", a.corpus, "Retrieval corpus");
    eval_ret->add_option("--queries", a.queries, "Queries JSON-lines {id, text}");
    eval_ret->add_option("--qrels", a.qrels, "TREC qrels");
    eval_ret->add_option("--expansion", a.expansion, "NONE | QUERY | DOC | BOTH");
    eval_ret->add_option("--query-kp", a.query_kp, "Keyphrases for queries");
    eval_ret->add_option("--doc-kp", a.doc_kp, "Keyphrases for documents");
    eval_ret->add_option("--depth", a.depth, "Ranking depth");

    auto* bench = app.add_subcommand("bench", "Throughput of keyphrase generation");
    wire_common(bench);
    wire_pipeline(bench);
    wire_predictor(bench);
    bench->add_option("--index", a.index, "Index directory");
    bench->add_option("--input", a.input, "Documents JSON-lines");
    bench->add_option("--neighbors-list", a.neighbors_list, "Comma-separated neighborhood sizes");
    bench->add_option("--repetitions", a.repetitions, "Timed passes per setting");
    bench->add_option("--limit", a.limit, "Use only the first N documents");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        Settings s;
        s.load(common.config, common.overrides);
        if (build_vocab->parsed()) return cmd_build_vocab(a, s, common.force, out, err);
        if (build_index->parsed()) return cmd_build_index(a, s, common.force, out, err);
        if (precompute->parsed()) return cmd_precompute(a, s, common.force, out, err);
        if (embed->parsed()) return cmd_embed(a, s, common.force, out, err);
        if (build_triplets->parsed()) return cmd_build_triplets(a, s, common.force, out, err);
        if (train_cmd->parsed()) return cmd_train(a, s, common.force, out, err);
        if (train_tagger->parsed()) return cmd_train_tagger(a, s, common.force, out, err);
        if (gen_cmds[0]->parsed()) return cmd_generate(a, s, false, common.force, out, err);
        if (gen_cmds[1]->parsed()) return cmd_generate(a, s, true, common.force, out, err);
        if (eval_kp->parsed()) return cmd_eval_kp(a, out, err);
        if (eval_ret->parsed()) return cmd_eval_retrieval(a, s, out, err);
        if (bench->parsed()) return cmd_bench(a, s, out, err);
        err << "usage error: no command\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

}  // namespace kpgen::cli
