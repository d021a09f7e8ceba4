#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "kpgen/cli.hpp"
#include "kpgen/corpus_index.hpp"
#include "kpgen/datasets.hpp"
#include "kpgen/evaluation.hpp"
#include "kpgen/io.hpp"
#include "support.hpp"

using namespace kpgen;
using kpgen::testing::fixture;
using kpgen::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

Json last_json(const std::string& out) {
    std::istringstream in(out);
    std::string line, last;
    while (std::getline(in, line)) {
        if (!line.empty()) last = line;
    }
    return Json::parse(last);
}

std::vector<Json> json_lines(const fs::path& p) {
    std::vector<Json> out;
    for_each_json_line(p, [&](const Json& j, std::size_t) { out.push_back(j); });
    return out;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    f << text;
}

// Title/abstract triplets over the toy corpus: the title is the reference,
// the own abstract the positive, a document from another theme the negative.
void write_triplets(const fs::path& triplets, const fs::path& docs) {
    const auto corpus = load_corpus(fixture("toy_corpus.jsonl"));
    std::vector<ReferenceTriplet> ts;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        Document pos = corpus[i];
        pos.id += "#abstract";
        pos.title.clear();
        ts.push_back({corpus[i].title, pos, corpus[(i + 5) % corpus.size()], RefType::Title});
    }
    save_triplets(ts, triplets, docs);
}

/// Vocabulary, a small trained model and a full index over the toy corpus.
struct Workspace {
    TempDir dir{"cli"};
    std::string corpus = fixture("toy_corpus.jsonl").string();
    std::string vocab, model, index;

    Workspace() {
        vocab = (dir / "vocab.txt").string();
        model = (dir / "model.bin").string();
        index = (dir / "index").string();
        write_triplets(dir / "t.jsonl", dir / "d.jsonl");
        REQUIRE(run({"build-vocab", "--corpus", corpus, "--out", vocab, "--min-freq", "1"}).code == 0);
        REQUIRE(run({"train", "--triplets", (dir / "t.jsonl").string(), "--docs", (dir / "d.jsonl").string(), "--vocab",
                     vocab, "--out", model, "--steps", "40", "--batch", "8", "--dim", "8", "--seed", "3"})
                    .code == 0);
        REQUIRE(run({"build-index", "--corpus", corpus, "--vocab", vocab, "--out", index}).code == 0);
        REQUIRE(run({"precompute", "--corpus", corpus, "--index", index, "--model", model}).code == 0);
    }

    Outcome generate(const std::string& out, std::vector<std::string> extra = {}, const std::string& cmd = "generate") {
        std::vector<std::string> args{cmd, "--index", index, "--model", model, "--input", corpus, "--out", out};
        args.insert(args.end(), extra.begin(), extra.end());
        return run(args);
    }
};

class ScopedEnv {
public:
    ScopedEnv(const char* name, const std::string& value) : name_(name) { ::setenv(name, value.c_str(), 1); }
    ~ScopedEnv() { ::unsetenv(name_); }

private:
    const char* name_;
};

}  // namespace

TEST_CASE("end-to-end flow produces keyphrases for every document") {
    Workspace w;
    const auto out = (w.dir / "kp.jsonl").string();
    const auto r = w.generate(out);
    REQUIRE(r.code == 0);
    CHECK(last_json(r.out).at("documents") == 20);
    const auto lines = json_lines(out);
    REQUIRE(lines.size() == 20);
    CHECK(lines[0].at("id") == "ice01");
    std::size_t with_present = 0;
    for (const auto& l : lines) {
        CHECK(l.contains("absent"));
        with_present += l.at("present").empty() ? 0 : 1;
    }
    CHECK(with_present == 20);
    CHECK(fs::exists(w.index + "/manifest.json"));
    CHECK(fs::exists(w.index + "/glossary.tsv"));
}

TEST_CASE("unchanged reruns are skipped and --force rebuilds") {
    Workspace w;
    const auto index_args = std::vector<std::string>{"build-index", "--corpus", w.corpus, "--vocab", w.vocab, "--out", w.index};
    const auto before = fs::last_write_time(w.index + "/bm25.bin");
    auto again = run(index_args);
    CHECK(again.code == 0);
    CHECK(again.out == "up to date\n");
    CHECK(fs::last_write_time(w.index + "/bm25.bin") == before);

    auto pre = run({"precompute", "--corpus", w.corpus, "--index", w.index, "--model", w.model});
    CHECK(pre.out == "up to date\n");

    auto forced = run({"build-index", "--corpus", w.corpus, "--vocab", w.vocab, "--out", w.index, "--force"});
    CHECK(forced.code == 0);
    CHECK(forced.out != "up to date\n");

    // A changed setting invalidates the record.
    auto changed = run({"build-index", "--corpus", w.corpus, "--vocab", w.vocab, "--out", w.index, "--k1", "1.2"});
    CHECK(changed.out != "up to date\n");
}

TEST_CASE("config hash in manifests is stable across runs") {
    Workspace a;
    Workspace b;
    const auto ma = Json::parse(read_file(a.index + "/bm25.provenance.json"));
    const auto mb = Json::parse(read_file(b.index + "/bm25.provenance.json"));
    CHECK(ma.at("config_hash") == mb.at("config_hash"));
    CHECK(ma.at("inputs").at("corpus").at("sha256") == mb.at("inputs").at("corpus").at("sha256"));
    CHECK(read_file(a.index + "/entries.jsonl") == read_file(b.index + "/entries.jsonl"));
    CHECK(Json::parse(read_file(a.index + "/manifest.json")) == Json::parse(read_file(b.index + "/manifest.json")));
}

TEST_CASE("train with a fixed seed writes identical checkpoints") {
    TempDir dir("cli-train");
    write_triplets(dir / "t.jsonl", dir / "d.jsonl");
    const auto vocab = (dir / "v.txt").string();
    REQUIRE(run({"build-vocab", "--corpus", fixture("toy_corpus.jsonl").string(), "--out", vocab, "--min-freq", "1"}).code ==
            0);
    auto train = [&](const std::string& name, const std::string& seed) {
        return run({"train", "--triplets", (dir / "t.jsonl").string(), "--docs", (dir / "d.jsonl").string(), "--vocab",
                    vocab, "--out", (dir / name).string(), "--steps", "60", "--batch", "8", "--dim", "8", "--lr", "0.05",
                    "--seed", seed});
    };
    const auto r1 = train("m1.bin", "9");
    const auto r2 = train("m2.bin", "9");
    const auto r3 = train("m3.bin", "10");
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    REQUIRE(r3.code == 0);
    CHECK(read_file(dir / "m1.bin") == read_file(dir / "m2.bin"));
    CHECK(read_file(dir / "m1.bin") != read_file(dir / "m3.bin"));
    CHECK(read_file(dir / "m1.bin.loss.tsv") == read_file(dir / "m2.bin.loss.tsv"));
    const auto summary = last_json(r1.out);
    CHECK(summary.at("steps") == 60);
    CHECK(summary.at("loss_first").get<double>() > summary.at("loss_last").get<double>());
}

TEST_CASE("extract emits present lists only and matches the no-neighbor run") {
    Workspace w;
    const auto ext = (w.dir / "ext.jsonl").string();
    const auto gen = (w.dir / "gen.jsonl").string();
    REQUIRE(w.generate(ext, {}, "extract").code == 0);
    REQUIRE(w.generate(gen, {"--neighbors", "0", "--alpha", "1", "--beta", "1"}).code == 0);
    const auto e = json_lines(ext);
    const auto g = json_lines(gen);
    REQUIRE(e.size() == g.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        CHECK_FALSE(e[i].contains("absent"));
        CHECK(g[i].at("absent").empty());
        CHECK(e[i].at("present") == g[i].at("present"));
    }
}

TEST_CASE("--top-k caps both lists") {
    Workspace w;
    const auto out = (w.dir / "kp.jsonl").string();
    REQUIRE(w.generate(out, {"--top-k", "5"}).code == 0);
    bool full = false;
    for (const auto& l : json_lines(out)) {
        CHECK(l.at("present").size() <= 5);
        CHECK(l.at("absent").size() <= 5);
        full = full || l.at("present").size() == 5;
    }
    CHECK(full);
}

TEST_CASE("thread count does not change generate output") {
    Workspace w;
    const auto one = (w.dir / "one.jsonl").string();
    const auto four = (w.dir / "four.jsonl").string();
    REQUIRE(w.generate(one, {"--threads", "1"}).code == 0);
    REQUIRE(w.generate(four, {"--threads", "4"}).code == 0);
    CHECK(read_file(one) == read_file(four));
}

TEST_CASE("config file, environment default and flag precedence") {
    Workspace w;
    write(w.dir / "small.cfg", "# shorter lists\ntop_k = 2\n");
    write(w.dir / "bad.cfg", "top_k = 2\nneighbourz = 3\n");
    const auto out = (w.dir / "kp.jsonl").string();
    auto max_len = [&] {
        std::size_t m = 0;
        for (const auto& l : json_lines(out)) m = std::max({m, l.at("present").size(), l.at("absent").size()});
        return m;
    };
    REQUIRE(w.generate(out, {"--config", (w.dir / "small.cfg").string()}).code == 0);
    CHECK(max_len() == 2);
    {
        ScopedEnv env(cli::kConfigEnv, (w.dir / "small.cfg").string());
        REQUIRE(w.generate(out, {"--force"}).code == 0);
        CHECK(max_len() == 2);
        REQUIRE(w.generate(out, {"--top-k", "3"}).code == 0);
        CHECK(max_len() == 3);
    }
    const auto bad = w.generate(out, {"--config", (w.dir / "bad.cfg").string()});
    CHECK(bad.code == cli::kExitUsage);
    CHECK(bad.err.find("neighbourz") != std::string::npos);
    CHECK(w.generate(out, {"--config", (w.dir / "missing.cfg").string()}).code == cli::kExitUsage);
    CHECK(w.generate(out, {"--alpha", "1.5"}).code == cli::kExitUsage);
}

TEST_CASE("failures exit nonzero with one diagnostic line") {
    TempDir dir("cli-errors");
    auto one_line = [](const Outcome& r) {
        return !r.err.empty() && r.err.find('\n') == r.err.size() - 1;
    };
    write(dir / "bad.jsonl", std::string(R"({"id":"a","text":"x y"})") + "\n" + R"({"id":"b","text":"y"})" + "\n" +
                                 "{broken\n");
    const auto malformed = run({"build-vocab", "--corpus", (dir / "bad.jsonl").string(), "--out", (dir / "v").string()});
    CHECK(malformed.code == cli::kExitData);
    CHECK(malformed.err.find(":3") != std::string::npos);
    CHECK(one_line(malformed));
    CHECK_FALSE(fs::exists(dir / "v"));

    const auto missing = run({"train", "--triplets", (dir / "none.jsonl").string(), "--docs", "x", "--vocab", "y",
                              "--out", (dir / "m").string()});
    CHECK(missing.code == cli::kExitUsage);
    CHECK(one_line(missing));

    CHECK(run({}).code == cli::kExitUsage);
    CHECK(run({"frobnicate"}).code == cli::kExitUsage);
    CHECK(run({"build-vocab", "--no-such-flag"}).code == cli::kExitUsage);
    CHECK(run({"build-vocab", "--out", (dir / "v").string()}).code == cli::kExitUsage);
    CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("no temporary files are left after a failed build") {
    TempDir dir("cli-partial");
    write(dir / "c.jsonl", R"({"id":"a","text":"alpha beta"})" "\n");
    REQUIRE(run({"build-vocab", "--corpus", (dir / "c.jsonl").string(), "--out", (dir / "v.txt").string(), "--min-freq",
                 "1"})
                .code == 0);
    const auto bad = run({"build-index", "--corpus", (dir / "c.jsonl").string(), "--vocab",
                          (dir / "v.txt").string(), "--out", (dir / "idx").string(), "--k1", "-1"});
    CHECK(bad.code == cli::kExitUsage);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir.path())) files += e.is_regular_file() ? 1 : 0;
    CHECK(files == 3);  // corpus, vocabulary and its manifest
}

TEST_CASE("eval-kp reproduces hand-scored values") {
    TempDir dir("cli-eval");
    write(dir / "pred.jsonl",
          R"({"id":"d1","present":[{"phrase":"sea ice","score":3},{"phrase":"radar images","score":2},{"phrase":"ice charts","score":1}],)"
          R"("absent":[{"phrase":"remote sensing","score":1}]})"
          "\n");
    write(dir / "gold.jsonl",
          R"({"id":"d1","present":["Sea Ice","radar image","polar region","ocean"],"absent":["remote sensing","climate"]})"
          "\n"
          R"({"id":"d2","present":["x"],"absent":[]})"
          "\n");
    const auto r = run({"eval-kp", "--pred", (dir / "pred.jsonl").string(), "--gold", (dir / "gold.jsonl").string()});
    REQUIRE(r.code == 0);
    const auto j = last_json(r.out);
    // d1: 2 of 3 correct, gold 4, padded to 5 -> P 0.4, R 0.5. d2 has no prediction and scores 0.
    const double d1 = 2 * 0.4 * 0.5 / 0.9;
    CHECK(j.at("per_document").at(0).at("f1@5").get<double>() == doctest::Approx(d1).epsilon(1e-12));
    CHECK(j.at("present").at("f1@5").get<double>() == doctest::Approx(d1 / 2).epsilon(1e-12));
    CHECK(j.at("absent").at("r@5").get<double>() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(j.at("missing_predictions") == 1);
    CHECK(r.err.find("F1@5") != std::string::npos);
}

TEST_CASE("eval-retrieval without expansion equals plain BM25") {
    TempDir dir("cli-ret");
    const auto corpus = fixture("toy_corpus.jsonl").string();
    write(dir / "q.jsonl", R"({"id":"q1","text":"sea ice radar"})" "\n" R"({"id":"q2","text":"keyphrase generation"})"
                           "\n" R"({"id":"q3","text":"unjudged"})" "\n");
    write(dir / "qrels.txt", "q1 0 ice03 1\nq1 0 ir02 1\nq2 0 kp01 1\nq2 0 gn04 2\nq2 0 ice01 0\n");
    const auto r = run({"eval-retrieval", "--corpus", corpus, "--queries", (dir / "q.jsonl").string(), "--qrels",
                        (dir / "qrels.txt").string(), "--depth", "3"});
    REQUIRE(r.code == 0);
    const auto j = last_json(r.out);

    const auto docs = load_corpus(corpus);
    const auto bm25 = build_bm25(docs, {});
    const auto qrels = load_qrels(dir / "qrels.txt");
    double total = 0.0;
    std::size_t evaluated = 0;
    for (const auto& q : load_queries(dir / "q.jsonl")) {
        std::set<std::string> relevant;
        if (auto it = qrels.find(q.id); it != qrels.end()) {
            for (const auto& [doc, rel] : it->second)
                if (rel > 0) relevant.insert(doc);
        }
        if (relevant.empty()) continue;
        std::size_t found = 0;
        for (const auto& h : bm25.search(split_words(q.text), 3)) found += relevant.count(bm25.doc_id(h.doc));
        total += static_cast<double>(found) / static_cast<double>(relevant.size());
        ++evaluated;
    }
    CHECK(j.at("queries") == evaluated);
    CHECK(j.at("skipped_no_relevant") == 1);
    CHECK(j.at("recall@3").get<double>() == total / static_cast<double>(evaluated));
    CHECK(j.at("expansion") == "NONE");
    CHECK(run({"eval-retrieval", "--corpus", corpus, "--queries", (dir / "q.jsonl").string(), "--qrels",
               (dir / "qrels.txt").string(), "--expansion", "DOC"})
              .code == cli::kExitUsage);
}

TEST_CASE("bench reports throughput with the config echo") {
    Workspace w;
    const auto r = run({"bench", "--index", w.index, "--model", w.model, "--input", w.corpus, "--neighbors-list", "0,5",
                        "--repetitions", "1", "--limit", "6"});
    REQUIRE(r.code == 0);
    const auto j = last_json(r.out);
    CHECK(j.dump().find("docs_per_second") != std::string::npos);
    CHECK(j.dump().find("alpha") != std::string::npos);
}

TEST_CASE("tool binary maps errors to exit codes") {
    TempDir dir("cli-bin");
    write(dir / "bad.jsonl", "{oops\n");
    auto status = [&](const std::string& args) {
        const std::string cmd = std::string("\"") + KPGEN_TOOL + "\" " + args + " >\"" + (dir / "o").string() + "\" 2>\"" +
                                (dir / "e").string() + "\"";
        const int raw = std::system(cmd.c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    CHECK(status("build-vocab --corpus \"" + (dir / "bad.jsonl").string() + "\" --out \"" + (dir / "v").string() + "\"") ==
          cli::kExitData);
    CHECK(read_file(dir / "e").find(":1") != std::string::npos);
    CHECK(status("nope") == cli::kExitUsage);
    CHECK(status("--help") == cli::kExitOk);
    CHECK(read_file(dir / "o").find("build-index") != std::string::npos);
}
