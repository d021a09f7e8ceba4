#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "kpgen/error.hpp"
#include "kpgen/importance_model.hpp"
#include "kpgen/training.hpp"
#include "support.hpp"

using namespace kpgen;
using kpgen::testing::TempDir;

namespace {

// Two input tokens whose raw logits over output terms 1..3 are set directly:
// one-hot embeddings pick a row of the projection. Term 0 is <oov>.
MicroImportanceModel two_token_model(const std::vector<double>& raw1, const std::vector<double>& raw2) {
    MicroImportanceModel m(4, 2, false);
    m.embeddings() = {0, 0, 1, 0, 0, 1, 0, 0};
    auto& p = m.projection();
    std::fill(p.begin(), p.end(), 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
        p[0 * 4 + j + 1] = raw1[j];
        p[1 * 4 + j + 1] = raw2[j];
    }
    return m;
}

SparseTermVector vec(std::vector<SparseTermVector::Entry> e) { return SparseTermVector::from_entries("", std::move(e)); }

double mean_nnz(const MicroImportanceModel& m, const std::vector<EncodedTriplet>& data) {
    double total = 0.0;
    for (const auto& t : data) total += static_cast<double>(m.predict(t.positive).nnz() + m.predict(t.negative).nnz());
    return total / (2.0 * static_cast<double>(data.size()));
}

}  // namespace

TEST_CASE("predict max-pools log1p of rectified logits") {
    auto m = two_token_model({1.0, -2.0, 0.0}, {0.5, 3.0, -1.0});
    const std::vector<TermId> ids{1, 2};
    const auto v = m.predict(ids);
    CHECK(v.nnz() == 2);
    CHECK(v.weight(1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(v.weight(2) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(v.weight(3) == 0.0);
    CHECK(v.weight(0) == 0.0);
}

TEST_CASE("predict on a single token applies log1p(relu) directly") {
    auto m = MicroImportanceModel::random(12, 3, 5);
    for (TermId t = 0; t < 12; ++t) {
        const std::vector<TermId> ids{t};
        const auto v = m.predict(ids);
        const auto raw = m.raw_logits(t);
        for (TermId j = 1; j < 12; ++j) CHECK(v.weight(j) == std::log1p(std::max(0.0, raw[j])));
    }
}

TEST_CASE("all-negative logits give an empty vector") {
    auto m = two_token_model({-1.0, -2.0, -0.1}, {-0.5, -3.0, -1.0});
    const std::vector<TermId> ids{1, 2};
    CHECK(m.predict(ids).empty());
}

TEST_CASE("empty input is rejected") {
    auto m = MicroImportanceModel::random(5, 2, 1);
    CHECK_THROWS_WITH_AS(m.predict(std::vector<TermId>{}), "empty document", DataError);
}

TEST_CASE("pooling is order invariant and monotone under appending") {
    std::mt19937_64 rng(11);
    auto m = MicroImportanceModel::random(40, 6, 3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<TermId> ids(1 + rng() % 8);
        for (auto& t : ids) t = static_cast<TermId>(rng() % 40);
        const auto base = m.predict(ids);
        auto shuffled = ids;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(m.predict(shuffled) == base);
        auto longer = ids;
        longer.push_back(static_cast<TermId>(rng() % 40));
        const auto grown = m.predict(longer);
        for (TermId j = 0; j < 40; ++j) CHECK(grown.weight(j) >= base.weight(j));
    }
}

TEST_CASE("in-batch rank loss examples") {
    const std::vector<SparseTermVector> q{vec({{1, 1.0}})};
    SUBCASE("margin of two") {
        const std::vector<SparseTermVector> pos{vec({{1, 2.0}})}, neg{SparseTermVector{}};
        CHECK(rank_loss_ibn(q, pos, neg) == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-12));
        CHECK(rank_loss_ibn(q, pos, neg) == doctest::Approx(0.1269).epsilon(1e-3));
    }
    SUBCASE("equal scores") {
        const std::vector<SparseTermVector> pos{vec({{1, 0.7}})}, neg{vec({{1, 0.7}})};
        CHECK(rank_loss_ibn(q, pos, neg) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("saturation") {
        const std::vector<SparseTermVector> pos{vec({{1, 200.0}})}, neg{SparseTermVector{}};
        CHECK(rank_loss_ibn(q, pos, neg) < 1e-80);
    }
    SUBCASE("empty batch") {
        const std::vector<SparseTermVector> none;
        CHECK_THROWS(rank_loss_ibn(none, none, none));
    }
}

TEST_CASE("rank loss uses other positives as negatives") {
    // Query 0 scores 1 against its positive, 0 against its negative and 3
    // against the other positive: -log(e / (e + 1 + e^3)).
    const std::vector<SparseTermVector> q{vec({{1, 1.0}, {2, 1.0}}), vec({{3, 1.0}})};
    const std::vector<SparseTermVector> pos{vec({{1, 1.0}}), vec({{2, 3.0}, {3, 2.0}})};
    const std::vector<SparseTermVector> neg{SparseTermVector{}, SparseTermVector{}};
    const double l0 = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0 + std::exp(3.0)));
    const double l1 = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0 + 1.0));
    CHECK(rank_loss_ibn(q, pos, neg) == doctest::Approx((l0 + l1) / 2.0).epsilon(1e-12));
}

TEST_CASE("rank loss decreases strictly as the positive score grows") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> w(0.1, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        // Term 1 appears only in the query and positive 0, so raising it moves
        // dot(q_0, d+_0) and nothing else.
        std::vector<SparseTermVector> q, pos, neg;
        for (int i = 0; i < 3; ++i) {
            q.push_back(vec({{static_cast<TermId>(i == 0 ? 1 : 9), w(rng)}, {5, w(rng)}}));
            pos.push_back(vec({{5, w(rng)}}));
            neg.push_back(vec({{5, w(rng)}}));
        }
        double prev = INFINITY;
        for (double s = 0.0; s < 5.0; s += 0.5) {
            auto p = pos;
            p[0] = vec({{1, 0.01 + s}, {5, pos[0].weight(5)}});
            const double l = rank_loss_ibn(q, p, neg);
            CHECK(l < prev);
            prev = l;
        }
    }
}

TEST_CASE("FLOPS regulariser examples and invariances") {
    CHECK(flops_reg(std::vector<SparseTermVector>{vec({{3, 0.2}}), vec({{3, 0.4}})}, 5) ==
          doctest::Approx(0.09).epsilon(1e-12));
    CHECK(flops_reg(std::vector<SparseTermVector>{SparseTermVector{}, SparseTermVector{}}, 5) == 0.0);
    CHECK(flops_reg(std::vector<SparseTermVector>{vec({{1, 0.5}, {4, 2.0}})}, 5) ==
          doctest::Approx(0.25 + 4.0).epsilon(1e-12));

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> w(0.0, 1.0);
    const std::size_t v = 20;
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::vector<double>> dense(1 + rng() % 5, std::vector<double>(v));
        for (auto& d : dense)
            for (auto& x : d) x = w(rng) < 0.4 ? w(rng) : 0.0;
        std::vector<std::size_t> perm(v);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<SparseTermVector> batch, permuted_ids;
        for (const auto& d : dense) {
            batch.push_back(SparseTermVector::from_dense("", d));
            std::vector<double> p(v);
            for (std::size_t j = 0; j < v; ++j) p[perm[j]] = d[j];
            permuted_ids.push_back(SparseTermVector::from_dense("", p));
        }
        const double base = flops_reg(batch, v);
        double oracle = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
            double mean = 0.0;
            for (const auto& d : dense) mean += d[j];
            mean /= static_cast<double>(dense.size());
            oracle += mean * mean;
        }
        CHECK(base == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(flops_reg(permuted_ids, v) == doctest::Approx(base).epsilon(1e-12));
        std::shuffle(batch.begin(), batch.end(), rng);
        CHECK(flops_reg(batch, v) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("batch loss composes rank and weighted regularisers") {
    auto data = kpgen::testing::synthetic_triplets(6, 3);
    auto m = MicroImportanceModel::random(data.vocab_size, 4, 8);
    const auto l = batch_loss(m, data.triplets, 0.05, 0.03);
    std::vector<SparseTermVector> q, pos, neg, docs;
    for (const auto& t : data.triplets) {
        q.push_back(m.predict(t.reference));
        pos.push_back(m.predict(t.positive));
        neg.push_back(m.predict(t.negative));
    }
    docs = pos;
    docs.insert(docs.end(), neg.begin(), neg.end());
    CHECK(l.rank_loss == doctest::Approx(rank_loss_ibn(q, pos, neg)).epsilon(1e-12));
    CHECK(l.query_reg == doctest::Approx(flops_reg(q, data.vocab_size)).epsilon(1e-12));
    CHECK(l.doc_reg == doctest::Approx(flops_reg(docs, data.vocab_size)).epsilon(1e-12));
    CHECK(l.total == doctest::Approx(l.rank_loss + 0.05 * l.query_reg + 0.03 * l.doc_reg).epsilon(1e-12));
    CHECK(l.lambda_q == 0.05);
    CHECK(l.lambda_d == 0.03);
}

TEST_CASE("analytic gradients agree with central differences") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 5; ++i) {
        auto g = kpgen::testing::random_gradient_instance(rng);
        const auto r = kpgen::testing::gradient_check(g, 0.05 * (1 + i), 0.03 * (1 + i));
        CHECK(r.max_relative_error < 1e-4);
    }
}

TEST_CASE("zero training steps leave parameters unchanged") {
    auto data = kpgen::testing::synthetic_triplets(20, 1);
    auto m = MicroImportanceModel::random(data.vocab_size, 4, 2);
    const auto before = m;
    TrainConfig c;
    c.steps = 0;
    const auto log = train(m, data.triplets, c);
    CHECK(log.empty());
    CHECK(m == before);
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto data = kpgen::testing::synthetic_triplets(60, 2);
    TrainConfig c;
    c.steps = 40;
    c.batch = 8;
    auto a = MicroImportanceModel::random(data.vocab_size, 8, 3);
    auto b = a;
    const auto la = train(a, data.triplets, c);
    const auto lb = train(b, data.triplets, c);
    CHECK(a == b);
    REQUIRE(la.size() == lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) CHECK(la[i].loss.total == lb[i].loss.total);
}

TEST_CASE("training recovers the word shared by reference and positive") {
    auto train_set = kpgen::testing::synthetic_triplets(200, 17);
    auto held_out = kpgen::testing::synthetic_triplets(100, 99);
    TrainConfig c;
    c.steps = 1000;
    c.batch = 32;
    c.lr = 0.01;
    c.dim = 16;
    auto m = MicroImportanceModel::random(train_set.vocab_size, c.dim, c.seed, c.init_scale);
    const auto log = train(m, train_set.triplets, c);
    REQUIRE(!log.empty());
    CHECK(log.back().loss.rank_loss < log.front().loss.rank_loss);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < held_out.triplets.size(); ++i) {
        const auto v = m.predict(held_out.triplets[i].positive);
        TermId best = 0;
        double top = 0.0;
        for (const auto& [id, w] : v.entries()) {
            if (w > top) top = w, best = id;
        }
        if (best == held_out.shared[i]) ++hits;
    }
    MESSAGE("held-out argmax hits: " << hits << "/100");
    CHECK(hits >= 80);
}

TEST_CASE("a larger document regulariser yields sparser document vectors") {
    auto data = kpgen::testing::synthetic_triplets(200, 5);
    TrainConfig c;
    c.steps = 300;
    c.batch = 16;
    c.dim = 8;
    c.lambda_d = 0.0;
    auto loose = MicroImportanceModel::random(data.vocab_size, c.dim, c.seed);
    auto tight = loose;
    train(loose, data.triplets, c);
    c.lambda_d = 0.1;
    train(tight, data.triplets, c);
    const double a = mean_nnz(loose, data.triplets), b = mean_nnz(tight, data.triplets);
    MESSAGE("mean nnz: lambda_d=0 " << a << ", lambda_d=0.1 " << b);
    CHECK(b < a);
}

TEST_CASE("non-finite loss aborts training") {
    auto data = kpgen::testing::synthetic_triplets(40, 6);
    TrainConfig c;
    c.steps = 200;
    c.batch = 8;
    c.lr = 1e200;
    c.momentum = 0.0;
    auto m = MicroImportanceModel::random(data.vocab_size, 4, 1, 3.0);
    CHECK_THROWS_AS(train(m, data.triplets, c), std::runtime_error);
}

TEST_CASE("training config keys") {
    const auto c = TrainConfig::from_key_values({{"lr", "0.1"}, {"batch", "4"}, {"steps", "7"}, {"lambda_q", "0"},
                                                 {"lambda_d", "0.2"}, {"seed", "9"}, {"d", "3"}});
    CHECK(c.lr == 0.1);
    CHECK(c.batch == 4);
    CHECK(c.steps == 7);
    CHECK(c.lambda_q == 0.0);
    CHECK(c.lambda_d == 0.2);
    CHECK(c.seed == 9);
    CHECK(c.dim == 3);
    CHECK(TrainConfig::from_key_values(c.to_key_values()).to_key_values() == c.to_key_values());
    CHECK_THROWS_AS(TrainConfig::from_key_values({{"learning_rate", "1"}}), ConfigError);
    CHECK_THROWS_AS(TrainConfig::from_key_values({{"batch", "0"}}), ConfigError);
}

TEST_CASE("vector files round trip losslessly") {
    TempDir dir("vectors");
    VectorStore store;
    store["a"] = SparseTermVector::from_entries("a", {{3, 0.1 + 1e-17}, {1, 1.0 / 3.0}});
    store["b"] = SparseTermVector::from_entries("b", {{7, std::nextafter(2.0, 3.0)}});
    store["empty"] = SparseTermVector::from_entries("empty", {});
    save_vectors(store, dir / "v.jsonl");
    CHECK(load_vectors(dir / "v.jsonl") == store);

    save_vectors({}, dir / "none.jsonl");
    std::ifstream in(dir / "none.jsonl");
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line.find("\"count\":0") != std::string::npos);
    CHECK(!std::getline(in, line));
    CHECK(load_vectors(dir / "none.jsonl").empty());
}

TEST_CASE("vector files with bad records are rejected") {
    TempDir dir("badvec");
    const auto write = [&](const std::string& body) {
        std::ofstream out(dir / "v.jsonl");
        out << "{\"count\":1,\"format\":\"kpgen-vectors\",\"version\":1}\n" << body << "\n";
    };
    write(R"({"id":"x","v":[[1,-0.5]]})");
    CHECK_THROWS_AS(load_vectors(dir / "v.jsonl"), DataError);
    write(R"({"id":"x","v":[[2,0.5],[1,0.5]]})");
    CHECK_THROWS_AS(load_vectors(dir / "v.jsonl"), DataError);
    write(R"({"id":"x","v":[[1,0.5]]} trailing)");
    try {
        load_vectors(dir / "v.jsonl");
        FAIL("expected a parse error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    CHECK_THROWS_AS(SparseTermVector::from_entries("x", {{1, -1.0}}), DataError);
}

TEST_CASE("model checkpoints round trip and report truncation") {
    TempDir dir("ckpt");
    const auto m = MicroImportanceModel::random(15, 3, 12, 1.0, true);
    m.save(dir / "m.bin");
    CHECK(MicroImportanceModel::load(dir / "m.bin") == m);
    const auto size = std::filesystem::file_size(dir / "m.bin");
    std::filesystem::resize_file(dir / "m.bin", size - 12);
    CHECK_THROWS_WITH_AS(MicroImportanceModel::load(dir / "m.bin"), doctest::Contains("byte offset"), DataError);
}
