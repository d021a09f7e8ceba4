#include "kpgen/importance_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "kpgen/error.hpp"
#include "kpgen/io.hpp"

namespace kpgen {

MicroImportanceModel::MicroImportanceModel(std::size_t vocab_size, std::size_t dim, bool use_bias)
    : vocab_size_(vocab_size),
      dim_(dim),
      has_bias_(use_bias),
      embeddings_(vocab_size * dim, 0.0),
      projection_(dim * vocab_size, 0.0),
      bias_(use_bias ? vocab_size : 0, 0.0) {
    if (dim == 0) throw ConfigError("model dimensionality must be >= 1");
    if (vocab_size < 2) throw ConfigError("model vocabulary must hold at least one term besides <oov>");
}

MicroImportanceModel MicroImportanceModel::random(std::size_t vocab_size, std::size_t dim, std::uint64_t seed,
                                                  double scale, bool use_bias) {
    MicroImportanceModel model(vocab_size, dim, use_bias);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(dim));
    for (auto& x : model.embeddings_) x = scale * normal(rng);
    // Tied start: projection column j is embedding row j, so each token begins
    // by predicting itself, as a masked-LM head with shared embeddings does.
    for (std::size_t j = 0; j < vocab_size; ++j) {
        for (std::size_t k = 0; k < dim; ++k) {
            model.projection_[k * vocab_size + j] = model.embeddings_[j * dim + k] * inv_sqrt_dim;
        }
    }
    for (auto& x : model.bias_) x = 0.1 * scale * normal(rng);
    return model;
}

std::vector<double> MicroImportanceModel::raw_logits(TermId token) const {
    if (token >= vocab_size_) throw DataError("term id " + std::to_string(token) + " outside model vocabulary");
    std::vector<double> raw = has_bias_ ? bias_ : std::vector<double>(vocab_size_, 0.0);
    const double* e = embeddings_.data() + static_cast<std::size_t>(token) * dim_;
    for (std::size_t k = 0; k < dim_; ++k) {
        const double ek = e[k];
        const double* row = projection_.data() + k * vocab_size_;
        for (std::size_t j = 0; j < vocab_size_; ++j) raw[j] += ek * row[j];
    }
    return raw;
}

SparseTermVector MicroImportanceModel::predict(std::span<const TermId> term_ids) const {
    if (term_ids.empty()) throw DataError("empty document");
    std::vector<TermId> distinct(term_ids.begin(), term_ids.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    // log1p(ReLU(.)) is monotone, so pooling the raw logits first is exact.
    std::vector<double> pooled(vocab_size_, 0.0);
    for (const TermId t : distinct) {
        const auto raw = raw_logits(t);
        for (std::size_t j = 1; j < vocab_size_; ++j) pooled[j] = std::max(pooled[j], raw[j]);
    }
    std::vector<SparseTermVector::Entry> entries;
    for (std::size_t j = 1; j < vocab_size_; ++j) {
        if (pooled[j] > 0.0) entries.emplace_back(static_cast<TermId>(j), std::log1p(pooled[j]));
    }
    return SparseTermVector::from_entries({}, std::move(entries));
}

namespace {

constexpr char kMagic[8] = {'K', 'P', 'G', 'M', 'O', 'D', 'L', '1'};

}  // namespace

void MicroImportanceModel::save(const std::filesystem::path& path) const {
    AtomicFileWriter writer(path, /*binary=*/true);
    auto& out = writer.stream();
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint64_t>(out, vocab_size_);
    write_pod<std::uint64_t>(out, dim_);
    write_pod<std::uint8_t>(out, has_bias_ ? 1 : 0);
    out.write(reinterpret_cast<const char*>(embeddings_.data()),
              static_cast<std::streamsize>(embeddings_.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(projection_.data()),
              static_cast<std::streamsize>(projection_.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(bias_.data()), static_cast<std::streamsize>(bias_.size() * sizeof(double)));
    writer.commit();
}

MicroImportanceModel MicroImportanceModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model checkpoint " + path.string());
    CheckedReader reader(in, path.string());
    char magic[8];
    reader.read(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError(path.string() + ": not a version-1 model checkpoint");
    }
    const auto vocab = reader.pod<std::uint64_t>();
    const auto dim = reader.pod<std::uint64_t>();
    const auto bias_flag = reader.pod<std::uint8_t>();
    if (vocab > (1ULL << 32) || dim > (1ULL << 16) || vocab * dim > (1ULL << 34)) {
        throw DataError(path.string() + ": implausible model dimensions");
    }
    MicroImportanceModel model(vocab, dim, bias_flag != 0);
    reader.read(model.embeddings_.data(), model.embeddings_.size() * sizeof(double));
    reader.read(model.projection_.data(), model.projection_.size() * sizeof(double));
    reader.read(model.bias_.data(), model.bias_.size() * sizeof(double));
    if (!reader.at_end()) {
        throw DataError(path.string() + ": trailing bytes after offset " + std::to_string(reader.offset()));
    }
    return model;
}

SparseTermVector VectorLookup::vector_for(const std::string& doc_id, std::span<const TermId> term_ids) const {
    if (store_ != nullptr) {
        if (auto it = store_->find(doc_id); it != store_->end()) return it->second;
    }
    if (predictor_ == nullptr) throw DataError("no precomputed vector for document '" + doc_id + "'");
    auto v = predictor_->predict(term_ids);
    v.set_owner(doc_id);
    return v;
}

}  // namespace kpgen
