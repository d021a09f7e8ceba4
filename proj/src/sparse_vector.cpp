#include "kpgen/sparse_vector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "kpgen/error.hpp"
#include "kpgen/io.hpp"

namespace kpgen {

SparseTermVector SparseTermVector::from_entries(std::string owner, std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [id, w] = entries[i];
        if (!std::isfinite(w) || w <= 0.0) {
            throw DataError("vector '" + owner + "': weight for term " + std::to_string(id) +
                            " must be finite and positive");
        }
        if (i > 0 && entries[i - 1].first == id) {
            throw DataError("vector '" + owner + "': duplicate term id " + std::to_string(id));
        }
    }
    SparseTermVector v;
    v.owner_ = std::move(owner);
    v.entries_ = std::move(entries);
    return v;
}

SparseTermVector SparseTermVector::from_dense(std::string owner, std::span<const double> dense) {
    SparseTermVector v;
    v.owner_ = std::move(owner);
    for (std::size_t j = 0; j < dense.size(); ++j) {
        if (dense[j] > 0.0) v.entries_.emplace_back(static_cast<TermId>(j), dense[j]);
    }
    return v;
}

double SparseTermVector::weight(TermId id) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                               [](const Entry& e, TermId key) { return e.first < key; });
    return (it != entries_.end() && it->first == id) ? it->second : 0.0;
}

SparseTermVector SparseTermVector::scaled(double factor) const {
    SparseTermVector v = *this;
    for (auto& e : v.entries_) e.second *= factor;
    return v;
}

double dot(const SparseTermVector& a, const SparseTermVector& b) {
    const auto& ea = a.entries();
    const auto& eb = b.entries();
    double sum = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < ea.size() && j < eb.size()) {
        if (ea[i].first < eb[j].first) {
            ++i;
        } else if (eb[j].first < ea[i].first) {
            ++j;
        } else {
            sum += ea[i].second * eb[j].second;
            ++i;
            ++j;
        }
    }
    return sum;
}

namespace {
constexpr const char* kVectorFormat = "kpgen-vectors";
constexpr int kVectorVersion = 1;
}  // namespace

void save_vectors(const VectorStore& vectors, const std::filesystem::path& path) {
    AtomicFileWriter writer(path);
    auto& out = writer.stream();
    out << Json{{"format", kVectorFormat}, {"version", kVectorVersion}, {"count", vectors.size()}}.dump() << '\n';
    for (const auto& [id, vec] : vectors) {
        Json v = Json::array();
        for (const auto& [term, w] : vec.entries()) v.push_back(Json::array({term, w}));
        out << Json{{"id", id}, {"v", std::move(v)}}.dump() << '\n';
    }
    writer.commit();
}

VectorStore load_vectors(const std::filesystem::path& path) {
    VectorStore store;
    bool header_seen = false;
    std::size_t expected = 0;
    for_each_json_line(path, [&](const Json& record, std::size_t line) {
        const std::string where = path.string() + ":" + std::to_string(line);
        if (!header_seen) {
            if (record.value("format", "") != kVectorFormat) throw DataError(where + ": missing vector file header");
            if (record.value("version", 0) != kVectorVersion) {
                throw DataError(where + ": unsupported vector file version");
            }
            expected = record.at("count").get<std::size_t>();
            header_seen = true;
            return;
        }
        const auto id = record.at("id").get<std::string>();
        std::vector<SparseTermVector::Entry> entries;
        TermId prev = 0;
        bool first = true;
        for (const auto& pair : record.at("v")) {
            const auto term = pair.at(0).get<TermId>();
            const auto w = pair.at(1).get<double>();
            if (!first && term <= prev) throw DataError(where + ": record '" + id + "' is not sorted by term id");
            prev = term;
            first = false;
            entries.emplace_back(term, w);
        }
        try {
            auto vec = SparseTermVector::from_entries(id, std::move(entries));
            if (!store.emplace(id, std::move(vec)).second) throw DataError("duplicate id '" + id + "'");
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
    });
    if (!header_seen) throw DataError(path.string() + ": missing vector file header");
    if (store.size() != expected) {
        throw DataError(path.string() + ": header announces " + std::to_string(expected) + " records, found " +
                        std::to_string(store.size()));
    }
    return store;
}

}  // namespace kpgen
