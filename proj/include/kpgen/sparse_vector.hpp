#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kpgen/vocabulary.hpp"

namespace kpgen {

/// Nonnegative term weights over a vocabulary; only strictly positive weights
/// are stored, sorted by term id.
class SparseTermVector {
public:
    using Entry = std::pair<TermId, double>;

    SparseTermVector() = default;

    /// Sorts entries and validates them: weights must be finite and > 0, ids unique.
    static SparseTermVector from_entries(std::string owner, std::vector<Entry> entries);

    /// Builds from a dense weight array, dropping non-positive entries.
    static SparseTermVector from_dense(std::string owner, std::span<const double> dense);

    double weight(TermId id) const;
    std::size_t nnz() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<Entry>& entries() const { return entries_; }
    const std::string& owner() const { return owner_; }
    void set_owner(std::string owner) { owner_ = std::move(owner); }

    /// Multiplies every weight by a positive factor.
    SparseTermVector scaled(double factor) const;

    friend bool operator==(const SparseTermVector&, const SparseTermVector&) = default;

private:
    std::string owner_;
    std::vector<Entry> entries_;
};

/// Dot product over the intersection of nonzero ids.
double dot(const SparseTermVector& a, const SparseTermVector& b);

using VectorStore = std::map<std::string, SparseTermVector>;

/// JSON-lines: a header {"format","version","count"} followed by one
/// {"id","v":[[term_id, weight], ...]} record per document.
void save_vectors(const VectorStore& vectors, const std::filesystem::path& path);
VectorStore load_vectors(const std::filesystem::path& path);

}  // namespace kpgen
