#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kpgen {

/// Assigns one Penn-Treebank-style tag per (lowercased) word.
class PosTagger {
public:
    virtual ~PosTagger() = default;
    virtual std::vector<std::string> tag(std::span<const std::string> words) const = 0;
    virtual std::string name() const = 0;
};

/// Closed-class lexicon plus suffix heuristics; unknown open-class words
/// default to NN. Needs no training data.
class RuleTagger final : public PosTagger {
public:
    std::vector<std::string> tag(std::span<const std::string> words) const override;
    std::string name() const override { return "rules"; }
};

/// Marker for corpora that arrive already tagged. Tokens come from
/// from_pretagged(); asking it to tag raw text is a data error.
class PassThroughTagger final : public PosTagger {
public:
    std::vector<std::string> tag(std::span<const std::string> words) const override;
    std::string name() const override { return "pretagged"; }
};

using TaggedSentence = std::vector<std::pair<std::string, std::string>>;

/// Averaged perceptron tagger with greedy left-to-right decoding.
class PerceptronTagger final : public PosTagger {
public:
    struct TrainOptions {
        int iterations = 8;
        std::uint64_t seed = 13;
        std::size_t tagdict_min_count = 3;
        double tagdict_min_ratio = 0.97;
    };

    void train(const std::vector<TaggedSentence>& sentences, const TrainOptions& options);
    void train(const std::vector<TaggedSentence>& sentences) { train(sentences, TrainOptions{}); }

    std::vector<std::string> tag(std::span<const std::string> words) const override;
    std::string name() const override { return "perceptron"; }

    void save(const std::filesystem::path& path) const;
    static PerceptronTagger load(const std::filesystem::path& path);

private:
    using Features = std::vector<std::string>;
    Features features(std::span<const std::string> context, std::size_t i, const std::string& word,
                      const std::string& prev, const std::string& prev2) const;
    std::string predict(const Features& feats) const;
    static std::vector<std::string> normalized_context(std::span<const std::string> words);

    std::vector<std::string> classes_;
    std::unordered_map<std::string, std::string> tagdict_;
    std::unordered_map<std::string, std::map<std::string, double>> weights_;
};

/// Reads a JSON-lines file of records {"tokens": [[surface, pos], ...]}.
std::vector<TaggedSentence> load_tagged_sentences(const std::filesystem::path& path);

/// "rules", "pretagged", or "perceptron:<model path>".
std::unique_ptr<PosTagger> make_tagger(const std::string& spec);

}  // namespace kpgen
