#include "kpgen/pos_tagger.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <unordered_set>

#include "kpgen/error.hpp"
#include "kpgen/io.hpp"

namespace kpgen {
namespace {

const std::unordered_map<std::string, std::string>& closed_class_lexicon() {
    static const std::unordered_map<std::string, std::string> lexicon = [] {
        std::unordered_map<std::string, std::string> m;
        auto put = [&m](std::initializer_list<const char*> words, const char* tag) {
            for (const char* w : words) m.emplace(w, tag);
        };
        put({"the", "a", "an", "this", "that", "these", "those", "each", "every", "some", "any", "no",
             "another", "all", "both", "either", "neither"},
            "DT");
        put({"of", "in", "on", "at", "by", "for", "with", "from", "into", "onto", "upon", "about", "above",
             "across", "after", "against", "along", "among", "around", "before", "behind", "below", "beneath",
             "beside", "between", "beyond", "during", "except", "inside", "near", "off", "outside", "over",
             "since", "through", "throughout", "toward", "towards", "under", "until", "via", "within",
             "without", "whereas", "while", "although", "though", "because", "if", "whether", "than", "as",
             "like", "unlike", "per", "despite", "so"},
            "IN");
        put({"to"}, "TO");
        put({"and", "or", "but", "nor", "yet", "plus"}, "CC");
        put({"i", "you", "he", "she", "it", "we", "they", "me", "him", "us", "them", "itself", "themselves"},
            "PRP");
        put({"my", "your", "his", "her", "its", "our", "their"}, "PRP$");
        put({"which", "whatever", "whichever"}, "WDT");
        put({"who", "whom", "what"}, "WP");
        put({"when", "where", "how", "why"}, "WRB");
        put({"can", "could", "may", "might", "must", "shall", "should", "will", "would", "cannot"}, "MD");
        put({"is", "has", "does"}, "VBZ");
        put({"are", "have", "do", "am"}, "VBP");
        put({"was", "were", "had", "did", "sat", "ran", "made", "took", "gave", "found", "began", "became",
             "came", "went", "got", "saw", "said", "told", "thought", "left", "kept", "led", "held", "brought",
             "wrote", "grew", "drew", "ate", "met", "slept", "won", "lost", "sent", "spent", "stood", "felt",
             "sang", "built", "read", "used"},
            "VBD");
        put({"be"}, "VB");
        put({"been", "shown", "known", "given", "taken", "done", "seen", "written", "grown", "drawn",
             "chosen", "proven", "eaten", "driven", "broken", "spoken", "hidden"},
            "VBN");
        put({"being"}, "VBG");
        put({"not", "also", "very", "often", "only", "then", "thus", "hence", "however", "therefore",
             "moreover", "furthermore", "here", "already", "still", "even", "well", "too", "again", "always",
             "never", "usually", "generally", "now", "rather", "almost", "quite", "further", "soon", "online",
             "together", "instead"},
            "RB");
        put({"data", "children", "people", "men", "women", "criteria", "phenomena"}, "NNS");
        put({"retrieval", "approval", "removal", "interval", "survival", "arrival", "proposal", "signal",
             "journal", "animal", "hospital", "capital", "material", "potential", "individual", "tutorial"},
            "NN");
        put({"more", "less"}, "RBR");
        put({"most", "least"}, "RBS");
        put({"there"}, "EX");
        put({"one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "hundred",
             "thousand", "million", "billion", "zero"},
            "CD");
        put({"new", "large", "small", "high", "low", "good", "different", "efficient", "important",
             "unsupervised", "supervised", "neural", "deep", "novel", "recent", "various", "several", "many",
             "few", "such", "other", "same", "first", "second", "third", "last", "main", "key", "robust",
             "simple", "complex", "accurate", "fast", "slow", "sparse", "dense", "random", "optimal",
             "semantic", "lexical", "linear", "nonlinear", "similar", "specific", "general", "common", "standard",
             "strong", "weak", "significant", "relevant", "available", "possible", "previous", "multiple", "big",
             "old", "young", "long", "short", "black", "white", "red", "green", "blue", "hot", "cold", "happy",
             "sad", "early", "late", "whole", "full", "open", "free", "real", "true", "false", "clear", "hard",
             "easy", "little", "own", "single", "global", "local", "current", "final", "major", "minor", "quick",
             "brown", "lazy", "frequent", "absent", "present", "consistent", "warm", "interesting", "wide",
             "narrow", "rich", "poor", "rare", "existing", "unlabeled", "labeled", "pretrained"},
            "JJ");
        put({"better", "larger", "smaller", "higher", "lower", "faster", "slower", "greater", "fewer"}, "JJR");
        put({"best", "largest", "smallest", "highest", "lowest", "fastest", "greatest"}, "JJS");
        return m;
    }();
    return lexicon;
}

// Base forms of common verbs; their tag depends on the left context.
const std::unordered_set<std::string>& verb_bases() {
    static const std::unordered_set<std::string> verbs = {
        "propose", "predict", "learn", "study", "outperform", "show", "store", "improve", "search", "jump",
        "select", "run", "contain", "generate", "release", "appear", "receive", "achieve", "train", "require",
        "use", "extract", "increase", "decrease", "rank", "filter", "contribute", "combine", "focus", "assign",
        "compare", "report", "thank", "make", "come", "summarize", "occur", "describe", "extend", "reduce",
        "include", "provide", "introduce", "obtain", "evaluate", "apply", "consider", "demonstrate", "allow",
        "enable", "produce", "perform", "measure", "capture", "compute", "represent", "retrieve", "identify",
        "find", "give", "take", "get", "help", "need", "want", "seem", "become", "remain", "lead", "build",
        "write", "play", "walk", "sing", "see", "know", "think", "say", "tell", "work", "exploit", "leverage",
        "explore", "address", "solve", "design", "develop", "suggest", "indicate", "reveal", "yield", "rely"};
    return verbs;
}

bool is_verb_base(const std::string& w) { return verb_bases().count(w) > 0; }

// "predicts" -> "predict", "studies" -> "study", "focuses" -> "focus".
bool is_verb_third_person(const std::string& w) {
    if (w.size() < 4 || w.back() != 's') return false;
    if (is_verb_base(w.substr(0, w.size() - 1))) return true;
    if (w.size() > 4 && w.compare(w.size() - 3, 3, "ies") == 0 && is_verb_base(w.substr(0, w.size() - 3) + "y")) {
        return true;
    }
    return w.size() > 4 && w.compare(w.size() - 2, 2, "es") == 0 && is_verb_base(w.substr(0, w.size() - 2));
}

bool is_nominal_left(const std::string& tag) {
    return tag == "DT" || tag == "JJ" || tag == "JJR" || tag == "JJS" || tag == "PRP$" || tag == "IN" || tag == "CD";
}

bool ends_with(const std::string& w, std::string_view suffix) {
    return w.size() >= suffix.size() && w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool starts_with_digit(const std::string& w) { return !w.empty() && w[0] >= '0' && w[0] <= '9'; }

bool is_be_or_have(const std::string& w) {
    static const std::unordered_set<std::string> forms = {"is", "are", "was", "were", "be", "been", "being",
                                                          "has", "have", "had", "am", "get", "got"};
    return forms.count(w) > 0;
}

std::string guess_open_class(const std::string& w, const std::string& prev_word, const std::string& prev_tag) {
    if (starts_with_digit(w)) return "CD";
    if (prev_tag == "MD" || prev_tag == "TO") return "VB";
    if (is_verb_base(w)) {
        if (prev_word == "not" || prev_word == "do" || prev_word == "does" || prev_word == "did") return "VB";
        if (prev_tag == "NNS" || prev_tag == "PRP" || prev_tag == "WDT" || prev_tag == "RB") return "VBP";
        return "NN";
    }
    if (is_verb_third_person(w)) return is_nominal_left(prev_tag) || prev_tag.empty() ? "NNS" : "VBZ";
    if (w.size() > 4 && ends_with(w, "ing")) {
        return prev_tag == "DT" || prev_tag == "JJ" || prev_tag == "PRP$" ? "NN" : "VBG";
    }
    if (w.size() > 3 && ends_with(w, "ed")) {
        const bool participle = is_be_or_have(prev_word) || prev_tag.rfind("VB", 0) == 0 || is_nominal_left(prev_tag);
        return participle ? "VBN" : "VBD";
    }
    if (w.size() > 4 && ends_with(w, "ly")) return "RB";
    for (std::string_view suffix : {"ous", "ful", "ive", "able", "ible", "ical", "less", "ish", "ic", "al"}) {
        if (w.size() > suffix.size() + 2 && ends_with(w, suffix)) return "JJ";
    }
    const bool plural_like = w.size() > 3 && ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") &&
                             !ends_with(w, "is");
    if (prev_tag == "PRP" || prev_tag == "WDT") return plural_like ? "VBZ" : "VBP";
    return plural_like ? "NNS" : "NN";
}

std::string normalize_word(const std::string& w) {
    if (w.find('-') != std::string::npos && w.front() != '-') return "!HYPHEN";
    if (w.size() == 4 && std::all_of(w.begin(), w.end(), [](char c) { return c >= '0' && c <= '9'; })) return "!YEAR";
    if (starts_with_digit(w)) return "!DIGITS";
    return w;
}

std::string suffix_of(const std::string& w, std::size_t n) {
    return w.size() <= n ? w : w.substr(w.size() - n);
}

}  // namespace

std::vector<std::string> RuleTagger::tag(std::span<const std::string> words) const {
    const auto& lexicon = closed_class_lexicon();
    std::vector<std::string> tags;
    tags.reserve(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        const std::string& w = words[i];
        const std::string prev_word = i > 0 ? words[i - 1] : std::string();
        const std::string prev_tag = i > 0 ? tags[i - 1] : std::string();
        if (auto it = lexicon.find(w); it != lexicon.end()) {
            std::string tag = it->second;
            if (tag == "VBD" && is_be_or_have(prev_word)) tag = "VBN";
            if (w == "that" && prev_tag.rfind("NN", 0) == 0) tag = "WDT";
            tags.push_back(std::move(tag));
        } else {
            tags.push_back(guess_open_class(w, prev_word, prev_tag));
        }
    }
    return tags;
}

std::vector<std::string> PassThroughTagger::tag(std::span<const std::string>) const {
    throw DataError("pass-through tagger needs pre-tagged input records");
}

std::vector<std::string> PerceptronTagger::normalized_context(std::span<const std::string> words) {
    std::vector<std::string> context;
    context.reserve(words.size() + 4);
    context.emplace_back("-START-");
    context.emplace_back("-START2-");
    for (const auto& w : words) context.push_back(normalize_word(w));
    context.emplace_back("-END-");
    context.emplace_back("-END2-");
    return context;
}

PerceptronTagger::Features PerceptronTagger::features(std::span<const std::string> context, std::size_t i,
                                                      const std::string& word, const std::string& prev,
                                                      const std::string& prev2) const {
    // i indexes `context`, which is offset by two start symbols.
    Features f;
    f.reserve(14);
    f.emplace_back("bias");
    f.push_back("i suffix " + suffix_of(word, 3));
    f.push_back("i pref1 " + word.substr(0, 1));
    f.push_back("i-1 tag " + prev);
    f.push_back("i-2 tag " + prev2);
    f.push_back("i tag+i-2 tag " + prev + " " + prev2);
    f.push_back("i word " + context[i]);
    f.push_back("i-1 tag+i word " + prev + " " + context[i]);
    f.push_back("i-1 word " + context[i - 1]);
    f.push_back("i-1 suffix " + suffix_of(context[i - 1], 3));
    f.push_back("i-2 word " + context[i - 2]);
    f.push_back("i+1 word " + context[i + 1]);
    f.push_back("i+1 suffix " + suffix_of(context[i + 1], 3));
    f.push_back("i+2 word " + context[i + 2]);
    return f;
}

std::string PerceptronTagger::predict(const Features& feats) const {
    std::map<std::string, double> scores;
    for (const auto& c : classes_) scores[c] = 0.0;
    for (const auto& feat : feats) {
        auto it = weights_.find(feat);
        if (it == weights_.end()) continue;
        for (const auto& [cls, weight] : it->second) scores[cls] += weight;
    }
    std::string best;
    double best_score = 0.0;
    bool first = true;
    for (const auto& [cls, score] : scores) {
        if (first || score > best_score) {
            best = cls;
            best_score = score;
            first = false;
        }
    }
    return best.empty() ? std::string("NN") : best;
}

std::vector<std::string> PerceptronTagger::tag(std::span<const std::string> words) const {
    const auto context = normalized_context(words);
    std::string prev = "-START-";
    std::string prev2 = "-START2-";
    std::vector<std::string> tags;
    tags.reserve(words.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        std::string t;
        if (auto it = tagdict_.find(words[i]); it != tagdict_.end()) {
            t = it->second;
        } else {
            t = predict(features(context, i + 2, words[i], prev, prev2));
        }
        prev2 = std::move(prev);
        prev = t;
        tags.push_back(std::move(t));
    }
    return tags;
}

void PerceptronTagger::train(const std::vector<TaggedSentence>& sentences, const TrainOptions& options) {
    classes_.clear();
    tagdict_.clear();
    weights_.clear();

    std::map<std::string, std::map<std::string, std::size_t>> counts;
    std::set<std::string> classes;
    for (const auto& sentence : sentences) {
        for (const auto& [word, tag] : sentence) {
            ++counts[word][tag];
            classes.insert(tag);
        }
    }
    classes_.assign(classes.begin(), classes.end());
    for (const auto& [word, tag_counts] : counts) {
        std::size_t total = 0;
        std::size_t best = 0;
        std::string best_tag;
        for (const auto& [tag, n] : tag_counts) {
            total += n;
            if (n > best) {
                best = n;
                best_tag = tag;
            }
        }
        if (total >= options.tagdict_min_count &&
            static_cast<double>(best) / static_cast<double>(total) >= options.tagdict_min_ratio) {
            tagdict_[word] = best_tag;
        }
    }

    // Averaging bookkeeping: accumulated totals and last-update timestamps.
    std::unordered_map<std::string, std::map<std::string, double>> totals;
    std::unordered_map<std::string, std::map<std::string, std::size_t>> stamps;
    std::size_t instances = 0;
    auto update_weight = [&](const std::string& feat, const std::string& cls, double delta) {
        double& w = weights_[feat][cls];
        std::size_t& stamp = stamps[feat][cls];
        totals[feat][cls] += static_cast<double>(instances - stamp) * w;
        stamp = instances;
        w += delta;
    };

    std::vector<std::size_t> order(sentences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(options.seed);
    for (int iter = 0; iter < options.iterations; ++iter) {
        for (const std::size_t s : order) {
            const auto& sentence = sentences[s];
            std::vector<std::string> words;
            for (const auto& [w, t] : sentence) words.push_back(w);
            const auto context = normalized_context(words);
            std::string prev = "-START-";
            std::string prev2 = "-START2-";
            for (std::size_t i = 0; i < words.size(); ++i) {
                const std::string& truth = sentence[i].second;
                std::string guess;
                if (auto it = tagdict_.find(words[i]); it != tagdict_.end()) {
                    guess = it->second;
                } else {
                    const auto feats = features(context, i + 2, words[i], prev, prev2);
                    guess = predict(feats);
                    ++instances;
                    if (guess != truth) {
                        for (const auto& feat : feats) {
                            update_weight(feat, truth, 1.0);
                            update_weight(feat, guess, -1.0);
                        }
                    }
                }
                prev2 = std::move(prev);
                prev = guess;
            }
        }
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    }

    for (auto& [feat, by_class] : weights_) {
        for (auto& [cls, w] : by_class) {
            const double total = totals[feat][cls] + static_cast<double>(instances - stamps[feat][cls]) * w;
            w = instances > 0 ? total / static_cast<double>(instances) : w;
        }
    }
    for (auto it = weights_.begin(); it != weights_.end();) {
        std::erase_if(it->second, [](const auto& kv) { return kv.second == 0.0; });
        it = it->second.empty() ? weights_.erase(it) : std::next(it);
    }
}

void PerceptronTagger::save(const std::filesystem::path& path) const {
    Json j;
    j["format"] = "kpgen-perceptron-tagger";
    j["version"] = 1;
    j["classes"] = classes_;
    j["tagdict"] = Json(std::map<std::string, std::string>(tagdict_.begin(), tagdict_.end()));
    Json w = Json::object();
    for (const auto& [feat, by_class] : weights_) w[feat] = by_class;
    j["weights"] = std::move(w);
    AtomicFileWriter writer(path);
    writer.stream() << j.dump() << '\n';
    writer.commit();
}

PerceptronTagger PerceptronTagger::load(const std::filesystem::path& path) {
    PerceptronTagger tagger;
    try {
        const Json j = Json::parse(read_file(path));
        if (j.value("format", "") != "kpgen-perceptron-tagger" || j.value("version", 0) != 1) {
            throw DataError(path.string() + ": not a version-1 perceptron tagger model");
        }
        tagger.classes_ = j.at("classes").get<std::vector<std::string>>();
        for (const auto& [word, tag] : j.at("tagdict").items()) tagger.tagdict_[word] = tag.get<std::string>();
        for (const auto& [feat, by_class] : j.at("weights").items()) {
            tagger.weights_[feat] = by_class.get<std::map<std::string, double>>();
        }
    } catch (const Json::exception& e) {
        throw DataError(path.string() + ": malformed tagger model (" + e.what() + ")");
    }
    return tagger;
}

std::vector<TaggedSentence> load_tagged_sentences(const std::filesystem::path& path) {
    std::vector<TaggedSentence> sentences;
    for_each_json_line(path, [&](const Json& record, std::size_t) {
        TaggedSentence sentence;
        for (const auto& pair : record.at("tokens")) {
            sentence.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
        }
        sentences.push_back(std::move(sentence));
    });
    return sentences;
}

std::unique_ptr<PosTagger> make_tagger(const std::string& spec) {
    if (spec == "rules") return std::make_unique<RuleTagger>();
    if (spec == "pretagged") return std::make_unique<PassThroughTagger>();
    constexpr std::string_view kPrefix = "perceptron:";
    if (spec.rfind(kPrefix, 0) == 0) {
        return std::make_unique<PerceptronTagger>(PerceptronTagger::load(spec.substr(kPrefix.size())));
    }
    throw ConfigError("unknown tagger '" + spec + "' (expected rules, pretagged or perceptron:<path>)");
}

}  // namespace kpgen
