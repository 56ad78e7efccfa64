#include "sgn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace sgn::corpus {

using nlohmann::json;

std::optional<std::string> validate_recipe(const Recipe& r, int d_img) {
    if (r.id.empty()) return "missing id";
    if (r.instructions.empty()) return "instructions are empty";
    if (static_cast<int>(r.instructions.size()) > kMaxSentencesPerRecipe)
        return "sentence count " + std::to_string(r.instructions.size()) +
               " exceeds the maximum of 19";
    for (const auto& s : r.instructions)
        if (s.empty()) return "contains an empty sentence";
    if (r.ingredients.empty()) return "ingredients list is empty";
    if (r.image_feature.size() != d_img)
        return "image feature length " +
               std::to_string(r.image_feature.size()) + " != configured " +
               std::to_string(d_img);
    return std::nullopt;
}

void save_features(const std::map<std::string, Eigen::VectorXd>& feats,
                   int d_img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write features: " + path);
    out << "SGNFEAT 1 dim=" << d_img << "\n";
    for (const auto& [id, v] : feats) {
        std::uint32_t len = static_cast<std::uint32_t>(id.size());
        out.write(reinterpret_cast<const char*>(&len), 4);
        out.write(id.data(), len);
        for (int i = 0; i < v.size(); ++i) {
            float f = static_cast<float>(v(i));
            out.write(reinterpret_cast<const char*>(&f), 4);
        }
    }
}

std::map<std::string, Eigen::VectorXd> load_features(const std::string& path,
                                                     int* d_img_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read features: " + path);
    std::string header;
    std::getline(in, header);
    int d_img = 0;
    auto pos = header.find("dim=");
    if (header.rfind("SGNFEAT", 0) != 0 || pos == std::string::npos)
        throw std::runtime_error("bad feature file header: " + path);
    d_img = std::stoi(header.substr(pos + 4));
    if (d_img_out) *d_img_out = d_img;
    std::map<std::string, Eigen::VectorXd> out;
    while (true) {
        std::uint32_t len = 0;
        if (!in.read(reinterpret_cast<char*>(&len), 4)) break;
        std::string id(len, '\0');
        in.read(id.data(), len);
        Eigen::VectorXd v(d_img);
        for (int i = 0; i < d_img; ++i) {
            float f = 0;
            in.read(reinterpret_cast<char*>(&f), 4);
            v(i) = f;
        }
        if (!in) throw std::runtime_error("truncated feature file: " + path);
        out.emplace(std::move(id), std::move(v));
    }
    return out;
}

LoadResult load_corpus(const std::string& path, const std::string& split,
                       const std::string& feature_path, int d_img) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus: " + path);
    std::map<std::string, Eigen::VectorXd> sidecar;
    if (!feature_path.empty()) {
        int dim = 0;
        sidecar = load_features(feature_path, &dim);
        d_img = dim;
    }
    LoadResult result;
    result.corpus.split = split;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Recipe r;
        try {
            json j = json::parse(line);
            r.id = j.value("id", "");
            r.title = j.value("title", "");
            for (const auto& t : j.at("ingredients"))
                r.ingredients.push_back(t.get<std::string>());
            for (const auto& s : j.at("instructions")) {
                std::vector<std::string> sent;
                for (const auto& t : s) sent.push_back(t.get<std::string>());
                r.instructions.push_back(std::move(sent));
            }
            if (j.contains("image_feature")) {
                const auto& f = j["image_feature"];
                r.image_feature.resize(f.size());
                for (size_t i = 0; i < f.size(); ++i)
                    r.image_feature(static_cast<int>(i)) = f[i].get<double>();
            } else if (!sidecar.empty()) {
                auto it = sidecar.find(r.id);
                if (it == sidecar.end()) {
                    result.errors.push_back(
                        {r.id, "missing feature for id"});
                    continue;
                }
                r.image_feature = it->second;
            }
        } catch (const std::exception& e) {
            result.errors.push_back({r.id.empty() ? ("line " +
                                      std::to_string(lineno)) : r.id,
                                     std::string("malformed record: ") +
                                         e.what()});
            continue;
        }
        if (auto err = validate_recipe(r, d_img)) {
            result.errors.push_back({r.id, *err});
            continue;
        }
        result.corpus.recipes.push_back(std::move(r));
    }
    // recipe ids unique within a corpus
    std::map<std::string, int> seen;
    for (const auto& r : result.corpus.recipes)
        if (++seen[r.id] == 2)
            result.errors.push_back({r.id, "duplicate recipe id"});
    if (!result.errors.empty()) {
        std::vector<Recipe> keep;
        for (auto& r : result.corpus.recipes)
            if (seen[r.id] == 1) keep.push_back(std::move(r));
        result.corpus.recipes = std::move(keep);
    }
    return result;
}

void save_corpus(const Corpus& corpus, const std::string& path,
                 const std::string& feature_path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus: " + path);
    std::map<std::string, Eigen::VectorXd> feats;
    for (const auto& r : corpus.recipes) {
        json j;
        j["id"] = r.id;
        j["title"] = r.title;
        j["ingredients"] = r.ingredients;
        j["instructions"] = r.instructions;
        if (feature_path.empty()) {
            std::vector<double> f(r.image_feature.data(),
                                  r.image_feature.data() +
                                      r.image_feature.size());
            j["image_feature"] = f;
        } else {
            feats.emplace(r.id, r.image_feature);
        }
        out << j.dump() << "\n";
    }
    if (!feature_path.empty()) {
        int dim = corpus.recipes.empty()
                      ? 0
                      : static_cast<int>(
                            corpus.recipes[0].image_feature.size());
        save_features(feats, dim, feature_path);
    }
}

std::optional<std::string> SynthSpec::validate() const {
    if (n_recipes <= 0) return "n_recipes must be positive";
    if (sentence_min < 1 || sentence_max > kMaxSentencesPerRecipe ||
        sentence_min > sentence_max)
        return "sentence_count_range must be a non-empty subrange of [1,19]";
    if (n_objects < 2) return "n_objects must be at least 2";
    if (n_ingredients < 1) return "n_ingredients must be at least 1";
    if (d_img < kMaxSentencesPerRecipe + 1)
        return "d_img must be at least 20 for the derived feature layout";
    return std::nullopt;
}

namespace {

// Stable 64-bit string hash (FNV-1a); std::hash is not guaranteed stable
// across runs or platforms.
std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

Eigen::VectorXd derive_image_feature(
    const std::vector<std::vector<std::string>>& instructions, int d_img) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(d_img);
    int n = static_cast<int>(instructions.size());
    // Thermometer code of the sentence count in the first 19 dims.
    for (int j = 0; j < kMaxSentencesPerRecipe && j < d_img; ++j)
        f(j) = (n > j) ? 1.0 : 0.0;
    int lo = kMaxSentencesPerRecipe;
    int rest = d_img - lo;
    if (rest > 0) {
        for (const auto& sent : instructions)
            for (const auto& tok : sent) {
                std::mt19937_64 rng(fnv1a(tok));
                std::normal_distribution<double> nd(0.0, 1.0);
                for (int j = 0; j < rest; ++j) f(lo + j) += nd(rng);
            }
        double norm = f.segment(lo, rest).norm();
        if (norm > 0) f.segment(lo, rest) /= norm;
    }
    return f;
}

Corpus synthesize_corpus(const SynthSpec& spec) {
    if (auto err = spec.validate())
        throw std::invalid_argument("invalid SynthSpec: " + *err);
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> n_sent(spec.sentence_min,
                                              spec.sentence_max);
    std::uniform_int_distribution<int> obj(0, spec.n_objects - 1);
    std::uniform_int_distribution<int> ing(0, spec.n_ingredients - 1);
    std::uniform_int_distribution<int> verb_variant(0, 1);
    std::uniform_int_distribution<int> n_ing(2, 4);
    Corpus corpus;
    corpus.split = "train";
    for (int i = 0; i < spec.n_recipes; ++i) {
        Recipe r;
        r.id = "synth" + std::to_string(i);
        r.title = "recipe " + std::to_string(i);
        int k = n_ing(rng);
        for (int j = 0; j < k; ++j)
            r.ingredients.push_back("ing" + std::to_string(ing(rng)));
        int m = n_sent(rng);
        for (int t = 0; t < m; ++t) {
            // Stage-indexed verb makes sentence order recoverable from
            // content, which the quick-thoughts objective needs.
            std::string verb = "v" + std::to_string(t) +
                               (verb_variant(rng) ? "b" : "a");
            std::vector<std::string> sent{
                verb, "the", "obj" + std::to_string(obj(rng)), "with",
                "obj" + std::to_string(obj(rng))};
            r.instructions.push_back(std::move(sent));
        }
        if (spec.image_feature_mode == FeatureMode::DerivedFromText) {
            r.image_feature = derive_image_feature(r.instructions, spec.d_img);
        } else {
            std::normal_distribution<double> nd(0.0, 1.0);
            r.image_feature.resize(spec.d_img);
            for (int j = 0; j < spec.d_img; ++j) r.image_feature(j) = nd(rng);
        }
        corpus.recipes.push_back(std::move(r));
    }
    return corpus;
}

int Vocab::index(const std::string& tok) const {
    auto it = token_to_index.find(tok);
    return it == token_to_index.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int idx) const {
    return index_to_token.at(idx);
}

Vocab build_vocab(const Corpus& corpus, int min_freq) {
    if (corpus.recipes.empty())
        throw std::invalid_argument("build_vocab: empty corpus");
    std::map<std::string, int> freq;
    for (const auto& r : corpus.recipes) {
        for (const auto& t : r.ingredients) ++freq[t];
        for (const auto& s : r.instructions)
            for (const auto& t : s) ++freq[t];
    }
    std::vector<std::pair<std::string, int>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a,
                                                    const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    v.index_to_token = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (const auto& [tok, n] : items) {
        if (n < min_freq) continue;
        v.token_to_index.emplace(tok, v.size());
        v.index_to_token.push_back(tok);
    }
    return v;
}

EncodedRecipe encode_recipe(const Recipe& recipe, const Vocab& vocab) {
    EncodedRecipe enc;
    enc.id = recipe.id;
    for (const auto& t : recipe.ingredients)
        enc.ingredients.push_back(vocab.index(t));
    enc.target.push_back(Vocab::kBos);
    for (const auto& s : recipe.instructions) {
        std::vector<int> sent;
        for (const auto& t : s) {
            int idx = vocab.index(t);
            sent.push_back(idx);
            enc.target.push_back(idx);
        }
        enc.sentences.push_back(std::move(sent));
    }
    enc.target.push_back(Vocab::kEos);
    return enc;
}

std::vector<std::vector<std::string>> decode_sentences(
    const EncodedRecipe& enc, const Vocab& vocab) {
    std::vector<std::vector<std::string>> out;
    for (const auto& s : enc.sentences) {
        std::vector<std::string> sent;
        for (int idx : s) sent.push_back(vocab.token(idx));
        out.push_back(std::move(sent));
    }
    return out;
}

}  // namespace sgn::corpus
