#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sgn::corpus {

inline constexpr int kMaxSentencesPerRecipe = 19;

struct Recipe {
    std::string id;
    std::string title;
    std::vector<std::string> ingredients;  // one vocabulary unit each
    std::vector<std::vector<std::string>> instructions;  // sentences of words
    Eigen::VectorXd image_feature;
};

struct Corpus {
    std::vector<Recipe> recipes;
    std::string split;  // train | val | test
};

// Returns an error description when a Recipe invariant is violated.
std::optional<std::string> validate_recipe(const Recipe& r, int d_img);

struct RecordError {
    std::string id;
    std::string message;
};

struct LoadResult {
    Corpus corpus;
    std::vector<RecordError> errors;
};

// Line-delimited JSON records with fields id, title, ingredients,
// instructions and optionally image_feature; features may instead live in
// a sidecar file keyed by id (see save_features / load_features).
LoadResult load_corpus(const std::string& path, const std::string& split,
                       const std::string& feature_path = "", int d_img = 512);
void save_corpus(const Corpus& corpus, const std::string& path,
                 const std::string& feature_path = "");

void save_features(const std::map<std::string, Eigen::VectorXd>& feats,
                   int d_img, const std::string& path);
std::map<std::string, Eigen::VectorXd> load_features(const std::string& path,
                                                     int* d_img_out = nullptr);

enum class FeatureMode { DerivedFromText, Random };

struct SynthSpec {
    int n_recipes = 100;
    int sentence_min = 2;
    int sentence_max = 8;
    int n_objects = 12;     // object token inventory size
    int n_ingredients = 10;
    FeatureMode image_feature_mode = FeatureMode::DerivedFromText;
    std::uint64_t seed = 1;
    int d_img = 64;

    std::optional<std::string> validate() const;
};

// Deterministic in the spec (including seed). Sentences come from a small
// stage-indexed grammar so sentence order is predictable from content, and
// derived-from-text features are a pure function of the instructions.
Corpus synthesize_corpus(const SynthSpec& spec);

// Pure function of the instruction sentences (derived-from-text mode).
Eigen::VectorXd derive_image_feature(
    const std::vector<std::vector<std::string>>& instructions, int d_img);

struct Vocab {
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    std::map<std::string, int> token_to_index;
    std::vector<std::string> index_to_token;  // includes reserved entries

    int size() const { return static_cast<int>(index_to_token.size()); }
    int index(const std::string& token) const;
    const std::string& token(int index) const;
};

// Tokens below min_freq map to UNK; ordering is frequency descending then
// lexicographic, after the four reserved slots.
Vocab build_vocab(const Corpus& corpus, int min_freq = 1);

struct EncodedRecipe {
    std::string id;
    std::vector<std::vector<int>> sentences;
    std::vector<int> ingredients;
    std::vector<int> target;  // BOS + all instruction tokens + EOS
};

EncodedRecipe encode_recipe(const Recipe& recipe, const Vocab& vocab);
std::vector<std::vector<std::string>> decode_sentences(
    const EncodedRecipe& enc, const Vocab& vocab);

}  // namespace sgn::corpus
