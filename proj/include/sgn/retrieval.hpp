#pragma once

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sgn/autodiff.hpp"
#include "sgn/corpus.hpp"
#include "sgn/metrics.hpp"
#include "sgn/treeenc.hpp"
#include "sgn/treelib.hpp"

namespace sgn::retrieval {

enum class EncoderKind { Recurrent, Transformer };

struct Config {
    EncoderKind encoder = EncoderKind::Recurrent;
    int word_dim = 32;
    int hidden = 32;       // recurrent encoder hidden size per direction
    int enc_layers = 2;    // transformer-encoder depth (paper preset 4)
    int enc_heads = 2;
    int common_dim = 128;  // joint embedding space (paper preset 1024)
    int d_img = 64;
    double margin = 0.3;
    bool use_tree = true;
    double lr = 0.01;
    int lr_drop_epoch = 30;  // x0.1 at this epoch
    int batch = 32;
    int epochs = 20;
    std::uint64_t seed = 1;
    treeenc::ParsedTreeConfig tree_cfg;

    static Config paper();  // common 1024, batch 64, lr 1e-4, 8-head GAT
};

// Optional precomputed sentence vectors keyed by recipe id (one row per
// instruction sentence); when absent the trainable sentence encoder is
// used.
using SentenceVectors = std::map<std::string, std::vector<Eigen::RowVectorXd>>;

void init_params(ad::ParamStore& params, const Config& cfg, int vocab_size,
                 std::mt19937_64& rng);

ad::Var encode_image_side(ad::Tape& tape, ad::ParamBinding& p,
                          const Config& cfg, const Eigen::VectorXd& f_img);

// concat(F_ing, F_ins, F_tree) fused into the common space.
ad::Var encode_recipe_side(ad::Tape& tape, ad::ParamBinding& p,
                           const Config& cfg,
                           const corpus::EncodedRecipe& recipe,
                           const tree::SentenceTree& tree,
                           const SentenceVectors* precomputed = nullptr);

// BatchHard over in-batch pairs: the paired item is the positive, the
// closest in-batch non-pair the negative, hinged at zero, both
// directions, mean over pairs.
ad::Var triplet_batchhard_loss(ad::Tape& tape, ad::Var img_embs,
                               ad::Var rec_embs, double margin);

struct TrainLogEntry {
    int epoch;
    double loss;
    double val_r_at_1;  // -1 when no validation corpus was given
};

struct TrainResult {
    std::vector<TrainLogEntry> log;
};

TrainResult train_retrieval(
    ad::ParamStore& params, const corpus::Corpus& train,
    const corpus::Vocab& vocab,
    const std::map<std::string, tree::SentenceTree>& trees, const Config& cfg,
    const corpus::Corpus* val = nullptr,
    const std::map<std::string, tree::SentenceTree>* val_trees = nullptr);

struct EmbeddingDump {
    Eigen::MatrixXd image;   // row per recipe
    Eigen::MatrixXd recipe;  // paired rows
    std::vector<std::string> ids;
};

EmbeddingDump embed_corpus(ad::ParamStore& params, const Config& cfg,
                           const corpus::Corpus& corpus,
                           const corpus::Vocab& vocab,
                           const std::map<std::string, tree::SentenceTree>&
                               trees,
                           const SentenceVectors* precomputed = nullptr);

void save_embedding_dump(const EmbeddingDump& dump, const std::string& path);

}  // namespace sgn::retrieval
