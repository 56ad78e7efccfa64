// Experiment driver: synthesize | parse-trees | train | eval | ablate.
// Every artifact carries the resolved configuration that produced it.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "sgn/checkpoint.hpp"
#include "sgn/corpus.hpp"
#include "sgn/generator.hpp"
#include "sgn/img2tree.hpp"
#include "sgn/metrics.hpp"
#include "sgn/onlstm.hpp"
#include "sgn/retrieval.hpp"
#include "sgn/treeenc.hpp"
#include "sgn/treelib.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sgn;

namespace {

// ---------- config <-> json ----------

json r2t_to_json(const onlstm::Config& c) {
    return {{"embed_dim", c.embed_dim}, {"hidden", c.hidden},
            {"layers", c.layers},       {"k_distractors", c.k_distractors},
            {"min_sentences", c.min_sentences},
            {"lr", c.lr},               {"batch", c.batch},
            {"epochs", c.epochs},       {"seed", c.seed}};
}

onlstm::Config r2t_from_json(const json& j) {
    onlstm::Config c;
    c.embed_dim = j.at("embed_dim");
    c.hidden = j.at("hidden");
    c.layers = j.at("layers");
    c.k_distractors = j.at("k_distractors");
    c.min_sentences = j.at("min_sentences");
    c.lr = j.at("lr");
    c.batch = j.at("batch");
    c.epochs = j.at("epochs");
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json gen_to_json(const generator::Config& c) {
    return {{"model_dim", c.model_dim},
            {"layers", c.layers},
            {"heads", c.heads},
            {"ffn_dim", c.ffn_dim},
            {"max_len", c.max_len},
            {"d_img", c.d_img},
            {"lambda1", c.weights.lambda1},
            {"lambda2", c.weights.lambda2},
            {"use_tree", c.use_tree},
            {"lr", c.lr},
            {"lr_decay", c.lr_decay},
            {"batch", c.batch},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"treegen_hidden", c.treegen.hidden},
            {"treegen_layers", c.treegen.layers},
            {"gat_heads", c.gat.heads},
            {"gat_out_dim", c.gat.out_dim}};
}

generator::Config gen_from_json(const json& j) {
    generator::Config c;
    c.model_dim = j.at("model_dim");
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.ffn_dim = j.at("ffn_dim");
    c.max_len = j.at("max_len");
    c.d_img = j.at("d_img");
    c.weights.lambda1 = j.at("lambda1");
    c.weights.lambda2 = j.at("lambda2");
    c.use_tree = j.at("use_tree");
    c.lr = j.at("lr");
    c.lr_decay = j.at("lr_decay");
    c.batch = j.at("batch");
    c.epochs = j.at("epochs");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.treegen.hidden = j.at("treegen_hidden");
    c.treegen.layers = j.at("treegen_layers");
    c.gat.heads = j.at("gat_heads");
    c.gat.out_dim = j.at("gat_out_dim");
    return c;
}

json ret_to_json(const retrieval::Config& c) {
    return {{"encoder", c.encoder == retrieval::EncoderKind::Recurrent
                            ? "recurrent"
                            : "transformer"},
            {"word_dim", c.word_dim},
            {"hidden", c.hidden},
            {"enc_layers", c.enc_layers},
            {"enc_heads", c.enc_heads},
            {"common_dim", c.common_dim},
            {"d_img", c.d_img},
            {"margin", c.margin},
            {"use_tree", c.use_tree},
            {"lr", c.lr},
            {"lr_drop_epoch", c.lr_drop_epoch},
            {"batch", c.batch},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"sen_dim", c.tree_cfg.sen_dim},
            {"depth_dim", c.tree_cfg.depth_dim},
            {"gat_heads", c.tree_cfg.heads},
            {"gat_out_dim", c.tree_cfg.out_dim}};
}

retrieval::Config ret_from_json(const json& j) {
    retrieval::Config c;
    c.encoder = j.at("encoder") == "transformer"
                    ? retrieval::EncoderKind::Transformer
                    : retrieval::EncoderKind::Recurrent;
    c.word_dim = j.at("word_dim");
    c.hidden = j.at("hidden");
    c.enc_layers = j.at("enc_layers");
    c.enc_heads = j.at("enc_heads");
    c.common_dim = j.at("common_dim");
    c.d_img = j.at("d_img");
    c.margin = j.at("margin");
    c.use_tree = j.at("use_tree");
    c.lr = j.at("lr");
    c.lr_drop_epoch = j.at("lr_drop_epoch");
    c.batch = j.at("batch");
    c.epochs = j.at("epochs");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.tree_cfg.sen_dim = j.at("sen_dim");
    c.tree_cfg.depth_dim = j.at("depth_dim");
    c.tree_cfg.heads = j.at("gat_heads");
    c.tree_cfg.out_dim = j.at("gat_out_dim");
    return c;
}

json vocab_to_json(const corpus::Vocab& v) { return json(v.index_to_token); }

corpus::Vocab vocab_from_json(const json& j) {
    corpus::Vocab v;
    v.index_to_token = j.get<std::vector<std::string>>();
    for (size_t i = 0; i < v.index_to_token.size(); ++i)
        v.token_to_index[v.index_to_token[i]] = static_cast<int>(i);
    return v;
}

// ---------- artifact helpers ----------

void write_text(const std::string& path, const std::string& body) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << body;
}

corpus::Corpus must_load_corpus(const std::string& path,
                                const std::string& features, int d_img,
                                const std::string& split = "") {
    auto res = corpus::load_corpus(path, split, features, d_img);
    if (!res.errors.empty())
        throw std::runtime_error("corpus " + path + ": " +
                                 res.errors.front().id + ": " +
                                 res.errors.front().message);
    if (res.corpus.recipes.empty())
        throw std::runtime_error("corpus " + path + ": no valid recipes");
    return res.corpus;
}

std::map<std::string, tree::SentenceTree> load_tree_map(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read tree file " + path);
    std::map<std::string, tree::SentenceTree> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("tree file " + path +
                                     ": malformed line: " + line);
        out[line.substr(0, tab)] = tree::tree_from_text(line.substr(tab + 1));
    }
    return out;
}

// Bars-only SVG histogram; enough for length and rank distributions.
void write_svg_hist(const std::string& path, const std::string& title,
                    const std::vector<double>& values, int n_bins) {
    double lo = values.empty() ? 0.0 : values[0], hi = lo;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) hi = lo + 1.0;
    std::vector<int> bins(n_bins, 0);
    for (double v : values) {
        int b = static_cast<int>((v - lo) / (hi - lo) * n_bins);
        ++bins[std::min(b, n_bins - 1)];
    }
    int peak = 1;
    for (int b : bins) peak = std::max(peak, b);
    const int w = 640, h = 360, pad = 40;
    double bw = static_cast<double>(w - 2 * pad) / n_bins;
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w
        << "' height='" << h << "'>\n"
        << "<text x='" << pad << "' y='20' font-size='14'>" << title
        << " (n=" << values.size() << ", range " << lo << ".." << hi
        << ")</text>\n";
    for (int i = 0; i < n_bins; ++i) {
        double bh = static_cast<double>(bins[i]) / peak * (h - 2 * pad);
        svg << "<rect x='" << pad + i * bw << "' y='" << h - pad - bh
            << "' width='" << bw * 0.9 << "' height='" << bh
            << "' fill='steelblue'/>\n";
    }
    svg << "<line x1='" << pad << "' y1='" << h - pad << "' x2='" << w - pad
        << "' y2='" << h - pad << "' stroke='black'/>\n</svg>\n";
    write_text(path, svg.str());
}

std::vector<std::string> tokens_to_words(const std::vector<int>& toks,
                                         const corpus::Vocab& vocab) {
    std::vector<std::string> out;
    for (int t : toks) {
        if (t == corpus::Vocab::kBos || t == corpus::Vocab::kEos ||
            t == corpus::Vocab::kPad)
            continue;
        out.push_back(vocab.token(t));
    }
    return out;
}

std::vector<std::string> reference_words(const corpus::Recipe& r) {
    std::vector<std::string> out;
    for (const auto& s : r.instructions)
        out.insert(out.end(), s.begin(), s.end());
    return out;
}

// ---------- shared evaluation paths ----------

struct GenEvalOut {
    metrics::GenEvalResult result;
    std::vector<double> lengths;
};

GenEvalOut eval_generation(ad::ParamStore& params,
                           const generator::Config& cfg,
                           const corpus::Vocab& vocab,
                           const corpus::Corpus& eval_set) {
    std::vector<std::vector<std::string>> cands, refs;
    std::vector<double> logprobs;
    GenEvalOut out;
    for (const auto& r : eval_set.recipes) {
        auto enc = corpus::encode_recipe(r, vocab);
        auto toks = generator::generate_recipe(params, cfg, vocab, r);
        cands.push_back(tokens_to_words(toks, vocab));
        refs.push_back(reference_words(r));
        out.lengths.push_back(static_cast<double>(cands.back().size()));

        ad::Tape t;
        ad::ParamBinding p(t, params);
        ad::Var f_tree;
        if (cfg.use_tree) {
            auto v = img2tree::generate_tree(params, cfg.treegen,
                                             r.image_feature,
                                             img2tree::DecodeMode::Argmax,
                                             cfg.treegen.max_nodes);
            f_tree = treeenc::embed_generated_tree(t, p, "gat", cfg.gat, v);
        }
        ad::Var memory = generator::build_memory(t, p, cfg, r.image_feature,
                                                 enc.ingredients, f_tree);
        auto fo = generator::teacher_forced_loss(t, p, cfg, enc.target,
                                                 memory);
        logprobs.insert(logprobs.end(), fo.token_logprobs.begin(),
                        fo.token_logprobs.end());
    }
    out.result.perplexity = metrics::perplexity(logprobs);
    out.result.bleu = metrics::bleu(cands, refs);
    out.result.rouge_l = metrics::rouge_l_corpus(cands, refs);
    out.result.avg_length = metrics::avg_length(cands);
    return out;
}

generator::Config gen_preset(const std::string& name) {
    return name == "paper" ? generator::Config::paper() : generator::Config{};
}

onlstm::Config r2t_preset(const std::string& name) {
    return name == "paper" ? onlstm::Config::paper() : onlstm::Config{};
}

retrieval::Config ret_preset(const std::string& name) {
    return name == "paper" ? retrieval::Config::paper() : retrieval::Config{};
}

// ---------- commands ----------

struct SynthArgs {
    std::string out = "out";
    corpus::SynthSpec spec;
    std::string feature_mode = "derived";
    double train_frac = 0.8, val_frac = 0.1;
};

int cmd_synthesize(const SynthArgs& a) {
    corpus::SynthSpec spec = a.spec;
    spec.image_feature_mode = a.feature_mode == "random"
                                  ? corpus::FeatureMode::Random
                                  : corpus::FeatureMode::DerivedFromText;
    if (a.feature_mode != "random" && a.feature_mode != "derived")
        throw std::runtime_error("invalid feature_mode: " + a.feature_mode);
    if (auto err = spec.validate()) throw std::runtime_error(*err);
    if (a.train_frac <= 0 || a.val_frac < 0 ||
        a.train_frac + a.val_frac >= 1.0)
        throw std::runtime_error(
            "invalid train_frac/val_frac: fractions must leave a test split");
    corpus::Corpus full = corpus::synthesize_corpus(spec);
    fs::create_directories(a.out);

    auto slice = [&](size_t from, size_t to, const std::string& split) {
        corpus::Corpus c;
        c.split = split;
        c.recipes.assign(full.recipes.begin() + from,
                         full.recipes.begin() + to);
        return c;
    };
    size_t n = full.recipes.size();
    size_t n_train = static_cast<size_t>(n * a.train_frac);
    size_t n_val = static_cast<size_t>(n * a.val_frac);
    corpus::save_corpus(full, a.out + "/corpus.jsonl",
                        a.out + "/features.bin");
    corpus::save_corpus(slice(0, n_train, "train"), a.out + "/train.jsonl");
    corpus::save_corpus(slice(n_train, n_train + n_val, "val"),
                        a.out + "/val.jsonl");
    corpus::save_corpus(slice(n_train + n_val, n, "test"),
                        a.out + "/test.jsonl");

    json stamp = {{"command", "synthesize"},
                  {"n_recipes", spec.n_recipes},
                  {"sentence_min", spec.sentence_min},
                  {"sentence_max", spec.sentence_max},
                  {"n_objects", spec.n_objects},
                  {"n_ingredients", spec.n_ingredients},
                  {"feature_mode", a.feature_mode},
                  {"d_img", spec.d_img},
                  {"seed", spec.seed},
                  {"train_frac", a.train_frac},
                  {"val_frac", a.val_frac}};
    write_text(a.out + "/resolved_config.json", stamp.dump(2) + "\n");
    std::cout << "wrote " << n << " recipes to " << a.out << "\n";
    return 0;
}

struct PathArgs {
    std::string corpus, features, checkpoint, trees, out, log, report;
    std::string preset = "desk";
    std::string eval_corpus, val_corpus;
    int d_img = 64;
    bool plots = false;
};

int cmd_parse_trees(const PathArgs& a) {
    if (!fs::exists(a.checkpoint))
        throw std::runtime_error("missing checkpoint " + a.checkpoint +
                                 "; run `train recipe2tree` first");
    std::string meta;
    ad::ParamStore params = ckpt::load(a.checkpoint, &meta);
    json m = json::parse(meta);
    onlstm::Config cfg = r2t_from_json(m.at("config"));
    corpus::Vocab vocab = vocab_from_json(m.at("vocab"));
    auto data = must_load_corpus(a.corpus, a.features, a.d_img);
    auto trees = onlstm::derive_pseudo_trees(params, data, vocab, cfg);
    std::ostringstream body;
    for (const auto& r : data.recipes)
        body << r.id << "\t" << tree::tree_to_text(trees.at(r.id)) << "\n";
    write_text(a.out, body.str());
    std::cout << "wrote " << data.recipes.size() << " trees to " << a.out
              << "\n";
    return 0;
}

// Shared knobs a train subcommand may override on top of the preset.
struct TrainOverrides {
    int epochs = -1, batch = -1;
    double lr = -1.0;
    long long seed = -1;
    int use_tree = -1;  // tri-state: unset / 0 / 1
};

template <typename Cfg>
void apply_overrides(Cfg& cfg, const TrainOverrides& o) {
    if (o.epochs >= 0) cfg.epochs = o.epochs;
    if (o.batch >= 0) cfg.batch = o.batch;
    if (o.lr >= 0) cfg.lr = o.lr;
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
}

void require_trees(const std::string& path, const std::string& stage) {
    if (path.empty() || !fs::exists(path))
        throw std::runtime_error(
            "train " + stage +
            " needs a pseudo-tree file (--trees); run `parse-trees` first");
}

std::string log_path(const PathArgs& a) {
    return a.log.empty() ? a.out + ".log.jsonl" : a.log;
}

int cmd_train_recipe2tree(const PathArgs& a, const TrainOverrides& o) {
    onlstm::Config cfg = r2t_preset(a.preset);
    apply_overrides(cfg, o);
    auto data = must_load_corpus(a.corpus, a.features, a.d_img);
    auto vocab = corpus::build_vocab(data);
    ad::ParamStore params;
    auto result = onlstm::train_recipe2tree(params, data, vocab, cfg);
    std::ostringstream log;
    for (const auto& e : result.log)
        log << json{{"epoch", e.epoch},
                    {"loss", e.loss},
                    {"accuracy", e.accuracy}}
                   .dump()
            << "\n";
    write_text(log_path(a), log.str());
    json meta = {{"stage", "recipe2tree"},
                 {"config", r2t_to_json(cfg)},
                 {"vocab", vocab_to_json(vocab)}};
    fs::path outp(a.out);
    if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
    ckpt::save(params, meta.dump(), a.out);
    std::cout << "final loss " << result.log.back().loss << " accuracy "
              << result.log.back().accuracy << "\n";
    return 0;
}

int cmd_train_sgn(const PathArgs& a, const TrainOverrides& o) {
    require_trees(a.trees, "sgn");
    generator::Config cfg = gen_preset(a.preset);
    cfg.d_img = a.d_img;
    apply_overrides(cfg, o);
    if (o.use_tree >= 0) cfg.use_tree = o.use_tree != 0;
    auto data = must_load_corpus(a.corpus, a.features, a.d_img);
    auto vocab = corpus::build_vocab(data);
    auto trees = load_tree_map(a.trees);
    ad::ParamStore params;
    auto result = generator::train_sgn(params, data, vocab, trees, cfg);
    std::ostringstream log;
    for (const auto& e : result.log)
        log << json{{"epoch", e.epoch},
                    {"loss", e.loss},
                    {"l_gen", e.l_gen},
                    {"l_tree", e.l_tree}}
                   .dump()
            << "\n";
    write_text(log_path(a), log.str());
    json meta = {{"stage", "sgn"},
                 {"config", gen_to_json(cfg)},
                 {"vocab", vocab_to_json(vocab)}};
    fs::path outp(a.out);
    if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
    ckpt::save(params, meta.dump(), a.out);
    std::cout << "final loss " << result.log.back().loss << "\n";
    return 0;
}

int cmd_train_retrieval(const PathArgs& a, const TrainOverrides& o) {
    require_trees(a.trees, "retrieval");
    retrieval::Config cfg = ret_preset(a.preset);
    cfg.d_img = a.d_img;
    apply_overrides(cfg, o);
    if (o.use_tree >= 0) cfg.use_tree = o.use_tree != 0;
    auto data = must_load_corpus(a.corpus, a.features, a.d_img);
    auto vocab = corpus::build_vocab(data);
    auto trees = load_tree_map(a.trees);
    ad::ParamStore params;
    retrieval::TrainResult result;
    if (!a.val_corpus.empty()) {
        auto val = must_load_corpus(a.val_corpus, a.features, a.d_img);
        result = retrieval::train_retrieval(params, data, vocab, trees, cfg,
                                            &val, &trees);
    } else {
        result = retrieval::train_retrieval(params, data, vocab, trees, cfg);
    }
    std::ostringstream log;
    for (const auto& e : result.log)
        log << json{{"epoch", e.epoch},
                    {"loss", e.loss},
                    {"val_r_at_1", e.val_r_at_1}}
                   .dump()
            << "\n";
    write_text(log_path(a), log.str());
    json meta = {{"stage", "retrieval"},
                 {"config", ret_to_json(cfg)},
                 {"vocab", vocab_to_json(vocab)}};
    fs::path outp(a.out);
    if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
    ckpt::save(params, meta.dump(), a.out);
    std::cout << "final loss " << result.log.back().loss << "\n";
    return 0;
}

int cmd_eval_generation(const PathArgs& a) {
    if (!fs::exists(a.checkpoint))
        throw std::runtime_error("missing checkpoint " + a.checkpoint);
    std::string meta;
    ad::ParamStore params = ckpt::load(a.checkpoint, &meta);
    json m = json::parse(meta);
    generator::Config cfg = gen_from_json(m.at("config"));
    corpus::Vocab vocab = vocab_from_json(m.at("vocab"));
    auto data = must_load_corpus(a.corpus, a.features, cfg.d_img);
    GenEvalOut out = eval_generation(params, cfg, vocab, data);
    json report = {{"task", "generation"},
                   {"perplexity", out.result.perplexity},
                   {"bleu", out.result.bleu},
                   {"rouge_l", out.result.rouge_l},
                   {"avg_length", out.result.avg_length},
                   {"n_recipes", data.recipes.size()},
                   {"config", m.at("config")}};
    write_text(a.report, report.dump(2) + "\n");
    if (a.plots)
        write_svg_hist(a.report + ".lengths.svg",
                       "generated length distribution", out.lengths, 20);
    std::cout << report.dump(2) << "\n";
    return 0;
}

struct RetEvalArgs {
    int subset_size = 100;
    int n_subsets = 10;
    std::vector<int> ks = {1, 5, 10};
    std::uint64_t seed = 1;
};

int cmd_eval_retrieval(const PathArgs& a, const RetEvalArgs& ra) {
    if (!fs::exists(a.checkpoint))
        throw std::runtime_error("missing checkpoint " + a.checkpoint);
    require_trees(a.trees, "eval retrieval");
    std::string meta;
    ad::ParamStore params = ckpt::load(a.checkpoint, &meta);
    json m = json::parse(meta);
    retrieval::Config cfg = ret_from_json(m.at("config"));
    corpus::Vocab vocab = vocab_from_json(m.at("vocab"));
    auto data = must_load_corpus(a.corpus, a.features, cfg.d_img);
    auto trees = load_tree_map(a.trees);
    auto dump = retrieval::embed_corpus(params, cfg, data, vocab, trees);
    auto i2r = metrics::ret_metrics(dump.image, dump.recipe, ra.ks,
                                    ra.subset_size, ra.n_subsets, ra.seed,
                                    "im2recipe");
    auto r2i = metrics::ret_metrics(dump.recipe, dump.image, ra.ks,
                                    ra.subset_size, ra.n_subsets, ra.seed,
                                    "recipe2im");
    auto to_json = [](const metrics::RetEvalResult& r) {
        json rk;
        for (auto& [k, v] : r.r_at_k) rk["r_at_" + std::to_string(k)] = v;
        return json{{"direction", r.direction},
                    {"medr", r.medr},
                    {"recall", rk},
                    {"subset_size", r.subset_size},
                    {"n_subsets", r.n_subsets}};
    };
    json report = {{"task", "retrieval"},
                   {"im2recipe", to_json(i2r)},
                   {"recipe2im", to_json(r2i)},
                   {"n_pairs", dump.ids.size()},
                   {"config", m.at("config")}};
    write_text(a.report, report.dump(2) + "\n");
    if (a.plots) {
        auto rep = metrics::rank(dump.image, dump.recipe);
        std::vector<double> ranks(rep.ranks.begin(), rep.ranks.end());
        write_svg_hist(a.report + ".ranks.svg", "im2recipe rank distribution",
                       ranks, 20);
    }
    std::cout << report.dump(2) << "\n";
    return 0;
}

struct AblateArgs {
    std::string task = "generation";
    std::vector<long long> seeds = {1, 2, 3};
    int subset_size = 100;
};

int cmd_ablate(const PathArgs& a, const TrainOverrides& o,
               const AblateArgs& ab) {
    require_trees(a.trees, "ablate");
    auto train_set = must_load_corpus(a.corpus, a.features, a.d_img);
    auto eval_set = must_load_corpus(
        a.eval_corpus.empty() ? a.corpus : a.eval_corpus, a.features, a.d_img);
    auto vocab = corpus::build_vocab(train_set);
    auto trees = load_tree_map(a.trees);
    json arms = json::array();
    int wins = 0;
    for (long long seed : ab.seeds) {
        json entry = {{"seed", seed}};
        double with_tree = 0.0, without_tree = 0.0;
        for (bool use_tree : {true, false}) {
            double score = 0.0;
            if (ab.task == "generation") {
                generator::Config cfg = gen_preset(a.preset);
                cfg.d_img = a.d_img;
                apply_overrides(cfg, o);
                cfg.seed = static_cast<std::uint64_t>(seed);
                cfg.use_tree = use_tree;
                ad::ParamStore params;
                generator::train_sgn(params, train_set, vocab, trees, cfg);
                score = eval_generation(params, cfg, vocab, eval_set)
                            .result.bleu;
            } else if (ab.task == "retrieval") {
                retrieval::Config cfg = ret_preset(a.preset);
                cfg.d_img = a.d_img;
                apply_overrides(cfg, o);
                cfg.seed = static_cast<std::uint64_t>(seed);
                cfg.use_tree = use_tree;
                ad::ParamStore params;
                retrieval::train_retrieval(params, train_set, vocab, trees,
                                           cfg);
                auto dump = retrieval::embed_corpus(params, cfg, eval_set,
                                                    vocab, trees);
                auto r = metrics::ret_metrics(
                    dump.image, dump.recipe, {1},
                    std::min<int>(ab.subset_size,
                                  static_cast<int>(dump.ids.size())),
                    10, static_cast<std::uint64_t>(seed), "im2recipe");
                score = r.r_at_k.at(1);
            } else {
                throw std::runtime_error("unknown ablate task: " + ab.task);
            }
            (use_tree ? with_tree : without_tree) = score;
        }
        double delta = with_tree - without_tree;
        if (delta >= 0) ++wins;
        entry["with_tree"] = with_tree;
        entry["without_tree"] = without_tree;
        entry["delta"] = delta;
        entry["delta_sign"] = delta > 0 ? 1 : (delta < 0 ? -1 : 0);
        arms.push_back(entry);
    }
    json report = {{"task", ab.task},
                   {"metric", ab.task == "generation" ? "bleu" : "r_at_1"},
                   {"arms", arms},
                   {"wins", wins},
                   {"n_seeds", ab.seeds.size()},
                   {"preset", a.preset}};
    write_text(a.report, report.dump(2) + "\n");
    std::cout << report.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structure-aware recipe generation and retrieval"};
    app.require_subcommand(1);
    app.set_config("--config", "", "config file (ini/toml key=value)");

    SynthArgs sa;
    auto* synth = app.add_subcommand("synthesize", "write a synthetic corpus");
    synth->add_option("--out", sa.out, "output directory");
    synth->add_option("--n", sa.spec.n_recipes, "recipe count");
    synth->add_option("--seed", sa.spec.seed, "rng seed");
    synth->add_option("--sentence-min", sa.spec.sentence_min, "");
    synth->add_option("--sentence-max", sa.spec.sentence_max, "");
    synth->add_option("--objects", sa.spec.n_objects, "");
    synth->add_option("--ingredients", sa.spec.n_ingredients, "");
    synth->add_option("--d-img", sa.spec.d_img, "image feature dim");
    synth->add_option("--feature-mode", sa.feature_mode, "derived|random");
    synth->add_option("--train-frac", sa.train_frac, "");
    synth->add_option("--val-frac", sa.val_frac, "");

    PathArgs pa;
    TrainOverrides to;
    RetEvalArgs ra;
    AblateArgs ab;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--corpus", pa.corpus, "corpus jsonl")->required();
        cmd->add_option("--features", pa.features, "feature sidecar");
        cmd->add_option("--d-img", pa.d_img, "image feature dim");
        cmd->add_option("--preset", pa.preset, "desk|paper");
    };

    auto* pt = app.add_subcommand("parse-trees",
                                  "derive pseudo-label trees per recipe");
    add_common(pt);
    pt->add_option("--checkpoint", pa.checkpoint, "recipe2tree checkpoint")
        ->required();
    pt->add_option("--out", pa.out, "tree map tsv")->required();

    auto* tr = app.add_subcommand("train", "train a pipeline stage");
    std::string stage;
    tr->add_option("stage", stage, "recipe2tree|sgn|retrieval")->required();
    add_common(tr);
    tr->add_option("--trees", pa.trees, "pseudo-tree tsv (sgn/retrieval)");
    tr->add_option("--val-corpus", pa.val_corpus, "validation corpus");
    tr->add_option("--out", pa.out, "checkpoint path")->required();
    tr->add_option("--log", pa.log, "epoch log path");
    tr->add_option("--epochs", to.epochs, "");
    tr->add_option("--batch", to.batch, "");
    tr->add_option("--lr", to.lr, "");
    tr->add_option("--seed", to.seed, "");
    bool flag_use_tree = false, flag_no_tree = false;
    tr->add_flag("--use-tree", flag_use_tree, "enable the tree branch");
    tr->add_flag("--no-tree", flag_no_tree, "zero the tree branch");

    auto* ev = app.add_subcommand("eval", "evaluate a trained stage");
    std::string task;
    ev->add_option("task", task, "generation|retrieval")->required();
    add_common(ev);
    ev->add_option("--checkpoint", pa.checkpoint, "")->required();
    ev->add_option("--trees", pa.trees, "tree tsv (retrieval)");
    ev->add_option("--report", pa.report, "report json")->required();
    ev->add_flag("--plots", pa.plots, "also write svg histograms");
    ev->add_option("--subset-size", ra.subset_size, "");
    ev->add_option("--n-subsets", ra.n_subsets, "");
    ev->add_option("--seed", ra.seed, "subset sampling seed");

    auto* abcmd = app.add_subcommand(
        "ablate", "matched-seed with/without-tree comparison");
    add_common(abcmd);
    abcmd->add_option("--eval-corpus", pa.eval_corpus, "held-out corpus");
    abcmd->add_option("--trees", pa.trees, "pseudo-tree tsv")->required();
    abcmd->add_option("--task", ab.task, "generation|retrieval");
    abcmd->add_option("--seeds", ab.seeds, "matched seeds");
    abcmd->add_option("--subset-size", ab.subset_size, "");
    abcmd->add_option("--epochs", to.epochs, "");
    abcmd->add_option("--batch", to.batch, "");
    abcmd->add_option("--lr", to.lr, "");
    abcmd->add_option("--report", pa.report, "report json")->required();

    CLI11_PARSE(app, argc, argv);
    if (flag_no_tree) to.use_tree = 0;
    else if (flag_use_tree) to.use_tree = 1;
    try {
        if (*synth) return cmd_synthesize(sa);
        if (*pt) return cmd_parse_trees(pa);
        if (*tr) {
            if (stage == "recipe2tree") return cmd_train_recipe2tree(pa, to);
            if (stage == "sgn") return cmd_train_sgn(pa, to);
            if (stage == "retrieval") return cmd_train_retrieval(pa, to);
            throw std::runtime_error("unknown stage: " + stage);
        }
        if (*ev) {
            if (task == "generation") return cmd_eval_generation(pa);
            if (task == "retrieval") return cmd_eval_retrieval(pa, ra);
            throw std::runtime_error("unknown eval task: " + task);
        }
        if (*abcmd) return cmd_ablate(pa, to, ab);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
