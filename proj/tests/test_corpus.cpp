#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sgn/corpus.hpp"

using namespace sgn;
namespace fs = std::filesystem;

namespace {

corpus::Recipe make_recipe(const std::string& id, int n_sentences,
                           int d_img = 8) {
    corpus::Recipe r;
    r.id = id;
    r.title = "t";
    r.ingredients = {"flour", "salt"};
    for (int i = 0; i < n_sentences; ++i)
        r.instructions.push_back({"mix", "bowl" + std::to_string(i)});
    r.image_feature = Eigen::VectorXd::Constant(d_img, 0.25);
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path tmpdir() {
    auto p = fs::temp_directory_path() / "sgn_corpus_test";
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("recipe validation") {
    CHECK(!corpus::validate_recipe(make_recipe("a", 3), 8).has_value());

    auto too_many = make_recipe("b", 20);
    auto err = corpus::validate_recipe(too_many, 8);
    REQUIRE(err.has_value());
    CHECK(err->find("19") != std::string::npos);

    auto empty = make_recipe("c", 0);
    CHECK(corpus::validate_recipe(empty, 8).has_value());

    auto wrong_dim = make_recipe("d", 2);
    CHECK(corpus::validate_recipe(wrong_dim, 16).has_value());

    auto empty_sentence = make_recipe("e", 2);
    empty_sentence.instructions[1].clear();
    CHECK(corpus::validate_recipe(empty_sentence, 8).has_value());

    auto no_ing = make_recipe("f", 2);
    no_ing.ingredients.clear();
    CHECK(corpus::validate_recipe(no_ing, 8).has_value());
}

TEST_CASE("synthesis is deterministic and respects ranges") {
    corpus::SynthSpec spec;
    spec.n_recipes = 30;
    spec.sentence_min = 4;
    spec.sentence_max = 8;
    spec.seed = 42;
    spec.d_img = 24;
    auto a = corpus::synthesize_corpus(spec);
    auto b = corpus::synthesize_corpus(spec);
    REQUIRE(a.recipes.size() == 30);
    for (size_t i = 0; i < a.recipes.size(); ++i) {
        CHECK(a.recipes[i].id == b.recipes[i].id);
        CHECK(a.recipes[i].instructions == b.recipes[i].instructions);
        CHECK(a.recipes[i].image_feature == b.recipes[i].image_feature);
        auto n = a.recipes[i].instructions.size();
        CHECK(n >= 4);
        CHECK(n <= 8);
        CHECK(!corpus::validate_recipe(a.recipes[i], 24).has_value());
    }
}

TEST_CASE("derived features are a pure function of instructions") {
    corpus::SynthSpec spec;
    spec.n_recipes = 10;
    spec.seed = 7;
    spec.d_img = 32;
    auto c = corpus::synthesize_corpus(spec);
    for (const auto& r : c.recipes) {
        auto f = corpus::derive_image_feature(r.instructions, 32);
        CHECK((f - r.image_feature).cwiseAbs().maxCoeff() ==
              doctest::Approx(0.0));
    }
}

TEST_CASE("invalid synth spec rejected with field name") {
    corpus::SynthSpec spec;
    spec.sentence_min = 9;
    spec.sentence_max = 3;
    auto err = spec.validate();
    REQUIRE(err.has_value());
    CHECK(err->find("sentence") != std::string::npos);
}

TEST_CASE("vocab ordering, reserved slots, min_freq") {
    corpus::Corpus c;
    c.recipes.push_back(make_recipe("a", 1));
    c.recipes[0].instructions = {{"mix", "mix", "stir", "pour"}};
    c.recipes[0].ingredients = {"stir"};
    auto v = corpus::build_vocab(c);
    CHECK(v.index(std::string()) == corpus::Vocab::kUnk);
    CHECK(v.token(corpus::Vocab::kPad) == "<pad>");
    // mix and stir both freq 2 (ingredients count), lexicographic tie-break
    CHECK(v.index("mix") == 4);
    CHECK(v.index("stir") == 5);
    CHECK(v.index("pour") == 6);

    auto v2 = corpus::build_vocab(c, 2);
    CHECK(v2.index("mix") == 4);
    CHECK(v2.index("pour") == corpus::Vocab::kUnk);

    auto v3 = corpus::build_vocab(c);
    CHECK(v3.token_to_index == v.token_to_index);
}

TEST_CASE("encode/decode roundtrip with framing") {
    corpus::Corpus c;
    c.recipes.push_back(make_recipe("a", 2));
    auto v = corpus::build_vocab(c);
    auto enc = corpus::encode_recipe(c.recipes[0], v);
    CHECK(enc.sentences.size() == 2);
    CHECK(enc.target.front() == corpus::Vocab::kBos);
    CHECK(enc.target.back() == corpus::Vocab::kEos);
    size_t total = 0;
    for (const auto& s : c.recipes[0].instructions) total += s.size();
    CHECK(enc.target.size() == total + 2);
    CHECK(corpus::decode_sentences(enc, v) == c.recipes[0].instructions);

    auto oov = make_recipe("b", 1);
    oov.instructions = {{"unknown_token"}};
    auto enc2 = corpus::encode_recipe(oov, v);
    CHECK(enc2.sentences[0][0] == corpus::Vocab::kUnk);
}

TEST_CASE("save and load roundtrip with sidecar features") {
    auto dir = tmpdir();
    auto cpath = (dir / "c.jsonl").string();
    auto fpath = (dir / "f.bin").string();
    corpus::Corpus c;
    c.split = "train";
    c.recipes.push_back(make_recipe("r1", 2));
    c.recipes.push_back(make_recipe("r2", 3));
    c.recipes[1].image_feature << 1, 2, 3, 4, 5, 6, 7, 8;
    corpus::save_corpus(c, cpath, fpath);

    auto res = corpus::load_corpus(cpath, "train", fpath, 8);
    CHECK(res.errors.empty());
    REQUIRE(res.corpus.recipes.size() == 2);
    CHECK(res.corpus.recipes[1].image_feature(3) == doctest::Approx(4.0));
    CHECK(res.corpus.recipes[0].instructions ==
          c.recipes[0].instructions);

    // idempotence at the record level
    auto cpath2 = (dir / "c2.jsonl").string();
    corpus::save_corpus(res.corpus, cpath2);
    auto res2 = corpus::load_corpus(cpath2, "train", fpath, 8);
    corpus::save_corpus(res2.corpus, (dir / "c3.jsonl").string());
    CHECK(slurp(cpath2) == slurp((dir / "c3.jsonl").string()));
}

TEST_CASE("feature sidecar format") {
    auto dir = tmpdir();
    auto fpath = (dir / "solo.bin").string();
    std::map<std::string, Eigen::VectorXd> feats;
    feats["x"] = Eigen::VectorXd::LinSpaced(4, 0.0, 3.0);
    corpus::save_features(feats, 4, fpath);
    int d = 0;
    auto back = corpus::load_features(fpath, &d);
    CHECK(d == 4);
    CHECK(back.at("x")(2) == doctest::Approx(2.0));
}

TEST_CASE("loader reports per-record errors") {
    auto dir = tmpdir();
    auto cpath = (dir / "bad.jsonl").string();
    {
        std::ofstream out(cpath);
        out << R"({"id":"ok","title":"t","ingredients":["a"],)"
            << R"("instructions":[["mix"]],"image_feature":[1,2]})" << "\n";
        out << R"({"id":"nofeat","title":"t","ingredients":["a"],)"
            << R"("instructions":[["mix"]]})" << "\n";
        out << R"({"id":"ok","title":"dup","ingredients":["a"],)"
            << R"("instructions":[["mix"]],"image_feature":[1,2]})" << "\n";
    }
    auto res = corpus::load_corpus(cpath, "train", "", 2);
    // both copies of the duplicated id are dropped
    CHECK(res.corpus.recipes.empty());
    REQUIRE(res.errors.size() == 2);
    bool missing = false, dup = false;
    for (const auto& e : res.errors) {
        if (e.id == "nofeat") missing = true;
        if (e.message.find("duplicate") != std::string::npos) dup = true;
    }
    CHECK(missing);
    CHECK(dup);
}
