#include "sgn/treelib.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <functional>
#include <memory>
#include <numeric>

namespace sgn::tree {

int SentenceTree::leaf_count() const {
    int c = 0;
    for (const auto& n : nodes)
        if (n.children.empty()) ++c;
    return c;
}

std::vector<int> SentenceTree::leaves_in_order() const {
    std::vector<int> out;
    if (nodes.empty()) return out;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        int i = stack.back();
        stack.pop_back();
        if (nodes[i].children.empty()) {
            out.push_back(i);
        } else {
            for (auto it = nodes[i].children.rbegin();
                 it != nodes[i].children.rend(); ++it)
                stack.push_back(*it);
        }
    }
    return out;
}

int AdjacencyVector::node_count() const {
    int total = static_cast<int>(bits.size());
    int n = 1, acc = 0;
    while (acc < total) {
        acc += n;
        ++n;
    }
    if (acc != total)
        throw TreeError("adjacency vector length is not triangular");
    return n;
}

std::optional<std::string> validate_tree(const SentenceTree& t) {
    if (t.nodes.empty()) return "empty tree";
    if (t.nodes[0].parent != -1) return "node 0 is not a root";
    for (int i = 1; i < t.size(); ++i) {
        int p = t.nodes[i].parent;
        if (p < 0 || p >= i)
            return "node " + std::to_string(i) +
                   " violates parent-before-child ordering";
        const auto& ch = t.nodes[p].children;
        if (std::find(ch.begin(), ch.end(), i) == ch.end())
            return "node " + std::to_string(i) +
                   " missing from its parent's child list";
    }
    for (int i = 0; i < t.size(); ++i) {
        const auto& n = t.nodes[i];
        if (!std::is_sorted(n.children.begin(), n.children.end()))
            return "children of node " + std::to_string(i) + " not ordered";
        for (int c : n.children)
            if (c <= i || c >= t.size() || t.nodes[c].parent != i)
                return "bad child link at node " + std::to_string(i);
        if (n.children.empty() && n.sentence < 0)
            return "leaf node " + std::to_string(i) + " has no sentence";
        if (!n.children.empty() && n.sentence >= 0)
            return "internal node " + std::to_string(i) + " carries a payload";
    }
    auto leaves = t.leaves_in_order();
    for (size_t j = 0; j < leaves.size(); ++j)
        if (t.nodes[leaves[j]].sentence != static_cast<int>(j))
            return "leaf payloads are not 0..n-1 in left-to-right order";
    return std::nullopt;
}

bool tree_valid(const AdjacencyVector& v) {
    int n = v.node_count();
    size_t off = 0;
    for (int i = 1; i < n; ++i) {
        int ones = 0;
        for (int j = 0; j < i; ++j) ones += v.bits[off + j] ? 1 : 0;
        if (ones != 1) return false;
        off += i;
    }
    return true;
}

namespace {

struct TmpNode {
    int sentence = -1;
    std::vector<std::unique_ptr<TmpNode>> children;
};

std::unique_ptr<TmpNode> parse_span(const std::vector<double>& d, int l,
                                    int r) {
    auto node = std::make_unique<TmpNode>();
    if (l == r) {
        node->sentence = l;
        return node;
    }
    int best = l + 1;
    for (int t = l + 2; t <= r; ++t)
        if (d[t] > d[best]) best = t;  // ties keep the smallest index
    node->children.push_back(parse_span(d, l, best - 1));
    node->children.push_back(parse_span(d, best, r));
    return node;
}

SentenceTree bfs_number(const TmpNode& root) {
    SentenceTree out;
    std::deque<std::pair<const TmpNode*, int>> queue{{&root, -1}};
    while (!queue.empty()) {
        auto [node, parent] = queue.front();
        queue.pop_front();
        int idx = out.size();
        out.nodes.push_back({parent, {}, node->sentence});
        if (parent >= 0) out.nodes[parent].children.push_back(idx);
        for (const auto& c : node->children) queue.emplace_back(c.get(), idx);
    }
    return out;
}

}  // namespace

SentenceTree parse_from_scores(const SplitScores& scores) {
    int n = scores.size();
    if (n < 1) throw TreeError("empty split scores");
    auto tmp = parse_span(scores.values, 0, n - 1);
    return bfs_number(*tmp);
}

AdjacencyVector tree_to_adjacency_vector(const SentenceTree& t) {
    AdjacencyVector v;
    for (int i = 1; i < t.size(); ++i) {
        std::vector<uint8_t> block(i, 0);
        block[t.nodes[i].parent] = 1;
        v.bits.insert(v.bits.end(), block.begin(), block.end());
    }
    return v;
}

SentenceTree adjacency_vector_to_tree(const AdjacencyVector& v) {
    int n = v.node_count();
    SentenceTree t;
    t.nodes.push_back({-1, {}, -1});
    size_t off = 0;
    for (int i = 1; i < n; ++i) {
        int parent = -1, ones = 0;
        for (int j = 0; j < i; ++j)
            if (v.bits[off + j]) {
                parent = j;
                ++ones;
            }
        if (ones != 1)
            throw TreeError("not tree-valid: block " + std::to_string(i) +
                            " has " + std::to_string(ones) + " set bits");
        t.nodes.push_back({parent, {}, -1});
        t.nodes[parent].children.push_back(i);
        off += i;
    }
    auto leaves = t.leaves_in_order();
    for (size_t j = 0; j < leaves.size(); ++j)
        t.nodes[leaves[j]].sentence = static_cast<int>(j);
    return t;
}

Eigen::MatrixXd tree_to_adjacency_matrix(const SentenceTree& t) {
    int n = t.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        a(i, t.nodes[i].parent) = 1.0;
        a(t.nodes[i].parent, i) = 1.0;
    }
    return a;
}

std::vector<int> node_depths(const SentenceTree& t) {
    std::vector<int> d(t.size(), 0);
    for (int i = 1; i < t.size(); ++i) d[i] = d[t.nodes[i].parent] + 1;
    return d;
}

namespace {
void text_rec(const SentenceTree& t, int i, std::string& out) {
    const auto& n = t.nodes[i];
    if (n.children.empty()) {
        out += std::to_string(n.sentence);
        return;
    }
    out += '(';
    for (size_t k = 0; k < n.children.size(); ++k) {
        if (k) out += ',';
        text_rec(t, n.children[k], out);
    }
    out += ')';
}
}  // namespace

std::string tree_to_text(const SentenceTree& t) {
    std::string out;
    text_rec(t, 0, out);
    return out;
}

namespace {
// Recursive descent over "(", ")", "," and leaf integers; builds nodes in
// preorder so every parent index precedes its children.
int parse_rec(const std::string& s, size_t& pos, SentenceTree& t, int parent) {
    if (pos >= s.size()) throw TreeError("tree text: unexpected end");
    int idx = t.size();
    t.nodes.push_back({parent, {}, -1});
    if (parent >= 0) t.nodes[parent].children.push_back(idx);
    if (s[pos] == '(') {
        ++pos;
        parse_rec(s, pos, t, idx);
        while (pos < s.size() && s[pos] == ',') {
            ++pos;
            parse_rec(s, pos, t, idx);
        }
        if (pos >= s.size() || s[pos] != ')')
            throw TreeError("tree text: missing ')'");
        ++pos;
    } else {
        size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos])))
            ++pos;
        if (pos == start) throw TreeError("tree text: expected leaf index");
        t.nodes[idx].sentence = std::stoi(s.substr(start, pos - start));
    }
    return idx;
}
}  // namespace

SentenceTree tree_from_text(const std::string& text) {
    SentenceTree t;
    size_t pos = 0;
    parse_rec(text, pos, t, -1);
    if (pos != text.size()) throw TreeError("tree text: trailing characters");
    t = canonicalize_bfs(t);
    if (auto err = validate_tree(t)) throw TreeError("tree text: " + *err);
    return t;
}

SentenceTree canonicalize_bfs(const SentenceTree& t) {
    SentenceTree out;
    std::deque<std::pair<int, int>> queue{{0, -1}};  // (old index, new parent)
    while (!queue.empty()) {
        auto [old, parent] = queue.front();
        queue.pop_front();
        int idx = out.size();
        out.nodes.push_back({parent, {}, t.nodes[old].sentence});
        if (parent >= 0) out.nodes[parent].children.push_back(idx);
        for (int c : t.nodes[old].children) queue.emplace_back(c, idx);
    }
    return out;
}

SentenceTree random_tree(int n_leaves, std::mt19937_64& rng) {
    SplitScores s;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    s.values.resize(n_leaves);
    for (auto& v : s.values) v = u(rng);
    auto tmp = parse_span(s.values, 0, n_leaves - 1);
    // Contract some internal edges so the sample covers n-ary shapes too.
    std::function<void(TmpNode*)> contract = [&](TmpNode* node) {
        for (size_t k = 0; k < node->children.size();) {
            TmpNode* c = node->children[k].get();
            if (!c->children.empty() && u(rng) < 0.3) {
                std::vector<std::unique_ptr<TmpNode>> grab =
                    std::move(c->children);
                node->children.erase(node->children.begin() + k);
                for (size_t g = 0; g < grab.size(); ++g)
                    node->children.insert(node->children.begin() + k + g,
                                          std::move(grab[g]));
            } else {
                ++k;
            }
        }
        for (auto& c : node->children) contract(c.get());
    };
    contract(tmp.get());
    return bfs_number(*tmp);
}

AdjacencyVector random_adjacency(int n_nodes, std::mt19937_64& rng) {
    AdjacencyVector v;
    for (int i = 1; i < n_nodes; ++i) {
        std::uniform_int_distribution<int> pick(0, i - 1);
        std::vector<uint8_t> block(i, 0);
        block[pick(rng)] = 1;
        v.bits.insert(v.bits.end(), block.begin(), block.end());
    }
    return v;
}

}  // namespace sgn::tree
