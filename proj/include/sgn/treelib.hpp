#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgn::tree {

// Up to 19 instruction sentences per recipe, so at most 2*19-1 tree nodes.
inline constexpr int kMaxSentences = 19;
inline constexpr int kMaxNodes = 2 * kMaxSentences - 1;  // 37

// Rooted ordered tree with hierarchical node indexing: every parent index
// precedes its children; leaves read left-to-right carry sentence indices
// 0..n-1 in order.
struct SentenceTree {
    struct Node {
        int parent = -1;               // -1 for the root
        std::vector<int> children;     // ascending node indices
        int sentence = -1;             // leaf payload, -1 for internal nodes
    };
    std::vector<Node> nodes;

    int size() const { return static_cast<int>(nodes.size()); }
    int leaf_count() const;
    // Leaf node indices in left-to-right (DFS) order.
    std::vector<int> leaves_in_order() const;
};

// Flattened lower-triangular adjacency blocks: block i (node i >= 1) has
// length i and holds the links to nodes 0..i-1.
struct AdjacencyVector {
    std::vector<uint8_t> bits;  // length n(n-1)/2 for n nodes

    int node_count() const;
};

// Expected split depth per sentence position; entry t is meaningful for
// t >= 1 (0-based: the split before sentence t).
struct SplitScores {
    std::vector<double> values;  // length n
    int size() const { return static_cast<int>(values.size()); }
};

class TreeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Validates the SentenceTree invariants; returns an error description or
// nullopt when valid.
std::optional<std::string> validate_tree(const SentenceTree& t);

// Exactly one set bit per block.
bool tree_valid(const AdjacencyVector& v);

// Top-down greedy parse: split each span at its maximal score (ties to the
// smallest index), recursing on both sides. Output uses BFS indexing.
SentenceTree parse_from_scores(const SplitScores& scores);

AdjacencyVector tree_to_adjacency_vector(const SentenceTree& t);
// Throws TreeError naming the offending block when v is not tree-valid.
SentenceTree adjacency_vector_to_tree(const AdjacencyVector& v);

// Symmetric binary adjacency matrix, zero diagonal.
Eigen::MatrixXd tree_to_adjacency_matrix(const SentenceTree& t);

// Root depth 0; depth(child) = depth(parent) + 1.
std::vector<int> node_depths(const SentenceTree& t);

// Canonical nested-parentheses text form over sentence indices,
// e.g. "(0,((1,2),3))". A single leaf is "0".
std::string tree_to_text(const SentenceTree& t);

// Inverse of tree_to_text; throws TreeError on malformed input.
SentenceTree tree_from_text(const std::string& text);

// Reindexes an arbitrary hierarchically-ordered tree to BFS order with
// left-to-right siblings.
SentenceTree canonicalize_bfs(const SentenceTree& t);

// Uniform-ish random valid tree in BFS form with the given leaf count.
SentenceTree random_tree(int n_leaves, std::mt19937_64& rng);

// Random tree-valid adjacency vector over n nodes.
AdjacencyVector random_adjacency(int n_nodes, std::mt19937_64& rng);

}  // namespace sgn::tree
