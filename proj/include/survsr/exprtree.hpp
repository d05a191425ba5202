#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "survsr/data.hpp"
#include "survsr/random.hpp"

namespace survsr {

/// Primitive operations. AQ(a, b) = a / sqrt(b^2 + 1), ProtectedLog(a) = log(|a| + 1e-9).
enum class Primitive : std::uint8_t { add, sub, mul, square, plog, aq };

inline constexpr std::size_t kPrimitiveCount = 6;

int arity(Primitive p) noexcept;
std::string_view primitive_name(Primitive p) noexcept;

struct Node {
    enum class Kind : std::uint8_t { op, feature, constant, scaled_binary };

    Kind kind = Kind::constant;
    Primitive op = Primitive::add;
    int index = -1;      // feature and scaled_binary
    double value = 0.0;  // constant and scaled_binary coefficient

    static Node make_op(Primitive p) { return Node{Kind::op, p, -1, 0.0}; }
    static Node feature(int j) { return Node{Kind::feature, Primitive::add, j, 0.0}; }
    static Node constant(double c) { return Node{Kind::constant, Primitive::add, -1, c}; }
    /// x_j * c for a 0/1 column j.
    static Node scaled_binary(int j, double c) { return Node{Kind::scaled_binary, Primitive::add, j, c}; }

    int arity() const noexcept { return kind == Kind::op ? survsr::arity(op) : 0; }
    bool has_constant() const noexcept { return kind == Kind::constant || kind == Kind::scaled_binary; }
    bool uses_feature() const noexcept { return kind == Kind::feature || kind == Kind::scaled_binary; }

    friend bool operator==(const Node&, const Node&) = default;
};

/// Expression tree stored in prefix order. Every node counts 1 toward size.
/// Immutable; operators return new trees.
class ExprTree {
public:
    /// Throws survsr::Error if `prefix` is not exactly one complete tree.
    explicit ExprTree(std::vector<Node> prefix);

    std::span<const Node> nodes() const noexcept { return nodes_; }
    int size() const noexcept { return static_cast<int>(nodes_.size()); }
    int depth() const;
    /// Distinct feature indices, sorted.
    const std::vector<int>& features() const noexcept { return features_; }

    /// One past the last node of the subtree rooted at `pos`.
    int subtree_end(int pos) const;
    int subtree_size(int pos) const { return subtree_end(pos) - pos; }
    std::span<const Node> subtree(int pos) const;

    ExprTree replace_subtree(int pos, std::span<const Node> replacement) const;
    ExprTree replace_node(int pos, const Node& node) const;

    friend bool operator==(const ExprTree& a, const ExprTree& b) { return a.nodes_ == b.nodes_; }

private:
    std::vector<Node> nodes_;
    std::vector<int> features_;
};

/// Feature set recomputed by a full traversal (checks the cached value).
std::vector<int> traverse_features(const ExprTree& tree);

/// Evaluate over all rows of `x`. Arithmetic saturates at +-DBL_MAX so finite
/// inputs always give finite outputs. Throws on NaN/Inf input in a referenced
/// column or an out-of-range feature index.
Vector evaluate(const ExprTree& tree, const Matrix& x);

// ---------------------------------------------------------------------------
// Random generation and variation

/// Everything the generators need to know about the feature space.
struct TreeSpace {
    int n_features = 0;
    /// Columns holding 0/1 values; these appear as x_j * c nodes.
    std::vector<int> binary_columns;
    int max_nodes = 7;
    double constant_min = -5.0;
    double constant_max = 5.0;
    /// Probability that a sampled leaf is an ephemeral random constant.
    double constant_leaf_prob = 0.25;
    /// Probability that grow places an operator above the depth limit.
    double grow_op_prob = 0.5;

    static TreeSpace for_dataset(const SurvivalDataset& ds, int max_nodes = 7);
    bool is_binary(int j) const;
};

enum class InitMethod { full, grow };

Node random_leaf(Rng& rng, const TreeSpace& space);
Node random_op(Rng& rng);
Node random_op_of_arity(Rng& rng, int arity);

/// One tree by `method` with maximum depth `depth` (root at depth 0), retried
/// until it fits `space.max_nodes`; falls back to a single leaf.
ExprTree random_tree(Rng& rng, const TreeSpace& space, InitMethod method, int depth);

/// Ramped half-and-half: depth uniform in {1, 2}, method uniform.
ExprTree ramped_half_and_half(Rng& rng, const TreeSpace& space);

ExprTree subtree_crossover(const ExprTree& a, const ExprTree& b, Rng& rng, int max_nodes);
ExprTree node_level_crossover(const ExprTree& a, const ExprTree& b, Rng& rng);
ExprTree node_level_mutation(const ExprTree& a, Rng& rng, const TreeSpace& space);
ExprTree subtree_mutation(const ExprTree& a, Rng& rng, const TreeSpace& space);

/// Each constant c is replaced, with probability `node_prob`, by
/// c + t|c| eps (eps ~ N(0,1)); zero constants get c + t eps.
ExprTree mutate_constants(const ExprTree& tree, Rng& rng, double temperature = 0.1, double node_prob = 0.5);

// ---------------------------------------------------------------------------
// Text form
//
//   expr    := term (('+' | '-') term)*
//   term    := factor (('*' | '·') factor)*
//   factor  := number '·' variable      (x_j * c node)
//            | number | variable
//            | ('sq' | 'plog' | 'log') '(' expr ')'
//            | 'aq' '(' expr ',' expr ')'
//            | '(' expr ')'
//   number  := decimal literal, optionally followed by '[' hexfloat ']'
//   variable:= 'x' digits | column name
//
// Binary operators print fully parenthesized so parsing restores the exact tree.

/// Six significant digits, plus "[hexfloat]" when that does not round-trip.
std::string format_constant(double value, bool exact = true);
/// With `exact` false constants print with four significant digits and no
/// annotation (for reports; not parseable back to the same tree).
std::string to_infix(const ExprTree& tree, std::span<const std::string> column_names = {}, bool exact = true);
ExprTree parse_infix(std::string_view text, std::span<const std::string> column_names = {});

void to_json(nlohmann::json& j, const ExprTree& tree);
ExprTree tree_from_json(const nlohmann::json& j);

}  // namespace survsr
