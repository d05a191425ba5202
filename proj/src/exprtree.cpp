#include "survsr/exprtree.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include <nlohmann/json.hpp>

#include "survsr/error.hpp"

namespace survsr {

int arity(Primitive p) noexcept {
    switch (p) {
    case Primitive::square:
    case Primitive::plog: return 1;
    case Primitive::add:
    case Primitive::sub:
    case Primitive::mul:
    case Primitive::aq: return 2;
    }
    return 2;
}

std::string_view primitive_name(Primitive p) noexcept {
    switch (p) {
    case Primitive::add: return "add";
    case Primitive::sub: return "sub";
    case Primitive::mul: return "mul";
    case Primitive::square: return "sq";
    case Primitive::plog: return "plog";
    case Primitive::aq: return "aq";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// ExprTree

ExprTree::ExprTree(std::vector<Node> prefix) : nodes_(std::move(prefix)) {
    if (nodes_.empty()) {
        throw Error("expression tree must have at least one node");
    }
    int open = 1;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (open == 0) {
            throw Error("expression tree has trailing nodes");
        }
        const auto& n = nodes_[i];
        if (n.uses_feature() && n.index < 0) {
            throw Error("negative feature index");
        }
        open += n.arity() - 1;
    }
    if (open != 0) {
        throw Error("expression tree is incomplete");
    }
    features_ = traverse_features(*this);
}

int ExprTree::subtree_end(int pos) const {
    int open = 1;
    int i = pos;
    while (open > 0) {
        open += nodes_[static_cast<std::size_t>(i)].arity() - 1;
        ++i;
    }
    return i;
}

std::span<const Node> ExprTree::subtree(int pos) const {
    return std::span<const Node>(nodes_).subspan(static_cast<std::size_t>(pos),
                                                 static_cast<std::size_t>(subtree_size(pos)));
}

int ExprTree::depth() const {
    // depth of each pending child slot, walked in prefix order
    std::vector<int> slots{0};
    int deepest = 0;
    for (const auto& n : nodes_) {
        const int d = slots.back();
        slots.pop_back();
        deepest = std::max(deepest, d);
        for (int k = 0; k < n.arity(); ++k) {
            slots.push_back(d + 1);
        }
    }
    return deepest;
}

ExprTree ExprTree::replace_subtree(int pos, std::span<const Node> replacement) const {
    const int end = subtree_end(pos);
    std::vector<Node> out;
    out.reserve(nodes_.size() - static_cast<std::size_t>(end - pos) + replacement.size());
    out.insert(out.end(), nodes_.begin(), nodes_.begin() + pos);
    out.insert(out.end(), replacement.begin(), replacement.end());
    out.insert(out.end(), nodes_.begin() + end, nodes_.end());
    return ExprTree(std::move(out));
}

ExprTree ExprTree::replace_node(int pos, const Node& node) const {
    std::vector<Node> out = nodes_;
    out[static_cast<std::size_t>(pos)] = node;
    return ExprTree(std::move(out));
}

std::vector<int> traverse_features(const ExprTree& tree) {
    std::vector<int> out;
    for (const auto& n : tree.nodes()) {
        if (n.uses_feature()) {
            out.push_back(n.index);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

using Array = Eigen::ArrayXd;

constexpr double kMax = std::numeric_limits<double>::max();

Array saturate(Array a) { return a.max(-kMax).min(kMax); }

}  // namespace

Vector evaluate(const ExprTree& tree, const Matrix& x) {
    const auto n = x.rows();
    for (int j : tree.features()) {
        if (j >= x.cols()) {
            throw Error("feature index " + std::to_string(j) + " out of range for " + std::to_string(x.cols()) +
                        " columns");
        }
        if (!x.col(j).allFinite()) {
            throw Error("non-finite input in column " + std::to_string(j));
        }
    }
    std::vector<Array> stack;
    stack.reserve(static_cast<std::size_t>(tree.size()));
    const auto nodes = tree.nodes();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        const Node& node = *it;
        switch (node.kind) {
        case Node::Kind::feature:
            stack.push_back(x.col(node.index).array());
            continue;
        case Node::Kind::constant:
            stack.push_back(Array::Constant(n, node.value));
            continue;
        case Node::Kind::scaled_binary:
            stack.push_back(saturate(x.col(node.index).array() * node.value));
            continue;
        case Node::Kind::op:
            break;
        }
        Array a = std::move(stack.back());
        stack.pop_back();
        if (node.arity() == 1) {
            if (node.op == Primitive::square) {
                stack.push_back(saturate(a.square()));
            } else {
                stack.push_back((a.abs() + 1e-9).log());
            }
            continue;
        }
        Array b = std::move(stack.back());
        stack.pop_back();
        switch (node.op) {
        case Primitive::add: stack.push_back(saturate(a + b)); break;
        case Primitive::sub: stack.push_back(saturate(a - b)); break;
        case Primitive::mul: stack.push_back(saturate(a * b)); break;
        case Primitive::aq: stack.push_back(a / (b.square() + 1.0).sqrt()); break;
        default: break;
        }
    }
    return stack.back().matrix();
}

// ---------------------------------------------------------------------------
// Random generation

TreeSpace TreeSpace::for_dataset(const SurvivalDataset& ds, int max_nodes) {
    TreeSpace s;
    s.n_features = static_cast<int>(ds.cols());
    s.binary_columns = ds.binary_columns();
    s.max_nodes = max_nodes;
    return s;
}

bool TreeSpace::is_binary(int j) const {
    return std::binary_search(binary_columns.begin(), binary_columns.end(), j);
}

namespace {

constexpr std::array<Primitive, kPrimitiveCount> kPrimitives{Primitive::add, Primitive::sub,    Primitive::mul,
                                                             Primitive::square, Primitive::plog, Primitive::aq};

double random_constant(Rng& rng, const TreeSpace& space) {
    return std::uniform_real_distribution<double>(space.constant_min, space.constant_max)(rng);
}

template <class T>
std::size_t uniform_index(Rng& rng, T n) {
    return std::uniform_int_distribution<std::size_t>(0, static_cast<std::size_t>(n) - 1)(rng);
}

void grow_into(std::vector<Node>& out, Rng& rng, const TreeSpace& space, InitMethod method, int depth, int limit) {
    bool leaf = depth >= limit;
    if (!leaf && method == InitMethod::grow) {
        leaf = std::bernoulli_distribution(1.0 - space.grow_op_prob)(rng);
    }
    if (leaf) {
        out.push_back(random_leaf(rng, space));
        return;
    }
    const Node op = random_op(rng);
    out.push_back(op);
    for (int k = 0; k < op.arity(); ++k) {
        grow_into(out, rng, space, method, depth + 1, limit);
    }
}

}  // namespace

Node random_leaf(Rng& rng, const TreeSpace& space) {
    if (space.n_features <= 0 || std::bernoulli_distribution(space.constant_leaf_prob)(rng)) {
        return Node::constant(random_constant(rng, space));
    }
    const int j = static_cast<int>(uniform_index(rng, space.n_features));
    if (space.is_binary(j)) {
        return Node::scaled_binary(j, random_constant(rng, space));
    }
    return Node::feature(j);
}

Node random_op(Rng& rng) { return Node::make_op(kPrimitives[uniform_index(rng, kPrimitives.size())]); }

Node random_op_of_arity(Rng& rng, int arity) {
    std::vector<Primitive> candidates;
    for (auto p : kPrimitives) {
        if (survsr::arity(p) == arity) {
            candidates.push_back(p);
        }
    }
    return Node::make_op(candidates[uniform_index(rng, candidates.size())]);
}

ExprTree random_tree(Rng& rng, const TreeSpace& space, InitMethod method, int depth) {
    std::vector<Node> nodes;
    for (int attempt = 0; attempt < 10; ++attempt) {
        nodes.clear();
        grow_into(nodes, rng, space, method, 0, depth);
        if (static_cast<int>(nodes.size()) <= space.max_nodes) {
            return ExprTree(std::move(nodes));
        }
    }
    return ExprTree({random_leaf(rng, space)});
}

ExprTree ramped_half_and_half(Rng& rng, const TreeSpace& space) {
    const int depth = std::uniform_int_distribution<int>(1, 2)(rng);
    const auto method = std::bernoulli_distribution(0.5)(rng) ? InitMethod::full : InitMethod::grow;
    return random_tree(rng, space, method, depth);
}

// ---------------------------------------------------------------------------
// Variation

ExprTree subtree_crossover(const ExprTree& a, const ExprTree& b, Rng& rng, int max_nodes) {
    for (int attempt = 0; attempt < 10; ++attempt) {
        const int i = static_cast<int>(uniform_index(rng, a.size()));
        const int j = static_cast<int>(uniform_index(rng, b.size()));
        if (a.size() - a.subtree_size(i) + b.subtree_size(j) <= max_nodes) {
            return a.replace_subtree(i, b.subtree(j));
        }
    }
    return a;
}

ExprTree node_level_crossover(const ExprTree& a, const ExprTree& b, Rng& rng) {
    const int i = static_cast<int>(uniform_index(rng, a.size()));
    const int want = a.nodes()[static_cast<std::size_t>(i)].arity();
    std::vector<int> compatible;
    for (int j = 0; j < b.size(); ++j) {
        if (b.nodes()[static_cast<std::size_t>(j)].arity() == want) {
            compatible.push_back(j);
        }
    }
    if (compatible.empty()) {
        return a;
    }
    const int j = compatible[uniform_index(rng, compatible.size())];
    return a.replace_node(i, b.nodes()[static_cast<std::size_t>(j)]);
}

ExprTree node_level_mutation(const ExprTree& a, Rng& rng, const TreeSpace& space) {
    const int i = static_cast<int>(uniform_index(rng, a.size()));
    const int ar = a.nodes()[static_cast<std::size_t>(i)].arity();
    return a.replace_node(i, ar == 0 ? random_leaf(rng, space) : random_op_of_arity(rng, ar));
}

ExprTree subtree_mutation(const ExprTree& a, Rng& rng, const TreeSpace& space) {
    for (int attempt = 0; attempt < 10; ++attempt) {
        const int i = static_cast<int>(uniform_index(rng, a.size()));
        TreeSpace budget = space;
        budget.max_nodes = space.max_nodes - (a.size() - a.subtree_size(i));
        if (budget.max_nodes < 1) {
            continue;
        }
        const int depth = std::uniform_int_distribution<int>(0, 2)(rng);
        const auto method = std::bernoulli_distribution(0.5)(rng) ? InitMethod::full : InitMethod::grow;
        const ExprTree fresh = random_tree(rng, budget, method, depth);
        return a.replace_subtree(i, fresh.nodes());
    }
    return a;
}

ExprTree mutate_constants(const ExprTree& tree, Rng& rng, double temperature, double node_prob) {
    std::vector<Node> nodes(tree.nodes().begin(), tree.nodes().end());
    std::bernoulli_distribution pick(node_prob);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& n : nodes) {
        if (!n.has_constant() || !pick(rng)) {
            continue;
        }
        const double eps = noise(rng);
        const double scale = n.value == 0.0 ? 1.0 : std::abs(n.value);
        n.value += temperature * scale * eps;
    }
    return ExprTree(std::move(nodes));
}

// ---------------------------------------------------------------------------
// Text form

std::string format_constant(double value, bool exact) {
    if (value == 0.0) {
        value = 0.0;  // drop the sign of -0
    }
    std::array<char, 64> buf{};
    std::snprintf(buf.data(), buf.size(), exact ? "%.6g" : "%.4g", value);
    std::string out(buf.data());
    if (!exact) {
        return out;
    }
    double back = 0.0;
    std::from_chars(out.data(), out.data() + out.size(), back);
    if (back != value) {
        std::snprintf(buf.data(), buf.size(), "%a", value);
        out += "[";
        out += buf.data();
        out += "]";
    }
    return out;
}

namespace {

std::string variable_name(int j, std::span<const std::string> names) {
    if (j >= 0 && static_cast<std::size_t>(j) < names.size()) {
        return names[static_cast<std::size_t>(j)];
    }
    return "x" + std::to_string(j);
}

std::string infix_at(const ExprTree& tree, int& pos, std::span<const std::string> names, bool exact) {
    const Node& n = tree.nodes()[static_cast<std::size_t>(pos++)];
    switch (n.kind) {
    case Node::Kind::feature: return variable_name(n.index, names);
    case Node::Kind::constant: return format_constant(n.value, exact);
    case Node::Kind::scaled_binary: return format_constant(n.value, exact) + "·" + variable_name(n.index, names);
    case Node::Kind::op: break;
    }
    const std::string a = infix_at(tree, pos, names, exact);
    switch (n.op) {
    case Primitive::square: return "sq(" + a + ")";
    case Primitive::plog: return "plog(" + a + ")";
    default: break;
    }
    const std::string b = infix_at(tree, pos, names, exact);
    switch (n.op) {
    case Primitive::add: return "(" + a + " + " + b + ")";
    case Primitive::sub: return "(" + a + " - " + b + ")";
    case Primitive::mul: return "(" + a + " * " + b + ")";
    case Primitive::aq: return "aq(" + a + ", " + b + ")";
    default: break;
    }
    return {};
}

class InfixParser {
public:
    InfixParser(std::string_view text, std::span<const std::string> names) : text_(text), names_(names) {}

    std::vector<Node> parse() {
        auto out = expr();
        skip_ws();
        if (pos_ != text_.size()) {
            fail("unexpected trailing input");
        }
        return out;
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n')) {
            ++pos_;
        }
    }

    bool eat(std::string_view token) {
        skip_ws();
        if (text_.substr(pos_, token.size()) == token) {
            pos_ += token.size();
            return true;
        }
        return false;
    }

    void expect(std::string_view token) {
        if (!eat(token)) {
            fail(pos_ >= text_.size() ? "unexpected end of input, expected '" + std::string(token) + "'"
                                      : "expected '" + std::string(token) + "'");
        }
    }

    static std::vector<Node> combine(Primitive p, std::vector<Node> a, std::vector<Node> b) {
        std::vector<Node> out;
        out.reserve(1 + a.size() + b.size());
        out.push_back(Node::make_op(p));
        out.insert(out.end(), a.begin(), a.end());
        out.insert(out.end(), b.begin(), b.end());
        return out;
    }

    std::vector<Node> expr() {
        auto lhs = term();
        for (;;) {
            if (eat("+")) {
                lhs = combine(Primitive::add, std::move(lhs), term());
            } else if (peek_binary_minus() && eat("-")) {
                lhs = combine(Primitive::sub, std::move(lhs), term());
            } else {
                return lhs;
            }
        }
    }

    bool peek_binary_minus() {
        skip_ws();
        return pos_ < text_.size() && text_[pos_] == '-';
    }

    std::vector<Node> term() {
        auto lhs = factor();
        for (;;) {
            if (eat("*") || eat("·")) {
                lhs = combine(Primitive::mul, std::move(lhs), factor());
            } else {
                return lhs;
            }
        }
    }

    static bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_'; }
    static bool ident_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '.' || c == '=';
    }

    std::vector<Node> factor() {
        skip_ws();
        if (pos_ >= text_.size()) {
            fail("unexpected end of input");
        }
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            auto inner = expr();
            expect(")");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) != 0 || c == '.' || c == '-') {
            const double value = number();
            const std::size_t save = pos_;
            if (eat("·")) {
                skip_ws();
                if (pos_ < text_.size() && ident_start(text_[pos_])) {
                    const std::size_t at = pos_;
                    const std::string name = identifier();
                    skip_ws();
                    if (pos_ < text_.size() && text_[pos_] == '(') {
                        pos_ = save;  // constant times a function call: plain multiplication
                        return {Node::constant(value)};
                    }
                    return {Node::scaled_binary(variable_index(name, at), value)};
                }
                pos_ = save;
            }
            return {Node::constant(value)};
        }
        if (ident_start(c)) {
            const std::size_t at = pos_;
            const std::string name = identifier();
            skip_ws();
            if (pos_ < text_.size() && text_[pos_] == '(') {
                ++pos_;
                if (name == "sq" || name == "plog" || name == "log") {
                    auto a = expr();
                    expect(")");
                    std::vector<Node> out{Node::make_op(name == "sq" ? Primitive::square : Primitive::plog)};
                    out.insert(out.end(), a.begin(), a.end());
                    return out;
                }
                if (name == "aq") {
                    auto a = expr();
                    expect(",");
                    auto b = expr();
                    expect(")");
                    return combine(Primitive::aq, std::move(a), std::move(b));
                }
                pos_ = at;
                fail("unknown function '" + name + "'");
            }
            return {Node::feature(variable_index(name, at))};
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    std::string identifier() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && ident_char(text_[pos_])) {
            ++pos_;
        }
        return std::string(text_.substr(start, pos_ - start));
    }

    int variable_index(const std::string& name, std::size_t at) {
        for (std::size_t j = 0; j < names_.size(); ++j) {
            if (names_[j] == name) {
                return static_cast<int>(j);
            }
        }
        if (name.size() > 1 && name[0] == 'x') {
            int j = 0;
            auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), j);
            if (ec == std::errc{} && ptr == name.data() + name.size() &&
                (names_.empty() || static_cast<std::size_t>(j) < names_.size())) {
                return j;
            }
        }
        pos_ = at;
        fail("unknown variable '" + name + "'");
    }

    double number() {
        const std::size_t start = pos_;
        if (text_[pos_] == '-') {
            ++pos_;
        }
        while (pos_ < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[pos_])) != 0 || text_[pos_] == '.')) {
            ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t q = pos_ + 1;
            if (q < text_.size() && (text_[q] == '+' || text_[q] == '-')) {
                ++q;
            }
            if (q < text_.size() && std::isdigit(static_cast<unsigned char>(text_[q])) != 0) {
                pos_ = q;
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])) != 0) {
                    ++pos_;
                }
            }
        }
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
        if (ec != std::errc{} || ptr != text_.data() + pos_) {
            pos_ = start;
            fail("malformed number");
        }
        if (pos_ < text_.size() && text_[pos_] == '[') {
            const std::size_t close = text_.find(']', pos_);
            if (close == std::string_view::npos) {
                fail("unterminated exact-value annotation");
            }
            std::string_view hex = text_.substr(pos_ + 1, close - pos_ - 1);
            bool negative = false;
            if (!hex.empty() && hex.front() == '-') {
                negative = true;
                hex.remove_prefix(1);
            }
            if (hex.substr(0, 2) == "0x" || hex.substr(0, 2) == "0X") {
                hex.remove_prefix(2);
            }
            double exact = 0.0;
            auto [p2, ec2] = std::from_chars(hex.data(), hex.data() + hex.size(), exact, std::chars_format::hex);
            if (ec2 != std::errc{} || p2 != hex.data() + hex.size()) {
                fail("malformed exact-value annotation");
            }
            value = negative ? -exact : exact;
            pos_ = close + 1;
        }
        return value;
    }

    std::string_view text_;
    std::span<const std::string> names_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string to_infix(const ExprTree& tree, std::span<const std::string> column_names, bool exact) {
    int pos = 0;
    return infix_at(tree, pos, column_names, exact);
}

ExprTree parse_infix(std::string_view text, std::span<const std::string> column_names) {
    return ExprTree(InfixParser(text, column_names).parse());
}

void to_json(nlohmann::json& j, const ExprTree& tree) {
    j = nlohmann::json{{"infix", to_infix(tree)}, {"size", tree.size()}, {"features", tree.features()}};
}

ExprTree tree_from_json(const nlohmann::json& j) {
    if (j.is_string()) {
        return parse_infix(j.get<std::string>());
    }
    return parse_infix(j.at("infix").get<std::string>());
}

}  // namespace survsr
