// Modular-polynomial task expressions: parsing, canonical rendering and
// exact evaluation mod p.
//
// Grammar (ASCII, whitespace ignored):
//   expr   := term (('+' | '-') term)*
//   term   := factor (('*' | <juxtaposition>) factor)*
//   factor := atom ('^' uint)?
//   atom   := 'a' | 'b' | uint | '(' expr ')'
//
// Juxtaposition binds as multiplication whenever a factor is directly followed
// by a variable or an opening parenthesis, so "2a-3b", "ab+b" and "2(a+b)"
// parse verbatim. Division is rejected.
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace grok {

class SyntaxError : public std::runtime_error {
public:
    SyntaxError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class ExponentError : public std::runtime_error {
public:
    ExponentError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

enum class NodeKind { Sum, Diff, Prod, Pow, VarA, VarB, Literal };

// Expression tree node. `value` holds the literal for Literal and the exponent
// for Pow; `args` has two children for Sum/Diff/Prod, one (the base) for Pow.
struct OpNode {
    NodeKind kind = NodeKind::Literal;
    std::uint64_t value = 0;
    std::vector<OpNode> args;

    friend bool operator==(const OpNode&, const OpNode&) = default;

    static OpNode var_a() { return {NodeKind::VarA, 0, {}}; }
    static OpNode var_b() { return {NodeKind::VarB, 0, {}}; }
    static OpNode literal(std::uint64_t v) { return {NodeKind::Literal, v, {}}; }
    static OpNode binary(NodeKind k, OpNode lhs, OpNode rhs) {
        OpNode n{k, 0, {}};
        n.args.reserve(2);
        n.args.push_back(std::move(lhs));
        n.args.push_back(std::move(rhs));
        return n;
    }
    static OpNode pow(OpNode base, std::uint64_t exponent) {
        OpNode n{NodeKind::Pow, exponent, {}};
        n.args.push_back(std::move(base));
        return n;
    }
};

std::string render_op(const OpNode& node);

struct OpExpr {
    OpNode root;
    std::string source_text;  // canonical form, see render_op

    OpExpr() = default;
    explicit OpExpr(OpNode r) : root(std::move(r)), source_text(render_op(root)) {}

    friend bool operator==(const OpExpr& x, const OpExpr& y) { return x.root == y.root; }
};

inline bool is_prime(std::uint64_t n) {
    if (n < 2) return false;
    if (n % 2 == 0) return n == 2;
    for (std::uint64_t d = 3; d * d <= n; d += 2)
        if (n % d == 0) return false;
    return true;
}

// Value in [0, p) for an odd prime p < 2^32.
class Residue {
public:
    Residue(std::uint64_t value, std::uint64_t modulus) : value_(value), modulus_(modulus) {
        if (modulus < 3 || modulus >= (std::uint64_t{1} << 32) || !is_prime(modulus))
            throw std::invalid_argument("modulus must be an odd prime below 2^32, got " +
                                        std::to_string(modulus));
        if (value >= modulus)
            throw std::out_of_range("residue " + std::to_string(value) + " not below modulus " +
                                    std::to_string(modulus));
    }
    std::uint64_t value() const noexcept { return value_; }
    std::uint64_t modulus() const noexcept { return modulus_; }
    friend bool operator==(const Residue&, const Residue&) = default;

private:
    std::uint64_t value_;
    std::uint64_t modulus_;
};

namespace detail {

class OpParser {
public:
    explicit OpParser(std::string_view text) : text_(text) {}

    OpNode parse() {
        if (text_.empty()) throw SyntaxError("empty expression", 0);
        for (std::size_t i = 0; i < text_.size(); ++i)
            if (static_cast<unsigned char>(text_[i]) > 0x7f) throw SyntaxError("non-ASCII character", i);
        OpNode e = expr();
        skip_ws();
        if (pos_ < text_.size()) {
            if (text_[pos_] == ')') throw SyntaxError("unbalanced ')'", pos_);
            unexpected();
        }
        return e;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t')) ++pos_;
    }
    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }
    static bool is_digit(char c) { return c >= '0' && c <= '9'; }

    [[noreturn]] void unexpected() {
        char c = text_[pos_];
        if (c == '/') throw SyntaxError("division is not supported", pos_);
        if (is_digit(c)) throw SyntaxError("unexpected number", pos_);
        throw SyntaxError(std::string("unknown symbol '") + c + "'", pos_);
    }

    std::uint64_t uint_literal() {
        std::uint64_t v = 0;
        std::size_t start = pos_;
        while (pos_ < text_.size() && is_digit(text_[pos_])) {
            auto d = static_cast<std::uint64_t>(text_[pos_] - '0');
            if (v > (UINT64_MAX - d) / 10) throw SyntaxError("integer literal too large", start);
            v = v * 10 + d;
            ++pos_;
        }
        return v;
    }

    OpNode expr() {
        OpNode lhs = term();
        for (;;) {
            char c = peek();
            if (c != '+' && c != '-') return lhs;
            ++pos_;
            OpNode rhs = term();
            lhs = OpNode::binary(c == '+' ? NodeKind::Sum : NodeKind::Diff, std::move(lhs), std::move(rhs));
        }
    }

    OpNode term() {
        OpNode lhs = factor();
        for (;;) {
            char c = peek();
            if (c == '*') {
                ++pos_;
            } else if (c != 'a' && c != 'b' && c != '(') {
                return lhs;
            }
            OpNode rhs = factor();
            lhs = OpNode::binary(NodeKind::Prod, std::move(lhs), std::move(rhs));
        }
    }

    OpNode factor() {
        OpNode base = atom();
        if (peek() != '^') return base;
        ++pos_;
        char c = peek();
        if (c == '-') throw ExponentError("negative exponent", pos_);
        if (!is_digit(c)) {
            if (pos_ >= text_.size()) throw SyntaxError("missing exponent", pos_);
            throw SyntaxError("exponent must be a non-negative integer", pos_);
        }
        std::size_t start = pos_;
        std::uint64_t e = uint_literal();
        if (pos_ < text_.size() && text_[pos_] == '.') throw ExponentError("non-integer exponent", start);
        return OpNode::pow(std::move(base), e);
    }

    OpNode atom() {
        char c = peek();
        if (pos_ >= text_.size()) throw SyntaxError("empty factor", pos_);
        if (c == 'a' || c == 'b') {
            ++pos_;
            return c == 'a' ? OpNode::var_a() : OpNode::var_b();
        }
        if (is_digit(c)) {
            std::size_t start = pos_;
            std::uint64_t v = uint_literal();
            if (pos_ < text_.size() && text_[pos_] == '.') throw SyntaxError("non-integer literal", start);
            return OpNode::literal(v);
        }
        if (c == '(') {
            std::size_t open = pos_++;
            if (peek() == ')') throw SyntaxError("empty factor", pos_);
            OpNode inner = expr();
            if (peek() != ')') {
                if (pos_ >= text_.size()) throw SyntaxError("unbalanced '('", open);
                unexpected();
            }
            ++pos_;
            return inner;
        }
        if (c == ')' || c == '+' || c == '-' || c == '*' || c == '^') throw SyntaxError("empty factor", pos_);
        unexpected();
    }
};

inline int precedence(NodeKind k) {
    switch (k) {
        case NodeKind::Sum:
        case NodeKind::Diff: return 1;
        case NodeKind::Prod: return 2;
        case NodeKind::Pow: return 3;
        default: return 4;
    }
}

inline void render_into(const OpNode& n, std::string& out) {
    auto child = [&out](const OpNode& c, bool parens) {
        if (parens) out += '(';
        render_into(c, out);
        if (parens) out += ')';
    };
    switch (n.kind) {
        case NodeKind::VarA: out += 'a'; return;
        case NodeKind::VarB: out += 'b'; return;
        case NodeKind::Literal: out += std::to_string(n.value); return;
        case NodeKind::Pow:
            child(n.args[0], precedence(n.args[0].kind) <= 3);
            out += '^';
            out += std::to_string(n.value);
            return;
        default: {
            int prec = precedence(n.kind);
            // Left-associative parse: a right operand at the same level needs parens.
            child(n.args[0], precedence(n.args[0].kind) < prec);
            out += n.kind == NodeKind::Sum ? '+' : n.kind == NodeKind::Diff ? '-' : '*';
            child(n.args[1], precedence(n.args[1].kind) <= prec);
            return;
        }
    }
}

inline std::uint64_t mulmod(std::uint64_t x, std::uint64_t y, std::uint64_t p) { return (x * y) % p; }

inline std::uint64_t powmod(std::uint64_t base, std::uint64_t exp, std::uint64_t p) {
    std::uint64_t result = 1 % p;
    base %= p;
    while (exp > 0) {
        if (exp & 1) result = mulmod(result, base, p);
        base = mulmod(base, base, p);
        exp >>= 1;
    }
    return result;
}

inline std::uint64_t eval_node(const OpNode& n, std::uint64_t a, std::uint64_t b, std::uint64_t p) {
    switch (n.kind) {
        case NodeKind::VarA: return a;
        case NodeKind::VarB: return b;
        case NodeKind::Literal: return n.value % p;
        case NodeKind::Pow: return powmod(eval_node(n.args[0], a, b, p), n.value, p);
        case NodeKind::Sum: return (eval_node(n.args[0], a, b, p) + eval_node(n.args[1], a, b, p)) % p;
        case NodeKind::Diff:
            return (eval_node(n.args[0], a, b, p) + p - eval_node(n.args[1], a, b, p)) % p;
        case NodeKind::Prod: return mulmod(eval_node(n.args[0], a, b, p), eval_node(n.args[1], a, b, p), p);
    }
    return 0;
}

}  // namespace detail

inline std::string render_op(const OpNode& node) {
    std::string out;
    detail::render_into(node, out);
    return out;
}

inline std::string render_op(const OpExpr& e) { return render_op(e.root); }

inline OpExpr parse_op(std::string_view text) { return OpExpr(detail::OpParser(text).parse()); }

// Value of the polynomial at (a, b) mod p, reducing at every node.
inline Residue eval_op(const OpExpr& e, const Residue& a, const Residue& b) {
    if (a.modulus() != b.modulus()) throw std::invalid_argument("operands have different moduli");
    return Residue(detail::eval_node(e.root, a.value(), b.value(), a.modulus()), a.modulus());
}

// Unchecked fast path for table building; p must be a valid modulus and a, b < p.
inline std::uint64_t eval_op_raw(const OpExpr& e, std::uint64_t a, std::uint64_t b, std::uint64_t p) {
    return detail::eval_node(e.root, a, b, p);
}

}  // namespace grok
