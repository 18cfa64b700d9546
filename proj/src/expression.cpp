#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>

#include "mfg_uzawa/experiments.hpp"

namespace mfg_uzawa {

ParseError::ParseError(const std::string& message, int line, std::string key)
    : std::runtime_error(message), line_(line), key_(std::move(key)) {}

struct Expression::Node {
    enum class Op { kNumber, kX, kY, kAdd, kSub, kMul, kDiv, kNeg, kSin, kCos };
    Op op;
    double value = 0.0;
    std::unique_ptr<const Node> lhs;
    std::unique_ptr<const Node> rhs;

    double eval(double x, double y) const {
        switch (op) {
            case Op::kNumber: return value;
            case Op::kX: return x;
            case Op::kY: return y;
            case Op::kAdd: return lhs->eval(x, y) + rhs->eval(x, y);
            case Op::kSub: return lhs->eval(x, y) - rhs->eval(x, y);
            case Op::kMul: return lhs->eval(x, y) * rhs->eval(x, y);
            case Op::kDiv: return lhs->eval(x, y) / rhs->eval(x, y);
            case Op::kNeg: return -lhs->eval(x, y);
            case Op::kSin: return std::sin(lhs->eval(x, y));
            default: return std::cos(lhs->eval(x, y));
        }
    }
};

namespace {

using Node = Expression::Node;
using NodePtr = std::unique_ptr<const Node>;

NodePtr make(Node::Op op, NodePtr lhs = nullptr, NodePtr rhs = nullptr, double value = 0.0) {
    auto node = std::make_unique<Node>();
    node->op = op;
    node->value = value;
    node->lhs = std::move(lhs);
    node->rhs = std::move(rhs);
    return node;
}

// expr   := term (('+' | '-') term)*
// term   := unary (('*' | '/') unary)*
// unary  := '-' unary | '+' unary | atom
// atom   := number | 'x' | 'y' | 'pi' | func '(' expr ')' | '(' expr ')'
class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    NodePtr parse() {
        NodePtr root = expr();
        skip_space();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("expression '" + std::string(text_) + "': " + what + " at column " +
                             std::to_string(pos_ + 1),
                         0);
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr expr() {
        NodePtr node = term();
        for (;;) {
            if (accept('+')) node = make(Node::Op::kAdd, std::move(node), term());
            else if (accept('-')) node = make(Node::Op::kSub, std::move(node), term());
            else return node;
        }
    }

    NodePtr term() {
        NodePtr node = unary();
        for (;;) {
            if (accept('*')) node = make(Node::Op::kMul, std::move(node), unary());
            else if (accept('/')) node = make(Node::Op::kDiv, std::move(node), unary());
            else return node;
        }
    }

    NodePtr unary() {
        if (accept('-')) return make(Node::Op::kNeg, unary());
        if (accept('+')) return unary();
        return atom();
    }

    NodePtr atom() {
        skip_space();
        if (pos_ >= text_.size()) fail("unexpected end");
        if (accept('(')) {
            NodePtr inner = expr();
            if (!accept(')')) fail("expected ')'");
            return inner;
        }
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            const std::string_view word = text_.substr(start, pos_ - start);
            if (word == "x") return make(Node::Op::kX);
            if (word == "y") return make(Node::Op::kY);
            if (word == "pi") return make(Node::Op::kNumber, nullptr, nullptr, std::numbers::pi);
            if (word == "sin" || word == "cos") {
                if (!accept('(')) fail("expected '(' after " + std::string(word));
                NodePtr arg = expr();
                if (!accept(')')) fail("expected ')'");
                return make(word == "sin" ? Node::Op::kSin : Node::Op::kCos, std::move(arg));
            }
            pos_ = start;
            fail("unknown name '" + std::string(word) + "'");
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    NodePtr number() {
        double value = 0.0;
        const char* first = text_.data() + pos_;
        const auto [end, ec] = std::from_chars(first, text_.data() + text_.size(), value);
        if (ec != std::errc()) fail("malformed number");
        pos_ += static_cast<std::size_t>(end - first);
        return make(Node::Op::kNumber, nullptr, nullptr, value);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace

Expression::Expression(std::string text, std::shared_ptr<const Node> root)
    : text_(std::move(text)), root_(std::move(root)) {}

Expression Expression::parse(std::string_view text) {
    NodePtr root = Parser(text).parse();
    return Expression(std::string(text), std::shared_ptr<const Node>(std::move(root)));
}

double Expression::operator()(double x, double y) const { return root_->eval(x, y); }

}  // namespace mfg_uzawa
