#include "jsvuln/js/lexer.hpp"

#include <algorithm>
#include <cctype>
#include <array>
#include <unordered_set>

namespace jsvuln::js {
namespace {

const std::unordered_set<std::string_view>& reserved_words() {
    static const std::unordered_set<std::string_view> words = {
        "break",  "case",     "catch",   "class",  "const",      "continue", "debugger", "default", "delete",
        "do",     "else",     "enum",    "export", "extends",    "false",    "finally",  "for",     "function",
        "if",     "import",   "in",      "instanceof", "let",    "new",      "null",     "return",  "super",
        "switch", "this",     "throw",   "true",   "try",        "typeof",   "var",      "void",    "while",
        "with",   "yield",    "await",
    };
    return words;
}

// Keywords after which a `/` begins a regular expression literal.
bool keyword_allows_regex(std::string_view w) {
    static const std::unordered_set<std::string_view> words = {
        "return", "typeof", "instanceof", "in", "new", "delete", "void", "throw",
        "case",   "do",     "else",       "yield", "await", "extends",
    };
    return words.contains(w);
}

constexpr std::array<std::string_view, 43> kPunctuators = {
    ">>>=", "===", "!==", "**=", "<<=", ">>=", ">>>", "...", "&&=", "||=", "?\?=", "=>", "==", "!=", "<=",
    ">=",   "&&",  "||",  "??",  "?.",  "++",  "--",  "+=",  "-=",  "*=",  "/=",  "%=", "&=", "|=", "^=",
    "<<",   ">>",  "**",  "{",   "}",   "(",   ")",   "[",   "]",   ";",   ",",   "<",  ">",
};
constexpr std::string_view kSinglePunct = "+-*/%&|^!~?:=.";

bool is_ident_start(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == '$' || c >= 0x80 || c == '\\';
}
bool is_ident_part(unsigned char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        if (src_.substr(0, 3) == "\xEF\xBB\xBF") advance(3);
        if (src_.substr(pos_, 2) == "#!") {
            const std::size_t start = pos_;
            const int line = line_, col = col_;
            while (pos_ < src_.size() && src_[pos_] != '\n' && src_[pos_] != '\r') advance(1);
            emit(TokenKind::comment_line, start, line, col);
        }
        while (pos_ < src_.size()) step();
        return std::move(out_);
    }

private:
    void step() {
        const unsigned char c = static_cast<unsigned char>(src_[pos_]);
        const int line = line_, col = col_;
        const std::size_t start = pos_;
        if (c == '\n' || c == '\r') {
            const std::size_t len = (c == '\r' && peek(1) == '\n') ? 2 : 1;
            out_.push_back({TokenKind::eol, std::string(src_.substr(pos_, len)), line, col});
            pos_ += len;
            ++line_;
            col_ = 1;
            return;
        }
        if (c == ' ' || c == '\t' || c == '\v' || c == '\f') {
            advance(1);
            return;
        }
        if (c == 0xC2 && peek(1) == '\xA0') {  // no-break space
            advance(2);
            return;
        }
        if (c == 0xE2 && peek(1) == '\x80' && (peek(2) == '\xA8' || peek(2) == '\xA9')) {  // U+2028/9
            advance(3);
            return;
        }
        if (c == '/' && peek(1) == '/') {
            while (pos_ < src_.size() && src_[pos_] != '\n' && src_[pos_] != '\r') advance(1);
            emit(TokenKind::comment_line, start, line, col);
            return;
        }
        if (c == '/' && peek(1) == '*') {
            const auto close = src_.find("*/", pos_ + 2);
            if (close == std::string_view::npos) throw LexError("unterminated block comment", line);
            advance(close + 2 - pos_);
            emit(TokenKind::comment_block, start, line, col);
            return;
        }
        if (c == '\'' || c == '"') {
            lex_string(static_cast<char>(c), line);
            emit(TokenKind::string, start, line, col);
            return;
        }
        if (c == '`') {
            lex_template(line);
            emit(TokenKind::template_literal, start, line, col);
            return;
        }
        if (is_digit(static_cast<char>(c)) || (c == '.' && is_digit(peek(1)))) {
            lex_number();
            emit(TokenKind::number, start, line, col);
            return;
        }
        if (is_ident_start(c)) {
            while (pos_ < src_.size() && is_ident_part(static_cast<unsigned char>(src_[pos_]))) advance(1);
            const std::string_view word = src_.substr(start, pos_ - start);
            const bool member = prev_significant() && (prev_significant()->is_punct(".") || prev_significant()->is_punct("?."));
            emit(!member && is_reserved_word(word) ? TokenKind::keyword : TokenKind::identifier, start, line, col);
            return;
        }
        if (c == '/' && regex_allowed()) {
            lex_regex(line);
            emit(TokenKind::regex, start, line, col);
            return;
        }
        if (c == '@') throw UnsupportedSyntax("decorators are not supported (line " + std::to_string(line) + ")");
        if (c == '#') throw UnsupportedSyntax("private names are not supported (line " + std::to_string(line) + ")");
        for (std::string_view p : kPunctuators) {
            if (src_.substr(pos_, p.size()) == p) {
                if (p == "?." && is_digit(peek(2))) continue;
                advance(p.size());
                emit(TokenKind::punctuator, start, line, col);
                return;
            }
        }
        if (kSinglePunct.find(static_cast<char>(c)) != std::string_view::npos) {
            advance(1);
            emit(TokenKind::punctuator, start, line, col);
            return;
        }
        throw LexError("unexpected character '" + std::string(1, static_cast<char>(c)) + "'", line);
    }

    char peek(std::size_t ahead) const {
        return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
    }

    // Moves over n bytes that contain no line terminators of interest to the
    // caller; line/column bookkeeping is still exact for embedded newlines.
    void advance(std::size_t n) {
        for (std::size_t k = 0; k < n && pos_ < src_.size(); ++k) {
            const char ch = src_[pos_];
            if (ch == '\n' || (ch == '\r' && peek(1) != '\n')) {
                ++line_;
                col_ = 1;
            } else if (ch != '\r' && (static_cast<unsigned char>(ch) & 0xC0) != 0x80) {
                ++col_;
            }
            ++pos_;
        }
    }

    void emit(TokenKind kind, std::size_t start, int line, int col) {
        out_.push_back({kind, std::string(src_.substr(start, pos_ - start)), line, col});
    }

    const Token* prev_significant() const {
        for (auto it = out_.rbegin(); it != out_.rend(); ++it) {
            if (!it->is_trivia()) return &*it;
        }
        return nullptr;
    }

    bool regex_allowed() const {
        const Token* prev = prev_significant();
        if (!prev) return true;
        switch (prev->kind) {
            case TokenKind::punctuator:
                return !(prev->text == ")" || prev->text == "]" || prev->text == "++" || prev->text == "--");
            case TokenKind::keyword:
                return keyword_allows_regex(prev->text);
            default:
                return false;
        }
    }

    void lex_string(char quote, int line) {
        advance(1);
        while (true) {
            if (pos_ >= src_.size()) throw LexError("unterminated string literal", line);
            const char ch = src_[pos_];
            if (ch == quote) {
                advance(1);
                return;
            }
            if (ch == '\\') {
                if (peek(1) == '\r' && peek(2) == '\n') {
                    advance(3);
                } else {
                    advance(2);
                }
                continue;
            }
            if (ch == '\n' || ch == '\r') throw LexError("unterminated string literal", line);
            advance(1);
        }
    }

    void lex_template(int line) {
        advance(1);  // opening backtick
        while (true) {
            if (pos_ >= src_.size()) throw LexError("unterminated template literal", line);
            const char ch = src_[pos_];
            if (ch == '\\') {
                advance(2);
            } else if (ch == '`') {
                advance(1);
                return;
            } else if (ch == '$' && peek(1) == '{') {
                advance(2);
                skip_substitution(line);
            } else {
                advance(1);
            }
        }
    }

    // Skips a `${ ... }` body up to and including its closing brace.
    void skip_substitution(int line) {
        int depth = 1;
        while (pos_ < src_.size()) {
            const char ch = src_[pos_];
            if (ch == '{') {
                ++depth;
                advance(1);
            } else if (ch == '}') {
                advance(1);
                if (--depth == 0) return;
            } else if (ch == '\'' || ch == '"') {
                lex_string(ch, line_);
            } else if (ch == '`') {
                lex_template(line_);
            } else if (ch == '/' && peek(1) == '/') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance(1);
            } else if (ch == '/' && peek(1) == '*') {
                const auto close = src_.find("*/", pos_ + 2);
                if (close == std::string_view::npos) throw LexError("unterminated block comment", line_);
                advance(close + 2 - pos_);
            } else {
                advance(1);
            }
        }
        throw LexError("unterminated template literal", line);
    }

    void lex_number() {
        if (src_[pos_] == '0' && (peek(1) == 'x' || peek(1) == 'X' || peek(1) == 'o' || peek(1) == 'O' ||
                                  peek(1) == 'b' || peek(1) == 'B')) {
            advance(2);
            while (pos_ < src_.size() && (std::isxdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
                advance(1);
            }
        } else {
            while (pos_ < src_.size() && (is_digit(src_[pos_]) || src_[pos_] == '_')) advance(1);
            if (pos_ < src_.size() && src_[pos_] == '.') {
                advance(1);
                while (pos_ < src_.size() && (is_digit(src_[pos_]) || src_[pos_] == '_')) advance(1);
            }
            if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
                const char next = peek(1);
                if (is_digit(next) || ((next == '+' || next == '-') && is_digit(peek(2)))) {
                    advance(2);
                    while (pos_ < src_.size() && is_digit(src_[pos_])) advance(1);
                }
            }
        }
        if (pos_ < src_.size() && src_[pos_] == 'n') advance(1);
    }

    void lex_regex(int line) {
        advance(1);
        bool in_class = false;
        while (true) {
            if (pos_ >= src_.size()) throw LexError("unterminated regular expression", line);
            const char ch = src_[pos_];
            if (ch == '\n' || ch == '\r') throw LexError("unterminated regular expression", line);
            if (ch == '\\') {
                advance(2);
                continue;
            }
            if (ch == '[') in_class = true;
            if (ch == ']') in_class = false;
            advance(1);
            if (ch == '/' && !in_class) break;
        }
        while (pos_ < src_.size() && is_ident_part(static_cast<unsigned char>(src_[pos_]))) advance(1);
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
    std::vector<Token> out_;
};

}  // namespace

std::string_view to_string(TokenKind kind) {
    switch (kind) {
        case TokenKind::identifier: return "identifier";
        case TokenKind::keyword: return "keyword";
        case TokenKind::punctuator: return "punctuator";
        case TokenKind::number: return "number";
        case TokenKind::string: return "string";
        case TokenKind::regex: return "regex";
        case TokenKind::template_literal: return "template";
        case TokenKind::comment_line: return "comment_line";
        case TokenKind::comment_block: return "comment_block";
        case TokenKind::eol: return "eol";
    }
    return "?";
}

int Token::end_line() const {
    if (kind == TokenKind::eol) return line;
    int l = line;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\n' || (text[i] == '\r' && (i + 1 >= text.size() || text[i + 1] != '\n'))) ++l;
    }
    return l;
}

bool is_reserved_word(std::string_view word) { return reserved_words().contains(word); }

std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

}  // namespace jsvuln::js
