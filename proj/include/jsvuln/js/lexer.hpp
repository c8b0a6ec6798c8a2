#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "jsvuln/error.hpp"

namespace jsvuln::js {

enum class TokenKind {
    identifier,
    keyword,
    punctuator,
    number,
    string,
    regex,
    template_literal,
    comment_line,
    comment_block,
    eol,
};

std::string_view to_string(TokenKind kind);

struct Token {
    TokenKind kind;
    std::string text;
    int line = 1;    ///< 1-based line of the first character
    int column = 1;  ///< 1-based column (code points) of the first character

    bool operator==(const Token&) const = default;

    bool is(TokenKind k, std::string_view t) const { return kind == k && text == t; }
    bool is_punct(std::string_view t) const { return is(TokenKind::punctuator, t); }
    bool is_keyword(std::string_view t) const { return is(TokenKind::keyword, t); }
    bool is_comment() const { return kind == TokenKind::comment_line || kind == TokenKind::comment_block; }
    /// Comments and line breaks carry no syntax.
    bool is_trivia() const { return is_comment() || kind == TokenKind::eol; }
    /// Last line the token occupies (block comments and templates can span lines).
    int end_line() const;
};

/// Raised for unterminated strings, comments, templates and regular
/// expressions, and for stray characters.
class LexError : public ParseError {
public:
    LexError(const std::string& what, int line) : ParseError(what + " at line " + std::to_string(line)), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Syntax outside the supported ES2017 subset (decorators, private names).
class UnsupportedSyntax : public ParseError {
public:
    using ParseError::ParseError;
};

bool is_reserved_word(std::string_view word);

/// Splits JavaScript source into tokens, keeping comments and emitting one
/// `eol` token per line terminator outside other tokens. A leading `#!` line
/// is returned as a line comment. Whether `/` starts a regular expression is
/// decided from the previous significant token.
std::vector<Token> tokenize(std::string_view source);

}  // namespace jsvuln::js
