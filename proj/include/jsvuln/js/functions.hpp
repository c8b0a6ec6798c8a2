#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "jsvuln/js/lexer.hpp"

namespace jsvuln::js {

inline constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

/// A function declaration, function expression, method or arrow function.
struct SourceFunction {
    std::string short_name;
    std::string qualified_name;
    std::string file_path;
    int start_line = 0;
    int start_col = 0;
    int end_line = 0;
    int end_col = 0;  ///< column of the last character of the function

    /// Every token of the span (header included, comments and line breaks kept).
    std::vector<Token> body_tokens;
    std::vector<SourceFunction> children;

    int param_count = 0;
    std::size_t name_token = npos;  ///< index in body_tokens of the declared name
    std::size_t body_open = npos;   ///< index in body_tokens of the body `{`; npos for expression arrows
    std::size_t parent_offset = 0;  ///< index of body_tokens[0] inside the parent's body_tokens
    int doc_comment_lines = 0;      ///< lines of the block comment right above the header
};

class ExtractError : public ParseError {
public:
    using ParseError::ParseError;
};

/// Finds every function in a token stream and returns the top-level ones with
/// nested functions under `children`. Spans come from bracket matching, or
/// from the expression extent for arrows without braces. Throws ExtractError
/// on unbalanced brackets.
std::vector<SourceFunction> extract_functions(const std::vector<Token>& tokens, const std::string& file_path);

/// Sets `qualified_name` to the chain of enclosing function short names and
/// the function's own short name, joined by ".". Names that collide within
/// the file get an `@L<line>C<col>` suffix on every occurrence but the first.
std::vector<SourceFunction> qualify_names(std::vector<SourceFunction> fns);

/// Pre-order list of all functions in the tree.
std::vector<const SourceFunction*> flatten(const std::vector<SourceFunction>& fns);

/// tokenize + extract_functions + qualify_names.
std::vector<SourceFunction> analyze_source(std::string_view source, const std::string& file_path);

std::string anonymous_name(int line, int col);

}  // namespace jsvuln::js
