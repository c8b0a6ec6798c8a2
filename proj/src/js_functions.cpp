#include "jsvuln/js/functions.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <unordered_set>

namespace jsvuln::js {
namespace {

struct Candidate {
    std::size_t start = 0;  // significant-token positions
    std::size_t end = 0;
    std::size_t body_open = npos;
    std::size_t name = npos;
    int params = 0;
    std::string short_name;
};

bool is_control_word(std::string_view w) {
    static const std::unordered_set<std::string_view> words = {
        "if", "for", "while", "switch", "catch", "with", "function", "return", "typeof", "new", "delete", "void",
        "throw", "case", "do", "else", "in", "instanceof", "var", "let", "const", "class", "extends", "yield", "await",
    };
    return words.contains(w);
}

int code_points(std::string_view s) {
    int n = 0;
    for (char c : s) {
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
    }
    return n;
}

// Column of the last character of a token.
int last_column(const Token& t) {
    const auto nl = t.text.find_last_of("\r\n");
    if (nl == std::string::npos) return t.column + std::max(code_points(t.text), 1) - 1;
    return std::max(code_points(std::string_view(t.text).substr(nl + 1)), 1);
}

std::string strip_quotes(const std::string& s) {
    if (s.size() >= 2 && (s.front() == '\'' || s.front() == '"') && s.back() == s.front()) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

class Extractor {
public:
    Extractor(const std::vector<Token>& toks, const std::string& path) : toks_(toks), path_(path) {
        for (std::size_t i = 0; i < toks_.size(); ++i) {
            if (!toks_[i].is_trivia()) sig_.push_back(i);
        }
        match_brackets();
    }

    std::vector<SourceFunction> run() {
        std::vector<Candidate> found;
        for (std::size_t p = 0; p < sig_.size(); ++p) {
            std::optional<Candidate> c;
            const Token& t = tok(p);
            if (t.is_keyword("function")) {
                c = function_at(p);
            } else if (t.is_punct("=>")) {
                c = arrow_at(p);
            } else if (t.is_punct("(")) {
                c = method_at(p);
            }
            if (c) found.push_back(std::move(*c));
        }
        std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
            return a.start != b.start ? a.start < b.start : a.end > b.end;
        });
        return build_tree(found);
    }

private:
    const Token& tok(std::size_t p) const { return toks_[sig_[p]]; }
    bool valid(std::size_t p) const { return p < sig_.size(); }

    void match_brackets() {
        match_.assign(sig_.size(), npos);
        std::vector<std::size_t> stack;
        for (std::size_t p = 0; p < sig_.size(); ++p) {
            const Token& t = tok(p);
            if (t.kind != TokenKind::punctuator) continue;
            if (t.text == "(" || t.text == "[" || t.text == "{") {
                stack.push_back(p);
            } else if (t.text == ")" || t.text == "]" || t.text == "}") {
                const char open = t.text == ")" ? '(' : t.text == "]" ? '[' : '{';
                if (stack.empty() || tok(stack.back()).text[0] != open) {
                    throw ExtractError(path_ + ": unbalanced '" + t.text + "' at line " + std::to_string(t.line));
                }
                match_[stack.back()] = p;
                match_[p] = stack.back();
                stack.pop_back();
            }
        }
        if (!stack.empty()) {
            const Token& t = tok(stack.back());
            throw ExtractError(path_ + ": unclosed '" + t.text + "' at line " + std::to_string(t.line));
        }
    }

    int count_params(std::size_t open) const {
        const std::size_t close = match_[open];
        if (close == open + 1) return 0;
        int commas = 0;
        std::size_t last = open;
        for (std::size_t p = open + 1; p < close; ++p) {
            last = p;
            const Token& t = tok(p);
            if (t.is_punct("(") || t.is_punct("[") || t.is_punct("{")) {
                p = match_[p];
                last = p;
                continue;
            }
            if (t.is_punct(",")) ++commas;
        }
        return tok(last).is_punct(",") ? commas : commas + 1;
    }

    // Name for an unnamed function from `name = function`, `obj.name = ...`
    // or `name: function` just before its start.
    std::optional<std::string> inferred_name(std::size_t start) const {
        if (start < 2) return std::nullopt;
        const Token& op = tok(start - 1);
        if (!(op.is_punct("=") || op.is_punct(":"))) return std::nullopt;
        const Token& target = tok(start - 2);
        if (target.kind == TokenKind::identifier || target.kind == TokenKind::keyword) return target.text;
        if (target.kind == TokenKind::string && op.is_punct(":")) return strip_quotes(target.text);
        return std::nullopt;
    }

    std::optional<Candidate> function_at(std::size_t p) const {
        Candidate c;
        c.start = p;
        if (p > 0 && tok(p - 1).is(TokenKind::identifier, "async")) c.start = p - 1;
        std::size_t q = p + 1;
        if (valid(q) && tok(q).is_punct("*")) ++q;
        if (valid(q) && tok(q).kind == TokenKind::identifier) {
            c.name = q;
            c.short_name = tok(q).text;
            ++q;
        }
        if (!valid(q) || !tok(q).is_punct("(")) return std::nullopt;
        const std::size_t close = match_[q];
        if (!valid(close + 1) || !tok(close + 1).is_punct("{")) return std::nullopt;
        c.params = count_params(q);
        c.body_open = close + 1;
        c.end = match_[close + 1];
        if (c.short_name.empty()) {
            if (auto n = inferred_name(c.start)) c.short_name = *n;
        }
        return c;
    }

    static bool ends_expression(const Token& t) {
        if (t.kind == TokenKind::punctuator) {
            return t.text == ")" || t.text == "]" || t.text == "}" || t.text == "++" || t.text == "--";
        }
        if (t.kind == TokenKind::keyword) {
            static const std::unordered_set<std::string_view> open = {
                "new", "typeof", "void", "delete", "in", "instanceof", "var", "let", "const", "extends", "case",
                "await", "yield", "return", "throw",
            };
            return !open.contains(t.text);
        }
        return true;
    }

    static bool continues_expression(const Token& t) {
        if (t.kind == TokenKind::keyword) return t.text == "in" || t.text == "instanceof";
        if (t.kind != TokenKind::punctuator) return false;
        static const std::unordered_set<std::string_view> no = {"(", "[", "{", "++", "--", "!", "~", ";", ")", "]", "}"};
        return !no.contains(t.text);
    }

    bool line_break_between(std::size_t a, std::size_t b) const {
        for (std::size_t i = sig_[a] + 1; i < sig_[b]; ++i) {
            if (toks_[i].kind == TokenKind::eol) return true;
        }
        return false;
    }

    std::optional<Candidate> arrow_at(std::size_t p) const {
        if (p == 0 || !valid(p + 1)) return std::nullopt;
        Candidate c;
        const Token& before = tok(p - 1);
        std::size_t param_start;
        if (before.is_punct(")")) {
            param_start = match_[p - 1];
            c.params = count_params(param_start);
        } else if (before.kind == TokenKind::identifier) {
            param_start = p - 1;
            c.params = 1;
        } else {
            return std::nullopt;
        }
        c.start = param_start;
        if (param_start > 0 && tok(param_start - 1).is(TokenKind::identifier, "async") &&
            !line_break_between(param_start - 1, param_start)) {
            c.start = param_start - 1;
        }
        if (tok(p + 1).is_punct("{")) {
            c.body_open = p + 1;
            c.end = match_[p + 1];
        } else {
            int pending_ternary = 0;
            std::size_t q = p + 1;
            std::size_t last = npos;
            while (valid(q)) {
                const Token& t = tok(q);
                if (t.is_punct(",") || t.is_punct(";") || t.is_punct(")") || t.is_punct("]") || t.is_punct("}")) break;
                if (t.is_punct(":")) {
                    if (pending_ternary == 0) break;
                    --pending_ternary;
                }
                if (t.is_punct("?")) ++pending_ternary;
                if (last != npos && line_break_between(last, q) && ends_expression(tok(last)) &&
                    !continues_expression(t)) {
                    break;
                }
                if (t.is_punct("(") || t.is_punct("[") || t.is_punct("{")) q = match_[q];
                last = q;
                ++q;
            }
            if (last == npos) return std::nullopt;
            c.end = last;
        }
        if (auto n = inferred_name(c.start)) c.short_name = *n;
        return c;
    }

    std::optional<Candidate> method_at(std::size_t p) const {
        if (p == 0) return std::nullopt;
        const std::size_t close = match_[p];
        if (!valid(close + 1) || !tok(close + 1).is_punct("{")) return std::nullopt;
        const Token& key = tok(p - 1);
        std::size_t key_start = p - 1;
        std::string name;
        if (key.kind == TokenKind::identifier || key.kind == TokenKind::number) {
            name = key.text;
        } else if (key.kind == TokenKind::keyword && !is_control_word(key.text)) {
            name = key.text;
        } else if (key.kind == TokenKind::string) {
            name = strip_quotes(key.text);
        } else if (key.is_punct("]")) {
            key_start = match_[p - 1];
        } else {
            return std::nullopt;
        }
        if (key_start > 0 && tok(key_start - 1).is_keyword("function")) return std::nullopt;
        // Walk back over method modifiers to the token that opens the member.
        std::size_t start = key_start;
        while (start > 0) {
            const Token& m = tok(start - 1);
            if (m.is_punct("*") || m.is(TokenKind::identifier, "static") || m.is(TokenKind::identifier, "async") ||
                m.is(TokenKind::identifier, "get") || m.is(TokenKind::identifier, "set")) {
                --start;
            } else {
                break;
            }
        }
        if (start > 0) {
            const Token& lead = tok(start - 1);
            if (!(lead.is_punct("{") || lead.is_punct(",") || lead.is_punct("}") || lead.is_punct(";"))) {
                return std::nullopt;
            }
        }
        Candidate c;
        c.start = start;
        c.name = key_start == p - 1 ? p - 1 : npos;
        c.short_name = name;
        c.params = count_params(p);
        c.body_open = close + 1;
        c.end = match_[close + 1];
        return c;
    }

    int doc_lines(std::size_t start_index) const {
        std::size_t j = start_index;
        const int start_line = toks_[start_index].line;
        while (j > 0) {
            --j;
            const Token& t = toks_[j];
            if (t.kind == TokenKind::comment_block) return t.end_line() - t.line + 1;
            if (t.kind == TokenKind::eol) {
                if (j == 0) return 0;
                const Token& above = toks_[j - 1];
                if (above.kind == TokenKind::comment_block && above.end_line() == start_line - 1) {
                    return above.end_line() - above.line + 1;
                }
                return 0;
            }
        }
        return 0;
    }

    SourceFunction make_function(const Candidate& c) const {
        SourceFunction fn;
        const std::size_t first = sig_[c.start];
        const std::size_t last = sig_[c.end];
        const Token& s = toks_[first];
        const Token& e = toks_[last];
        fn.file_path = path_;
        fn.start_line = s.line;
        fn.start_col = s.column;
        fn.end_line = e.end_line();
        fn.end_col = last_column(e);
        fn.short_name = c.short_name.empty() ? anonymous_name(s.line, s.column) : c.short_name;
        fn.body_tokens.assign(toks_.begin() + static_cast<std::ptrdiff_t>(first),
                              toks_.begin() + static_cast<std::ptrdiff_t>(last) + 1);
        fn.param_count = c.params;
        fn.name_token = c.name == npos ? npos : sig_[c.name] - first;
        fn.body_open = c.body_open == npos ? npos : sig_[c.body_open] - first;
        fn.parent_offset = first;  // absolute until nested under a parent
        fn.doc_comment_lines = doc_lines(first);
        return fn;
    }

    std::vector<SourceFunction> build_tree(const std::vector<Candidate>& found) const {
        struct Node {
            SourceFunction fn;
            std::size_t first, last;
        };
        std::vector<SourceFunction> roots;
        std::vector<Node> stack;
        auto pop_into_parent = [&]() {
            Node done = std::move(stack.back());
            stack.pop_back();
            if (stack.empty()) {
                done.fn.parent_offset = 0;
                roots.push_back(std::move(done.fn));
            } else {
                done.fn.parent_offset = done.first - stack.back().first;
                stack.back().fn.children.push_back(std::move(done.fn));
            }
        };
        for (const Candidate& c : found) {
            const std::size_t first = sig_[c.start];
            const std::size_t last = sig_[c.end];
            while (!stack.empty() && first > stack.back().last) pop_into_parent();
            if (!stack.empty() && last > stack.back().last) continue;  // overlapping span, not nested
            stack.push_back({make_function(c), first, last});
        }
        while (!stack.empty()) pop_into_parent();
        return roots;
    }

    const std::vector<Token>& toks_;
    const std::string& path_;
    std::vector<std::size_t> sig_;
    std::vector<std::size_t> match_;
};

void collect(const std::vector<SourceFunction>& fns, std::vector<const SourceFunction*>& out) {
    for (const auto& f : fns) {
        out.push_back(&f);
        collect(f.children, out);
    }
}

}  // namespace

std::string anonymous_name(int line, int col) {
    return "<anonymous@L" + std::to_string(line) + "C" + std::to_string(col) + ">";
}

std::vector<SourceFunction> extract_functions(const std::vector<Token>& tokens, const std::string& file_path) {
    return Extractor(tokens, file_path).run();
}

std::vector<SourceFunction> qualify_names(std::vector<SourceFunction> fns) {
    std::map<std::string, int> seen;
    std::function<void(std::vector<SourceFunction>&, const std::string&)> walk =
        [&](std::vector<SourceFunction>& level, const std::string& prefix) {
            for (auto& f : level) {
                const std::string chain = prefix.empty() ? f.short_name : prefix + "." + f.short_name;
                f.qualified_name = chain;
                if (seen[chain]++ > 0) {
                    f.qualified_name += "@L" + std::to_string(f.start_line) + "C" + std::to_string(f.start_col);
                }
                walk(f.children, chain);
            }
        };
    walk(fns, "");
    return fns;
}

std::vector<const SourceFunction*> flatten(const std::vector<SourceFunction>& fns) {
    std::vector<const SourceFunction*> out;
    collect(fns, out);
    return out;
}

std::vector<SourceFunction> analyze_source(std::string_view source, const std::string& file_path) {
    return qualify_names(extract_functions(tokenize(source), file_path));
}

}  // namespace jsvuln::js
