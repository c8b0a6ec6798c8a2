#include "jsvuln/js/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace jsvuln::js {
namespace {

bool is_operand(const Token& t) {
    switch (t.kind) {
        case TokenKind::identifier:
        case TokenKind::number:
        case TokenKind::string:
        case TokenKind::regex:
        case TokenKind::template_literal:
            return true;
        case TokenKind::keyword:
            return t.text == "this" || t.text == "super" || t.text == "null" || t.text == "true" || t.text == "false";
        default:
            return false;
    }
}

/// Single pass over a function's own tokens computing statement count,
/// cyclomatic complexity and the two nesting levels.
class StructureWalker {
public:
    struct Result {
        int statements = 0;
        int decisions = 0;
        int nesting = 0;
        int nesting_no_else_if = 0;
    };

    Result run(const std::vector<Token>& toks, std::size_t body_open) {
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (!toks[i].is_trivia()) sig_.push_back(i);
        }
        toks_ = &toks;
        count_decisions();
        if (body_open == npos) {
            result_.statements = 1;  // expression-bodied arrow: one implicit return
            return result_;
        }
        std::size_t p = 0;
        while (p < sig_.size() && sig_[p] != body_open) ++p;
        if (p == sig_.size()) return result_;
        frames_.push_back(Frame{Frame::block});
        for (++p; p < sig_.size() && !frames_.empty(); ++p) visit(p);
        return result_;
    }

private:
    struct Frame {
        enum Kind { block, object, klass, paren } kind;
        explicit Frame(Kind k) : kind(k) {}
        int nl = 0;   // nesting of statements directly inside (blocks only)
        int nle = 0;
        int chain_nl = 0;  // extra nesting from open unbraced control bodies
        int chain_nle = 0;
        bool stmt_open = false;
        bool stmt_counted = false;
        bool stmt_is_class = false;
        bool label_mode = false;
        int label_ternaries = 0;
        std::string header_of;       // paren frames: control keyword owning the header
        std::string pending_header;  // block frames: keyword waiting for its `(`
        bool expect_body = false;
        bool body_is_else_if = false;
        std::string body_owner;  // keyword whose body is expected
        bool after_do = false;
        bool do_tail = false;
        bool pending_class = false;
        bool is_control_body = false;
        bool is_do_body = false;
    };

    const Token& tok(std::size_t p) const { return (*toks_)[sig_[p]]; }

    void count_decisions() {
        // do-while tails are found during the statement walk; here every
        // `while` counts and the walker subtracts the tails.
        for (std::size_t p = 0; p < sig_.size(); ++p) {
            const Token& t = tok(p);
            if (t.kind == TokenKind::keyword &&
                (t.text == "if" || t.text == "for" || t.text == "while" || t.text == "do" || t.text == "case" ||
                 t.text == "catch")) {
                ++result_.decisions;
            } else if (t.kind == TokenKind::punctuator && (t.text == "&&" || t.text == "||" || t.text == "?")) {
                ++result_.decisions;
            }
        }
    }

    bool line_break_before(std::size_t p) const {
        if (p == 0) return false;
        for (std::size_t i = sig_[p - 1] + 1; i < sig_[p]; ++i) {
            if ((*toks_)[i].kind == TokenKind::eol) return true;
        }
        return false;
    }

    static bool ends_expression(const Token& t) {
        if (t.kind == TokenKind::punctuator) {
            return t.text == ")" || t.text == "]" || t.text == "}" || t.text == "++" || t.text == "--";
        }
        if (t.kind == TokenKind::keyword) {
            static const std::unordered_set<std::string_view> open = {
                "new", "typeof", "void", "delete", "in", "instanceof", "var", "let", "const", "extends", "case",
                "await", "yield", "throw",
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

    Frame& top() { return frames_.back(); }

    void end_statement(Frame& f) {
        if (f.stmt_open && !f.stmt_counted && !f.stmt_is_class) ++result_.statements;
        f.stmt_open = false;
        f.stmt_counted = false;
        f.stmt_is_class = false;
        f.chain_nl = 0;
        f.chain_nle = 0;
    }

    void begin_statement(Frame& f, bool counted) {
        f.stmt_open = true;
        f.stmt_counted = counted;
    }

    /// The next statement (or block) is the body of `owner`.
    void expect_body(Frame& f, const std::string& owner, bool else_if) {
        f.expect_body = true;
        f.body_owner = owner;
        f.body_is_else_if = else_if;
    }

    void open_unbraced_body(Frame& f) {
        f.chain_nl += 1;
        f.chain_nle += f.body_is_else_if ? 0 : 1;
        f.expect_body = false;
        note_depth(f.nl + f.chain_nl, f.nle + f.chain_nle);
    }

    void note_depth(int nl, int nle) {
        result_.nesting = std::max(result_.nesting, nl);
        result_.nesting_no_else_if = std::max(result_.nesting_no_else_if, nle);
    }

    void visit(std::size_t p) {
        const Token& t = tok(p);
        Frame& f = top();

        if (f.kind != Frame::block) {
            visit_nested(t);
            return;
        }

        if (f.stmt_open && line_break_before(p) && ends_expression(tok(p - 1)) && !continues_expression(t) &&
            !f.label_mode) {
            end_statement(f);
        }

        if (f.label_mode) {
            if (t.is_punct("?")) ++f.label_ternaries;
            if (t.is_punct(":")) {
                if (f.label_ternaries == 0) {
                    f.label_mode = false;
                    f.stmt_open = false;
                    return;
                }
                --f.label_ternaries;
            }
            if (t.is_punct("(") || t.is_punct("[") || t.is_punct("{")) frames_.push_back(Frame{t.is_punct("{") ? Frame::object : Frame::paren});
            return;
        }

        const bool after_do = f.after_do;
        f.after_do = false;

        if (f.expect_body && !t.is_punct("{")) open_unbraced_body(f);

        if (t.kind == TokenKind::keyword) {
            const std::string& w = t.text;
            if (w == "while" && after_do && !f.stmt_open) {
                --result_.decisions;
                f.pending_header = "while";
                f.do_tail = true;
                return;
            }
            if (w == "if" || w == "for" || w == "while" || w == "switch" || w == "with") {
                if (f.stmt_open) end_statement_silently(f);
                if (w != "with") ++result_.statements;
                f.pending_header = w;
                return;
            }
            if (w == "catch") {
                f.pending_header = w;
                if (p + 1 < sig_.size() && tok(p + 1).is_punct("{")) {
                    f.pending_header.clear();
                    expect_body(f, w, false);
                }
                return;
            }
            if (w == "do" || w == "try") {
                if (f.stmt_open) end_statement_silently(f);
                ++result_.statements;
                expect_body(f, w, false);
                return;
            }
            if (w == "else" || w == "finally") {
                const bool else_if = w == "else" && p + 1 < sig_.size() && tok(p + 1).is_keyword("if");
                expect_body(f, w, else_if);
                return;
            }
            if (w == "return" || w == "throw" || w == "break" || w == "continue") {
                if (f.stmt_open) end_statement_silently(f);
                ++result_.statements;
                begin_statement(f, true);
                return;
            }
            if (w == "case" || w == "default") {
                if (f.stmt_open) end_statement(f);
                f.label_mode = true;
                f.label_ternaries = 0;
                return;
            }
            if (w == "class") {
                if (!f.stmt_open) {
                    begin_statement(f, false);
                    f.stmt_is_class = true;
                }
                f.pending_class = true;
                return;
            }
        }

        if (t.is_punct(";")) {
            end_statement(f);
            return;
        }
        if (t.is_punct("(") || t.is_punct("[")) {
            Frame paren{Frame::paren};
            if (t.is_punct("(") && !f.pending_header.empty()) {
                paren.header_of = f.pending_header;
                f.pending_header.clear();
            } else if (!f.stmt_open) {
                begin_statement(f, false);
            }
            frames_.push_back(paren);
            return;
        }
        if (t.is_punct("{")) {
            if (f.pending_class) {
                f.pending_class = false;
                frames_.push_back(Frame{Frame::klass});
                return;
            }
            if (f.expect_body) {
                Frame body{Frame::block};
                body.nl = f.nl + f.chain_nl + 1;
                body.nle = f.nle + f.chain_nle + (f.body_is_else_if ? 0 : 1);
                body.is_control_body = true;
                body.is_do_body = f.body_owner == "do";
                note_depth(body.nl, body.nle);
                f.expect_body = false;
                frames_.push_back(body);
                return;
            }
            if (f.stmt_open) {
                frames_.push_back(Frame{Frame::object});
                return;
            }
            Frame inner{Frame::block};
            inner.nl = f.nl + f.chain_nl;
            inner.nle = f.nle + f.chain_nle;
            frames_.push_back(inner);
            return;
        }
        if (t.is_punct("}")) {
            end_statement(f);
            const bool was_do = f.is_do_body;
            frames_.pop_back();
            if (!frames_.empty() && top().kind == Frame::block) {
                end_statement_silently(top());
                top().after_do = was_do;
            }
            return;
        }
        if (!f.stmt_open) begin_statement(f, false);
    }

    // Ends a statement that was already counted by its keyword (or is a label).
    void end_statement_silently(Frame& f) {
        f.stmt_counted = true;
        end_statement(f);
    }

    void visit_nested(const Token& t) {
        Frame& f = top();
        if (t.is_keyword("class")) {
            f.pending_class = true;
            return;
        }
        if (t.is_punct("(") || t.is_punct("[")) {
            frames_.push_back(Frame{Frame::paren});
            return;
        }
        if (t.is_punct("{")) {
            const bool klass = f.pending_class;
            f.pending_class = false;
            frames_.push_back(Frame{klass ? Frame::klass : Frame::object});
            return;
        }
        if (t.is_punct(")") || t.is_punct("]") || t.is_punct("}")) {
            const Frame done = f;
            frames_.pop_back();
            if (frames_.empty()) return;
            Frame& parent = top();
            if (parent.kind != Frame::block) return;
            if (done.kind == Frame::klass && parent.stmt_is_class) {
                parent.stmt_open = false;
                parent.stmt_is_class = false;
                parent.chain_nl = parent.chain_nle = 0;
                return;
            }
            if (!done.header_of.empty()) {
                if (parent.do_tail) {
                    parent.do_tail = false;
                    begin_statement(parent, true);
                } else {
                    expect_body(parent, done.header_of, false);
                }
            }
        }
    }

    const std::vector<Token>* toks_ = nullptr;
    std::vector<std::size_t> sig_;
    std::vector<Frame> frames_;
    Result result_;
};

std::set<int> lines_of(const std::vector<Token>& toks, bool want_code, bool want_comment) {
    std::set<int> lines;
    for (const auto& t : toks) {
        if (t.kind == TokenKind::eol) continue;
        const bool take = t.is_comment() ? want_comment : want_code;
        if (!take) continue;
        for (int l = t.line; l <= t.end_line(); ++l) lines.insert(l);
    }
    return lines;
}

}  // namespace

bool is_ratio_metric(Metric m) {
    switch (m) {
        case Metric::CC:
        case Metric::CLC:
        case Metric::CD:
        case Metric::TCD:
        case Metric::HDIFF:
        case Metric::HVOL:
        case Metric::HEFF:
        case Metric::HBUGS:
        case Metric::HTIME:
        case Metric::CYCL_DENS:
            return true;
        default:
            return false;
    }
}

double MetricVector::at(std::string_view name) const {
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        if (kMetricNames[i] == name) return values[i];
    }
    throw std::out_of_range("unknown metric " + std::string(name));
}

HalsteadCounts count_halstead(std::span<const Token> tokens, std::span<const std::size_t> skip) {
    std::set<std::string> operators;
    std::set<std::string> operands;
    HalsteadCounts c;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const Token& t = tokens[i];
        if (t.is_trivia()) continue;
        if (std::find(skip.begin(), skip.end(), i) != skip.end()) continue;
        if (is_operand(t)) {
            ++c.total_operands;
            operands.insert(t.text);
        } else {
            ++c.total_operators;
            operators.insert(t.text);
        }
    }
    c.distinct_operators = operators.size();
    c.distinct_operands = operands.size();
    return c;
}

void apply_halstead(const HalsteadCounts& c, MetricVector& m) {
    const double n1 = static_cast<double>(c.distinct_operators);
    const double n2 = static_cast<double>(c.distinct_operands);
    const double N1 = static_cast<double>(c.total_operators);
    const double N2 = static_cast<double>(c.total_operands);
    m[Metric::HOR_D] = n1;
    m[Metric::HOR_T] = N1;
    m[Metric::HON_D] = n2;
    m[Metric::HON_T] = N2;
    m[Metric::HLEN] = N1 + N2;
    m[Metric::HVOC] = n1 + n2;
    m[Metric::HVOL] = m[Metric::HVOC] > 0 ? m[Metric::HLEN] * std::log2(m[Metric::HVOC]) : 0.0;
    m[Metric::HDIFF] = n2 > 0 ? (n1 / 2.0) * (N2 / n2) : 0.0;
    m[Metric::HEFF] = m[Metric::HDIFF] * m[Metric::HVOL];
    m[Metric::HTIME] = m[Metric::HEFF] / 18.0;
    m[Metric::HBUGS] = m[Metric::HVOL] / 3000.0;
}

std::vector<Token> own_tokens(const SourceFunction& fn) {
    std::vector<bool> owned(fn.body_tokens.size(), true);
    for (const auto& c : fn.children) {
        for (std::size_t i = 0; i < c.body_tokens.size(); ++i) owned[c.parent_offset + i] = false;
    }
    std::vector<Token> out;
    for (std::size_t i = 0; i < fn.body_tokens.size(); ++i) {
        if (owned[i]) out.push_back(fn.body_tokens[i]);
    }
    return out;
}

MetricVector compute_metrics(const SourceFunction& fn) {
    MetricVector m;

    // Map positions in body_tokens to positions in the own-token list.
    std::vector<bool> owned(fn.body_tokens.size(), true);
    for (const auto& c : fn.children) {
        for (std::size_t i = 0; i < c.body_tokens.size(); ++i) owned[c.parent_offset + i] = false;
    }
    std::vector<Token> own;
    std::size_t own_body_open = npos;
    std::size_t own_name = npos;
    for (std::size_t i = 0; i < fn.body_tokens.size(); ++i) {
        if (!owned[i]) continue;
        if (i == fn.body_open) own_body_open = own.size();
        if (i == fn.name_token) own_name = own.size();
        own.push_back(fn.body_tokens[i]);
    }

    const auto structure = StructureWalker().run(own, own_body_open);
    int total_nos = structure.statements;
    for (const auto& c : fn.children) total_nos += static_cast<int>(compute_metrics(c)[Metric::TNOS]);

    // Lines wholly inside a nested function belong to it; its first and last
    // lines stay with the parent only when the parent has tokens there.
    std::set<int> own_token_lines = lines_of(own, true, true);
    std::set<int> own_lines;
    for (int l = fn.start_line; l <= fn.end_line; ++l) {
        bool child_line = false;
        for (const auto& c : fn.children) {
            if (l > c.start_line && l < c.end_line) child_line = true;
            if ((l == c.start_line || l == c.end_line) && !own_token_lines.contains(l)) child_line = true;
        }
        if (!child_line) own_lines.insert(l);
    }

    const auto own_code = lines_of(own, true, false);
    const auto own_comment = lines_of(own, false, true);
    const auto all_code = lines_of(fn.body_tokens, true, false);
    const auto all_comment = lines_of(fn.body_tokens, false, true);

    const double loc = static_cast<double>(own_lines.size());
    const double tloc = fn.end_line - fn.start_line + 1;
    const double lloc = static_cast<double>(own_code.size());
    const double tlloc = static_cast<double>(all_code.size());
    const double cloc = static_cast<double>(own_comment.size());
    const double tcloc = static_cast<double>(all_comment.size());

    m[Metric::McCC] = 1 + structure.decisions;
    m[Metric::CYCL] = m[Metric::McCC];
    m[Metric::NL] = structure.nesting;
    m[Metric::NLE] = structure.nesting_no_else_if;
    m[Metric::LOC] = loc;
    m[Metric::TLOC] = tloc;
    m[Metric::LLOC] = lloc;
    m[Metric::TLLOC] = tlloc;
    m[Metric::CLOC] = cloc;
    m[Metric::TCLOC] = tcloc;
    m[Metric::CD] = cloc + lloc > 0 ? cloc / (cloc + lloc) : 0.0;
    m[Metric::TCD] = tcloc + tlloc > 0 ? tcloc / (tcloc + tlloc) : 0.0;
    m[Metric::DLOC] = fn.doc_comment_lines;
    m[Metric::NOS] = structure.statements;
    m[Metric::TNOS] = total_nos;
    m[Metric::NUMPAR] = fn.param_count;
    m[Metric::PARAMS] = fn.param_count;

    std::vector<std::size_t> skip;
    if (own_name != npos) skip.push_back(own_name);
    apply_halstead(count_halstead(own, skip), m);
    m[Metric::CYCL_DENS] = lloc > 0 ? m[Metric::CYCL] / lloc : 0.0;
    return m;
}

}  // namespace jsvuln::js
