#include "jsvuln/diff.hpp"

#include <algorithm>
#include <charconv>
#include <optional>

#include "jsvuln/error.hpp"

namespace jsvuln::diff {
namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        pos = nl + 1;
    }
    return out;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

/// Drops the timestamp that follows the path in `---`/`+++` headers. A tab
/// always separates it; some tools use a run of spaces instead.
std::string header_path(std::string_view rest) {
    if (auto tab = rest.find('\t'); tab != std::string_view::npos) rest = rest.substr(0, tab);
    if (auto spaces = rest.find("  "); spaces != std::string_view::npos) rest = rest.substr(0, spaces);
    while (!rest.empty() && rest.back() == ' ') rest.remove_suffix(1);
    if (rest.size() >= 2 && rest.front() == '"' && rest.back() == '"') rest = rest.substr(1, rest.size() - 2);
    return std::string(rest);
}

bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && p == s.data() + s.size() && out >= 0;
}

bool parse_range(std::string_view s, int& start, int& len) {
    auto comma = s.find(',');
    if (comma == std::string_view::npos) {
        len = 1;
        return parse_int(s, start);
    }
    return parse_int(s.substr(0, comma), start) && parse_int(s.substr(comma + 1), len);
}

std::optional<Hunk> parse_hunk_header(std::string_view line) {
    // @@ -a[,b] +c[,d] @@[ section]
    if (!starts_with(line, "@@ -")) return std::nullopt;
    auto close = line.find(" @@", 4);
    if (close == std::string_view::npos) return std::nullopt;
    std::string_view ranges = line.substr(4, close - 4);
    auto space = ranges.find(" +");
    if (space == std::string_view::npos) return std::nullopt;
    Hunk h;
    if (!parse_range(ranges.substr(0, space), h.old_start, h.old_len)) return std::nullopt;
    if (!parse_range(ranges.substr(space + 2), h.new_start, h.new_len)) return std::nullopt;
    std::string_view section = line.substr(close + 3);
    if (!section.empty() && section.front() == ' ') section.remove_prefix(1);
    h.section = std::string(section);
    return h;
}

void strip_git_prefixes(FileDiff& fd) {
    auto has = [](const std::string& p, char c) {
        return p == "/dev/null" || (p.size() > 2 && p[0] == c && p[1] == '/');
    };
    if (has(fd.old_path, 'a') && has(fd.new_path, 'b') &&
        !(fd.old_path == "/dev/null" && fd.new_path == "/dev/null")) {
        if (fd.old_path != "/dev/null") fd.old_path.erase(0, 2);
        if (fd.new_path != "/dev/null") fd.new_path.erase(0, 2);
    }
}

}  // namespace

std::vector<FileDiff> parse_unified_diff(std::string_view text) {
    std::vector<FileDiff> files;
    const auto lines = split_lines(text);
    std::size_t i = 0;
    while (i < lines.size()) {
        const std::string_view line = lines[i];
        if (starts_with(line, "--- ") && i + 1 < lines.size() && starts_with(lines[i + 1], "+++ ")) {
            FileDiff fd;
            fd.old_path = header_path(line.substr(4));
            fd.new_path = header_path(lines[i + 1].substr(4));
            strip_git_prefixes(fd);
            files.push_back(std::move(fd));
            i += 2;
            continue;
        }
        if (starts_with(line, "@@ ") && !files.empty()) {
            auto parsed = parse_hunk_header(line);
            if (!parsed) throw ParseError("malformed hunk header: " + std::string(line));
            Hunk h = std::move(*parsed);
            const std::string name = files.back().new_path + " " + std::string(line);
            int old_seen = 0;
            int new_seen = 0;
            ++i;
            while (i < lines.size() && (old_seen < h.old_len || new_seen < h.new_len)) {
                std::string_view body = lines[i];
                if (starts_with(body, "\\")) {  // "\ No newline at end of file"
                    ++i;
                    continue;
                }
                LineTag tag;
                if (body.empty()) {
                    tag = LineTag::context;  // context line whose single space was trimmed
                } else if (body[0] == ' ') {
                    tag = LineTag::context;
                } else if (body[0] == '+') {
                    tag = LineTag::add;
                } else if (body[0] == '-') {
                    tag = LineTag::del;
                } else {
                    break;
                }
                if (tag != LineTag::add) ++old_seen;
                if (tag != LineTag::del) ++new_seen;
                if (old_seen > h.old_len || new_seen > h.new_len) break;
                h.lines.push_back({tag, std::string(body.empty() ? body : body.substr(1))});
                ++i;
            }
            if (old_seen != h.old_len || new_seen != h.new_len) {
                throw ParseError("hunk line counts do not match header (old " + std::to_string(old_seen) + "/" +
                                 std::to_string(h.old_len) + ", new " + std::to_string(new_seen) + "/" +
                                 std::to_string(h.new_len) + "): " + name);
            }
            while (i < lines.size() && starts_with(lines[i], "\\")) ++i;
            files.back().hunks.push_back(std::move(h));
            continue;
        }
        ++i;  // diff --git, index, mode lines and anything else between diffs
    }
    return files;
}

std::string hunk_header(const Hunk& h) {
    std::string out = "@@ -" + std::to_string(h.old_start) + "," + std::to_string(h.old_len) + " +" +
                      std::to_string(h.new_start) + "," + std::to_string(h.new_len) + " @@";
    if (!h.section.empty()) out += " " + h.section;
    return out;
}

namespace {

std::string git_side(const char* prefix, const std::string& path) {
    if (path.empty() || path == "/dev/null" || path.front() == '/') return path;
    return prefix + path;
}

}  // namespace

std::string to_unified_diff(const std::vector<FileDiff>& files) {
    std::string out;
    for (const auto& fd : files) {
        out += "--- " + git_side("a/", fd.old_path) + "\n";
        out += "+++ " + git_side("b/", fd.new_path) + "\n";
        for (const auto& h : fd.hunks) {
            out += hunk_header(h) + "\n";
            for (const auto& l : h.lines) {
                out.push_back(l.tag == LineTag::context ? ' ' : l.tag == LineTag::add ? '+' : '-');
                out += l.text;
                out.push_back('\n');
            }
        }
    }
    return out;
}

LineRange affected_old_range(const Hunk& h) {
    const int width = std::max(h.old_len, h.new_len);
    if (width == 0) return {h.old_start, h.old_start};
    return {h.old_start, h.old_start + width - 1};
}

bool ranges_intersect(LineRange a, LineRange b) {
    if (a.start > a.end || b.start > b.end) {
        throw ValidationError("inverted line range");
    }
    return std::max(a.start, b.start) <= std::min(a.end, b.end);
}

std::string normalize_path(std::string_view path) {
    std::string p(path);
    std::replace(p.begin(), p.end(), '\\', '/');
    while (true) {
        if (p.rfind("./", 0) == 0) {
            p.erase(0, 2);
        } else if (!p.empty() && p[0] == '/') {
            p.erase(0, 1);
        } else {
            break;
        }
    }
    return p;
}

}  // namespace jsvuln::diff
