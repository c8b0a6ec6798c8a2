#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace jsvuln::diff {

enum class LineTag { context, add, del };

struct HunkLine {
    LineTag tag;
    std::string text;

    bool operator==(const HunkLine&) const = default;
};

/// One `@@ -a,b +c,d @@` block. Counts omitted in the header default to 1.
struct Hunk {
    int old_start = 0;
    int old_len = 0;
    int new_start = 0;
    int new_len = 0;
    std::string section;  ///< text after the closing `@@`, usually a function signature
    std::vector<HunkLine> lines;

    bool operator==(const Hunk&) const = default;
};

struct FileDiff {
    std::string old_path;  ///< "/dev/null" for added files
    std::string new_path;  ///< "/dev/null" for deleted files
    std::vector<Hunk> hunks;

    bool operator==(const FileDiff&) const = default;
};

/// Inclusive line interval.
struct LineRange {
    int start = 0;
    int end = 0;

    bool operator==(const LineRange&) const = default;
};

/// Parses unified diff text. Header timestamps, `diff --git` and `index`
/// lines are ignored; a leading `a/` or `b/` is stripped from both paths when
/// the pair uses the git prefixes. Throws ParseError when a hunk body does not
/// match its header counts.
std::vector<FileDiff> parse_unified_diff(std::string_view text);

/// Serializes back to unified diff text. Relative paths get git `a/` and `b/`
/// prefixes; timestamps are not written.
std::string to_unified_diff(const std::vector<FileDiff>& files);

std::string hunk_header(const Hunk& h);

/// Pre-fix line interval touched by a hunk:
/// [old_start, old_start + max(old_len, new_len) - 1], degenerate
/// [old_start, old_start] when both lengths are zero.
LineRange affected_old_range(const Hunk& h);

/// True iff the two inclusive intervals share a line. Throws ValidationError
/// on an inverted range.
bool ranges_intersect(LineRange a, LineRange b);

/// Path normalized for matching against snapshot-relative file paths:
/// backslashes become slashes, leading "./" and "/" are dropped.
std::string normalize_path(std::string_view path);

}  // namespace jsvuln::diff
