#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "jsvuln/diff.hpp"
#include "jsvuln/github.hpp"
#include "jsvuln/js/functions.hpp"
#include "jsvuln/js/metrics.hpp"

namespace jsvuln::dataset {

inline constexpr std::size_t kColumnCount = 44;

/// Header of the dataset CSV.
const std::vector<std::string>& column_names();

struct DatasetRow {
    std::string short_name;
    std::string qualified_name;
    std::string file_path;
    std::string url;  ///< blob URL at sha_pre
    int start_line = 0;
    int start_col = 0;
    int end_line = 0;
    int end_col = 0;
    js::MetricVector metrics;
    int flag = 0;

    bool operator==(const DatasetRow&) const = default;
};

struct Summary {
    std::size_t total = 0;
    std::size_t vulnerable = 0;
    bool operator==(const Summary&) const = default;
};

/// True when a path segment equals "test" or "tests", ignoring case.
bool is_test_path(const std::string& path);

std::vector<const js::SourceFunction*> filter_test_functions(const std::vector<const js::SourceFunction*>& fns);

/// Flags functions whose span intersects the affected old range of a hunk in
/// a diff whose old path resolves to the function's file. Paths match exactly
/// or, failing that, by a unique path-segment suffix. `snapshot_files` lists
/// every file of the snapshot; hunks of files not in it are ignored with a
/// warning appended to `warnings`.
std::vector<int> label_functions(const std::vector<const js::SourceFunction*>& fns, const std::vector<diff::FileDiff>& patch,
                                 const std::vector<std::string>& snapshot_files, std::vector<std::string>* warnings = nullptr);

std::string blob_url(const std::string& slug, const std::string& sha, const std::string& path);

/// Rounds ratio metrics to the six decimals written to the CSV.
js::MetricVector quantize(const js::MetricVector& m);

struct SnapshotResult {
    std::vector<DatasetRow> rows;
    std::vector<std::string> warnings;
};

/// Extracts, filters and labels every function of one snapshot directory.
/// Files that fail to tokenize or extract are skipped with a warning.
SnapshotResult build_snapshot_rows(const std::string& slug, const std::string& sha_pre, const std::filesystem::path& snapshot_dir,
                                   const std::string& combined_patch);

/// Snapshot-relative paths of JavaScript files (.js, .mjs, .cjs) outside
/// node_modules, sorted.
std::vector<std::string> list_js_files(const std::filesystem::path& snapshot_dir);

/// Supplies the directory of `<slug>` at `<sha>`; may download it.
using SnapshotProvider = std::function<std::filesystem::path(const std::string& slug, const std::string& sha)>;

/// Looks up `<root>/<owner>/<repo>/<sha>/`; throws IoError when absent.
SnapshotProvider directory_snapshots(const std::filesystem::path& root);

/// Like directory_snapshots, but downloads and unpacks the GitHub tarball
/// into the root first when the directory is missing.
SnapshotProvider downloading_snapshots(const std::filesystem::path& root, std::shared_ptr<github::Transport> codeload);

struct BuildResult {
    std::vector<DatasetRow> rows;
    std::vector<std::string> warnings;
    std::size_t snapshots = 0;
};

/// Pools rows of all resolved advisories. Rows sharing (repo, sha_pre, path,
/// qualified name) are merged with their flags OR-ed. Output is sorted by URL
/// and position.
BuildResult build_dataset(const std::vector<github::FixResolution>& resolutions, const SnapshotProvider& snapshots,
                          unsigned jobs = 1);

/// Writes header plus one line per row. Throws ValidationError for
/// non-finite or negative metrics and IoError on write failure.
Summary emit_dataset(const std::vector<DatasetRow>& rows, const std::filesystem::path& out);
std::string to_csv(const std::vector<DatasetRow>& rows);

/// Parses a dataset CSV written by emit_dataset.
std::vector<DatasetRow> parse_dataset(const std::string& text);
std::vector<DatasetRow> load_dataset(const std::filesystem::path& path);

/// RFC 4180 record splitter (quoted fields, doubled quotes, CRLF or LF).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);
std::string csv_field(const std::string& s);

}  // namespace jsvuln::dataset
