#include "jsvuln/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <set>

#include "jsvuln/error.hpp"
#include "jsvuln/hash.hpp"
#include "jsvuln/log.hpp"
#include "jsvuln/parallel.hpp"

namespace jsvuln::dataset {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> segments(const std::string& path) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i <= path.size()) {
        const std::size_t j = path.find('/', i);
        const std::size_t end = j == std::string::npos ? path.size() : j;
        if (end > i) out.push_back(path.substr(i, end - i));
        if (j == std::string::npos) break;
        i = j + 1;
    }
    return out;
}

bool segment_suffix(const std::string& longer, const std::string& shorter) {
    return longer.size() > shorter.size() && longer.ends_with(shorter) && longer[longer.size() - shorter.size() - 1] == '/';
}

/// Resolves a diff path against the snapshot file list; empty when no unique match.
std::string resolve_path(const std::string& diff_path, const std::vector<std::string>& files) {
    const std::string p = diff::normalize_path(diff_path);
    if (std::find(files.begin(), files.end(), p) != files.end()) return p;
    std::string hit;
    int hits = 0;
    for (const auto& f : files) {
        if (segment_suffix(f, p) || segment_suffix(p, f)) {
            hit = f;
            ++hits;
        }
    }
    return hits == 1 ? hit : std::string();
}

std::string format_number(double v, bool ratio) {
    char buf[64];
    if (ratio) {
        std::snprintf(buf, sizeof buf, "%.6f", v);
    } else if (v == std::floor(v) && std::abs(v) < 1e15) {
        std::snprintf(buf, sizeof buf, "%.0f", v);
    } else {
        std::snprintf(buf, sizeof buf, "%.17g", v);
    }
    return buf;
}

double parse_number(const std::string& s, const std::string& what) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size()) throw ParseError("bad number in column " + what + ": '" + s + "'");
    return v;
}

int parse_int(const std::string& s, const std::string& what) {
    int v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ParseError("bad integer in column " + what + ": '" + s + "'");
    return v;
}

std::string row_key(const DatasetRow& r) { return r.url + "\n" + r.qualified_name; }

bool row_order(const DatasetRow& a, const DatasetRow& b) {
    return std::tie(a.url, a.start_line, a.start_col, a.end_line, a.end_col, a.qualified_name) <
           std::tie(b.url, b.start_line, b.start_col, b.end_line, b.end_col, b.qualified_name);
}

}  // namespace

const std::vector<std::string>& column_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n = {"name", "qualified_name", "path", "url", "start_line", "start_col", "end_line", "end_col"};
        for (auto m : js::kMetricNames) n.emplace_back(m);
        n.emplace_back("vulnerable");
        return n;
    }();
    return names;
}

bool is_test_path(const std::string& path) {
    for (const auto& s : segments(diff::normalize_path(path))) {
        const std::string l = lower(s);
        if (l == "test" || l == "tests") return true;
    }
    return false;
}

std::vector<const js::SourceFunction*> filter_test_functions(const std::vector<const js::SourceFunction*>& fns) {
    std::vector<const js::SourceFunction*> out;
    for (const auto* f : fns)
        if (!is_test_path(f->file_path)) out.push_back(f);
    return out;
}

std::vector<int> label_functions(const std::vector<const js::SourceFunction*>& fns, const std::vector<diff::FileDiff>& patch,
                                 const std::vector<std::string>& snapshot_files, std::vector<std::string>* warnings) {
    std::map<std::string, std::vector<diff::LineRange>> touched;
    for (const auto& fd : patch) {
        if (fd.old_path == "/dev/null" || fd.hunks.empty()) continue;
        const std::string path = resolve_path(fd.old_path, snapshot_files);
        if (path.empty()) {
            if (warnings) warnings->push_back("patch touches " + fd.old_path + ", which is not in the snapshot; hunks ignored");
            continue;
        }
        for (const auto& h : fd.hunks) touched[path].push_back(diff::affected_old_range(h));
    }
    std::vector<int> flags(fns.size(), 0);
    for (std::size_t i = 0; i < fns.size(); ++i) {
        const auto it = touched.find(diff::normalize_path(fns[i]->file_path));
        if (it == touched.end()) continue;
        const diff::LineRange span{fns[i]->start_line, fns[i]->end_line};
        for (const auto& r : it->second) {
            if (diff::ranges_intersect(span, r)) {
                flags[i] = 1;
                break;
            }
        }
    }
    return flags;
}

std::string blob_url(const std::string& slug, const std::string& sha, const std::string& path) {
    return "https://github.com/" + slug + "/blob/" + sha + "/" + path;
}

js::MetricVector quantize(const js::MetricVector& m) {
    js::MetricVector q = m;
    for (std::size_t k = 0; k < js::kMetricCount; ++k) {
        if (js::is_ratio_metric(static_cast<js::Metric>(k))) q.values[k] = std::strtod(format_number(m.values[k], true).c_str(), nullptr);
    }
    return q;
}

std::vector<std::string> list_js_files(const fs::path& snapshot_dir) {
    std::vector<std::string> out;
    for (auto it = fs::recursive_directory_iterator(snapshot_dir); it != fs::recursive_directory_iterator(); ++it) {
        if (it->is_directory() && it->path().filename() == "node_modules") {
            it.disable_recursion_pending();
            continue;
        }
        if (!it->is_regular_file()) continue;
        const auto ext = it->path().extension();
        if (ext == ".js" || ext == ".mjs" || ext == ".cjs") out.push_back(fs::relative(it->path(), snapshot_dir).generic_string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

SnapshotResult build_snapshot_rows(const std::string& slug, const std::string& sha_pre, const fs::path& snapshot_dir,
                                   const std::string& combined_patch) {
    SnapshotResult result;
    std::vector<std::string> all_files;
    for (const auto& de : fs::recursive_directory_iterator(snapshot_dir))
        if (de.is_regular_file()) all_files.push_back(fs::relative(de.path(), snapshot_dir).generic_string());
    std::sort(all_files.begin(), all_files.end());

    std::vector<std::vector<js::SourceFunction>> trees;
    for (const auto& rel : list_js_files(snapshot_dir)) {
        if (is_test_path(rel)) continue;
        try {
            trees.push_back(js::analyze_source(read_file(snapshot_dir / rel), rel));
        } catch (const ParseError& e) {
            result.warnings.push_back(slug + "@" + sha_pre + ":" + rel + " skipped: " + e.what());
        }
    }
    std::vector<const js::SourceFunction*> fns;
    for (const auto& t : trees)
        for (const auto* f : js::flatten(t)) fns.push_back(f);
    fns = filter_test_functions(fns);

    const auto patch = diff::parse_unified_diff(combined_patch);
    const auto flags = label_functions(fns, patch, all_files, &result.warnings);
    for (std::size_t i = 0; i < fns.size(); ++i) {
        const auto& f = *fns[i];
        DatasetRow r;
        r.short_name = f.short_name;
        r.qualified_name = f.qualified_name;
        r.file_path = f.file_path;
        r.url = blob_url(slug, sha_pre, f.file_path);
        r.start_line = f.start_line;
        r.start_col = f.start_col;
        r.end_line = f.end_line;
        r.end_col = f.end_col;
        r.metrics = quantize(js::compute_metrics(f));
        r.flag = flags[i];
        result.rows.push_back(std::move(r));
    }
    return result;
}

SnapshotProvider directory_snapshots(const fs::path& root) {
    return [root](const std::string& slug, const std::string& sha) {
        const fs::path dir = root / slug / sha;
        if (!fs::is_directory(dir)) throw IoError("snapshot missing: " + dir.string());
        return dir;
    };
}

SnapshotProvider downloading_snapshots(const fs::path& root, std::shared_ptr<github::Transport> codeload) {
    auto lock = std::make_shared<std::mutex>();
    return [root, codeload, lock](const std::string& slug, const std::string& sha) {
        const fs::path dir = root / slug / sha;
        if (fs::is_directory(dir)) return dir;
        std::lock_guard guard(*lock);
        if (fs::is_directory(dir)) return dir;
        const auto r = codeload->request("/" + slug + "/tar.gz/" + sha, {{"User-Agent", "jsvuln"}});
        if (r.status != 200) throw IoError("archive download for " + slug + "@" + sha + " failed with HTTP " + std::to_string(r.status));
        const fs::path tmp = root / slug / (sha + ".partial");
        fs::remove_all(tmp);
        fs::create_directories(tmp);
        const fs::path tarball = tmp / "archive.tar.gz";
        write_file(tarball, r.body);
        const std::string cmd = "tar -xzf '" + tarball.string() + "' -C '" + tmp.string() + "' --strip-components=1";
        if (std::system(cmd.c_str()) != 0) throw IoError("could not unpack " + tarball.string());
        fs::remove(tarball);
        fs::rename(tmp, dir);
        return dir;
    };
}

BuildResult build_dataset(const std::vector<github::FixResolution>& resolutions, const SnapshotProvider& snapshots, unsigned jobs) {
    std::vector<const github::FixResolution*> usable;
    BuildResult result;
    for (const auto& r : resolutions) {
        if (r.status == github::Status::resolved && r.sha_pre && r.combined_patch) {
            usable.push_back(&r);
        } else {
            result.warnings.push_back(r.advisory_id + " excluded: status " + std::string(github::to_string(r.status)) +
                                      (r.combined_patch ? "" : ", no combined patch"));
        }
    }
    std::vector<SnapshotResult> parts(usable.size());
    parallel_for(usable.size(), jobs, [&](std::size_t i) {
        const auto& r = *usable[i];
        parts[i] = build_snapshot_rows(r.repo_slug, *r.sha_pre, snapshots(r.repo_slug, *r.sha_pre), *r.combined_patch);
    });
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        for (auto& w : parts[i].warnings) result.warnings.push_back(usable[i]->advisory_id + ": " + w);
        for (auto& row : parts[i].rows) {
            const auto [it, fresh] = index.emplace(row_key(row), result.rows.size());
            if (fresh) {
                result.rows.push_back(std::move(row));
            } else {
                result.rows[it->second].flag |= row.flag;
            }
        }
    }
    std::set<std::string> distinct;
    for (const auto* r : usable) distinct.insert(r->repo_slug + "@" + *r->sha_pre);
    result.snapshots = distinct.size();
    std::sort(result.rows.begin(), result.rows.end(), row_order);
    return result;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string to_csv(const std::vector<DatasetRow>& rows) {
    std::string out;
    const auto& names = column_names();
    for (std::size_t i = 0; i < names.size(); ++i) out += (i ? "," : "") + names[i];
    out += "\n";
    for (const auto& r : rows) {
        out += csv_field(r.short_name) + "," + csv_field(r.qualified_name) + "," + csv_field(r.file_path) + "," + csv_field(r.url);
        for (int v : {r.start_line, r.start_col, r.end_line, r.end_col}) out += "," + std::to_string(v);
        for (std::size_t k = 0; k < js::kMetricCount; ++k) {
            const double v = r.metrics.values[k];
            if (!std::isfinite(v) || v < 0)
                throw ValidationError("metric " + std::string(js::kMetricNames[k]) + " of " + r.qualified_name + " is not a finite non-negative number");
            out += "," + format_number(v, js::is_ratio_metric(static_cast<js::Metric>(k)));
        }
        if (r.flag != 0 && r.flag != 1) throw ValidationError("flag must be 0 or 1 for " + r.qualified_name);
        out += "," + std::to_string(r.flag) + "\n";
    }
    return out;
}

Summary emit_dataset(const std::vector<DatasetRow>& rows, const fs::path& out) {
    std::set<std::string> keys;
    for (const auto& r : rows)
        if (!keys.insert(r.url + "\n" + r.qualified_name).second)
            throw ValidationError("duplicate function " + r.qualified_name + " in " + r.url);
    write_file(out, to_csv(rows));
    Summary s;
    s.total = rows.size();
    for (const auto& r : rows) s.vulnerable += r.flag == 1;
    return s;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, field_started = false;
    std::size_t i = 0;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    while (i < text.size()) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && !field_started && field.empty()) {
            quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_field();
            records.push_back(std::move(record));
            record.clear();
        } else {
            field += c;
            field_started = true;
        }
        ++i;
    }
    if (quoted) throw ParseError("unterminated quoted CSV field");
    if (field_started || !field.empty() || !record.empty()) {
        end_field();
        records.push_back(std::move(record));
    }
    return records;
}

std::vector<DatasetRow> parse_dataset(const std::string& text) {
    const auto records = parse_csv(text);
    if (records.empty()) throw ParseError("dataset CSV has no header");
    if (records[0] != column_names()) throw ParseError("dataset CSV header does not match the 44-column schema");
    std::vector<DatasetRow> rows;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& f = records[i];
        if (f.size() != kColumnCount)
            throw ParseError("dataset line " + std::to_string(i + 1) + " has " + std::to_string(f.size()) + " columns");
        DatasetRow r;
        r.short_name = f[0];
        r.qualified_name = f[1];
        r.file_path = f[2];
        r.url = f[3];
        r.start_line = parse_int(f[4], "start_line");
        r.start_col = parse_int(f[5], "start_col");
        r.end_line = parse_int(f[6], "end_line");
        r.end_col = parse_int(f[7], "end_col");
        for (std::size_t k = 0; k < js::kMetricCount; ++k) {
            r.metrics.values[k] = parse_number(f[8 + k], std::string(js::kMetricNames[k]));
            if (!std::isfinite(r.metrics.values[k]) || r.metrics.values[k] < 0)
                throw ParseError("dataset line " + std::to_string(i + 1) + ": metric out of range");
        }
        r.flag = parse_int(f[43], "vulnerable");
        if (r.flag != 0 && r.flag != 1) throw ParseError("dataset line " + std::to_string(i + 1) + ": flag must be 0 or 1");
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<DatasetRow> load_dataset(const fs::path& path) { return parse_dataset(read_file(path)); }

}  // namespace jsvuln::dataset
