#include "jsvuln/advisory.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "jsvuln/error.hpp"
#include "jsvuln/hash.hpp"
#include "jsvuln/log.hpp"

namespace jsvuln::advisory {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Source s) { return s == Source::nsp ? "nsp" : "snyk"; }

Source parse_source(std::string_view text) {
    if (text == "nsp") return Source::nsp;
    if (text == "snyk") return Source::snyk;
    throw ValidationError("unknown advisory source: " + std::string(text));
}

std::string_view to_string(UrlKind k) {
    switch (k) {
        case UrlKind::commit: return "commit";
        case UrlKind::pull_request: return "pull_request";
        case UrlKind::issue: return "issue";
        case UrlKind::other: return "other";
    }
    return "other";
}

namespace {

bool url_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    if (u <= 0x20 || u >= 0x7f) return false;
    return std::string_view("\"'<>`{}|\\^[]").find(c) == std::string_view::npos;
}

std::string trim_url(std::string url) {
    while (!url.empty()) {
        const char c = url.back();
        if (std::string_view(".,;:!?*").find(c) != std::string_view::npos) {
            url.pop_back();
        } else if (c == ')') {
            // Keep balanced parentheses such as wiki links.
            if (std::count(url.begin(), url.end(), '(') >= std::count(url.begin(), url.end(), ')')) break;
            url.pop_back();
        } else {
            break;
        }
    }
    return url;
}

void scan_string(const std::string& s, std::vector<std::string>& out, std::set<std::string>& seen) {
    std::size_t pos = 0;
    while (true) {
        std::size_t a = s.find("http://", pos);
        const std::size_t b = s.find("https://", pos);
        if (b < a) a = b;
        if (a == std::string::npos) return;
        std::size_t e = a;
        while (e < s.size() && url_char(s[e])) ++e;
        std::string url = trim_url(s.substr(a, e - a));
        if (is_valid_url(url) && seen.insert(url).second) out.push_back(url);
        pos = e;
    }
}

void scan(const ojson& v, std::vector<std::string>& out, std::set<std::string>& seen) {
    if (v.is_string()) {
        scan_string(v.get<std::string>(), out, seen);
    } else if (v.is_array() || v.is_object()) {
        for (const auto& item : v) scan(item, out, seen);
    }
}

std::string first_string(const ojson& rec, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        const auto it = rec.find(k);
        if (it == rec.end()) continue;
        if (it->is_string()) return it->get<std::string>();
        if (it->is_number_integer()) return std::to_string(it->get<long long>());
    }
    return {};
}

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < path.size()) {
        const std::size_t j = path.find('/', i);
        const std::size_t end = j == std::string_view::npos ? path.size() : j;
        if (end > i) out.emplace_back(path.substr(i, end - i));
        i = end + 1;
    }
    return out;
}

bool is_hex_sha(std::string_view s) {
    if (s.size() < 7 || s.size() > 40) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; });
}

bool is_positive_int(std::string_view s) {
    if (s.empty() || s.size() > 9 || s[0] == '0') return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

struct Parsed {
    std::vector<ojson> records;
    int failures = 0;
};

Parsed parse_document(const std::string& text, const std::string& origin, std::vector<std::string>& warnings) {
    Parsed p;
    try {
        ojson doc = ojson::parse(text);
        if (doc.is_array()) {
            for (auto& r : doc) p.records.push_back(std::move(r));
        } else {
            p.records.push_back(std::move(doc));
        }
        return p;
    } catch (const ojson::parse_error&) {
    }
    // JSON lines: one record per non-blank line.
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            p.records.push_back(ojson::parse(line));
        } catch (const ojson::parse_error& e) {
            ++p.failures;
            warnings.push_back(origin + ":" + std::to_string(lineno) + ": malformed record skipped (" + e.what() + ")");
        }
    }
    return p;
}

}  // namespace

bool is_valid_url(std::string_view url) {
    std::size_t rest;
    if (url.starts_with("https://")) {
        rest = 8;
    } else if (url.starts_with("http://")) {
        rest = 7;
    } else {
        return false;
    }
    const std::size_t end = url.find_first_of("/?#", rest);
    std::string_view host = url.substr(rest, end == std::string_view::npos ? url.size() - rest : end - rest);
    if (const auto at = host.rfind('@'); at != std::string_view::npos) host = host.substr(at + 1);
    if (const auto colon = host.find(':'); colon != std::string_view::npos) {
        const auto port = host.substr(colon + 1);
        if (port.empty() || !std::all_of(port.begin(), port.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }))
            return false;
        host = host.substr(0, colon);
    }
    if (host.empty() || host.front() == '.' || host.back() == '.' || host.front() == '-') return false;
    bool has_alpha_or_dot = false;
    for (char c : host) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.')) return false;
        if (c == '.' || std::isalpha(static_cast<unsigned char>(c))) has_alpha_or_dot = true;
    }
    if (host.find("..") != std::string_view::npos) return false;
    for (std::size_t i = rest; i < url.size(); ++i)
        if (!url_char(url[i]) && url[i] != '[' && url[i] != ']') return false;
    return has_alpha_or_dot;
}

std::vector<std::string> harvest_urls(const ojson& value) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    scan(value, out, seen);
    return out;
}

std::optional<AdvisoryEntry> normalize_record(const ojson& rec, Source source) {
    if (!rec.is_object()) return std::nullopt;
    const std::string native = first_string(rec, {"id", "ID", "advisory_id", "snyk_id"});
    if (native.empty()) return std::nullopt;
    AdvisoryEntry e;
    e.source = source;
    e.id = std::string(to_string(source)) + ":" + native;
    e.module_name = first_string(rec, {"module_name", "moduleName", "packageName", "package", "module"});
    e.title = first_string(rec, {"title", "name"});
    e.description = first_string(rec, {"overview", "description", "details"});
    e.reference_urls = harvest_urls(rec);
    return e;
}

IngestResult ingest_advisories(const fs::path& path, Source source) {
    std::error_code ec;
    if (!fs::exists(path, ec)) throw IoError("advisory input does not exist: " + path.string());
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& de : fs::recursive_directory_iterator(path)) {
            if (de.is_regular_file() && (de.path().extension() == ".json" || de.path().extension() == ".jsonl"))
                files.push_back(de.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }

    IngestResult result;
    std::set<std::string> ids;
    for (const auto& file : files) {
        const std::string text = read_file(file);
        Parsed parsed = parse_document(text, file.string(), result.warnings);
        result.skipped += parsed.failures;
        for (std::size_t i = 0; i < parsed.records.size(); ++i) {
            auto entry = normalize_record(parsed.records[i], source);
            const std::string where = file.string() + " record " + std::to_string(i + 1);
            if (!entry) {
                ++result.skipped;
                result.warnings.push_back(where + ": no usable id, skipped");
                continue;
            }
            if (!ids.insert(entry->id).second) {
                ++result.skipped;
                result.warnings.push_back(where + ": duplicate id " + entry->id + ", skipped");
                continue;
            }
            result.entries.push_back(std::move(*entry));
        }
    }
    for (const auto& w : result.warnings) log_warn("ingest", w);
    return result;
}

ClassifiedUrl classify_url(const std::string& url) {
    ClassifiedUrl c;
    c.url = url;
    std::string_view v = url;
    std::size_t rest = v.starts_with("https://") ? 8 : v.starts_with("http://") ? 7 : 0;
    if (rest == 0) return c;
    const std::size_t slash = v.find('/', rest);
    const std::string host = lower(std::string(v.substr(rest, slash == std::string_view::npos ? v.npos : slash - rest)));
    if (host != "github.com" && host != "www.github.com") return c;
    if (slash == std::string_view::npos) return c;
    std::string_view path = v.substr(slash);
    if (const auto q = path.find_first_of("?#"); q != std::string_view::npos) path = path.substr(0, q);
    const auto seg = split_path(path);
    if (seg.size() < 2) return c;
    std::string repo = seg[1];
    if (repo.ends_with(".git")) repo.resize(repo.size() - 4);
    c.repo_slug = seg[0] + "/" + repo;
    if (seg.size() < 4) return c;
    const std::string& kind = seg[2];
    const std::string& ref = seg[3];
    if ((kind == "commit" || kind == "commits") && is_hex_sha(ref)) {
        c.kind = UrlKind::commit;
        c.ref_id = lower(ref);
    } else if (kind == "pull" && is_positive_int(ref)) {
        if (seg.size() >= 6 && seg[4] == "commits" && is_hex_sha(seg[5])) {
            c.kind = UrlKind::commit;
            c.ref_id = lower(seg[5]);
        } else {
            c.kind = UrlKind::pull_request;
            c.ref_id = ref;
        }
    } else if (kind == "issues" && is_positive_int(ref)) {
        c.kind = UrlKind::issue;
        c.ref_id = ref;
    }
    return c;
}

std::vector<ClassifiedUrl> classify_urls(const AdvisoryEntry& entry) {
    std::vector<ClassifiedUrl> out;
    out.reserve(entry.reference_urls.size());
    for (const auto& u : entry.reference_urls) out.push_back(classify_url(u));
    return out;
}

nlohmann::json to_json(const AdvisoryEntry& e) {
    return {{"id", e.id},       {"source", to_string(e.source)}, {"module_name", e.module_name},
            {"title", e.title}, {"description", e.description}, {"reference_urls", e.reference_urls}};
}

AdvisoryEntry entry_from_json(const nlohmann::json& j) {
    AdvisoryEntry e;
    try {
        e.id = j.at("id").get<std::string>();
        e.source = parse_source(j.at("source").get<std::string>());
        e.module_name = j.value("module_name", "");
        e.title = j.value("title", "");
        e.description = j.value("description", "");
        e.reference_urls = j.value("reference_urls", std::vector<std::string>{});
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("bad advisory entry: ") + ex.what());
    }
    return e;
}

nlohmann::json to_json(const ClassifiedUrl& c) {
    nlohmann::json j = {{"url", c.url}, {"kind", to_string(c.kind)}};
    j["repo_slug"] = c.repo_slug ? nlohmann::json(*c.repo_slug) : nlohmann::json(nullptr);
    j["ref_id"] = c.ref_id ? nlohmann::json(*c.ref_id) : nlohmann::json(nullptr);
    return j;
}

void save_advisories(const fs::path& path, const std::vector<AdvisoryEntry>& entries) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) arr.push_back(to_json(e));
    write_file(path, arr.dump(2) + "\n");
}

std::vector<AdvisoryEntry> load_advisories(const fs::path& path) {
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (!arr.is_array()) throw ParseError(path.string() + ": expected a JSON array of advisories");
    std::vector<AdvisoryEntry> out;
    for (const auto& j : arr) out.push_back(entry_from_json(j));
    return out;
}

}  // namespace jsvuln::advisory
