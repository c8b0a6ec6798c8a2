#include "jsvuln/github.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>
#include <set>
#include <thread>

#include "jsvuln/hash.hpp"
#include "jsvuln/log.hpp"

namespace jsvuln::github {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string strip_query(const std::string& path, int& page) {
    page = 1;
    const auto q = path.find('?');
    if (q == std::string::npos) return path;
    std::string query = path.substr(q + 1);
    std::size_t i = 0;
    while (i < query.size()) {
        const auto amp = query.find('&', i);
        const std::string kv = query.substr(i, amp == std::string::npos ? std::string::npos : amp - i);
        if (kv.starts_with("page=")) page = std::stoi(kv.substr(5));
        if (amp == std::string::npos) break;
        i = amp + 1;
    }
    return path.substr(0, q);
}

json parse_body(const ApiResponse& r, const std::string& what) {
    try {
        return json::parse(r.body);
    } catch (const json::parse_error& e) {
        throw ParseError("unparseable API response for " + what + ": " + e.what());
    }
}

void check_ok(const ApiResponse& r, const std::string& what) {
    if (r.status != 200) throw IoError("GET " + what + " failed with HTTP " + std::to_string(r.status));
}

constexpr int kPerPage = 100;

/// Collects all pages of a list endpoint; nullopt on 404 of the first page.
std::optional<std::vector<json>> get_pages(ApiClient& client, const std::string& base) {
    std::vector<json> items;
    for (int page = 1;; ++page) {
        const std::string path = base + "?per_page=" + std::to_string(kPerPage) + "&page=" + std::to_string(page);
        const auto r = client.get(path, Format::json);
        if (r.status == 404) {
            if (page == 1) return std::nullopt;
            break;
        }
        check_ok(r, path);
        const json arr = parse_body(r, path);
        if (!arr.is_array()) throw ParseError("expected a JSON array from " + path);
        for (const auto& it : arr) items.push_back(it);
        if (arr.size() < static_cast<std::size_t>(kPerPage)) break;
    }
    return items;
}

void add_unique(std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

bool contains(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

Status parse_status(const std::string& s) {
    if (s == "resolved") return Status::resolved;
    if (s == "pending_review") return Status::pending_review;
    if (s == "unresolved") return Status::unresolved;
    throw ParseError("unknown resolution status: " + s);
}

void recompute_status(FixResolution& r) {
    if (!r.review_candidates.empty()) {
        r.status = Status::pending_review;
    } else if (!r.fixing_commits.empty()) {
        r.status = Status::resolved;
    } else {
        r.status = Status::unresolved;
    }
}

}  // namespace

ApiResponse FixtureClient::get(const std::string& path, Format format) {
    int page = 1;
    const std::string base = strip_query(path, page);
    std::string rel = base;
    if (format == Format::diff) {
        rel += ".diff";
    } else {
        rel += page > 1 ? ".page" + std::to_string(page) + ".json" : ".json";
    }
    const fs::path file = root_ / rel;
    std::error_code ec;
    if (!fs::is_regular_file(file, ec)) return {404, R"({"message":"Not Found"})", {}};
    return {200, read_file(file), {}};
}

LiveClient::LiveClient(std::shared_ptr<Transport> transport, std::string token, RetryPolicy policy, Sleeper sleeper)
    : transport_(std::move(transport)), token_(std::move(token)), policy_(policy), sleeper_(std::move(sleeper)) {
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

ApiResponse LiveClient::get(const std::string& path, Format format) {
    std::map<std::string, std::string> headers = {
        {"Accept", format == Format::diff ? "application/vnd.github.v3.diff" : "application/vnd.github.v3+json"},
        {"User-Agent", "jsvuln"},
    };
    if (!token_.empty()) headers["Authorization"] = "token " + token_;
    std::string last_problem;
    for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
        bool rate_limited = false;
        try {
            ApiResponse r = transport_->request("/" + path, headers);
            const auto rem = r.headers.find("x-ratelimit-remaining");
            rate_limited = r.status == 429 || (r.status == 403 && rem != r.headers.end() && rem->second == "0");
            if (!rate_limited && r.status < 500) return r;
            last_problem = "HTTP " + std::to_string(r.status);
        } catch (const IoError& e) {
            last_problem = e.what();
        }
        if (attempt == policy_.max_attempts) {
            const std::string msg = "GET " + path + " gave up after " + std::to_string(attempt) + " attempts: " + last_problem;
            if (rate_limited) throw RateLimitError(msg);
            throw IoError(msg);
        }
        const auto delay = policy_.base_delay * (1LL << (attempt - 1));
        log_warn("resolve", "retrying " + path + " after " + last_problem);
        sleeper_(delay);
    }
    throw IoError("GET " + path + ": no attempts configured");
}

CachingClient::CachingClient(std::shared_ptr<ApiClient> inner, fs::path dir) : inner_(std::move(inner)), dir_(std::move(dir)) {
    fs::create_directories(dir_);
}

std::mutex& CachingClient::key_mutex(const std::string& key) {
    std::lock_guard lock(map_mutex_);
    auto& slot = key_mutexes_[key];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

ApiResponse CachingClient::get(const std::string& path, Format format) {
    const std::string key = sha256_hex((format == Format::diff ? "diff\n" : "json\n") + path);
    std::lock_guard lock(key_mutex(key));
    const fs::path file = dir_ / (key + ".json");
    std::error_code ec;
    if (fs::is_regular_file(file, ec)) {
        const json j = json::parse(read_file(file));
        return {j.at("status").get<int>(), j.at("body").get<std::string>(), {}};
    }
    ApiResponse r = inner_->get(path, format);
    if (r.status == 200 || r.status == 404) {
        const json j = {{"path", path}, {"status", r.status}, {"body", r.body}};
        const fs::path tmp = file.string() + ".tmp";
        write_file(tmp, j.dump());
        fs::rename(tmp, file);
    }
    return r;
}

std::optional<CommitInfo> get_commit(ApiClient& client, const std::string& slug, const std::string& sha) {
    const std::string path = "repos/" + slug + "/commits/" + sha;
    const auto r = client.get(path, Format::json);
    if (r.status == 404 || r.status == 422) return std::nullopt;
    check_ok(r, path);
    const json j = parse_body(r, path);
    CommitInfo c;
    try {
        c.sha = j.at("sha").get<std::string>();
        for (const auto& p : j.value("parents", json::array())) c.parents.push_back(p.at("sha").get<std::string>());
        c.author_date = j.at("commit").at("author").at("date").get<std::string>();
        c.committer_date = j.at("commit").at("committer").at("date").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError("commit payload for " + path + ": " + e.what());
    }
    return c;
}

std::optional<std::vector<std::string>> list_pr_commits(ApiClient& client, const std::string& slug, int number) {
    const auto items = get_pages(client, "repos/" + slug + "/pulls/" + std::to_string(number) + "/commits");
    if (!items) return std::nullopt;
    std::vector<std::string> shas;
    for (const auto& it : *items) shas.push_back(it.at("sha").get<std::string>());
    return shas;
}

std::optional<std::vector<std::string>> list_issue_comments(ApiClient& client, const std::string& slug, int number) {
    const auto items = get_pages(client, "repos/" + slug + "/issues/" + std::to_string(number) + "/comments");
    if (!items) return std::nullopt;
    std::vector<std::string> bodies;
    for (const auto& it : *items) bodies.push_back(it.value("body", ""));
    return bodies;
}

std::optional<std::string> get_commit_diff(ApiClient& client, const std::string& slug, const std::string& sha) {
    const std::string path = "repos/" + slug + "/commits/" + sha;
    const auto r = client.get(path, Format::diff);
    if (r.status == 404 || r.status == 422) return std::nullopt;
    check_ok(r, path);
    return r.body;
}

std::string_view to_string(Status s) {
    switch (s) {
        case Status::resolved: return "resolved";
        case Status::pending_review: return "pending_review";
        case Status::unresolved: return "unresolved";
    }
    return "unresolved";
}

FixResolution resolve_fixing_commits(const advisory::AdvisoryEntry& entry, const std::vector<advisory::ClassifiedUrl>& urls,
                                     ApiClient& client) {
    using advisory::UrlKind;
    FixResolution res;
    res.advisory_id = entry.id;
    for (const auto& u : urls) {
        if (u.kind != UrlKind::other && u.repo_slug) {
            res.repo_slug = *u.repo_slug;
            break;
        }
    }
    if (res.repo_slug.empty()) {
        res.notes.push_back("no GitHub commit, pull request or issue URL");
        return res;
    }

    // Expands a commit or PR URL to full commit shas; nullopt when dead.
    auto expand = [&](const advisory::ClassifiedUrl& u) -> std::optional<std::vector<std::string>> {
        if (u.kind == UrlKind::commit) {
            auto c = get_commit(client, res.repo_slug, *u.ref_id);
            if (!c) return std::nullopt;
            return std::vector<std::string>{c->sha};
        }
        return list_pr_commits(client, res.repo_slug, std::stoi(*u.ref_id));
    };

    std::set<std::string> queued_urls;
    for (const auto& u : urls) {
        if (u.kind == UrlKind::other) continue;
        if (u.repo_slug != res.repo_slug) {
            res.notes.push_back("ignored URL of another repository: " + u.url);
            continue;
        }
        if (u.kind == UrlKind::commit || u.kind == UrlKind::pull_request) {
            const auto shas = expand(u);
            if (!shas) {
                res.dead_urls.push_back(u.url);
                continue;
            }
            if (shas->empty()) res.notes.push_back("pull request without commits: " + u.url);
            for (const auto& s : *shas) add_unique(res.fixing_commits, s);
            continue;
        }
        const int issue = std::stoi(*u.ref_id);
        const auto comments = list_issue_comments(client, res.repo_slug, issue);
        if (!comments) {
            res.dead_urls.push_back(u.url);
            continue;
        }
        for (const auto& body : *comments) {
            for (const auto& found : advisory::harvest_urls(json(body))) {
                const auto c = advisory::classify_url(found);
                if (c.kind != UrlKind::commit && c.kind != UrlKind::pull_request) continue;
                if (c.repo_slug != res.repo_slug || !queued_urls.insert(found).second) continue;
                const auto shas = expand(c);
                if (!shas) {
                    res.dead_urls.push_back(found);
                    continue;
                }
                res.review_candidates.push_back({found, issue, *shas});
            }
        }
    }
    // Commits already known from direct references need no review.
    for (auto& cand : res.review_candidates)
        std::erase_if(cand.commit_shas, [&](const std::string& s) { return contains(res.fixing_commits, s); });
    std::erase_if(res.review_candidates, [](const ReviewCandidate& c) { return c.commit_shas.empty(); });

    recompute_status(res);
    if (res.status == Status::unresolved && !res.dead_urls.empty()) res.notes.push_back("all referenced URLs are dead");
    return res;
}

FixResolution apply_review_decisions(FixResolution res, const std::vector<ReviewDecision>& decisions) {
    const auto before = res.fixing_commits;
    for (const auto& d : decisions) {
        if (d.advisory_id != res.advisory_id)
            throw ValidationError("decision for " + d.advisory_id + " applied to " + res.advisory_id);
        bool found = false;
        for (auto& cand : res.review_candidates) {
            const auto it = std::find(cand.commit_shas.begin(), cand.commit_shas.end(), d.commit_sha);
            if (it == cand.commit_shas.end()) continue;
            cand.commit_shas.erase(it);
            found = true;
        }
        if (!found)
            throw ValidationError("decision for unknown candidate commit " + d.commit_sha + " of " + res.advisory_id);
        if (d.accepted) add_unique(res.fixing_commits, d.commit_sha);
    }
    std::erase_if(res.review_candidates, [](const ReviewCandidate& c) { return c.commit_shas.empty(); });
    if (res.fixing_commits != before) {
        res.combined_patch.reset();
        res.sha_pre.reset();
    }
    recompute_status(res);
    return res;
}

std::vector<CommitInfo> chronological(std::vector<CommitInfo> commits) {
    std::sort(commits.begin(), commits.end(), [](const CommitInfo& a, const CommitInfo& b) {
        return std::tie(a.author_date, a.committer_date, a.sha) < std::tie(b.author_date, b.committer_date, b.sha);
    });
    return commits;
}

FixResolution fetch_combined_patch(FixResolution res, ApiClient& client) {
    if (res.fixing_commits.empty()) throw ValidationError("no fixing commits for " + res.advisory_id);
    auto fail = [&](const std::string& why) {
        res.status = Status::unresolved;
        res.combined_patch.reset();
        res.sha_pre.reset();
        res.notes.push_back(why);
        return res;
    };
    try {
        std::vector<CommitInfo> infos;
        for (const auto& sha : res.fixing_commits) {
            auto c = get_commit(client, res.repo_slug, sha);
            if (!c) return fail("commit unfetchable: " + sha);
            infos.push_back(std::move(*c));
        }
        // Full shas replace abbreviated references.
        std::vector<std::string> full;
        for (const auto& c : infos) add_unique(full, c.sha);
        infos = chronological(std::move(infos));
        infos.erase(std::unique(infos.begin(), infos.end(), [](const CommitInfo& a, const CommitInfo& b) { return a.sha == b.sha; }),
                    infos.end());
        std::string patch;
        for (const auto& c : infos) {
            auto d = get_commit_diff(client, res.repo_slug, c.sha);
            if (!d) return fail("diff unfetchable: " + c.sha);
            patch += *d;
            if (!patch.empty() && patch.back() != '\n') patch += '\n';
        }
        if (infos.front().parents.empty()) return fail("earliest fixing commit has no parent: " + infos.front().sha);
        res.fixing_commits = std::move(full);
        res.sha_pre = infos.front().parents.front();
        res.combined_patch = std::move(patch);
        recompute_status(res);
    } catch (const RateLimitError&) {
        throw;
    } catch (const Error& e) {
        return fail(e.what());
    }
    return res;
}

json to_json(const FixResolution& r, bool include_patch) {
    json cands = json::array();
    for (const auto& c : r.review_candidates)
        cands.push_back({{"url", c.url}, {"issue_number", c.issue_number}, {"commit_shas", c.commit_shas}});
    json j = {
        {"advisory_id", r.advisory_id},
        {"repo_slug", r.repo_slug},
        {"status", to_string(r.status)},
        {"fixing_commits", r.fixing_commits},
        {"review_candidates", cands},
        {"dead_urls", r.dead_urls},
        {"notes", r.notes},
        {"sha_pre", r.sha_pre ? json(*r.sha_pre) : json(nullptr)},
    };
    if (include_patch) j["combined_patch"] = r.combined_patch ? json(*r.combined_patch) : json(nullptr);
    return j;
}

FixResolution resolution_from_json(const json& j) {
    FixResolution r;
    try {
        r.advisory_id = j.at("advisory_id").get<std::string>();
        r.repo_slug = j.at("repo_slug").get<std::string>();
        r.status = parse_status(j.at("status").get<std::string>());
        r.fixing_commits = j.at("fixing_commits").get<std::vector<std::string>>();
        for (const auto& c : j.at("review_candidates"))
            r.review_candidates.push_back({c.at("url").get<std::string>(), c.at("issue_number").get<int>(),
                                           c.at("commit_shas").get<std::vector<std::string>>()});
        r.dead_urls = j.value("dead_urls", std::vector<std::string>{});
        r.notes = j.value("notes", std::vector<std::string>{});
        if (j.contains("sha_pre") && !j["sha_pre"].is_null()) r.sha_pre = j["sha_pre"].get<std::string>();
        if (j.contains("combined_patch") && !j["combined_patch"].is_null())
            r.combined_patch = j["combined_patch"].get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad resolution record: ") + e.what());
    }
    return r;
}

std::string safe_file_name(const std::string& id) {
    std::string out;
    for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
    return out;
}

void save_resolutions(const fs::path& dir, const std::vector<FixResolution>& rs) {
    fs::create_directories(dir / "patches");
    for (const auto& r : rs) {
        const std::string name = safe_file_name(r.advisory_id);
        json j = to_json(r, false);
        if (r.combined_patch) {
            const std::string rel = "patches/" + name + ".diff";
            write_file(dir / rel, *r.combined_patch);
            j["combined_patch"] = rel;
            j["combined_patch_sha256"] = sha256_hex(*r.combined_patch);
        } else {
            j["combined_patch"] = nullptr;
        }
        write_file(dir / (name + ".json"), j.dump(2) + "\n");
    }
}

std::vector<FixResolution> load_resolutions(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("resolution directory does not exist: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& de : fs::directory_iterator(dir))
        if (de.is_regular_file() && de.path().extension() == ".json") files.push_back(de.path());
    std::sort(files.begin(), files.end());
    std::vector<FixResolution> out;
    for (const auto& f : files) {
        json j;
        try {
            j = json::parse(read_file(f));
        } catch (const json::parse_error& e) {
            throw ParseError(f.string() + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("advisory_id")) continue;
        if (j.contains("combined_patch") && j["combined_patch"].is_string()) {
            const std::string text = read_file(dir / j["combined_patch"].get<std::string>());
            if (j.contains("combined_patch_sha256") && j["combined_patch_sha256"] != sha256_hex(text))
                throw ValidationError("patch file changed since resolution: " + j["combined_patch"].get<std::string>());
            j["combined_patch"] = text;
        }
        out.push_back(resolution_from_json(j));
    }
    return out;
}

json export_review_queue(const std::vector<FixResolution>& rs) {
    json items = json::array();
    for (const auto& r : rs) {
        for (const auto& c : r.review_candidates) {
            for (const auto& sha : c.commit_shas) {
                items.push_back({{"advisory_id", r.advisory_id},
                                 {"repo_slug", r.repo_slug},
                                 {"url", c.url},
                                 {"issue_number", c.issue_number},
                                 {"commit_sha", sha},
                                 {"commit_url", "https://github.com/" + r.repo_slug + "/commit/" + sha},
                                 {"accepted", nullptr},
                                 {"reviewer_note", ""}});
            }
        }
    }
    return {{"review_queue", items}};
}

std::vector<ReviewDecision> parse_decisions(const json& j) {
    const json* arr = &j;
    if (j.is_object()) {
        if (j.contains("decisions")) {
            arr = &j.at("decisions");
        } else if (j.contains("review_queue")) {
            arr = &j.at("review_queue");
        }
    }
    if (!arr->is_array()) throw ParseError("decisions must be a JSON array");
    std::vector<ReviewDecision> out;
    for (const auto& d : *arr) {
        try {
            if (d.at("accepted").is_null()) continue;  // still undecided
            out.push_back({d.at("advisory_id").get<std::string>(), d.at("commit_sha").get<std::string>(),
                           d.at("accepted").get<bool>(), d.value("reviewer_note", "")});
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad review decision: ") + e.what());
        }
    }
    return out;
}

}  // namespace jsvuln::github
