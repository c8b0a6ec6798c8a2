#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jsvuln/advisory.hpp"
#include "jsvuln/error.hpp"

namespace jsvuln::github {

enum class Format { json, diff };

struct ApiResponse {
    int status = 0;
    std::string body;
    std::map<std::string, std::string> headers;  ///< lower-case names
};

/// Raised when the API keeps refusing requests after all retries.
class RateLimitError : public IoError {
public:
    using IoError::IoError;
};

/// GET access to GitHub REST v3 paths such as `repos/o/r/commits/<sha>`
/// (no leading slash, optional query). Implementations must be thread-safe.
class ApiClient {
public:
    virtual ~ApiClient() = default;
    virtual ApiResponse get(const std::string& path, Format format) = 0;
};

/// Serves responses from a directory tree that mirrors the endpoint paths:
/// `<path>.json` or `<path>.diff`, and `<path>.page<N>.json` for page N > 1.
/// Missing files answer 404. Never touches the network.
class FixtureClient : public ApiClient {
public:
    explicit FixtureClient(std::filesystem::path root) : root_(std::move(root)) {}
    ApiResponse get(const std::string& path, Format format) override;

private:
    std::filesystem::path root_;
};

/// Raw HTTP transport used by LiveClient.
class Transport {
public:
    virtual ~Transport() = default;
    virtual ApiResponse request(const std::string& path, const std::map<std::string, std::string>& headers) = 0;
};

/// HTTPS transport to api.github.com. Throws IoError while the network is disabled.
std::shared_ptr<Transport> make_https_transport(const std::string& host = "api.github.com");
/// Process-wide switch checked by HTTPS transports before every request.
void set_network_allowed(bool allowed);
bool network_allowed();
/// Number of HTTPS requests attempted by this process.
std::size_t network_request_count();

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{1000};
};

/// Talks to the REST API through a transport. Rate-limit answers (429, or 403
/// with `x-ratelimit-remaining: 0`) and 5xx are retried with exponential
/// backoff; RateLimitError is thrown after the last attempt.
class LiveClient : public ApiClient {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    LiveClient(std::shared_ptr<Transport> transport, std::string token, RetryPolicy policy = {}, Sleeper sleeper = {});
    ApiResponse get(const std::string& path, Format format) override;

private:
    std::shared_ptr<Transport> transport_;
    std::string token_;
    RetryPolicy policy_;
    Sleeper sleeper_;
};

/// Disk cache in front of another client. Entries are keyed by the SHA-256 of
/// format and path; 200 and 404 answers are stored. Concurrent requests for
/// the same key are serialized.
class CachingClient : public ApiClient {
public:
    CachingClient(std::shared_ptr<ApiClient> inner, std::filesystem::path dir);
    ApiResponse get(const std::string& path, Format format) override;

private:
    std::mutex& key_mutex(const std::string& key);

    std::shared_ptr<ApiClient> inner_;
    std::filesystem::path dir_;
    std::mutex map_mutex_;
    std::map<std::string, std::unique_ptr<std::mutex>> key_mutexes_;
};

struct CommitInfo {
    std::string sha;
    std::vector<std::string> parents;
    std::string author_date;  ///< ISO 8601
    std::string committer_date;
};

/// Typed endpoint helpers. A 404 yields nullopt; other failures throw IoError.
std::optional<CommitInfo> get_commit(ApiClient& client, const std::string& slug, const std::string& sha);
std::optional<std::vector<std::string>> list_pr_commits(ApiClient& client, const std::string& slug, int number);
std::optional<std::vector<std::string>> list_issue_comments(ApiClient& client, const std::string& slug, int number);
std::optional<std::string> get_commit_diff(ApiClient& client, const std::string& slug, const std::string& sha);

enum class Status { resolved, pending_review, unresolved };

std::string_view to_string(Status s);

struct ReviewCandidate {
    std::string url;
    int issue_number = 0;
    std::vector<std::string> commit_shas;  ///< undecided commits behind the URL

    bool operator==(const ReviewCandidate&) const = default;
};

struct FixResolution {
    std::string advisory_id;
    std::string repo_slug;
    Status status = Status::unresolved;
    std::vector<std::string> fixing_commits;  ///< insertion-ordered, no duplicates
    std::vector<ReviewCandidate> review_candidates;
    std::vector<std::string> dead_urls;
    std::vector<std::string> notes;
    std::optional<std::string> sha_pre;
    std::optional<std::string> combined_patch;  ///< unified diff text

    bool operator==(const FixResolution&) const = default;
};

struct ReviewDecision {
    std::string advisory_id;
    std::string commit_sha;
    bool accepted = false;
    std::string reviewer_note;
};

/// Commit URLs add their sha, PR URLs add all PR commits, issue URLs queue the
/// commit and PR URLs mentioned in the issue comments for review. Only URLs of
/// the advisory's repository (the first GitHub repository referenced) are used.
FixResolution resolve_fixing_commits(const advisory::AdvisoryEntry& entry, const std::vector<advisory::ClassifiedUrl>& urls,
                                     ApiClient& client);

/// Moves accepted candidate commits into fixing_commits and drops rejected
/// ones. Throws ValidationError for decisions that match no candidate.
FixResolution apply_review_decisions(FixResolution res, const std::vector<ReviewDecision>& decisions);

/// Concatenates the per-commit diffs in chronological order and sets sha_pre
/// to the first parent of the earliest commit. On failure the resolution is
/// marked unresolved with a note.
FixResolution fetch_combined_patch(FixResolution res, ApiClient& client);

/// Orders commits by author date, then committer date, then sha.
std::vector<CommitInfo> chronological(std::vector<CommitInfo> commits);

nlohmann::json to_json(const FixResolution& r, bool include_patch = true);
FixResolution resolution_from_json(const nlohmann::json& j);

/// One `<id>.json` per advisory plus `patches/<id>.diff`; ids are made file-safe.
void save_resolutions(const std::filesystem::path& dir, const std::vector<FixResolution>& rs);
std::vector<FixResolution> load_resolutions(const std::filesystem::path& dir);
std::string safe_file_name(const std::string& id);

nlohmann::json export_review_queue(const std::vector<FixResolution>& rs);
std::vector<ReviewDecision> parse_decisions(const nlohmann::json& j);

}  // namespace jsvuln::github
