#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace jsvuln::advisory {

enum class Source { nsp, snyk };

std::string_view to_string(Source s);
/// Accepts "nsp" or "snyk"; throws ValidationError otherwise.
Source parse_source(std::string_view text);

struct AdvisoryEntry {
    std::string id;  ///< "<source>:<native id>"
    Source source = Source::nsp;
    std::string module_name;
    std::string title;
    std::string description;
    std::vector<std::string> reference_urls;

    bool operator==(const AdvisoryEntry&) const = default;
};

enum class UrlKind { commit, pull_request, issue, other };

std::string_view to_string(UrlKind k);

struct ClassifiedUrl {
    std::string url;
    UrlKind kind = UrlKind::other;
    std::optional<std::string> repo_slug;  ///< "owner/name"
    std::optional<std::string> ref_id;     ///< sha, PR number or issue number

    bool operator==(const ClassifiedUrl&) const = default;
};

struct IngestResult {
    std::vector<AdvisoryEntry> entries;
    int skipped = 0;
    std::vector<std::string> warnings;
};

/// Reads a JSON array, a single JSON object, JSON lines, or a directory tree
/// of such files (visited in sorted path order). Records that do not parse,
/// are not objects, lack an id, or repeat an id are skipped with a warning.
/// Throws IoError when the path cannot be read.
IngestResult ingest_advisories(const std::filesystem::path& path, Source source);

/// Normalizes one raw record. Returns nullopt when it has no usable id.
std::optional<AdvisoryEntry> normalize_record(const nlohmann::ordered_json& record, Source source);

/// Every http(s) URL found in any string value, in document order, without
/// duplicates and without trailing punctuation.
std::vector<std::string> harvest_urls(const nlohmann::ordered_json& value);

/// Absolute http(s) URL with a plausible host.
bool is_valid_url(std::string_view url);

ClassifiedUrl classify_url(const std::string& url);
std::vector<ClassifiedUrl> classify_urls(const AdvisoryEntry& entry);

nlohmann::json to_json(const AdvisoryEntry& e);
AdvisoryEntry entry_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ClassifiedUrl& c);

void save_advisories(const std::filesystem::path& path, const std::vector<AdvisoryEntry>& entries);
std::vector<AdvisoryEntry> load_advisories(const std::filesystem::path& path);

}  // namespace jsvuln::advisory
