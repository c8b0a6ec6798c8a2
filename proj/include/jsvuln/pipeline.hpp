#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "jsvuln/advisory.hpp"
#include "jsvuln/dataset.hpp"
#include "jsvuln/eval.hpp"
#include "jsvuln/github.hpp"

namespace jsvuln::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

/// SHA-256 of a file, or of the sorted (relative path, file hash) list of a directory tree.
std::string content_hash(const std::filesystem::path& path);

struct OutputRecord {
    std::string path;  ///< relative to the work directory
    std::string sha256;
};

struct StageRecord {
    std::vector<OutputRecord> outputs;
    std::string inputs_hash;
    std::string created;  ///< UTC, ISO 8601
    std::string tool_version;
};

/// Outputs of every finished stage, stored as manifest.json in the work directory.
struct Manifest {
    std::map<std::string, StageRecord> stages;

    /// Missing file gives an empty manifest; an unreadable one is discarded with a warning.
    static Manifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
    /// True when the stage ran with the same inputs and all its outputs still hash the same.
    bool fresh(const std::string& stage, const std::string& inputs_hash, const std::filesystem::path& work_dir) const;
    /// Problems found when re-hashing every recorded output.
    std::vector<std::string> validate(const std::filesystem::path& work_dir) const;
};

struct SourceSpec {
    std::filesystem::path path;
    advisory::Source source = advisory::Source::nsp;
};

struct PipelineConfig {
    std::filesystem::path work_dir;
    std::vector<SourceSpec> advisories;
    std::optional<std::filesystem::path> api_fixtures;  ///< offline API mirror; live API when absent
    std::filesystem::path api_cache;                    ///< live responses cache
    std::string token_env = "GITHUB_TOKEN";
    std::optional<std::filesystem::path> decisions;
    std::filesystem::path snapshots;
    bool download_snapshots = false;
    eval::EvalConfig eval;
    std::vector<ml::Algorithm> algorithms;
    std::vector<eval::ResamplingSpec> resamplings;
    bool rand_check = true;
    unsigned jobs = 1;
};

/// Reads a pipeline config. Relative paths are taken from the config file's
/// directory. Throws ValidationError for bad content.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

// Stage building blocks shared with the command line.

/// Entries of all sources; ids repeated across sources keep the first occurrence.
advisory::IngestResult ingest_all(const std::vector<SourceSpec>& sources);

/// Fixture client when `fixtures` is set, otherwise the live API behind a disk cache.
std::shared_ptr<github::ApiClient> make_api_client(const std::optional<std::filesystem::path>& fixtures,
                                                   const std::filesystem::path& cache_dir, const std::string& token_env);

/// Resolves every entry, applies the review decisions of its advisory and
/// fetches the combined patch of resolved fixes.
std::vector<github::FixResolution> resolve_all(const std::vector<advisory::AdvisoryEntry>& entries, github::ApiClient& client,
                                               const std::vector<github::ReviewDecision>& decisions, unsigned jobs);

/// Applies decisions to stored resolutions and fetches patches for fixes that became resolved.
std::vector<github::FixResolution> import_decisions(std::vector<github::FixResolution> resolutions,
                                                    const std::vector<github::ReviewDecision>& decisions, github::ApiClient& client);

dataset::SnapshotProvider make_snapshot_provider(const std::filesystem::path& dir, bool download);

nlohmann::json to_json(const eval::SweepResult& s);
eval::SweepResult sweep_from_json(const nlohmann::json& j);

struct StageOutcome {
    std::string stage;
    bool skipped = false;
};

/// Runs ingest, resolve, build-dataset, sweep and report in order. A stage is
/// skipped while its manifest entry is fresh and no earlier stage ran.
/// Failures are rethrown as Error naming the stage.
std::vector<StageOutcome> run_pipeline(const PipelineConfig& config);

}  // namespace jsvuln::pipeline
