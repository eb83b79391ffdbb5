#pragma once

// End-to-end corpus preparation: ingest → clean → dedup → anonymize → stats.
//
// Config (JSON, relative paths resolve against the config file's directory):
//   {
//     "inputs": [{"path": "reports.jsonl", "source": "radiology-report"}],
//     "output_dir": "out",
//     "clean": {"policies": {"<source tag>": {"min_chars": 100, "min_pages": 0,
//               "chars_per_page": 1800, "stopword_filter": false,
//               "stopwords_file": null}}},
//     "dedup": {"threshold": 0.75, "comparison": "gt", "mode": "representative",
//               "max_doc_words": 128, "indexed": true},
//     "anonymize": {"gazetteer": null, "case_insensitive": false,
//                   "name_wildcard": "<NAME>", "date_wildcard": "<DATE>",
//                   "delete_names": false},
//     "stats": {"megabyte": "decimal"}
//   }

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcorpus/error.hpp"

namespace medcorpus::pipeline {

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);
std::string hash_file(const std::filesystem::path& path);

struct StageOutput {
    std::string path;  // relative to the output directory
    std::string hash;
};

struct StageRecord {
    std::string name;
    std::string config_hash;
    std::vector<std::string> inputs;
    std::vector<StageOutput> outputs;
    std::size_t count_in = 0;
    std::size_t count_out = 0;
    nlohmann::json details = nlohmann::json::object();
    std::string status = "ok";
    std::optional<std::string> error;
};

struct PipelineManifest {
    std::vector<StageRecord> stages;
    std::string status = "complete";
    std::optional<std::string> failed_stage;
};

nlohmann::json to_json(const PipelineManifest& manifest);

class StageError : public Error {
public:
    StageError(ErrorKind kind, std::string stage, const std::string& what)
        : Error(kind, "stage " + stage + ": " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

// Runs every stage, writing outputs and manifest.json into the output
// directory (overridable). On failure the manifest holds the stages run so
// far plus the failed one, and StageError is thrown.
PipelineManifest run_pipeline(const nlohmann::json& config, const std::filesystem::path& base_dir,
                              const std::optional<std::filesystem::path>& output_dir = std::nullopt);

PipelineManifest run_pipeline_file(const std::filesystem::path& config_path,
                                   const std::optional<std::filesystem::path>& output_dir = std::nullopt);

}  // namespace medcorpus::pipeline
