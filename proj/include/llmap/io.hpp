#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "llmap/divergence.hpp"
#include "llmap/mapping.hpp"
#include "llmap/oracle.hpp"
#include "llmap/types.hpp"

namespace llmap::io {

// All files are UTF-8 newline-delimited JSON records. Float arrays are
// serialized as decimal with 17 significant digits, which round-trips every
// 64-bit value exactly.

std::string format_double(double v);

PairSet load_pairs(const std::filesystem::path& path);
void save_pairs(const PairSet& pairs, const std::filesystem::path& path);

// Matrix files carry one header record {"type":"loglik_matrix","mode":...,
// "pair_ids":[...],"clip":...,"centered":...} followed by one record per
// model: {"model_id":...,"values":[...]}.
LogLikMatrix load_matrix(const std::filesystem::path& path);
void save_matrix(const LogLikMatrix& m, const std::filesystem::path& path);

PairwiseDistanceMatrix load_distances(const std::filesystem::path& path);
void save_distances(const PairwiseDistanceMatrix& d,
                    const std::filesystem::path& path);

SampledLogLiks load_sampled(const std::filesystem::path& path);
void save_sampled(const SampledLogLiks& s, const std::filesystem::path& path);

EmbeddingSet load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingSet& e,
                     const std::filesystem::path& path);

// Map record files are flat: one record per model with id, x, y, method,
// params and metadata (null when absent), ordered by model_id.
MapEmbedding load_map(const std::filesystem::path& path);
void save_map(const MapEmbedding& e, const std::filesystem::path& path);

oracle::SyntheticModel load_model(const std::filesystem::path& path);
void save_model(const oracle::SyntheticModel& m,
                const std::filesystem::path& path);

// Per-model metadata join source: one record per line with "model_id" plus
// arbitrary fields.
std::map<std::string, nlohmann::json> load_metadata(
    const std::filesystem::path& path);

// Run manifest written beside every CLI output. Contains no timestamps, so
// rerunning a command reproduces the manifest byte-for-byte as well.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json inputs;      // flag -> path
  nlohmann::json parameters;  // resolved parameters, seeds, thresholds
  std::vector<std::string> outputs;
};

void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

// <output>.manifest.json beside the primary output.
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

}  // namespace llmap::io
