#include "llmap/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace llmap::io {

namespace {

using nlohmann::json;

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

json parse_line(const std::string& line, const std::filesystem::path& path,
                std::size_t lineno) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ValidationError("malformed record at " + path.string() + ":" +
                          std::to_string(lineno) + ": " + e.what());
  }
}

std::string quote(const std::string& s) { return json(s).dump(); }

void append_value_array(std::string& out, std::span<const double> values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  out += ']';
}

// Shared reader for files with one header record plus one value row per
// model: returns (header, ids, values).
struct RowFile {
  json header;
  std::vector<std::string> row_ids;
  std::vector<double> values;
  std::size_t columns = 0;
};

RowFile load_row_file(const std::filesystem::path& path,
                      const std::string& expected_type, const char* id_key,
                      std::size_t columns) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  RowFile out;
  out.columns = columns;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, path, lineno);
    if (lineno == 1) {
      if (j.value("type", "") != expected_type) {
        throw ValidationError(path.string() + ": expected a " + expected_type +
                              " header record");
      }
      out.header = std::move(j);
      continue;
    }
    if (!j.contains(id_key) || !j.contains("values")) {
      throw ValidationError("malformed record at " + path.string() + ":" +
                            std::to_string(lineno));
    }
    std::string id = j.at(id_key).get<std::string>();
    std::vector<double> row = j.at("values").get<std::vector<double>>();
    if (out.columns == 0 && out.row_ids.empty()) out.columns = row.size();
    if (row.size() != out.columns) {
      throw ValidationError(path.string() + ": ragged row for '" + id +
                            "' (" + std::to_string(row.size()) + " values, " +
                            "expected " + std::to_string(out.columns) + ")");
    }
    out.row_ids.push_back(std::move(id));
    out.values.insert(out.values.end(), row.begin(), row.end());
  }
  if (out.header.is_null()) {
    throw ValidationError(path.string() + ": empty file, header expected");
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

PairSet load_pairs(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::vector<TextPair> pairs;
  std::unordered_map<std::string, std::size_t> first_line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, path, lineno);
    if (!j.contains("id") || !j.contains("prompt") || !j.contains("response") ||
        !j.at("id").is_string() || !j.at("prompt").is_string() ||
        !j.at("response").is_string()) {
      throw ValidationError("malformed pair record at " + path.string() + ":" +
                            std::to_string(lineno) +
                            " (need string id/prompt/response)");
    }
    TextPair p{j.at("id").get<std::string>(), j.at("prompt").get<std::string>(),
               j.at("response").get<std::string>()};
    if (p.response.empty()) {
      throw ValidationError("empty response for pair '" + p.id + "' at " +
                            path.string() + ":" + std::to_string(lineno));
    }
    auto [it, inserted] = first_line.emplace(p.id, lineno);
    if (!inserted) {
      throw ValidationError("duplicate pair id '" + p.id + "' at " +
                            path.string() + ":" + std::to_string(it->second) +
                            " and :" + std::to_string(lineno));
    }
    pairs.push_back(std::move(p));
  }
  return PairSet(std::move(pairs));
}

void save_pairs(const PairSet& pairs, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  for (const TextPair& p : pairs.pairs()) {
    json j{{"id", p.id}, {"prompt", p.prompt}, {"response", p.response}};
    out << j.dump() << "\n";
  }
}

LogLikMatrix load_matrix(const std::filesystem::path& path) {
  RowFile f = load_row_file(path, "loglik_matrix", "model_id", 0);
  std::vector<std::string> pair_ids;
  LikMode mode;
  std::optional<ClipInfo> clip;
  bool centered = false;
  try {
    pair_ids = f.header.at("pair_ids").get<std::vector<std::string>>();
    mode = lik_mode_from_string(f.header.at("mode").get<std::string>());
    centered = f.header.value("centered", false);
    if (f.header.contains("clip") && !f.header.at("clip").is_null()) {
      clip = ClipInfo{f.header.at("clip").at("percentile").get<double>(),
                      f.header.at("clip").at("threshold").get<double>()};
    }
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed matrix header: " +
                          e.what());
  }
  if (!f.row_ids.empty() && f.columns != pair_ids.size()) {
    throw ValidationError(path.string() + ": rows have " +
                          std::to_string(f.columns) + " values but header has " +
                          std::to_string(pair_ids.size()) + " pair ids");
  }
  LogLikMatrix m(std::move(f.row_ids), std::move(pair_ids),
                 std::move(f.values), mode, clip, centered);
  require_valid(m);
  return m;
}

void save_matrix(const LogLikMatrix& m, const std::filesystem::path& path) {
  require_valid(m);
  std::ofstream out = open_out(path);
  std::string header = "{\"type\":\"loglik_matrix\",\"mode\":" +
                       quote(to_string(m.mode())) +
                       ",\"centered\":" + (m.centered() ? "true" : "false") +
                       ",\"clip\":";
  if (m.clipped()) {
    header += "{\"percentile\":" + format_double(m.clipped()->percentile) +
              ",\"threshold\":" + format_double(m.clipped()->threshold) + "}";
  } else {
    header += "null";
  }
  header += ",\"pair_ids\":" + json(m.pair_ids()).dump() + "}";
  out << header << "\n";
  for (std::size_t i = 0; i < m.models(); ++i) {
    std::string line = "{\"model_id\":" + quote(m.model_ids()[i]) +
                       ",\"values\":";
    append_value_array(line, m.row(i));
    line += "}";
    out << line << "\n";
  }
}

PairwiseDistanceMatrix load_distances(const std::filesystem::path& path) {
  RowFile f = load_row_file(path, "distance_matrix", "model_id", 0);
  PairwiseDistanceMatrix d;
  try {
    d.kind = distance_kind_from_string(f.header.at("kind").get<std::string>());
    d.sampled_inputs = f.header.value("sampled_inputs", false);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed distance header: " +
                          e.what());
  }
  d.model_ids = std::move(f.row_ids);
  d.values = std::move(f.values);
  if (d.values.size() != d.model_ids.size() * d.model_ids.size()) {
    throw ValidationError(path.string() + ": distance matrix is not K x K");
  }
  return d;
}

void save_distances(const PairwiseDistanceMatrix& d,
                    const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "{\"type\":\"distance_matrix\",\"kind\":" << quote(to_string(d.kind))
      << ",\"sampled_inputs\":" << (d.sampled_inputs ? "true" : "false")
      << "}\n";
  const std::size_t k = d.models();
  for (std::size_t i = 0; i < k; ++i) {
    std::string line = "{\"model_id\":" + quote(d.model_ids[i]) +
                       ",\"values\":";
    append_value_array(line, {d.values.data() + i * k, k});
    line += "}";
    out << line << "\n";
  }
}

SampledLogLiks load_sampled(const std::filesystem::path& path) {
  RowFile f = load_row_file(path, "sampled_logliks", "model_id", 0);
  SampledLogLiks s;
  try {
    s.generator_id = f.header.at("generator_id").get<std::string>();
    s.pair_ids = f.header.at("pair_ids").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed sampled header: " +
                          e.what());
  }
  if (!f.row_ids.empty() && f.columns != s.pair_ids.size()) {
    throw ValidationError(path.string() + ": score rows do not match pair ids");
  }
  s.scorer_ids = std::move(f.row_ids);
  s.values = std::move(f.values);
  for (double v : s.values) {
    if (!std::isfinite(v)) {
      throw ValidationError(path.string() + ": non-finite sampled score");
    }
  }
  return s;
}

void save_sampled(const SampledLogLiks& s, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "{\"type\":\"sampled_logliks\",\"generator_id\":"
      << quote(s.generator_id) << ",\"pair_ids\":" << json(s.pair_ids).dump()
      << "}\n";
  const std::size_t n = s.pair_ids.size();
  for (std::size_t i = 0; i < s.scorer_ids.size(); ++i) {
    std::string line = "{\"model_id\":" + quote(s.scorer_ids[i]) +
                       ",\"values\":";
    append_value_array(line, {s.values.data() + i * n, n});
    line += "}";
    out << line << "\n";
  }
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::string model_id;
  std::size_t per_prompt = 0, dim = 0;
  std::vector<std::string> expected_ids;
  std::vector<std::string> pair_ids;
  std::vector<double> data;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, path, lineno);
    if (lineno == 1) {
      try {
        if (j.at("type").get<std::string>() != "embedding_set") {
          throw ValidationError(path.string() +
                                ": expected an embedding_set header");
        }
        model_id = j.at("model_id").get<std::string>();
        per_prompt = j.at("per_prompt").get<std::size_t>();
        dim = j.at("dim").get<std::size_t>();
        expected_ids = j.at("pair_ids").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": malformed embedding header: " +
                              e.what());
      }
      continue;
    }
    try {
      pair_ids.push_back(j.at("pair_id").get<std::string>());
      auto vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
      if (vectors.size() != per_prompt) {
        throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                              ": expected " + std::to_string(per_prompt) +
                              " vectors");
      }
      for (const auto& v : vectors) {
        if (v.size() != dim) {
          throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                ": embedding dimension mismatch");
        }
        data.insert(data.end(), v.begin(), v.end());
      }
    } catch (const json::exception& e) {
      throw ValidationError("malformed embedding record at " + path.string() +
                            ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (pair_ids != expected_ids) {
    throw ValidationError(path.string() +
                          ": embedding rows do not match header pair ids");
  }
  return EmbeddingSet(std::move(model_id), std::move(pair_ids), per_prompt,
                      dim, std::move(data));
}

void save_embeddings(const EmbeddingSet& e,
                     const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "{\"type\":\"embedding_set\",\"model_id\":" << quote(e.model_id())
      << ",\"per_prompt\":" << e.per_prompt() << ",\"dim\":" << e.dim()
      << ",\"pair_ids\":" << json(e.pair_ids()).dump() << "}\n";
  for (std::size_t s = 0; s < e.prompts(); ++s) {
    std::string line = "{\"pair_id\":" + quote(e.pair_ids()[s]) +
                       ",\"vectors\":[";
    for (std::size_t a = 0; a < e.per_prompt(); ++a) {
      if (a) line += ',';
      append_value_array(line, e.vec(s, a));
    }
    line += "]}";
    out << line << "\n";
  }
}

MapEmbedding load_map(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  MapEmbedding e;
  bool have_method = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, path, lineno);
    try {
      std::string id = j.at("model_id").get<std::string>();
      e.model_ids.push_back(id);
      e.coords.push_back(j.at("x").get<double>());
      e.coords.push_back(j.at("y").get<double>());
      if (!have_method) {
        e.method = map_method_from_string(j.at("method").get<std::string>());
        e.params = j.at("params");
        have_method = true;
      }
      if (j.contains("metadata") && !j.at("metadata").is_null()) {
        e.metadata[id] = j.at("metadata");
      }
    } catch (const json::exception& ex) {
      throw ValidationError("malformed map record at " + path.string() + ":" +
                            std::to_string(lineno) + ": " + ex.what());
    }
  }
  return e;
}

void save_map(const MapEmbedding& e, const std::filesystem::path& path) {
  if (e.coords.size() != e.model_ids.size() * 2) {
    throw ValidationError("map embedding is not K x 2");
  }
  for (double c : e.coords) {
    if (!std::isfinite(c)) throw ValidationError("non-finite map coordinate");
  }
  // Stable ordering by model id.
  std::vector<std::size_t> order(e.model_ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return e.model_ids[a] < e.model_ids[b];
  });
  std::ofstream out = open_out(path);
  const std::string method = to_string(e.method);
  const std::string params = e.params.is_null() ? "{}" : e.params.dump();
  for (std::size_t i : order) {
    const std::string& id = e.model_ids[i];
    auto meta = e.metadata.find(id);
    std::string line = "{\"model_id\":" + quote(id) +
                       ",\"x\":" + format_double(e.coords[i * 2]) +
                       ",\"y\":" + format_double(e.coords[i * 2 + 1]) +
                       ",\"method\":" + quote(method) + ",\"params\":" + params +
                       ",\"metadata\":" +
                       (meta == e.metadata.end() ? "null" : meta->second.dump()) +
                       "}";
    out << line << "\n";
  }
}

oracle::SyntheticModel load_model(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed model file: " +
                          e.what());
  }
  return oracle::model_from_json(j);
}

void save_model(const oracle::SyntheticModel& m,
                const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << oracle::model_to_json(m).dump(2) << "\n";
}

std::map<std::string, nlohmann::json> load_metadata(
    const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, nlohmann::json> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = parse_line(line, path, lineno);
    if (!j.contains("model_id") || !j.at("model_id").is_string()) {
      throw ValidationError("metadata record without model_id at " +
                            path.string() + ":" + std::to_string(lineno));
    }
    std::string id = j.at("model_id").get<std::string>();
    j.erase("model_id");
    out[id] = std::move(j);
  }
  return out;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  json j{
      {"command", m.command},
      {"argv", m.argv},
      {"inputs", m.inputs.is_null() ? json::object() : m.inputs},
      {"parameters", m.parameters.is_null() ? json::object() : m.parameters},
      {"outputs", m.outputs},
      {"tool", {{"name", "llmap"}, {"version", "0.1.0"}}},
  };
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
    Manifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.inputs = j.value("inputs", json::object());
    m.parameters = j.value("parameters", json::object());
    m.outputs = j.value("outputs", std::vector<std::string>{});
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed manifest: " + e.what());
  }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
  return std::filesystem::path(output.string() + ".manifest.json");
}

}  // namespace llmap::io
