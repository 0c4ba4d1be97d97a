#include "llmap/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "llmap/divergence.hpp"
#include "llmap/io.hpp"
#include "llmap/mapping.hpp"
#include "llmap/matrix_ops.hpp"
#include "llmap/oracle.hpp"
#include "llmap/promptshift.hpp"
#include "llmap/rng.hpp"
#include "llmap/scorer_client.hpp"
#include "llmap/types.hpp"

namespace llmap {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kExitCodeHelp =
    "Exit status: 0 success, 2 usage error, 3 data validation error, "
    "4 numeric/degenerate input, 5 scorer/network failure, 6 file I/O "
    "failure, 70 internal error.";

struct CommandContext {
  std::vector<std::string> argv;

  void emit_manifest(const std::string& command, const json& inputs,
                     const json& parameters,
                     const std::vector<std::string>& outputs,
                     const fs::path& manifest_path) const {
    io::Manifest m;
    m.command = command;
    m.argv = argv;
    m.inputs = inputs;
    m.parameters = parameters;
    m.outputs = outputs;
    io::write_manifest(m, manifest_path);
  }
};

ShiftSet load_shift_set(const std::string& base, const std::string& cot,
                        const std::string& rep, const std::string& rep_cot) {
  return ShiftSet(io::load_matrix(base), io::load_matrix(cot),
                  io::load_matrix(rep), io::load_matrix(rep_cot));
}

LogLikMatrix vectors_to_matrix(const std::vector<ModelVector>& rows,
                               const std::vector<std::string>& pair_ids,
                               LikMode mode) {
  std::vector<std::string> model_ids;
  std::vector<double> values;
  values.reserve(rows.size() * pair_ids.size());
  for (const ModelVector& v : rows) {
    model_ids.push_back(v.model_id);
    values.insert(values.end(), v.values.begin(), v.values.end());
  }
  return LogLikMatrix(std::move(model_ids), pair_ids, std::move(values), mode);
}

// ---------------------------------------------------------------- commands

struct ScoreCmd {
  std::string endpoint, model, input, output, mode = "conditional";
  std::size_t batch_size = 64;
  int retries = 3;
  int concurrency = 4;
  double backoff_base = 1.0;
  bool append = false;

  int run(const CommandContext& ctx) const {
    PairSet pairs = io::load_pairs(input);
    LikMode lik = lik_mode_from_string(mode);
    ScorerOptions options;
    options.batch_size = batch_size;
    options.retries = retries;
    options.concurrency = concurrency;
    options.backoff_base_s = backoff_base;
    ModelVector scores = fetch_scores(endpoint, model, pairs, lik, options);

    std::vector<ModelVector> rows;
    std::vector<std::string> pair_ids = pairs.ids();
    if (append && fs::exists(output)) {
      LogLikMatrix existing = io::load_matrix(output);
      if (existing.pair_ids() != pair_ids) {
        throw ValidationError("append target has different pair ids");
      }
      if (existing.mode() != lik) {
        throw ValidationError("append target has mode " +
                              to_string(existing.mode()));
      }
      for (std::size_t i = 0; i < existing.models(); ++i) {
        rows.push_back(matrix_row(existing, i));
      }
    }
    rows.push_back(scores);
    LogLikMatrix m = vectors_to_matrix(rows, pair_ids, lik);
    require_valid(m);
    io::save_matrix(m, output);
    ctx.emit_manifest("score", {{"input", input}},
                      {{"endpoint", endpoint},
                       {"model", model},
                       {"mode", mode},
                       {"batch_size", batch_size},
                       {"retries", retries},
                       {"concurrency", concurrency},
                       {"backoff_base_s", backoff_base},
                       {"append", append}},
                      {output}, io::manifest_path_for(output));
    return 0;
  }
};

struct ClipCmd {
  std::string input, output;
  double percentile = 0.02;
  std::vector<std::string> share_with;

  int run(const CommandContext& ctx) const {
    LogLikMatrix m = io::load_matrix(input);
    LogLikMatrix clipped = [&] {
      if (share_with.empty()) return clip_matrix(m, percentile);
      // Shared threshold across several matrices (e.g. the four prompt-shift
      // settings), applied to this input only.
      std::vector<LogLikMatrix> others;
      others.reserve(share_with.size());
      for (const std::string& p : share_with) others.push_back(io::load_matrix(p));
      std::vector<const LogLikMatrix*> all{&m};
      for (const LogLikMatrix& o : others) all.push_back(&o);
      double t = joint_clip_threshold(all, percentile);
      return clip_matrix_with_threshold(m, percentile, t);
    }();
    io::save_matrix(clipped, output);
    json inputs{{"input", input}};
    if (!share_with.empty()) inputs["share_with"] = share_with;
    ctx.emit_manifest("clip", inputs,
                      {{"percentile", percentile},
                       {"threshold", clipped.clipped()->threshold}},
                      {output}, io::manifest_path_for(output));
    return 0;
  }
};

struct CenterCmd {
  std::string input, output;

  int run(const CommandContext& ctx) const {
    LogLikMatrix m = io::load_matrix(input);
    io::save_matrix(center_matrix(m), output);
    ctx.emit_manifest("center", {{"input", input}}, json::object(), {output},
                      io::manifest_path_for(output));
    return 0;
  }
};

struct PmiCmd {
  std::string cond, uncond, output;

  int run(const CommandContext& ctx) const {
    LogLikMatrix c = io::load_matrix(cond);
    LogLikMatrix u = io::load_matrix(uncond);
    io::save_matrix(pmi_matrix(c, u), output);
    ctx.emit_manifest("pmi", {{"cond", cond}, {"uncond", uncond}},
                      json::object(), {output},
                      io::manifest_path_for(output));
    return 0;
  }
};

struct KlCmd {
  std::string input, output, space = "centered";

  int run(const CommandContext& ctx) const {
    LogLikMatrix m = io::load_matrix(input);
    KlSpace s = space == "raw" ? KlSpace::raw : KlSpace::centered;
    if (space != "raw" && space != "centered") {
      throw ValidationError("--space must be raw or centered");
    }
    io::save_distances(pairwise_kl(m, s), output);
    ctx.emit_manifest("kl", {{"input", input}}, {{"space", space}}, {output},
                      io::manifest_path_for(output));
    return 0;
  }
};

struct McKlCmd {
  std::vector<std::string> inputs;
  std::string output;
  bool do_symmetrize = false;

  int run(const CommandContext& ctx) const {
    std::vector<SampledLogLiks> samples;
    samples.reserve(inputs.size());
    for (const std::string& p : inputs) samples.push_back(io::load_sampled(p));
    PairwiseDistanceMatrix d = pairwise_mc_kl(samples);
    if (do_symmetrize) d = symmetrize(d);
    io::save_distances(d, output);
    ctx.emit_manifest("mc-kl", {{"inputs", inputs}},
                      {{"symmetrize", do_symmetrize}}, {output},
                      io::manifest_path_for(output));
    return 0;
  }
};

struct MiCmd {
  std::string pmi, cond, uncond, output, estimator = "both";

  int run(const CommandContext& ctx) const {
    if (estimator != "mean" && estimator != "norm" && estimator != "both") {
      throw ValidationError("--estimator must be mean, norm or both");
    }
    LogLikMatrix matrix = [&] {
      if (!pmi.empty()) return io::load_matrix(pmi);
      if (cond.empty() || uncond.empty()) {
        throw ValidationError("mi needs either --pmi or both --cond/--uncond");
      }
      return pmi_matrix(io::load_matrix(cond), io::load_matrix(uncond));
    }();
    if (matrix.mode() != LikMode::pmi) {
      throw ValidationError("mi expects a pmi matrix, got mode " +
                            to_string(matrix.mode()));
    }
    if (matrix.centered() && estimator != "norm") {
      throw ValidationError(
          "mean PMI is meaningless on a centered matrix; use --estimator norm");
    }
    std::ofstream out(output, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + output + "' for writing");
    for (std::size_t i = 0; i < matrix.models(); ++i) {
      ModelVector row = matrix_row(matrix, i);
      std::string line = "{\"model_id\":" + json(row.model_id).dump();
      if (estimator != "norm") {
        line += ",\"mi_mean_pmi\":" + io::format_double(mi_mean_pmi(row));
      }
      if (estimator != "mean") {
        ModelVector eta = matrix.centered() ? row : center(row);
        line += ",\"mi_norm\":" + io::format_double(mi_norm(eta));
      }
      line += "}";
      out << line << "\n";
    }
    out.close();
    json inputs = pmi.empty() ? json{{"cond", cond}, {"uncond", uncond}}
                              : json{{"pmi", pmi}};
    ctx.emit_manifest("mi", inputs, {{"estimator", estimator}}, {output},
                      io::manifest_path_for(output));
    return 0;
  }
};

struct ShiftBuildCmd {
  std::string input, outdir;
  std::string cot_phrase = kDefaultCotPhrase;

  int run(const CommandContext& ctx) const {
    PairSet base = io::load_pairs(input);
    fs::create_directories(outdir);
    fs::path dir(outdir);
    std::vector<std::string> outputs;
    auto emit = [&](TransformKind kind, const char* name) {
      PairSet transformed =
          apply_transform(base, PromptTransform{kind, cot_phrase});
      fs::path p = dir / name;
      io::save_pairs(transformed, p);
      outputs.push_back(p.string());
    };
    fs::path base_out = dir / "base.jsonl";
    io::save_pairs(base, base_out);
    outputs.push_back(base_out.string());
    emit(TransformKind::cot, "cot.jsonl");
    emit(TransformKind::repeat, "repeat.jsonl");
    emit(TransformKind::repeat_cot, "repeat_cot.jsonl");
    ctx.emit_manifest("shift-build", {{"input", input}},
                      {{"cot_phrase", cot_phrase}}, outputs,
                      dir / "manifest.json");
    return 0;
  }
};

struct ShiftErrorCmd {
  std::string base, cot, rep, rep_cot, output, space = "raw";

  int run(const CommandContext& ctx) const {
    ShiftSet s = load_shift_set(base, cot, rep, rep_cot);
    ShiftSpace sp = shift_space_from_string(space);
    CompositionalitySummary summary = compositionality_summary(s, sp);
    MeanShiftDeltas deltas = delta_mean_additivity(s);
    std::ofstream out(output, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + output + "' for writing");
    out << "{\"type\":\"shift_error_summary\",\"space\":" << json(space).dump()
        << ",\"median\":" << io::format_double(summary.median)
        << ",\"mean\":" << io::format_double(summary.mean)
        << ",\"delta_mean_pearson\":" << io::format_double(deltas.pearson)
        << "}\n";
    for (std::size_t i = 0; i < s.models(); ++i) {
      out << "{\"model_id\":" << json(s.model_ids()[i]).dump()
          << ",\"error\":" << io::format_double(summary.per_model[i])
          << ",\"delta_cot\":" << io::format_double(deltas.cot[i])
          << ",\"delta_rep\":" << io::format_double(deltas.rep[i])
          << ",\"delta_rep_cot\":" << io::format_double(deltas.rep_cot[i])
          << "}\n";
    }
    out.close();
    std::printf("compositionality error (%s space): median %.6g mean %.6g\n",
                space.c_str(), summary.median, summary.mean);
    std::printf("delta-mean additivity pearson: %.6g\n", deltas.pearson);
    ctx.emit_manifest(
        "shift-error",
        {{"base", base}, {"cot", cot}, {"rep", rep}, {"rep_cot", rep_cot}},
        {{"space", space}}, {output}, io::manifest_path_for(output));
    return 0;
  }
};

struct ShiftProjectCmd {
  std::string base, cot, rep, rep_cot, output;
  double angle_tol = 1e-6;

  int run(const CommandContext& ctx) const {
    ShiftSet s = load_shift_set(base, cot, rep, rep_cot);
    SubspaceProjection proj = mean_shift_subspace_projection(s, angle_tol);
    std::ofstream out(output, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + output + "' for writing");
    for (std::size_t i = 0; i < proj.model_ids.size(); ++i) {
      for (std::size_t t = 0; t < 4; ++t) {
        std::size_t p = i * 4 + t;
        out << "{\"model_id\":" << json(proj.model_ids[i]).dump()
            << ",\"setting\":" << json(kShiftSettings[t]).dump()
            << ",\"x\":" << io::format_double(proj.coords[p * 2])
            << ",\"y\":" << io::format_double(proj.coords[p * 2 + 1]) << "}\n";
      }
    }
    out.close();
    ctx.emit_manifest(
        "shift-project",
        {{"base", base}, {"cot", cot}, {"rep", rep}, {"rep_cot", rep_cot}},
        {{"angle_tol", angle_tol}}, {output}, io::manifest_path_for(output));
    return 0;
  }
};

struct MapCmd {
  std::string input, output, method = "tsne", metadata, space = "raw";
  double perplexity = 0.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  std::uint64_t seed = 0;

  int run(const CommandContext& ctx) const {
    LogLikMatrix m = io::load_matrix(input);
    if (space == "centered" && !m.centered()) m = center_matrix(m);
    else if (space != "raw" && space != "centered") {
      throw ValidationError("--space must be raw or centered");
    }
    TsneParams params;
    params.perplexity = perplexity;
    params.iterations = iterations;
    params.learning_rate = learning_rate;
    params.seed = seed;
    MapEmbedding e = build_map(m, map_method_from_string(method), params);
    if (!metadata.empty()) e.metadata = io::load_metadata(metadata);
    io::save_map(e, output);
    json inputs{{"input", input}};
    if (!metadata.empty()) inputs["metadata"] = metadata;
    ctx.emit_manifest("map", inputs,
                      {{"method", method},
                       {"space", space},
                       {"perplexity", perplexity},
                       {"iterations", iterations},
                       {"learning_rate", learning_rate},
                       {"seed", seed}},
                      {output}, io::manifest_path_for(output));
    return 0;
  }
};

struct SemdistCmd {
  std::vector<std::string> inputs;
  std::string output;

  int run(const CommandContext& ctx) const {
    if (inputs.size() < 2) {
      throw ValidationError("semdist needs at least two embedding files");
    }
    std::vector<EmbeddingSet> sets;
    sets.reserve(inputs.size());
    for (const std::string& p : inputs) sets.push_back(io::load_embeddings(p));
    PairwiseDistanceMatrix d;
    d.kind = DistanceKind::semdist;
    for (const EmbeddingSet& e : sets) d.model_ids.push_back(e.model_id());
    const std::size_t k = sets.size();
    d.values.assign(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        double v = semdist(sets[i], sets[j]);
        d.values[i * k + j] = v;
        d.values[j * k + i] = v;
      }
    }
    io::save_distances(d, output);
    ctx.emit_manifest("semdist", {{"inputs", inputs}}, json::object(),
                      {output}, io::manifest_path_for(output));
    return 0;
  }
};

struct BootstrapCmd {
  std::string input, output, stat = "mean", model, model_b;
  std::size_t resamples = 1000;
  std::uint64_t seed = 0;
  double level = 0.95;

  int run(const CommandContext& ctx) const {
    LogLikMatrix m = io::load_matrix(input);
    const std::size_t n = m.pairs();
    std::function<double(std::span<const std::size_t>)> statistic;
    if (stat == "mean") {
      std::vector<double> row{m.row(m.model_index(model)).begin(),
                              m.row(m.model_index(model)).end()};
      statistic = [row](std::span<const std::size_t> idx) {
        double acc = 0.0;
        for (std::size_t s : idx) acc += row[s];
        return acc / static_cast<double>(idx.size());
      };
    } else if (stat == "kl") {
      if (model_b.empty()) {
        throw ValidationError("--stat kl needs --model-b");
      }
      auto ra = m.row(m.model_index(model));
      auto rb = m.row(m.model_index(model_b));
      std::vector<double> diff(n);
      for (std::size_t s = 0; s < n; ++s) diff[s] = ra[s] - rb[s];
      // KL estimate on a resample: half the empirical (1/N) variance of the
      // per-pair log-ratios, recomputed within the resample.
      statistic = [diff](std::span<const std::size_t> idx) {
        double mean = 0.0;
        for (std::size_t s : idx) mean += diff[s];
        mean /= static_cast<double>(idx.size());
        double var = 0.0;
        for (std::size_t s : idx) {
          double d = diff[s] - mean;
          var += d * d;
        }
        return var / (2.0 * static_cast<double>(idx.size()));
      };
    } else {
      throw ValidationError("--stat must be mean or kl");
    }
    BootstrapResult r = bootstrap_ci(statistic, n, resamples, seed, level);
    std::ofstream out(output, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + output + "' for writing");
    out << "{\"stat\":" << json(stat).dump() << ",\"model\":"
        << json(model).dump()
        << (model_b.empty() ? "" : ",\"model_b\":" + json(model_b).dump())
        << ",\"level\":" << io::format_double(level)
        << ",\"resamples\":" << resamples << ",\"seed\":" << seed
        << ",\"point\":" << io::format_double(r.point)
        << ",\"lower\":" << io::format_double(r.lower)
        << ",\"upper\":" << io::format_double(r.upper) << "}\n";
    out.close();
    std::printf("%s %s: point %.6g, %g%% CI [%.6g, %.6g]\n", stat.c_str(),
                model.c_str(), r.point, level * 100.0, r.lower, r.upper);
    ctx.emit_manifest("bootstrap", {{"input", input}},
                      {{"stat", stat},
                       {"model", model},
                       {"model_b", model_b},
                       {"resamples", resamples},
                       {"seed", seed},
                       {"level", level}},
                      {output}, io::manifest_path_for(output));
    return 0;
  }
};

struct OracleRunCmd {
  std::string outdir;
  std::size_t models = 8;
  double epsilon = 0.02;
  std::size_t n = 10000;
  std::uint64_t seed = 1;
  double percentile = 0.02;
  std::size_t mc_samples = 0;  // 0 = same as n
  bool no_clip = false;
  bool clip_mc = false;
  std::size_t prompts = 6;
  std::size_t tokens = 3;
  int history = 1;
  int max_len = 3;

  int run(const CommandContext& ctx) const;
};

struct RerunCmd {
  std::string manifest;

  int run(const CommandContext&) const {
    io::Manifest m = io::read_manifest(manifest);
    if (!m.argv.empty() && m.argv[0] == "rerun") {
      throw ValidationError("refusing to rerun a rerun manifest");
    }
    return run_cli(m.argv);
  }
};

int OracleRunCmd::run(const CommandContext& ctx) const {
  using namespace oracle;
  // K <= 4 leaves no feasible t-SNE perplexity for the map stage.
  if (models < 5) throw NumericError("oracle-run needs at least 5 models");
  fs::create_directories(outdir);
  fs::path dir(outdir);
  std::vector<std::string> outputs;
  auto mark = [&](const fs::path& p) {
    outputs.push_back(p.string());
    return p;
  };

  // Model family: the base plus perturbations of graded magnitude up to
  // epsilon, so pairwise divergences spread over a range of scales.
  ModelSpec spec;
  spec.prompts = prompts;
  spec.tokens = tokens;
  spec.history = history;
  spec.max_len = max_len;
  spec.sharpness = 1.2;
  SyntheticModel base = random_model(spec, seed);
  std::vector<SyntheticModel> family;
  family.reserve(models);
  base.id = "m0";
  family.push_back(base);
  for (std::size_t i = 1; i < models; ++i) {
    double eps_i = epsilon * static_cast<double>(i) /
                   static_cast<double>(models - 1);
    SyntheticModel m = perturb(base, eps_i, derive_seed(seed, 100 + i));
    m.id = "m" + std::to_string(i);
    family.push_back(std::move(m));
  }
  for (const SyntheticModel& m : family) {
    io::save_model(m, mark(dir / ("model_" + m.id + ".json")));
  }

  // Shared evaluation pairs drawn from the base model.
  PairSet pairs = sample_pairs(base, n, derive_seed(seed, 1));
  io::save_pairs(pairs, mark(dir / "pairs.jsonl"));

  std::vector<ModelVector> cond_rows, uncond_rows;
  for (const SyntheticModel& m : family) {
    cond_rows.push_back(score_pairs(m, pairs, ScoreMode::conditional));
    uncond_rows.push_back(score_pairs(m, pairs, ScoreMode::marginal));
  }
  std::vector<std::string> pair_ids = pairs.ids();
  LogLikMatrix cond = vectors_to_matrix(cond_rows, pair_ids, LikMode::conditional);
  LogLikMatrix uncond =
      vectors_to_matrix(uncond_rows, pair_ids, LikMode::unconditional);

  json thresholds = json::object();
  if (!no_clip) {
    cond = clip_matrix(cond, percentile);
    uncond = clip_matrix(uncond, percentile);
    thresholds["conditional"] = cond.clipped()->threshold;
    thresholds["unconditional"] = uncond.clipped()->threshold;
  }
  io::save_matrix(cond, mark(dir / "cond.jsonl"));
  io::save_matrix(uncond, mark(dir / "uncond.jsonl"));

  // Vector KL vs exact enumerated KL.
  PairwiseDistanceMatrix kl_vec = pairwise_kl(cond);
  io::save_distances(kl_vec, mark(dir / "kl_vector.jsonl"));
  const std::size_t k = models;
  std::vector<double> exact(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      if (i != j) exact[i * k + j] = enumerate_kl(family[i], family[j]);
    }
  }

  // Monte Carlo KL from per-generator samples.
  std::size_t mc_n = mc_samples == 0 ? n : mc_samples;
  std::vector<SampledLogLiks> sampled;
  for (std::size_t i = 0; i < k; ++i) {
    PairSet gen_pairs = sample_pairs(family[i], mc_n, derive_seed(seed, 200 + i));
    SampledLogLiks s;
    s.generator_id = family[i].id;
    s.pair_ids = gen_pairs.ids();
    for (std::size_t j = 0; j < k; ++j) {
      ModelVector v = score_pairs(family[j], gen_pairs, ScoreMode::conditional);
      s.scorer_ids.push_back(family[j].id);
      s.values.insert(s.values.end(), v.values.begin(), v.values.end());
    }
    if (clip_mc) {
      double t = clip_threshold(s.values, percentile);
      for (double& v : s.values) v = std::max(v, t);
    }
    io::save_sampled(s, mark(dir / ("sampled_" + s.generator_id + ".jsonl")));
    sampled.push_back(std::move(s));
  }
  PairwiseDistanceMatrix kl_mc_sym = symmetrize(pairwise_mc_kl(sampled));

  // Pairwise comparison table (the MC vs vector vs exact view).
  std::vector<double> v_vec, v_mc, v_exact;
  {
    std::ofstream out(dir / "kl_table.jsonl", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write kl_table.jsonl");
    mark(dir / "kl_table.jsonl");
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = i + 1; j < k; ++j) {
        double ex = symmetrize_kl(exact[i * k + j], exact[j * k + i]);
        v_vec.push_back(kl_vec.at(i, j));
        v_mc.push_back(kl_mc_sym.at(i, j));
        v_exact.push_back(ex);
        out << "{\"model_i\":" << json(family[i].id).dump()
            << ",\"model_j\":" << json(family[j].id).dump()
            << ",\"kl_vector\":" << io::format_double(kl_vec.at(i, j))
            << ",\"kl_mc_symmetric\":" << io::format_double(kl_mc_sym.at(i, j))
            << ",\"kl_exact_symmetric\":" << io::format_double(ex) << "}\n";
      }
    }
  }
  double rho_vec = spearman(v_vec, v_exact);
  double rho_mc = spearman(v_mc, v_exact);

  // MI estimators on self-sampled pairs per model, against exact MI.
  std::vector<double> mi_mean_vals, mi_norm_vals, mi_exact_vals;
  {
    std::ofstream out(dir / "mi_table.jsonl", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write mi_table.jsonl");
    mark(dir / "mi_table.jsonl");
    for (std::size_t i = 0; i < k; ++i) {
      PairSet self = sample_pairs(family[i], n, derive_seed(seed, 300 + i));
      ModelVector c = score_pairs(family[i], self, ScoreMode::conditional);
      ModelVector u = score_pairs(family[i], self, ScoreMode::marginal);
      ModelVector delta{family[i].id, {}, VectorKind::pmi};
      delta.values.resize(c.values.size());
      for (std::size_t s = 0; s < c.values.size(); ++s) {
        delta.values[s] = c.values[s] - u.values[s];
      }
      double mean_est = mi_mean_pmi(delta);
      double norm_est = mi_norm(center(delta));
      double exact_mi = enumerate_mi(family[i]);
      mi_mean_vals.push_back(mean_est);
      mi_norm_vals.push_back(norm_est);
      mi_exact_vals.push_back(exact_mi);
      out << "{\"model_id\":" << json(family[i].id).dump()
          << ",\"mi_mean_pmi\":" << io::format_double(mean_est)
          << ",\"mi_norm\":" << io::format_double(norm_est)
          << ",\"mi_exact\":" << io::format_double(exact_mi) << "}\n";
    }
  }
  double mi_pearson = pearson(mi_norm_vals, mi_mean_vals);

  // 2-D map of the conditional matrix.
  TsneParams tp;
  tp.seed = seed;
  MapEmbedding map = build_map(cond, MapMethod::tsne, tp);
  io::save_map(map, mark(dir / "map.jsonl"));

  json summary{
      {"models", models},
      {"epsilon", epsilon},
      {"n", n},
      {"mc_samples", mc_n},
      {"seed", seed},
      {"clip", no_clip ? json(nullptr) : json(percentile)},
      {"thresholds", thresholds},
      {"spearman_vector_vs_exact", rho_vec},
      {"spearman_mc_vs_exact", rho_mc},
      {"pearson_mi_norm_vs_mean", mi_pearson},
  };
  {
    std::ofstream out(dir / "summary.json", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write summary.json");
    mark(dir / "summary.json");
    out << summary.dump(2) << "\n";
  }

  std::printf("%-8s %-8s %12s %12s %12s\n", "model_i", "model_j", "kl_vector",
              "kl_mc_sym", "kl_exact");
  std::size_t row = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j, ++row) {
      std::printf("%-8s %-8s %12.6f %12.6f %12.6f\n", family[i].id.c_str(),
                  family[j].id.c_str(), v_vec[row], v_mc[row], v_exact[row]);
    }
  }
  std::printf("spearman(vector-KL, exact-KL) = %.4f\n", rho_vec);
  std::printf("spearman(mc-KL, exact-KL)     = %.4f\n", rho_mc);
  std::printf("pearson(mi_norm, mi_mean_pmi) = %.4f\n", mi_pearson);

  json params{{"models", models},   {"epsilon", epsilon},
              {"n", n},             {"seed", seed},
              {"percentile", percentile}, {"mc_samples", mc_n},
              {"no_clip", no_clip}, {"clip_mc", clip_mc},
              {"prompts", prompts}, {"tokens", tokens},
              {"history", history}, {"max_len", max_len},
              {"thresholds", thresholds}};
  ctx.emit_manifest("oracle-run", json::object(), params, outputs,
                    dir / "manifest.json");
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CommandContext ctx;
  ctx.argv = args;

  CLI::App app{"llmap: model maps from conditional log-likelihood vectors"};
  app.footer(kExitCodeHelp);
  app.require_subcommand(1);

  ScoreCmd score;
  auto* score_app = app.add_subcommand(
      "score", "Score pairs against a remote scorer endpoint");
  score_app->add_option("--endpoint", score.endpoint)->required();
  score_app->add_option("--model", score.model)->required();
  score_app->add_option("--input", score.input)->required();
  score_app->add_option("--mode", score.mode);
  score_app->add_option("--output", score.output)->required();
  score_app->add_option("--batch-size", score.batch_size);
  score_app->add_option("--retries", score.retries);
  score_app->add_option("--concurrency", score.concurrency);
  score_app->add_option("--backoff-base", score.backoff_base);
  score_app->add_flag("--append", score.append);

  ClipCmd clip;
  auto* clip_app =
      app.add_subcommand("clip", "Clip matrix entries at a lower percentile");
  clip_app->add_option("--input", clip.input)->required();
  clip_app->add_option("--output", clip.output)->required();
  clip_app->add_option("--percentile", clip.percentile);
  clip_app->add_option("--share-with", clip.share_with)
      ->description("Compute the threshold jointly with these matrices");

  CenterCmd center_cmd;
  auto* center_app =
      app.add_subcommand("center", "Center every model row of a matrix");
  center_app->add_option("--input", center_cmd.input)->required();
  center_app->add_option("--output", center_cmd.output)->required();

  PmiCmd pmi;
  auto* pmi_app = app.add_subcommand(
      "pmi", "Entrywise conditional minus unconditional matrix");
  pmi_app->add_option("--cond", pmi.cond)->required();
  pmi_app->add_option("--uncond", pmi.uncond)->required();
  pmi_app->add_option("--output", pmi.output)->required();

  KlCmd kl;
  auto* kl_app =
      app.add_subcommand("kl", "Pairwise vector-KL distance matrix");
  kl_app->add_option("--input", kl.input)->required();
  kl_app->add_option("--output", kl.output)->required();
  kl_app->add_option("--space", kl.space)
      ->description("centered (default) or raw");

  McKlCmd mc_kl_cmd;
  auto* mckl_app = app.add_subcommand(
      "mc-kl", "Monte Carlo KL from sampled log-likelihood files");
  mckl_app->add_option("--inputs", mc_kl_cmd.inputs)->required();
  mckl_app->add_option("--output", mc_kl_cmd.output)->required();
  mckl_app->add_flag("--symmetrize", mc_kl_cmd.do_symmetrize);

  MiCmd mi;
  auto* mi_app =
      app.add_subcommand("mi", "Mutual information estimates per model");
  mi_app->add_option("--pmi", mi.pmi);
  mi_app->add_option("--cond", mi.cond);
  mi_app->add_option("--uncond", mi.uncond);
  mi_app->add_option("--output", mi.output)->required();
  mi_app->add_option("--estimator", mi.estimator)
      ->description("mean, norm or both");

  ShiftBuildCmd shift_build;
  auto* sb_app = app.add_subcommand(
      "shift-build", "Emit cot/repeat/repeat+cot transformed pair files");
  sb_app->add_option("--input", shift_build.input)->required();
  sb_app->add_option("--outdir", shift_build.outdir)->required();
  sb_app->add_option("--cot-phrase", shift_build.cot_phrase);

  ShiftErrorCmd shift_error;
  auto* se_app = app.add_subcommand(
      "shift-error", "Additive-compositionality error per model");
  se_app->add_option("--base", shift_error.base)->required();
  se_app->add_option("--cot", shift_error.cot)->required();
  se_app->add_option("--rep", shift_error.rep)->required();
  se_app->add_option("--rep-cot", shift_error.rep_cot)->required();
  se_app->add_option("--output", shift_error.output)->required();
  se_app->add_option("--space", shift_error.space);

  ShiftProjectCmd shift_project;
  auto* sp_app = app.add_subcommand(
      "shift-project", "Project the four settings onto the mean-shift plane");
  sp_app->add_option("--base", shift_project.base)->required();
  sp_app->add_option("--cot", shift_project.cot)->required();
  sp_app->add_option("--rep", shift_project.rep)->required();
  sp_app->add_option("--rep-cot", shift_project.rep_cot)->required();
  sp_app->add_option("--output", shift_project.output)->required();
  sp_app->add_option("--angle-tol", shift_project.angle_tol);

  MapCmd map;
  auto* map_app = app.add_subcommand("map", "2-D model map (pca or tsne)");
  map_app->add_option("--input", map.input)->required();
  map_app->add_option("--output", map.output)->required();
  map_app->add_option("--method", map.method);
  map_app->add_option("--metadata", map.metadata);
  map_app->add_option("--space", map.space);
  map_app->add_option("--perplexity", map.perplexity);
  map_app->add_option("--iterations", map.iterations);
  map_app->add_option("--learning-rate", map.learning_rate);
  map_app->add_option("--seed", map.seed);

  SemdistCmd semdist_cmd;
  auto* sd_app = app.add_subcommand(
      "semdist", "Semantic distance matrix from embedding sets");
  sd_app->add_option("--inputs", semdist_cmd.inputs)->required();
  sd_app->add_option("--output", semdist_cmd.output)->required();

  BootstrapCmd bootstrap;
  auto* bs_app = app.add_subcommand(
      "bootstrap", "Percentile bootstrap CI over prompts");
  bs_app->add_option("--input", bootstrap.input)->required();
  bs_app->add_option("--output", bootstrap.output)->required();
  bs_app->add_option("--stat", bootstrap.stat)->description("mean or kl");
  bs_app->add_option("--model", bootstrap.model)->required();
  bs_app->add_option("--model-b", bootstrap.model_b);
  bs_app->add_option("--resamples", bootstrap.resamples);
  bs_app->add_option("--seed", bootstrap.seed);
  bs_app->add_option("--level", bootstrap.level);

  OracleRunCmd oracle_run;
  auto* or_app = app.add_subcommand(
      "oracle-run",
      "End-to-end oracle validation: sample, score, clip, KL/MI, map");
  or_app->add_option("--outdir", oracle_run.outdir)->required();
  or_app->add_option("--models", oracle_run.models);
  or_app->add_option("--epsilon", oracle_run.epsilon);
  or_app->add_option("--n", oracle_run.n);
  or_app->add_option("--seed", oracle_run.seed);
  or_app->add_option("--percentile", oracle_run.percentile);
  or_app->add_option("--mc-samples", oracle_run.mc_samples);
  or_app->add_flag("--no-clip", oracle_run.no_clip);
  or_app->add_flag("--clip-mc", oracle_run.clip_mc);
  or_app->add_option("--prompts", oracle_run.prompts);
  or_app->add_option("--tokens", oracle_run.tokens);
  or_app->add_option("--history", oracle_run.history);
  or_app->add_option("--max-len", oracle_run.max_len);

  RerunCmd rerun;
  auto* rr_app = app.add_subcommand(
      "rerun", "Re-execute the command recorded in a manifest");
  rr_app->add_option("--manifest", rerun.manifest)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    // CLI11 returns 0 for --help; anything else is a usage error.
    return code == 0 ? 0 : 2;
  }

  try {
    if (score_app->parsed()) return score.run(ctx);
    if (clip_app->parsed()) return clip.run(ctx);
    if (center_app->parsed()) return center_cmd.run(ctx);
    if (pmi_app->parsed()) return pmi.run(ctx);
    if (kl_app->parsed()) return kl.run(ctx);
    if (mckl_app->parsed()) return mc_kl_cmd.run(ctx);
    if (mi_app->parsed()) return mi.run(ctx);
    if (sb_app->parsed()) return shift_build.run(ctx);
    if (se_app->parsed()) return shift_error.run(ctx);
    if (sp_app->parsed()) return shift_project.run(ctx);
    if (map_app->parsed()) return map.run(ctx);
    if (sd_app->parsed()) return semdist_cmd.run(ctx);
    if (bs_app->parsed()) return bootstrap.run(ctx);
    if (or_app->parsed()) return oracle_run.run(ctx);
    if (rr_app->parsed()) return rerun.run(ctx);
    std::cerr << "no command given\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ScorerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 70;
  }
}

}  // namespace llmap
