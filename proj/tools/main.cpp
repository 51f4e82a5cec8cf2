// attnlab command line. Subcommands wrap the library ops; every run emits a
// JSON sidecar holding the complete effective configuration (defaults filled
// in, seed overrides applied) so the artifact alone reproduces the run.
// Exit codes: 0 success, 2 usage or bad input, 3 numerical failure.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "attnlab/data.hpp"
#include "attnlab/evaluator.hpp"
#include "attnlab/experiments.hpp"
#include "attnlab/finite_diff.hpp"
#include "attnlab/model.hpp"
#include "attnlab/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace attnlab;

namespace {

std::string load_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& content, bool force) {
  if (fs::exists(path) && !force)
    throw std::invalid_argument("refusing to overwrite " + path.string() +
                                " (pass --force)");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::invalid_argument("cannot write " + path.string());
  out << content;
}

void refuse_existing(const fs::path& dir, const std::vector<std::string>& names,
                     bool force) {
  if (force) return;
  for (const auto& n : names)
    if (fs::exists(dir / n))
      throw std::invalid_argument("refusing to overwrite " + (dir / n).string() +
                                  " (pass --force)");
}

void check_keys(const json& j, const char* where, std::initializer_list<const char*> keys) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys)
      if (it.key() == k) ok = true;
    if (!ok)
      throw std::invalid_argument(std::string("config: unknown key '") + it.key() +
                                  "' in " + where);
  }
}

struct TrainJob {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 1;
  std::size_t eval_mc = 1000;
  bool save_dataset = false;
};

TrainJob parse_train_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config parse: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  check_keys(j, "config", {"data", "model", "train", "seed", "eval_mc", "save_dataset"});
  TrainJob job;
  try {
    if (j.contains("data")) {
      const json& d = j.at("data");
      check_keys(d, "data", {"d", "n", "mu_norm", "sigma_p", "alpha"});
      if (d.contains("d")) job.data.d = d.at("d").get<std::size_t>();
      if (d.contains("n")) job.data.n = d.at("n").get<std::size_t>();
      if (d.contains("mu_norm")) job.data.mu_norm = d.at("mu_norm").get<double>();
      if (d.contains("sigma_p")) job.data.sigma_p = d.at("sigma_p").get<double>();
      if (d.contains("alpha")) job.data.alpha = d.at("alpha").get<double>();
    }
    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m, "model", {"m_k", "m_v", "sigma_k", "sigma_v", "upsilon_norm"});
      if (m.contains("m_k")) job.model.m_k = m.at("m_k").get<std::size_t>();
      if (m.contains("m_v")) job.model.m_v = m.at("m_v").get<std::size_t>();
      if (m.contains("sigma_k")) job.model.sigma_k = m.at("sigma_k").get<double>();
      if (m.contains("sigma_v")) job.model.sigma_v = m.at("sigma_v").get<double>();
      if (m.contains("upsilon_norm"))
        job.model.upsilon_norm = m.at("upsilon_norm").get<double>();
    }
    if (j.contains("train")) {
      const json& t = j.at("train");
      check_keys(t, "train",
                 {"eta", "max_iters", "target_loss", "train_upsilon", "record_every",
                  "record_test_mc", "snapshot_every", "divergence_loss"});
      if (t.contains("eta")) job.train.eta = t.at("eta").get<double>();
      if (t.contains("max_iters")) job.train.max_iters = t.at("max_iters").get<std::size_t>();
      if (t.contains("target_loss")) job.train.target_loss = t.at("target_loss").get<double>();
      if (t.contains("train_upsilon"))
        job.train.train_upsilon = t.at("train_upsilon").get<bool>();
      if (t.contains("record_every"))
        job.train.record_every = t.at("record_every").get<std::size_t>();
      if (t.contains("record_test_mc"))
        job.train.record_test_mc = t.at("record_test_mc").get<std::size_t>();
      if (t.contains("snapshot_every"))
        job.train.snapshot_every = t.at("snapshot_every").get<std::size_t>();
      if (t.contains("divergence_loss"))
        job.train.divergence_loss = t.at("divergence_loss").get<double>();
    }
    if (j.contains("seed")) job.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("eval_mc")) job.eval_mc = j.at("eval_mc").get<std::size_t>();
    if (j.contains("save_dataset")) job.save_dataset = j.at("save_dataset").get<bool>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config field: ") + e.what());
  }
  job.model.d = job.data.d;
  validate(job.data);
  validate(job.model);
  validate(job.train);
  if (job.eval_mc < 1) throw std::invalid_argument("config: eval_mc must be >= 1");
  return job;
}

json data_json(const DataConfig& c) {
  return json{{"d", c.d}, {"n", c.n}, {"mu_norm", c.mu_norm},
              {"sigma_p", c.sigma_p}, {"alpha", c.alpha}};
}
json model_json(const ModelConfig& c) {
  return json{{"d", c.d},           {"m_k", c.m_k},
              {"m_v", c.m_v},       {"sigma_k", c.sigma_k},
              {"sigma_v", c.sigma_v}, {"upsilon_norm", c.upsilon_norm}};
}
json train_json(const TrainConfig& c) {
  return json{{"eta", c.eta},
              {"max_iters", c.max_iters},
              {"target_loss", c.target_loss},
              {"train_upsilon", c.train_upsilon},
              {"record_every", c.record_every},
              {"record_test_mc", c.record_test_mc},
              {"snapshot_every", c.snapshot_every},
              {"divergence_loss", c.divergence_loss}};
}
json test_json(const TestEstimate& t) {
  return json{{"loss", t.loss},
              {"error01", t.error01},
              {"error01_clean", t.error01_clean},
              {"n_mc", t.n_mc},
              {"std_err", t.std_err},
              {"loss_std_err", t.loss_std_err}};
}
json stages_json(const StageEstimates& s) {
  json j;
  j["t1_hat"] = s.t1_hat ? json(*s.t1_hat) : json(nullptr);
  j["t2_hat"] = s.t2_hat ? json(*s.t2_hat) : json(nullptr);
  return j;
}

std::string record_csv_text(const TrainingRecord& rec) {
  std::ostringstream ss;
  write_record_csv(rec, ss);
  return ss.str();
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override, bool force, bool verbose) {
  TrainJob job = parse_train_config(load_text(config_path));
  const bool overridden = seed_override.has_value();
  if (overridden) job.seed = *seed_override;
  const fs::path out(out_dir);
  fs::create_directories(out);
  std::vector<std::string> artifacts = {"record.csv", "params.bin", "run.json"};
  if (job.save_dataset) artifacts.push_back("dataset.csv");
  refuse_existing(out, artifacts, force);

  RngStream rng(job.seed, 0);
  RngStream data_rng = rng.substream(0);
  const Dataset ds = sample_dataset(job.data, data_rng);
  if (job.save_dataset) {
    std::ofstream dout(out / "dataset.csv", std::ios::binary | std::ios::trunc);
    write_dataset_csv(ds, dout);
  }

  json side;
  side["command"] = "train";
  side["seed"] = job.seed;
  side["seed_overridden"] = overridden;
  side["data"] = data_json(job.data);
  side["model"] = model_json(job.model);
  side["train"] = train_json(job.train);
  side["eval_mc"] = job.eval_mc;
  side["save_dataset"] = job.save_dataset;

  TrainingRecord rec;
  try {
    rec = train(ds, job.model, job.train, rng.substream(1));
  } catch (const TrainingDivergedError& e) {
    write_text(out / "record.csv", record_csv_text(e.record), true);
    side["outcome"] = {{"status", "diverged"},
                       {"message", e.what()},
                       {"iters", e.record.iters},
                       {"initial_loss", e.record.initial_loss},
                       {"final_loss", e.record.final_loss}};
    write_text(out / "run.json", side.dump(2) + "\n", true);
    std::cerr << "train: " << e.what() << "\n";
    return 3;
  }
  if (verbose)
    for (const auto& row : rec.rows)
      std::fprintf(stderr, "iter %zu train_loss %.6g\n", row.iter, row.train_loss);

  const TestEstimate test = estimate_test(rec.final_params, job.data, ds.signals,
                                          job.eval_mc, rng.substream(2));
  write_text(out / "record.csv", record_csv_text(rec), true);
  save_params(rec.final_params, (out / "params.bin").string());
  side["outcome"] = {
      {"status", rec.reason == StopReason::target_reached ? "target_reached"
                                                          : "iteration_cap"},
      {"iters", rec.iters},
      {"initial_loss", rec.initial_loss},
      {"final_loss", rec.final_loss},
      {"descent_violations", rec.descent_violations},
      {"stages", stages_json(rec.stages)},
      {"test", test_json(test)}};
  write_text(out / "run.json", side.dump(2) + "\n", true);
  std::printf("train: %s after %zu iters, final_loss %.6g, test_error01 %.4f\n",
              rec.reason == StopReason::target_reached ? "target reached" : "cap reached",
              rec.iters, rec.final_loss, test.error01);
  return 0;
}

int cmd_sweep(const std::string& manifest_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override,
              std::optional<std::size_t> jobs_override, double threshold, bool force,
              bool verbose) {
  SweepManifest m = manifest_from_json(load_text(manifest_path));
  const bool overridden = seed_override.has_value();
  if (overridden) m.base_seed = *seed_override;
  if (jobs_override) m.jobs = *jobs_override;
  const fs::path out(out_dir);
  fs::create_directories(out);
  refuse_existing(out, {"manifest.json", "sweep.json", "runs.csv", "cells.csv",
                        "critical.json", "heatmap.svg"},
                  force);
  if (verbose)
    std::fprintf(stderr, "sweep: %zu cells x %zu repeats\n", cell_count(m), m.repeats);
  const SweepResult result = run_sweep(m);
  write_text(out / "manifest.json", manifest_to_json(m), true);
  json side;
  side["command"] = "sweep";
  side["seed_overridden"] = overridden;
  side["threshold"] = threshold;
  side["manifest"] = json::parse(manifest_to_json(m));
  write_text(out / "sweep.json", side.dump(2) + "\n", true);
  write_text(out / "runs.csv", runs_csv(result), true);
  write_text(out / "cells.csv", cells_csv(result), true);
  const bool single_slice = m.sigma_p_values.size() == 1 && m.alpha_values.size() == 1 &&
                            m.eta_values.size() == 1 && m.sigma_v_values.size() == 1;
  if (single_slice && m.mu_values.size() >= 2) {
    const PhaseGrid grid = to_phase_grid(result);
    write_text(out / "heatmap.svg", heatmap_svg(grid), true);
    try {
      const CriticalFit fit = fit_critical_line(grid, threshold);
      write_text(out / "critical.json", critical_json(fit), true);
      std::printf("sweep: c_hat %.6g, residual %.6g\n", fit.c_hat, fit.residual);
    } catch (const std::runtime_error& e) {
      std::printf("sweep: critical fit skipped: %s\n", e.what());
    }
  }
  std::printf("sweep: %zu runs into %s\n", result.runs.size(), out_dir.c_str());
  return 0;
}

TrainingRecord record_from_csv(const std::string& path, double target_loss) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty record csv");
  std::vector<std::string> cols;
  std::stringstream hs(line);
  std::string tok;
  while (std::getline(hs, tok, ',')) cols.push_back(tok);
  std::ptrdiff_t iter_col = -1, loss_col = -1;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] == "iter") iter_col = static_cast<std::ptrdiff_t>(i);
    if (cols[i] == "train_loss") loss_col = static_cast<std::ptrdiff_t>(i);
  }
  if (iter_col < 0 || loss_col < 0)
    throw std::invalid_argument("record csv must have iter and train_loss columns");
  TrainingRecord rec;
  rec.config.target_loss = target_loss;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() <= static_cast<std::size_t>(std::max(iter_col, loss_col)))
      throw std::invalid_argument("record csv: short row");
    RecordRow row{};
    row.iter = std::stoul(f[static_cast<std::size_t>(iter_col)]);
    row.train_loss = std::stod(f[static_cast<std::size_t>(loss_col)]);
    rec.rows.push_back(row);
  }
  return rec;
}

int cmd_stages(const std::string& record_path, double target_loss) {
  const TrainingRecord rec = record_from_csv(record_path, target_loss);
  const StageEstimates st = detect_stages(rec);
  std::cout << stages_json(st).dump(2) << "\n";
  return 0;
}

int cmd_fit_critical(const std::string& cells_path, double threshold,
                     const std::string& out_path, bool force) {
  std::ifstream in(cells_path);
  if (!in) throw std::invalid_argument("cannot read " + cells_path);
  const PhaseGrid grid = phase_grid_from_cells_csv(in);
  const CriticalFit fit = fit_critical_line(grid, threshold);
  const std::string text = critical_json(fit);
  if (out_path.empty())
    std::cout << text;
  else
    write_text(out_path, text, force);
  return 0;
}

int cmd_similarity(const std::string& path_a, const std::string& path_b) {
  std::ifstream ia(path_a), ib(path_b);
  if (!ia) throw std::invalid_argument("cannot read " + path_a);
  if (!ib) throw std::invalid_argument("cannot read " + path_b);
  const PhaseGrid a = phase_grid_from_cells_csv(ia);
  const PhaseGrid b = phase_grid_from_cells_csv(ib);
  std::printf("%.4f\n", heatmap_similarity(a, b));
  return 0;
}

int cmd_gradcheck(std::size_t trials, std::uint64_t seed, double step, double tol,
                  bool verbose) {
  double worst = 0.0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    DataConfig dc;
    dc.d = 10 + 2 * trial;
    dc.n = 5 + trial;
    dc.mu_norm = 3.0;
    dc.sigma_p = 1.5;
    dc.alpha = 0.25;
    ModelConfig mc;
    mc.d = dc.d;
    mc.m_k = 7 + trial;
    mc.m_v = 5 + trial;
    mc.sigma_k = 0.05;
    mc.sigma_v = 0.05;
    RngStream rng(seed, trial);
    RngStream data_rng = rng.substream(0);
    RngStream init_rng = rng.substream(1);
    const Dataset ds = sample_dataset(dc, data_rng);
    const ModelParams p = init_params(mc, init_rng);
    const Gradients g = analytic_gradients(p, ds);
    auto block_err = [&](const Matrix& analytic, const Matrix& fd) {
      double scale = 0.0, diff = 0.0;
      for (std::size_t i = 0; i < fd.flat().size(); ++i) {
        scale = std::max(scale, std::abs(fd.flat()[i]));
        diff = std::max(diff, std::abs(fd.flat()[i] - analytic.flat()[i]));
      }
      return diff / (scale + 1e-12);
    };
    ModelParams probe = p;
    const Matrix fd_q = finite_diff_grad(
        [&](const Matrix& w) {
          probe.w_q = w;
          return train_loss(probe, ds);
        },
        p.w_q, step);
    probe = p;
    const Matrix fd_k = finite_diff_grad(
        [&](const Matrix& w) {
          probe.w_k = w;
          return train_loss(probe, ds);
        },
        p.w_k, step);
    probe = p;
    const Matrix fd_v = finite_diff_grad(
        [&](const Matrix& w) {
          probe.w_v = w;
          return train_loss(probe, ds);
        },
        p.w_v, step);
    probe = p;
    Matrix ups_mat(1, p.upsilon.size());
    std::copy(p.upsilon.begin(), p.upsilon.end(), ups_mat.flat().begin());
    const Matrix fd_u = finite_diff_grad(
        [&](const Matrix& w) {
          std::copy(w.flat().begin(), w.flat().end(), probe.upsilon.begin());
          return train_loss(probe, ds);
        },
        ups_mat, step);
    Matrix g_u(1, g.upsilon.size());
    std::copy(g.upsilon.begin(), g.upsilon.end(), g_u.flat().begin());
    const double errs[4] = {block_err(g.w_q, fd_q), block_err(g.w_k, fd_k),
                            block_err(g.w_v, fd_v), block_err(g_u, fd_u)};
    for (double e : errs) worst = std::max(worst, e);
    if (verbose)
      std::fprintf(stderr, "trial %zu: w_q %.3g w_k %.3g w_v %.3g upsilon %.3g\n",
                   trial, errs[0], errs[1], errs[2], errs[3]);
  }
  std::printf("gradcheck: max relative error %.3g over %zu trials (tolerance %g)\n",
              worst, trials, tol);
  if (!(worst <= tol)) {
    std::cerr << "gradcheck: exceeded tolerance\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attnlab: two-layer attention benign-overfitting laboratory"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, out_dir, record_path, cells_path;
  std::string cells_a, cells_b, fit_out;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::size_t> jobs_override;
  double threshold = 0.05, target_loss = 0.01;
  double gc_step = 1e-5, gc_tol = 1e-4;
  std::size_t gc_trials = 3;
  std::uint64_t gc_seed = 12345;
  bool force = false, verbose = false;

  CLI::App* train_sub = app.add_subcommand("train", "train one model from a JSON config");
  train_sub->add_option("--config", config_path, "JSON config path")->required();
  train_sub->add_option("--out", out_dir, "output directory")->required();
  train_sub->add_option("--seed", seed_override, "override the config seed");
  train_sub->add_flag("--force", force, "overwrite existing outputs");
  train_sub->add_flag("--verbose", verbose, "per-record progress on stderr");

  CLI::App* sweep_sub = app.add_subcommand("sweep", "run a sweep manifest");
  sweep_sub->add_option("--manifest", manifest_path, "JSON manifest path")->required();
  sweep_sub->add_option("--out", out_dir, "output directory")->required();
  sweep_sub->add_option("--seed", seed_override, "override the manifest base_seed");
  sweep_sub->add_option("--jobs", jobs_override, "override the manifest worker count");
  sweep_sub->add_option("--threshold", threshold, "benign error01 threshold over alpha");
  sweep_sub->add_flag("--force", force, "overwrite existing outputs");
  sweep_sub->add_flag("--verbose", verbose, "progress on stderr");

  CLI::App* stages_sub =
      app.add_subcommand("stages", "stage boundaries from a record.csv");
  stages_sub->add_option("--record", record_path, "record.csv path")->required();
  stages_sub->add_option("--target-loss", target_loss, "target loss the run used");

  CLI::App* fit_sub =
      app.add_subcommand("fit-critical", "fit the critical line from a cells.csv");
  fit_sub->add_option("--cells", cells_path, "cells.csv path")->required();
  fit_sub->add_option("--threshold", threshold, "benign error01 threshold over alpha");
  fit_sub->add_option("--out", fit_out, "write JSON here instead of stdout");
  fit_sub->add_flag("--force", force, "overwrite existing outputs");

  CLI::App* sim_sub =
      app.add_subcommand("similarity", "Pearson similarity of two cells.csv grids");
  sim_sub->add_option("--cells-a", cells_a, "first cells.csv")->required();
  sim_sub->add_option("--cells-b", cells_b, "second cells.csv")->required();

  CLI::App* gc_sub =
      app.add_subcommand("gradcheck", "finite-difference audit of the gradients");
  gc_sub->add_option("--trials", gc_trials, "number of randomized instances");
  gc_sub->add_option("--seed", gc_seed, "base seed");
  gc_sub->add_option("--step", gc_step, "finite-difference step");
  gc_sub->add_option("--tol", gc_tol, "max relative error allowed");
  gc_sub->add_flag("--verbose", verbose, "per-trial detail on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_sub->parsed())
      return cmd_train(config_path, out_dir, seed_override, force, verbose);
    if (sweep_sub->parsed())
      return cmd_sweep(manifest_path, out_dir, seed_override, jobs_override, threshold,
                       force, verbose);
    if (stages_sub->parsed()) return cmd_stages(record_path, target_loss);
    if (fit_sub->parsed()) return cmd_fit_critical(cells_path, threshold, fit_out, force);
    if (sim_sub->parsed()) return cmd_similarity(cells_a, cells_b);
    if (gc_sub->parsed())
      return cmd_gradcheck(gc_trials, gc_seed, gc_step, gc_tol, verbose);
  } catch (const TrainingDivergedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
