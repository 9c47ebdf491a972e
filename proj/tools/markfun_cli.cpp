// Command-line front end: build/export the case-study models, evaluate
// measures by restarted Krylov or uniformization, run sensitivities, and
// sweep benchmark grids into CSV.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "markfun/markfun.hpp"

using namespace markfun;

namespace {

double now_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct CsvWriter {
  std::ostream* out = &std::cout;
  std::ofstream file;
  bool header_written = false;

  explicit CsvWriter(const std::string& path) {
    if (!path.empty() && path != "-") {
      file.open(path);
      if (!file) throw IoError("cannot open " + path + " for writing");
      out = &file;
    }
  }

  void header(const std::vector<std::string>& cols) {
    if (header_written) return;
    for (std::size_t i = 0; i < cols.size(); ++i)
      *out << (i ? "," : "") << cols[i];
    *out << "\n";
    header_written = true;
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      *out << (i ? "," : "") << cells[i];
    *out << "\n";
    out->flush();
  }
};

std::map<std::string, double> parse_params(const std::vector<std::string>& kv) {
  std::map<std::string, double> params;
  for (const std::string& s : kv) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw SpecError("--param expects name=value, got '" + s + "'");
    params[s.substr(0, eq)] = std::stod(s.substr(eq + 1));
  }
  return params;
}

struct ModelSource {
  std::string model;                 // built-in name
  std::vector<std::string> params;   // k=v pairs
  std::string matrix_path;           // external matrix market file
  std::string sidecar_path;

  void add_options(CLI::App& cmd) {
    cmd.add_option("--model", model, "built-in model: queue, telecom, attack");
    cmd.add_option("--param", params, "model parameter name=value (repeatable)");
    cmd.add_option("--matrix", matrix_path, "Matrix Market generator file");
    cmd.add_option("--sidecar", sidecar_path,
                   "JSON sidecar with partition/reward/pi0");
  }

  ModelBundle load() const {
    if (!model.empty()) return build_model(model, parse_params(params));
    if (!matrix_path.empty()) {
      if (sidecar_path.empty())
        throw SpecError("--matrix requires --sidecar");
      return import_model(matrix_path, sidecar_path);
    }
    throw SpecError("either --model or --matrix/--sidecar is required");
  }
};

// Named measures resolve against the loaded bundle; anything beyond the
// aliases is inline JSON or a path to a JSON file.
MeasureSpec resolve_measure(const std::string& text, const ModelBundle& b,
                            std::optional<double> t_override) {
  MeasureSpec spec;
  const auto alias = [&](MeasureKind kind, bool absorbing,
                         bool with_reward) {
    spec.kind = kind;
    spec.partition = absorbing ? absorbing_partition(b.q) : b.partition;
    if (with_reward) spec.reward = b.reward;
    spec.pi0 = b.pi0;
    return spec;
  };
  if (text == "reliability") spec = alias(MeasureKind::InstReliability, false, false);
  else if (text == "availability") spec = alias(MeasureKind::InstAvailability, false, false);
  else if (text == "uptime") spec = alias(MeasureKind::Uptime, false, false);
  else if (text == "expected-failures") spec = alias(MeasureKind::ExpectedFailures, false, false);
  else if (text == "mttf") spec = alias(MeasureKind::MttfInfinite, true, false);
  else if (text == "mttf-finite") spec = alias(MeasureKind::MttfFinite, true, false);
  else if (text == "reward") spec = alias(MeasureKind::InstReward, false, true);
  else if (text == "average-clients") {
    spec = alias(MeasureKind::InstReward, false, false);
    spec.reward = RewardVector::linear(b.q.size());
  } else if (text == "cumulative-reward" || text == "b-security" ||
             text == "detected-uptime") {
    spec = alias(MeasureKind::CumulativeReward, false, true);
  } else if (text == "steady-reward") {
    spec = alias(MeasureKind::SteadyStateReward, false, true);
  } else {
    nlohmann::json j;
    if (!text.empty() && text.front() == '{') {
      j = nlohmann::json::parse(text);
    } else {
      std::ifstream in(text);
      if (!in)
        throw SpecError("measure '" + text +
                        "' is neither a known name, inline JSON, nor a "
                        "readable file");
      in >> j;
    }
    spec = measure_spec_from_json(j, b.q, b.defaults());
  }
  if (t_override) spec.t = *t_override;
  return spec;
}

DirectionMatrix resolve_direction(const std::string& text, const ModelBundle& b) {
  const auto colon = text.find(':');
  if (colon != std::string::npos) {
    // "queue:rho2" style: model name must match the loaded bundle
    const std::string model = text.substr(0, colon);
    const std::string param = text.substr(colon + 1);
    if (model != b.name)
      throw SpecError("direction '" + text + "' does not match model '" +
                      b.name + "'");
    return model_direction(model, b.params, param);
  }
  if (text.size() > 4 && text.substr(text.size() - 4) == ".mtx") {
    MatrixMarketData data = read_matrix_market(text);
    if (data.rows != data.cols || data.rows != b.q.size())
      throw ValidationError("direction dimensions do not match the model");
    return DirectionMatrix::from_triplets(data.rows, data.entries);
  }
  // bare parameter name against the loaded built-in
  return model_direction(b.name, b.params, text);
}

const std::vector<std::string> kEvalHeader = {
    "model", "n",   "measure",     "t",        "method",   "tol",
    "m",     "max_restarts", "value", "wall_time_s", "restarts", "converged"};

struct EvalFlags {
  std::string measure = "reward";
  std::string method = "krylov";
  double tol = 1e-8;
  int restart_len = 15;
  int max_restarts = 10;
  std::optional<double> t;
  std::string out;

  void add_options(CLI::App& cmd, bool with_measure = true) {
    if (with_measure)
      cmd.add_option("--measure", measure,
                     "measure name, inline JSON, or JSON file path");
    cmd.add_option("--method", method, "krylov or uniformization")
        ->check(CLI::IsMember({"krylov", "uniformization"}));
    cmd.add_option("--tol", tol, "truncation tolerance (default 1e-8)");
    cmd.add_option("--restart-len", restart_len,
                   "Arnoldi restart length (default 15)");
    cmd.add_option("--max-restarts", max_restarts,
                   "maximum number of restarts (default 10)");
    cmd.add_option_function<double>(
        "--t", [this](const double& v) { t = v; }, "horizon override");
    cmd.add_option("--out", out, "output CSV path (default stdout)");
  }

  EvalOptions options() const {
    EvalOptions opts;
    opts.method =
        method == "uniformization" ? Method::Uniformization : Method::Krylov;
    opts.krylov.tol = tol;
    opts.krylov.restart_length = restart_len;
    opts.krylov.max_restarts = max_restarts;
    opts.uniformization_tol = tol;
    return opts;
  }

  std::vector<std::string> config_cells() const {
    return {method, fmt_double(tol), std::to_string(restart_len),
            std::to_string(max_restarts)};
  }
};

void eval_row(CsvWriter& csv, const ModelBundle& b, const std::string& measure,
              const MeasureSpec& spec, const EvalFlags& flags,
              const EvalOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  MeasureResult res = evaluate_measure(b.q, spec, opts);
  const double wall = now_seconds(t0);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  std::vector<std::string> cells = {b.name, std::to_string(b.q.size()), measure,
                                    spec.t ? fmt_double(*spec.t) : ""};
  for (const auto& c : flags.config_cells()) cells.push_back(c);
  cells.push_back(fmt_double(res.value));
  cells.push_back(fmt_double(wall));
  cells.push_back(std::to_string(res.restarts));
  cells.push_back(res.converged ? "1" : "0");
  csv.header(kEvalHeader);
  csv.row(cells);
}

int cmd_eval(const ModelSource& src, const EvalFlags& flags) {
  ModelBundle b = src.load();
  MeasureSpec spec = resolve_measure(flags.measure, b, flags.t);
  CsvWriter csv(flags.out);
  eval_row(csv, b, flags.measure, spec, flags, flags.options());
  return 0;
}

int cmd_sensitivity(const ModelSource& src, const EvalFlags& flags,
                    const std::string& direction_text) {
  ModelBundle b = src.load();
  MeasureSpec spec = resolve_measure(flags.measure, b, flags.t);
  DirectionMatrix dir = resolve_direction(direction_text, b);
  CsvWriter csv(flags.out);
  csv.header({"model", "n", "measure", "direction", "t", "method", "tol", "m",
              "max_restarts", "value", "derivative", "wall_time_s", "restarts",
              "converged"});
  const auto t0 = std::chrono::steady_clock::now();
  double value, derivative;
  int restarts = 0;
  bool converged = true;
  if (spec.kind == MeasureKind::MttfInfinite) {
    value = mttf_infinite(b.q, spec, flags.options()).value;
    derivative = mttf_sensitivity(b.q, spec, dir);
  } else {
    SensitivityResult res =
        measure_sensitivity(b.q, spec, dir, flags.options());
    value = res.value;
    derivative = res.derivative;
    restarts = res.restarts;
    converged = res.converged;
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  }
  const double wall = now_seconds(t0);
  std::vector<std::string> cells = {b.name, std::to_string(b.q.size()),
                                    flags.measure, direction_text,
                                    spec.t ? fmt_double(*spec.t) : ""};
  for (const auto& c : flags.config_cells()) cells.push_back(c);
  cells.push_back(fmt_double(value));
  cells.push_back(fmt_double(derivative));
  cells.push_back(fmt_double(wall));
  cells.push_back(std::to_string(restarts));
  cells.push_back(converged ? "1" : "0");
  csv.row(cells);
  return 0;
}

int cmd_model_export(const ModelSource& src, const std::string& out_prefix) {
  if (out_prefix.empty()) throw SpecError("model export requires --out prefix");
  ModelBundle b = src.load();
  export_model(b, out_prefix);
  std::cout << "wrote " << out_prefix << ".mtx and " << out_prefix << ".json ("
            << b.q.size() << " states)\n";
  return 0;
}

// Benchmark sweeps. Each cell is evaluated independently and failures are
// recorded as rows, never aborting the sweep.
int cmd_bench(const std::string& suite, Index max_n, const EvalFlags& flags) {
  CsvWriter csv(flags.out);
  csv.header(kEvalHeader);

  auto run_cell = [&](const std::string& model,
                      const std::map<std::string, double>& params,
                      const std::string& measure, double t,
                      const std::string& method) {
    EvalFlags cell = flags;
    cell.method = method;
    cell.t = t;
    try {
      ModelBundle b = build_model(model, params);
      MeasureSpec spec = resolve_measure(measure, b, t);
      eval_row(csv, b, measure, spec, cell, cell.options());
    } catch (const ConvergenceError& e) {
      std::cerr << "bench cell " << model << "/" << measure
                << " did not converge: " << e.what() << "\n";
    } catch (const ResourceError& e) {
      std::cerr << "bench cell " << model << "/" << measure
                << " exceeded resources: " << e.what() << "\n";
    }
  };

  const bool all = suite == "all";
  if (all || suite == "queue") {
    for (Index n = 1 << 10; n <= max_n && n <= (1 << 20); n *= 2)
      for (const std::string method : {"krylov", "uniformization"})
        run_cell("queue", {{"n", static_cast<double>(n)}}, "average-clients",
                 1.0, method);
  }
  if (all || suite == "telecom") {
    for (Index n = 1 << 10; 2 * n + 1 <= max_n && n <= (1 << 15); n *= 2)
      for (const std::string method : {"krylov", "uniformization"})
        run_cell("telecom", {{"n", static_cast<double>(n)}}, "detected-uptime",
                 20.0, method);
  }
  if (all || suite == "attack") {
    for (Index N : {10, 20, 50, 100, 200, 400}) {
      const Index states = (N + 1) * (N + 2) / 2 + N;
      if (states > max_n) break;
      for (const std::string method : {"krylov", "uniformization"})
        run_cell("attack", {{"N", static_cast<double>(N)}}, "b-security", 10.0,
                 method);
    }
  }
  if (all || suite == "sensitivity") {
    for (Index n = 1 << 8; n <= max_n && n <= (1 << 20); n *= 2) {
      EvalFlags cell = flags;
      cell.t = 1.0;
      try {
        ModelBundle b = build_model("queue", {{"n", static_cast<double>(n)}});
        MeasureSpec spec = resolve_measure("average-clients", b, 1.0);
        DirectionMatrix dir = model_direction("queue", b.params, "rho2");
        const auto t0 = std::chrono::steady_clock::now();
        SensitivityResult res =
            measure_sensitivity(b.q, spec, dir, cell.options());
        const double wall = now_seconds(t0);
        std::vector<std::string> cells = {
            "queue", std::to_string(b.q.size()),
            "sensitivity:average-clients:rho2", fmt_double(1.0)};
        for (const auto& c : cell.config_cells()) cells.push_back(c);
        cells.push_back(fmt_double(res.derivative));
        cells.push_back(fmt_double(wall));
        cells.push_back(std::to_string(res.restarts));
        cells.push_back(res.converged ? "1" : "0");
        csv.row(cells);
      } catch (const ConvergenceError& e) {
        std::cerr << "sensitivity cell n=" << n
                  << " did not converge: " << e.what() << "\n";
      }
    }
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"performability measures of CTMCs via matrix functions"};
  app.require_subcommand(1);

  ModelSource src;
  EvalFlags flags;
  std::string direction_text;
  std::string out_prefix;
  std::string suite = "all";
  Index max_n = 1 << 20;

  CLI::App* model = app.add_subcommand("model", "model utilities");
  model->require_subcommand(1);
  CLI::App* model_export =
      model->add_subcommand("export", "write Matrix Market + JSON sidecar");
  src.add_options(*model_export);
  model_export->add_option("--out", out_prefix, "output path prefix");

  CLI::App* eval = app.add_subcommand("eval", "evaluate one measure");
  src.add_options(*eval);
  flags.add_options(*eval);

  CLI::App* sens =
      app.add_subcommand("sensitivity", "measure value and derivative");
  src.add_options(*sens);
  flags.add_options(*sens);
  sens->add_option("--direction", direction_text,
                   "direction: parameter name, model:param, or .mtx file")
      ->required();

  CLI::App* bench = app.add_subcommand("bench", "benchmark sweeps");
  bench->add_option("--suite", suite,
                    "queue, telecom, attack, sensitivity or all")
      ->check(CLI::IsMember({"queue", "telecom", "attack", "sensitivity", "all"}));
  bench->add_option("--max-n", max_n, "state-count cap for the sweeps");
  flags.add_options(*bench, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (model_export->parsed()) return cmd_model_export(src, out_prefix);
    if (eval->parsed()) return cmd_eval(src, flags);
    if (sens->parsed()) return cmd_sensitivity(src, flags, direction_text);
    if (bench->parsed()) return cmd_bench(suite, max_n, flags);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
