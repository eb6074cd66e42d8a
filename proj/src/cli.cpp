#include "pins/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "pins/datagen.hpp"
#include "pins/exact.hpp"
#include "pins/io.hpp"
#include "pins/trace_csv.hpp"

#ifndef PINS_VERSION
#define PINS_VERSION "dev"
#endif

namespace pins::cli {

using json = nlohmann::ordered_json;

int exit_code(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return kExitConverged;
    case SolveStatus::BudgetExhausted: return kExitBudget;
    case SolveStatus::Stalled: return kExitStalled;
  }
  return kExitFailure;
}

std::uint64_t fingerprint(const Instance& inst) {
  std::ostringstream buf;
  io::write_instance(buf, inst, io::InstanceFormat::Binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : buf.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string run_label(Mode mode, double eta) {
  return std::string(to_string(mode)) + "@" + io::format_double(eta);
}

namespace {

// Flags shared by solve and compare. Only flags that were actually given
// (on the command line or in the config file) override the mode defaults.
struct SolverFlags {
  double eta = 1e-2;
  double rho = 0.1;
  int max_outer = 500;
  double outer_tol = 1e-4;
  int sinkhorn_iters = 50000;
  double sinkhorn_tol = 6.3e-4;
  int newton_iters = 20;
  double grad_tol = 1e-8;
  double cg_tol = 1e-10;
  int cg_iters = 2000;
  bool warm_start = false;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App& app) {
    opts["eta"] = app.add_option("--eta", eta, "entropic regularization");
    opts["rho"] = app.add_option("--rho", rho, "kept fraction of the Hessian off block");
    opts["max-outer"] = app.add_option("--max-outer", max_outer, "outer iteration budget K");
    opts["outer-tol"] = app.add_option("--outer-tol", outer_tol, "relative outer stopping tolerance");
    opts["sinkhorn-iters"] = app.add_option("--sinkhorn-iters", sinkhorn_iters, "Sinkhorn sweep budget");
    opts["sinkhorn-tol"] = app.add_option("--sinkhorn-tol", sinkhorn_tol, "Sinkhorn marginal tolerance");
    opts["newton-iters"] = app.add_option("--newton-iters", newton_iters, "Newton iteration budget");
    opts["grad-tol"] = app.add_option("--grad-tol", grad_tol, "Newton gradient tolerance");
    opts["cg-tol"] = app.add_option("--cg-tol", cg_tol, "CG relative residual tolerance");
    opts["cg-iters"] = app.add_option("--cg-iters", cg_iters, "CG iteration cap");
    opts["warm-start"] = app.add_flag("--warm-start", warm_start, "reuse potentials across outer steps");
  }

  bool given(const std::string& name) const { return opts.at(name)->count() > 0; }

  SolverConfig config_for(Mode mode) const {
    SolverConfig c = SolverConfig::defaults(mode);
    if (given("eta")) c.eta = eta;
    if (given("rho")) c.newton.rho = rho;
    if (given("max-outer")) c.max_outer = max_outer;
    if (given("outer-tol")) c.outer_rel_tol = outer_tol;
    if (given("sinkhorn-iters")) c.sinkhorn.max_iters = sinkhorn_iters;
    if (given("sinkhorn-tol")) c.sinkhorn.tol = sinkhorn_tol;
    if (given("newton-iters")) c.newton.max_iters = newton_iters;
    if (given("grad-tol")) c.newton.grad_tol = grad_tol;
    if (given("cg-tol")) c.newton.cg_tol = cg_tol;
    if (given("cg-iters")) c.newton.cg_max_iters = cg_iters;
    if (given("warm-start")) c.warm_start = warm_start;
    c.sinkhorn.eta = c.eta;
    return c;
  }
};

json config_json(const SolverConfig& c) {
  return {
      {"mode", to_string(c.mode)},
      {"eta", c.eta},
      {"max_outer", c.max_outer},
      {"outer_rel_tol", c.outer_rel_tol},
      {"warm_start", c.warm_start},
      {"shift_first_cost", c.shift_first_cost},
      {"sinkhorn", {{"max_iters", c.sinkhorn.max_iters}, {"tol", c.sinkhorn.tol}}},
      {"newton",
       {{"rho", c.newton.rho},
        {"max_iters", c.newton.max_iters},
        {"grad_tol", c.newton.grad_tol},
        {"cg_tol", c.newton.cg_tol},
        {"cg_max_iters", c.newton.cg_max_iters},
        {"armijo_c", c.newton.armijo_c},
        {"backtrack_factor", c.newton.backtrack_factor},
        {"max_backtracks", c.newton.max_backtracks},
        {"damping", c.newton.damping}}},
  };
}

std::string utc_now_iso() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json instance_json(const std::string& path, const Instance& inst) {
  return {{"path", path}, {"m", inst.m()}, {"n", inst.n()}, {"fnv1a64", hex64(fingerprint(inst))}};
}

void write_manifest(const std::string& output_path, const std::vector<std::string>& args,
                    json configs, json instance, const std::string& started) {
  json cmd = json::array({"pins"});
  for (const auto& a : args) cmd.push_back(a);
  json m = {
      {"command", std::move(cmd)},
      {"config", std::move(configs)},
      {"instance", std::move(instance)},
      {"started_utc", started},
      {"tool_version", PINS_VERSION},
  };
  io::write_file_atomic(output_path + ".manifest.json", m.dump(2) + "\n");
}

std::optional<double> exact_cost(const Instance& inst, bool enabled) {
  if (!enabled) return std::nullopt;
  return solve_exact(inst).cost;
}

std::string format_fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// --- gen ------------------------------------------------------------------

void add_gen(CLI::App& app, std::function<void()>& action) {
  auto* gen = app.add_subcommand("gen", "generate instance files");
  gen->require_subcommand(1);

  struct Synthetic {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out;
    bool binary = false;
  };
  auto syn = std::make_shared<Synthetic>();
  auto* s = gen->add_subcommand("synthetic", "uniform random costs, uniform marginals");
  s->add_option("--n", syn->n, "instance size")->required()->check(CLI::PositiveNumber);
  s->add_option("--seed", syn->seed, "generator seed")->required();
  s->add_option("--out", syn->out, "output file")->required();
  s->add_flag("--binary", syn->binary, "write PINSMAT1 instead of PINSOT text");
  s->callback([syn, &action] {
    action = [syn] {
      io::save_instance(syn->out, gen_synthetic(syn->n, syn->seed),
                        syn->binary ? io::InstanceFormat::Binary : io::InstanceFormat::Text);
    };
  });

  struct Image {
    std::string src, dst, out;
    double eps = kDefaultSqueeze;
    bool binary = false;
  };
  auto img = std::make_shared<Image>();
  auto* i = gen->add_subcommand("image", "instance between two PGM images");
  i->add_option("--src", img->src, "source image")->required();
  i->add_option("--dst", img->dst, "target image")->required();
  i->add_option("--eps", img->eps, "intensity squeeze threshold");
  i->add_option("--out", img->out, "output file")->required();
  i->add_flag("--binary", img->binary, "write PINSMAT1 instead of PINSOT text");
  i->callback([img, &action] {
    action = [img] {
      const Instance inst = image_instance(io::load_pgm(img->src), io::load_pgm(img->dst), img->eps);
      io::save_instance(img->out, inst,
                        img->binary ? io::InstanceFormat::Binary : io::InstanceFormat::Text);
    };
  });

  struct Grid {
    std::vector<std::string> srcs, dsts;
    std::size_t n = 0;
    std::string out;
    double eps = kDefaultSqueeze;
    bool binary = false;
  };
  auto grid = std::make_shared<Grid>();
  auto* g = gen->add_subcommand("grid", "tile N*N images per side, then build an instance");
  g->add_option("--srcs", grid->srcs, "N*N source images")->required();
  g->add_option("--dsts", grid->dsts, "N*N target images")->required();
  g->add_option("--n", grid->n, "tiles per side")->required()->check(CLI::PositiveNumber);
  g->add_option("--eps", grid->eps, "intensity squeeze threshold");
  g->add_option("--out", grid->out, "output file")->required();
  g->add_flag("--binary", grid->binary, "write PINSMAT1 instead of PINSOT text");
  g->callback([grid, &action] {
    action = [grid] {
      std::vector<GrayImage> src, dst;
      for (const auto& p : grid->srcs) src.push_back(io::load_pgm(p));
      for (const auto& p : grid->dsts) dst.push_back(io::load_pgm(p));
      const Instance inst = image_instance(grid_augment(src, grid->n), grid_augment(dst, grid->n), grid->eps);
      io::save_instance(grid->out, inst,
                        grid->binary ? io::InstanceFormat::Binary : io::InstanceFormat::Text);
    };
  });
}

// --- solve ----------------------------------------------------------------

struct SolveArgs {
  std::string in;
  std::string mode = "pins";
  std::string trace;
  bool exact = false;
  SolverFlags flags;
};

int do_solve(const SolveArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  const std::string started = utc_now_iso();
  const Instance inst = io::load_instance(a.in);
  const SolverConfig config = a.flags.config_for(parse_mode(a.mode));
  validate(config);

  SolveOptions options;
  options.oracle_cost = exact_cost(inst, a.exact);
  const SolveReport report = pins_solve(inst, config, options);
  const std::string label = run_label(config.mode, config.eta);

  if (!a.trace.empty()) {
    std::ostringstream csv;
    csv::write_header(csv);
    csv::write_rows(csv, label, report.trace);
    io::write_file_atomic(a.trace, csv.str());
    write_manifest(a.trace, args, config_json(config), instance_json(a.in, inst), started);
  }

  out << "run " << label << "\n";
  out << "status " << to_string(report.status) << "\n";
  out << "cost " << io::format_double(report.cost) << "\n";
  if (options.oracle_cost) {
    out << "exact_cost " << io::format_double(*options.oracle_cost) << "\n";
    out << "error " << io::format_double(std::abs(report.cost - *options.oracle_cost)) << "\n";
  }
  out << "marginal_violation " << io::format_double(report.marginal_violation) << "\n";
  out << "outer_iterations " << report.outer_iterations << "\n";
  out << "wall_s " << format_fixed(report.wall_time_s, 6) << "\n";
  return exit_code(report.status);
}

// --- compare --------------------------------------------------------------

struct CompareArgs {
  std::string in;
  std::vector<std::string> modes;
  std::vector<double> etas;
  std::string out;
  bool exact = false;
  int jobs = 1;
  SolverFlags flags;
};

struct RunOutcome {
  Mode mode = Mode::Pins;
  double eta = 0.0;
  std::string label;
  SolverConfig config;
  std::string rows;
  std::optional<SolveReport> report;  // trace dropped after formatting
  std::string error;
};

std::size_t worker_slots(int jobs, std::size_t runs) {
  std::size_t slots = static_cast<std::size_t>(std::max(1, jobs));
  if (const char* env = std::getenv("PINS_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) slots = std::min(slots, static_cast<std::size_t>(cap));
  }
  return std::min(slots, std::max<std::size_t>(1, runs));
}

int do_compare(const CompareArgs& a, const std::vector<std::string>& args, std::ostream& out) {
  if (a.modes.empty() || std::any_of(a.modes.begin(), a.modes.end(), [](const auto& s) { return s.empty(); }))
    throw CLI::ValidationError("--modes", "mode list must not be empty");
  const std::string started = utc_now_iso();
  const Instance inst = io::load_instance(a.in);

  std::vector<double> etas = a.etas;
  if (etas.empty()) etas.push_back(a.flags.config_for(Mode::Pins).eta);

  std::vector<RunOutcome> runs;
  for (const auto& name : a.modes) {
    const Mode mode = parse_mode(name);
    for (double eta : etas) {
      RunOutcome r;
      r.mode = mode;
      r.eta = eta;
      r.config = a.flags.config_for(mode);
      r.config.eta = eta;
      r.config.sinkhorn.eta = eta;
      validate(r.config);
      r.label = run_label(mode, eta);
      runs.push_back(std::move(r));
    }
  }
  // Deterministic merge order: mode name, then eta; rows within a run are
  // already ordered by (k, t).
  std::stable_sort(runs.begin(), runs.end(), [](const RunOutcome& x, const RunOutcome& y) {
    const std::string_view mx = to_string(x.mode), my = to_string(y.mode);
    return mx != my ? mx < my : x.eta < y.eta;
  });
  runs.erase(std::unique(runs.begin(), runs.end(),
                         [](const RunOutcome& x, const RunOutcome& y) {
                           return x.mode == y.mode && x.eta == y.eta;
                         }),
             runs.end());

  SolveOptions options;
  options.oracle_cost = exact_cost(inst, a.exact);

  std::mutex next_mutex;
  std::size_t next = 0;
  const auto worker = [&] {
    for (;;) {
      std::size_t idx;
      {
        std::lock_guard lock(next_mutex);
        if (next >= runs.size()) return;
        idx = next++;
      }
      RunOutcome& r = runs[idx];
      try {
        SolveReport report = pins_solve(inst, r.config, options);
        std::ostringstream rows;
        csv::write_rows(rows, r.label, report.trace);
        r.rows = rows.str();
        report.trace.clear();
        report.trace.shrink_to_fit();
        r.report = std::move(report);
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  };
  const std::size_t slots = worker_slots(a.jobs, runs.size());
  if (slots == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t s = 0; s < slots; ++s) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::ostringstream csv_text;
  csv::write_header(csv_text);
  json configs = json::array();
  for (const auto& r : runs) {
    csv_text << r.rows;
    configs.push_back(config_json(r.config));
  }
  io::write_file_atomic(a.out, csv_text.str());
  write_manifest(a.out, args, std::move(configs), instance_json(a.in, inst), started);

  out << std::left << std::setw(24) << "run" << std::setw(18) << "status" << std::setw(24)
      << "final_cost" << std::setw(24) << "final_error" << std::setw(14) << "wall_s"
      << "outer_iters\n";
  std::vector<const RunOutcome*> timed;
  for (const auto& r : runs) {
    out << std::setw(24) << r.label;
    if (!r.report) {
      out << "error: " << r.error << "\n";
      continue;
    }
    const auto& rep = *r.report;
    const std::string err =
        options.oracle_cost ? io::format_double(std::abs(rep.cost - *options.oracle_cost)) : "-";
    out << std::setw(18) << to_string(rep.status) << std::setw(24) << io::format_double(rep.cost)
        << std::setw(24) << err << std::setw(14) << format_fixed(rep.wall_time_s, 6)
        << rep.outer_iterations << "\n";
    timed.push_back(&r);
  }
  std::stable_sort(timed.begin(), timed.end(), [](const RunOutcome* x, const RunOutcome* y) {
    return x->report->wall_time_s < y->report->wall_time_s;
  });
  out << "speed ordering:";
  for (std::size_t k = 0; k < timed.size(); ++k) out << (k ? " < " : " ") << timed[k]->label;
  out << "\n";
  return kExitConverged;
}

// Fills options that were not given on the command line from a
// `key = value` file (`#` starts a comment).
void apply_config_file(CLI::App& app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      const auto e = s.find_last_not_of(" \t\r");
      s = s.substr(b, e - b + 1);
      if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
      return s;
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError(path + ":" + std::to_string(lineno), "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config" || key == "help")
      throw CLI::ValidationError(path + ":" + std::to_string(lineno), "key not allowed: " + key);
    CLI::Option* opt = app.get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw CLI::ValidationError(path + ":" + std::to_string(lineno), "unknown key: " + key);
    if (opt->count() > 0) continue;  // command line wins
    opt->add_result(value);
    opt->run_callback();
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entropic optimal transport solvers: Sinkhorn, sparse Newton, proximal outer loop"};
  app.set_version_flag("--version", PINS_VERSION);
  app.require_subcommand(1);

  std::function<void()> gen_action;
  add_gen(app, gen_action);

  SolveArgs solve_args;
  auto* solve = app.add_subcommand("solve", "solve one instance");
  std::string solve_config;
  solve->add_option("--config", solve_config, "key = value file; command-line flags take precedence");
  solve->add_option("--in", solve_args.in, "instance file")->required();
  solve->add_option("--mode", solve_args.mode, "pins | newton_no_eppa | sinkhorn_eppa | sinkhorn_only");
  solve->add_option("--trace", solve_args.trace, "CSV trace output");
  solve->add_flag("--exact", solve_args.exact, "solve exactly first and report errors");
  solve_args.flags.attach(*solve);

  CompareArgs cmp;
  auto* compare = app.add_subcommand("compare", "run several (mode, eta) configurations");
  std::string compare_config;
  compare->add_option("--config", compare_config, "key = value file; command-line flags take precedence");
  compare->add_option("--in", cmp.in, "instance file")->required();
  compare->add_option("--modes", cmp.modes, "comma-separated modes")->required()->delimiter(',');
  compare->add_option("--etas", cmp.etas, "comma-separated eta values")->delimiter(',');
  compare->add_option("--out", cmp.out, "combined CSV output")->required();
  compare->add_flag("--exact", cmp.exact, "solve exactly first and report errors");
  compare->add_option("--jobs", cmp.jobs, "parallel worker slots (capped by PINS_THREADS)")
      ->check(CLI::PositiveNumber);
  cmp.flags.attach(*compare);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << PINS_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    // Subcommand help for a bare `gen` or missing arguments.
    err << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (gen_action) {
      gen_action();
      return kExitConverged;
    }
    if (solve->parsed() && !solve_config.empty()) apply_config_file(*solve, solve_config);
    if (compare->parsed() && !compare_config.empty()) apply_config_file(*compare, compare_config);
    if (solve->parsed()) return do_solve(solve_args, args, out);
    if (compare->parsed()) return do_compare(cmp, args, out);
    err << "error: no subcommand\n";
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::Overflow:
      case ErrorCode::BreakdownDetected:
      case ErrorCode::NotAscentDirection:
      case ErrorCode::LineSearchFailed:
      case ErrorCode::DegenerateCycling:
        return kExitFailure;
      default:
        return kExitUsage;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace pins::cli
