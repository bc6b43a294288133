#include "plugreg/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "plugreg/applications.hpp"
#include "plugreg/dataset.hpp"
#include "plugreg/errors.hpp"
#include "plugreg/estimators.hpp"
#include "plugreg/first_stage.hpp"
#include "plugreg/simulation.hpp"

namespace plugreg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean for '" + key + "': " + v);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T x{};
  is >> x;
  if (!is || !is.eof()) throw ConfigError("bad number for '" + key + "': " + v);
  return x;
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ORTHO_M_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return static_cast<unsigned>(t);
  }
  return 1;
}

PenaltyRule make_rule(const RunConfig& cfg, AppId model) {
  if (cfg.lambda == "caption") return caption_rule(model);
  PenaltyRule r;
  r.U = cfg.U;
  if (cfg.lambda == "theorem") {
    r.kind = PenaltyRule::Kind::theorem;
    return r;
  }
  r.kind = PenaltyRule::Kind::manual;
  r.manual = parse_number<double>("lambda", cfg.lambda);
  if (!(r.manual >= 0.0)) throw ConfigError("lambda must be theorem, caption or a nonnegative number");
  return r;
}

DGPConfig make_design(const RunConfig& cfg, AppId model) {
  Scale scale;
  if (cfg.scale == "desk") scale = Scale::desk;
  else if (cfg.scale == "paper") scale = Scale::paper;
  else throw ConfigError("scale must be desk or paper");
  if (cfg.dgp != 1 && cfg.dgp != 2) throw ConfigError("dgp must be 1 or 2");
  DGPConfig d = preset(model, scale, cfg.dgp == 2 ? GamesVariant::dgp2 : GamesVariant::dgp1);
  d.seed = cfg.seed;
  if (cfg.reps > 0) d.replications = cfg.reps;
  for (const auto& [k, v] : cfg.design) set_dgp_field(d, k, v);
  d.validate();
  return d;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  return f;
}

}  // namespace

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::map<std::string, std::string> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& entries,
                  const std::vector<std::string>& given) {
  auto is_given = [&](const std::string& k) { return std::find(given.begin(), given.end(), k) != given.end(); };
  for (const auto& [key, v] : entries) {
    if (is_given(key)) continue;
    if (key == "model") cfg.model = v;
    else if (key == "scale") cfg.scale = v;
    else if (key == "dgp") cfg.dgp = parse_number<int>(key, v);
    else if (key == "reps") cfg.reps = parse_number<std::size_t>(key, v);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "replication") cfg.replication = parse_number<std::uint64_t>(key, v);
    else if (key == "methods") cfg.methods = split_list(v);
    else if (key == "lambda") cfg.lambda = v;
    else if (key == "U") cfg.U = parse_number<double>(key, v);
    else if (key == "out") cfg.out = v;
    else if (key == "input") cfg.input = v;
    else if (key == "save_data") cfg.save_data = v;
    else if (key == "algorithm") cfg.algorithm = v;
    else if (key == "threads") cfg.threads = parse_number<unsigned>(key, v);
    else if (key == "naive") cfg.naive = parse_bool(key, v);
    else if (key == "timing") cfg.timing = parse_bool(key, v);
    else if (key == "direct_cv") cfg.direct_cv = parse_bool(key, v);
    else if (key == "n_mc") cfg.n_mc = parse_number<std::size_t>(key, v);
    else if (key == "probes") cfg.probes = parse_number<int>(key, v);
    else if (!cfg.design.count(key)) cfg.design[key] = v;
  }
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const AppId model = parse_app(cfg.model);
  const DGPConfig design = make_design(cfg, model);
  RunOptions opt;
  opt.rule = make_rule(cfg, model);
  opt.direct_cv = cfg.direct_cv;
  opt.timing = cfg.timing;
  opt.threads = resolve_threads(cfg.threads);
  const std::vector<std::string> methods = cfg.methods.empty() ? default_methods(model) : cfg.methods;

  const ReplicationReport rep = run_replications(design, methods, opt);

  if (!cfg.save_data.empty()) {
    std::filesystem::create_directories(cfg.save_data);
    for (std::size_t r = 0; r < design.replications; ++r) {
      const SimData sim = generate(design, r);
      std::ofstream f = open_out((std::filesystem::path(cfg.save_data) /
                                  (cfg.model + "_seed" + std::to_string(design.seed) + "_rep" + std::to_string(r) + ".csv"))
                                     .string());
      sim.data.write_csv(f);
    }
  }

  if (cfg.out.empty()) {
    write_csv(rep, out);
  } else {
    std::string stem = cfg.out;
    if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".csv") stem.resize(stem.size() - 4);
    std::ofstream csv = open_out(stem + ".csv");
    write_csv(rep, csv);
    std::ofstream js = open_out(stem + ".json");
    js << std::setw(2) << summary_json(rep) << '\n';
  }
  for (const auto& r : rep.records)
    if (!r.ok) err << "seed " << r.seed << " method " << r.method << " failed: " << r.error << '\n';
  if (rep.failures > 0) {
    err << rep.failures << " of " << rep.records.size() << " runs failed\n";
    return kExitPartialFailure;
  }
  return kExitOk;
}

int cmd_estimate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const AppId model = parse_app(cfg.model);
  if (cfg.input.empty()) throw ConfigError("estimate needs --input");
  std::ifstream in(cfg.input);
  if (!in) throw ConfigError("cannot read '" + cfg.input + "'");
  const Dataset data = Dataset::read_csv(in);
  validate_schema(data, model);

  EstimatorConfig est;
  est.corrected = !cfg.naive;
  est.first_stage.correction_nuisance = !cfg.naive;
  est.first_stage.caption_divisor = caption_rule(model).caption_divisor;
  const PenaltyRule rule = make_rule(cfg, model);

  EstimationResult r;
  if (cfg.algorithm == "1") {
    r = algorithm1(data, model, rule, make_folds(data.rows(), 2, cfg.seed, cfg.replication), est);
  } else if (cfg.algorithm == "2") {
    err << "warning: the " << cfg.model << " loss is convex; Algorithm 1 already applies\n";
    r = algorithm2(data, model, rule, make_folds(data.rows(), 3, cfg.seed, cfg.replication), est);
  } else if (cfg.algorithm == "cf") {
    r = cross_fit_estimate(data, model, rule, make_folds(data.rows(), 2, cfg.seed, cfg.replication), est);
  } else {
    throw ConfigError("algorithm must be 1, 2 or cf");
  }

  nlohmann::json j = to_json(r);
  j["model"] = cfg.model;
  j["algorithm"] = cfg.algorithm;
  j["n"] = data.rows();
  if (cfg.out.empty()) {
    out << std::setw(2) << j << '\n';
  } else {
    std::ofstream f = open_out(cfg.out);
    f << std::setw(2) << j << '\n';
  }
  return kExitOk;
}

int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const AppId model = parse_app(cfg.model);
  if (cfg.naive && !schema(model).has_correction)
    throw ConfigError("--naive applies to models with a correction term (missing, games)");
  if (cfg.n_mc < 1000) throw ConfigError("n_mc must be at least 1000");

  auto line = [&](const std::string& name, double value, const std::string& band, bool pass,
                  const std::string& note = "") {
    out << std::left << std::setw(16) << name << std::setw(14) << std::setprecision(6) << value << std::setw(18)
        << band << (pass ? "PASS" : "FAIL") << note << '\n';
  };
  out << std::left << std::setw(16) << "check" << std::setw(14) << "value" << std::setw(18) << "target"
      << "result\n";

  const double fd = gradient_fd_check(model, cfg.probes, cfg.seed);
  line("gradient-fd", fd, "<= 1e-5", fd <= 1e-5);

  const OrthogonalityReport rep = orthogonality_study(model, cfg.naive, cfg.n_mc, cfg.seed);
  for (std::size_t i = 0; i < rep.r.size(); ++i) {
    std::ostringstream nm;
    nm << "grad r=" << rep.r[i];
    std::ostringstream fl;
    fl << "floor " << std::setprecision(3) << rep.noise_floor[i];
    line(nm.str(), rep.values[i], fl.str(), rep.values[i] > rep.noise_floor[i]);
  }
  const bool ortho_pass = !rep.degenerate && rep.slope >= 1.5;
  line("orthogonality", rep.slope, "slope >= 1.5", ortho_pass,
       cfg.naive ? "  (expected: correction dropped, first-order sensitivity)" : "");
  return kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Plug-in regularized estimation under single-index conditional moment restrictions"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string config_path, methods;
  std::vector<std::string> sets;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "plr, logit-te, missing or games");
    sub->add_option("--seed", cfg.seed, "base seed");
    sub->add_option("--lambda", cfg.lambda, "theorem, caption or a value");
    sub->add_option("--U", cfg.U, "moment bound of the theorem rule");
    sub->add_option("--out", cfg.out, "output path");
    sub->add_option("--config", config_path, "flat key = value file; flags take precedence");
    sub->add_flag("--naive", cfg.naive, "drop the orthogonal correction");
  };

  CLI::App* sim = app.add_subcommand("simulate", "run Monte Carlo replications");
  common(sim);
  sim->add_option("--scale", cfg.scale, "desk or paper");
  sim->add_option("--dgp", cfg.dgp, "games design 1 or 2");
  sim->add_option("--reps", cfg.reps, "replications");
  sim->add_option("--methods", methods, "comma-separated methods");
  sim->add_option("--threads", cfg.threads, "worker threads (default ORTHO_M_THREADS or 1)");
  sim->add_option("--set", sets, "design override key=value")->take_all();
  sim->add_option("--save-data", cfg.save_data, "directory for the simulated datasets");
  sim->add_flag("--timing", cfg.timing, "record wall-clock times");
  sim->add_flag("--direct-cv", cfg.direct_cv, "cross-validate the Direct penalty");

  CLI::App* est = app.add_subcommand("estimate", "estimate theta from a CSV dataset");
  common(est);
  est->add_option("--input", cfg.input, "CSV with the model's columns");
  est->add_option("--algorithm", cfg.algorithm, "1, 2 or cf");
  est->add_option("--replication", cfg.replication, "fold stream index");

  CLI::App* chk = app.add_subcommand("check", "gradient and orthogonality diagnostics");
  common(chk);
  chk->add_option("--n-mc", cfg.n_mc, "Monte Carlo sample size");
  chk->add_option("--probes", cfg.probes, "finite-difference probes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    cfg.command = sub->get_name();
    if (!methods.empty()) cfg.methods = split_list(methods);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      cfg.design[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    if (!config_path.empty()) {
      std::vector<std::string> given;
      for (const CLI::Option* o : sub->get_options()) {
        if (o->count() == 0) continue;
        std::string name = o->get_name(false, true);
        name.erase(0, name.find_first_not_of('-'));
        std::replace(name.begin(), name.end(), '-', '_');
        given.push_back(name);
      }
      apply_config(cfg, read_config_file(config_path), given);
    }
    if (cfg.model.empty()) throw ConfigError("--model is required");
    if (cfg.command == "simulate") return cmd_simulate(cfg, out, err);
    if (cfg.command == "estimate") return cmd_estimate(cfg, out, err);
    return cmd_check(cfg, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace plugreg
