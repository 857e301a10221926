#pragma once
// simulate / fit / report. Each command returns a process exit code:
// 0 ok, 2 configuration error, 3 data error, 4 numeric abort.
#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "diagnostics.hpp"
#include "io.hpp"
#include "sampler.hpp"
#include "simgen.hpp"

namespace bvsgcr {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kNumericAbort = 4 };

inline int guarded(const std::function<int()>& fn, std::ostream& err = std::cerr) {
  try {
    return fn();
  } catch (const NumericError& e) {
    err << "numeric abort: " << e.what() << "\n";
    return kNumericAbort;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const StructuralError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }
}

namespace detail {
template <class F>
void parallel_for(int count, int workers, F f) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(count);
  std::atomic<int> next{0};
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          f(i);
        } catch (...) {
          errs[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}
inline int default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

inline json matrix_json(const Eigen::MatrixXd& x) {
  json out = json::array();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> r(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) r[j] = x(i, j);
    out.push_back(r);
  }
  return out;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string scenario;  // preset id (I..IV) or path to a scenario JSON
  int replicates = 20;
  std::uint64_t seed = 1;
  std::string out;
  bool shared_X = true;
  int workers = 0;
};

// Scenario JSON: {"n", "p", "pi1", "pi2", "b_gauss", "s2_gauss", "b_disc",
// "s2_disc", "responses": [{"family", "theta", "categories", "trials",
// "cutpoint_range": [lo, hi]}]}
inline Scenario scenario_from_json(const json& j) {
  Scenario s;
  s.id = j.value("id", std::string("custom"));
  s.n = j.value("n", s.n);
  s.p = j.value("p", s.p);
  s.pi1 = j.value("pi1", s.pi1);
  s.pi2 = j.value("pi2", s.pi2);
  s.b_gauss = j.value("b_gauss", s.b_gauss);
  s.s2_gauss = j.value("s2_gauss", s.s2_gauss);
  s.b_disc = j.value("b_disc", s.b_disc);
  s.s2_disc = j.value("s2_disc", s.s2_disc);
  if (!j.contains("responses") || !j["responses"].is_array()) throw ConfigError("scenario: 'responses' array required");
  for (const auto& r : j["responses"]) {
    const Kind k = kind_from_name(r.at("family").get<std::string>());
    std::pair<double, double> range{0, 0};
    switch (k) {
      case Kind::Gaussian: s.families.push_back(Family::gaussian(r.value("theta", 1.0))); break;
      case Kind::BernoulliProbit: s.families.push_back(Family::bernoulli()); break;
      case Kind::OrdinalProbit: {
        s.families.push_back(Family::ordinal(r.at("categories").get<int>()));
        const auto cr = r.value("cutpoint_range", std::vector<double>{0.0, 1.0});
        if (cr.size() != 2 || !(cr[0] <= cr[1])) throw ConfigError("scenario: cutpoint_range must be [lo, hi]");
        range = {cr[0], cr[1]};
        break;
      }
      case Kind::BinomialLogit: s.families.push_back(Family::binomial(r.at("trials").get<int>())); break;
      case Kind::NegBinomialLogit: s.families.push_back(Family::negbin(r.value("theta", 1.0))); break;
    }
    validate(s.families.back());
    s.cutpoint_range.push_back(range);
  }
  return s;
}

// Fit configuration matching the simulation study settings.
inline json replicate_fit_config(const Scenario& sc) {
  json resp = json::array();
  for (int k = 0; k < sc.m(); ++k) {
    const Family& f = sc.families[k];
    json r = {{"name", "y" + std::to_string(k + 1)}, {"family", kind_name(f.kind)}, {"expected_size", 5},
              {"size_variance", 9}};
    if (f.kind == Kind::OrdinalProbit) r["categories"] = f.categories;
    if (f.kind == Kind::BinomialLogit) r["trials"] = f.trials;
    resp.push_back(r);
  }
  return {{"responses", resp},
          {"slab_variance", 1.0},
          {"intercept", true},
          {"standardize", false},
          {"chain", {{"iterations", 30000}, {"burnin", 10000}, {"thin", 20}, {"seed", 1}}}};
}

inline json truth_json(const Scenario& sc, const Replicate& r) {
  std::vector<std::string> names;
  for (int j = 0; j < sc.p; ++j) names.push_back("x" + std::to_string(j + 1));
  json beta = json::array(), cps = json::array();
  for (int k = 0; k < sc.m(); ++k) {
    std::vector<double> b(sc.p);
    for (int j = 0; j < sc.p; ++j) b[j] = r.coef.B(j, k);
    beta.push_back(b);
    cps.push_back(r.cutpoints[k]);
  }
  std::vector<int> g2(r.coef.gamma2.data(), r.coef.gamma2.data() + r.coef.gamma2.size());
  return {{"scenario", sc.id},       {"replicate", r.index}, {"seed", r.seed},
          {"predictors", names},     {"beta", beta},         {"relevant_rows", g2},
          {"R", detail::matrix_json(r.R)}, {"cutpoints", cps}};
}

inline void write_replicate(const fs::path& dir, const Scenario& sc, const Replicate& r) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create '" + dir.string() + "'");
  std::vector<std::string> yh, xh;
  for (int k = 0; k < sc.m(); ++k) yh.push_back("y" + std::to_string(k + 1));
  for (int j = 0; j < sc.p; ++j) xh.push_back("x" + std::to_string(j + 1));
  write_csv(dir / "Y.csv", yh, r.Y);
  if (r.X.size() == 1) write_csv(dir / "X.csv", xh, r.X[0]);
  else
    for (int k = 0; k < sc.m(); ++k) write_csv(dir / ("X_" + yh[k] + ".csv"), xh, r.X[k]);
  write_text(dir / "truth.json", truth_json(sc, r).dump(2) + "\n");
  json cfg = replicate_fit_config(sc);
  cfg["chain"]["seed"] = derive_seed(r.seed, 0xf17);
  write_text(dir / "config.json", cfg.dump(2) + "\n");
}

inline int cmd_simulate(const SimulateOptions& o) {
  if (o.replicates < 1) throw ConfigError("--replicates must be >= 1");
  if (o.out.empty()) throw ConfigError("--out is required");
  Scenario sc;
  if (o.scenario == "I" || o.scenario == "II" || o.scenario == "III" || o.scenario == "IV")
    sc = scenario_preset(o.scenario);
  else if (fs::exists(o.scenario))
    sc = scenario_from_json(read_json(o.scenario));
  else
    throw ConfigError("unknown scenario '" + o.scenario + "' (expected I, II, III, IV or a JSON file)");
  sc.replicates = o.replicates;
  sc.seed = o.seed;
  sc.shared_X = o.shared_X;
  try {
    sc.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  const fs::path root(o.out);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw ConfigError("cannot create output directory '" + o.out + "'");
  detail::parallel_for(sc.replicates, o.workers > 0 ? o.workers : detail::default_workers(), [&](int i) {
    char name[32];
    std::snprintf(name, sizeof name, "rep_%03d", i);
    write_replicate(root / name, sc, generate_replicate(sc, i));
  });
  json man = {{"scenario", sc.id}, {"replicates", sc.replicates}, {"seed", sc.seed},
              {"shared_X", sc.shared_X}, {"git_describe", git_describe()}};
  write_text(root / "manifest.json", man.dump(2) + "\n");
  return kOk;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
  std::string data, config, out;
  long iterations = -1, burnin = -1, thin = -1;  // -1: keep config value
  long long seed = -1;
  int chains = 0;
  bool store_latents = false;
  bool quiet = true;
};

inline json state_json(const ModelState& s) {
  json j;
  j["iteration"] = s.iteration;
  j["R"] = detail::matrix_json(s.R);
  j["delta"] = std::vector<double>(s.delta.data(), s.delta.data() + s.delta.size());
  json b = json::array(), g = json::array(), th = json::array();
  for (int k = 0; k < s.m(); ++k) {
    b.push_back(std::vector<double>(s.beta[k].data(), s.beta[k].data() + s.beta[k].size()));
    g.push_back(std::vector<int>(s.gamma[k].begin(), s.gamma[k].end()));
    th.push_back(natural_theta(s.families[k]));
  }
  j["beta"] = b;
  j["gamma"] = g;
  j["theta"] = th;
  return j;
}

inline int cmd_fit(const FitOptions& o) {
  if (o.data.empty() || o.config.empty() || o.out.empty()) throw ConfigError("fit needs --data, --config and --out");
  RunConfig cfg = parse_config(read_json(o.config));
  if (o.iterations >= 0) cfg.chain.iterations = o.iterations;
  if (o.burnin >= 0) cfg.chain.burnin = o.burnin;
  if (o.thin > 0) cfg.chain.thin = o.thin;
  if (o.seed >= 0) cfg.chain.seed = static_cast<std::uint64_t>(o.seed);
  if (o.chains > 0) cfg.chains = o.chains;
  cfg.chain.store_latents = o.store_latents;
  try {
    cfg.chain.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  const Dataset d = load_dataset(o.data, cfg);
  const fs::path root(o.out);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw ConfigError("cannot create output directory '" + o.out + "'");

  std::vector<int> codes(cfg.chains, kOk);
  std::vector<std::string> errors(cfg.chains);
  detail::parallel_for(cfg.chains, detail::default_workers(), [&](int c) {
    ChainConfig cc = cfg.chain;
    // chain 0 keeps the configured seed so single-chain runs are reproducible from it
    if (c > 0) cc.seed = derive_seed(cfg.chain.seed, static_cast<std::uint64_t>(c));
    const fs::path dir = cfg.chains == 1 ? root : root / ("chain_" + std::to_string(c));
    Sampler s(d, cfg.hyper, cc);
    json man = {{"config_hash", cfg.hash()},
                {"config", cfg.source},
                {"chain", {{"iterations", cc.iterations}, {"burnin", cc.burnin}, {"thin", cc.thin}, {"index", c}}},
                {"data", fs::absolute(o.data).string()}};
    try {
      write_trace(dir, s.run(), d, man);
    } catch (const NumericError& e) {
      std::error_code ec2;
      fs::create_directories(dir, ec2);
      json dump = {{"error", e.what()}, {"state", state_json(s.state())}, {"seed", cc.seed}};
      write_text(dir / "abort_state.json", dump.dump(2) + "\n");
      codes[c] = kNumericAbort;
      errors[c] = e.what();
    }
  });
  for (int c = 0; c < cfg.chains; ++c)
    if (codes[c] != kOk) {
      std::cerr << "numeric abort in chain " << c << ": " << errors[c] << " (state dumped)\n";
      return codes[c];
    }
  return kOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
  std::vector<std::string> traces;
  std::string truth;  // optional
  std::string out;
  double alpha = 0.05;
};

struct ResponseReport {
  std::string name;
  Eigen::VectorXd mppi;
  std::vector<std::string> predictors;
  bool has_truth = false;
  Roc roc;
  double mean_interval_score = std::nan("");
};

// Pools draws from compatible traces.
inline Trace pool_traces(const std::vector<Trace>& ts) {
  Trace out = ts.at(0);
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const Trace& t = ts[i];
    if (t.m() != out.m() || t.confounder != out.confounder) throw DataError("traces are not compatible");
    out.gamma.insert(out.gamma.end(), t.gamma.begin(), t.gamma.end());
    out.beta.insert(out.beta.end(), t.beta.begin(), t.beta.end());
    out.theta.insert(out.theta.end(), t.theta.begin(), t.theta.end());
    out.graph.insert(out.graph.end(), t.graph.begin(), t.graph.end());
    out.R.insert(out.R.end(), t.R.begin(), t.R.end());
  }
  return out;
}

inline std::vector<ResponseReport> selection_report(const Trace& t, const json& man, const json* truth, double alpha) {
  const auto mp = mppi(t);
  std::vector<ResponseReport> out;
  for (int k = 0; k < t.m(); ++k) {
    ResponseReport r;
    r.name = man["responses"][k]["name"].get<std::string>();
    r.predictors = man["responses"][k]["predictors"].get<std::vector<std::string>>();
    r.mppi = mp[k];
    if (truth) {
      const auto tn = truth->at("predictors").get<std::vector<std::string>>();
      if (static_cast<int>(truth->at("beta").size()) != t.m()) throw DataError("truth and trace disagree on the number of responses");
      const auto tb = truth->at("beta")[k].get<std::vector<double>>();
      if (tb.size() != tn.size()) throw DataError("truth beta and predictor list differ in length");
      Eigen::VectorXd score;
      std::vector<char> lab;
      std::vector<double> scores;
      std::vector<double> is;
      for (std::size_t j = 0; j < r.predictors.size(); ++j) {
        if (t.confounder[k][j]) continue;
        const auto it = std::find(tn.begin(), tn.end(), r.predictors[j]);
        if (it == tn.end()) throw DataError("predictor '" + r.predictors[j] + "' missing from truth");
        const double b = tb[it - tn.begin()];
        scores.push_back(r.mppi[j]);
        lab.push_back(b != 0.0);
        if (b != 0.0 && t.size() >= 2) is.push_back(interval_score(beta_draws(t, k, static_cast<int>(j)), b, alpha));
      }
      if (scores.size() != tn.size()) throw DataError("truth and trace disagree on the predictor set");
      score = Eigen::Map<Eigen::VectorXd>(scores.data(), static_cast<Eigen::Index>(scores.size()));
      int pos = 0;
      for (char l : lab) pos += l;
      if (pos > 0 && pos < static_cast<int>(lab.size())) {
        r.has_truth = true;
        r.roc = roc_auc(score, lab);
      }
      if (!is.empty()) {
        double s = 0;
        for (double v : is) s += v;
        r.mean_interval_score = s / is.size();
      }
    }
    out.push_back(r);
  }
  return out;
}

inline int cmd_report(const ReportOptions& o) {
  if (o.traces.empty()) throw ConfigError("report needs at least one trace directory");
  if (o.out.empty()) throw ConfigError("--out is required");
  std::vector<Trace> ts;
  json man, hashes = json::array();
  for (const auto& dir : o.traces) {
    json m;
    ts.push_back(read_trace(dir, &m));
    if (man.is_null()) man = m;
    std::ifstream in(fs::path(dir) / "manifest.json", std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    hashes.push_back(hex64(fnv1a(text)));
  }
  const Trace t = pool_traces(ts);
  if (t.size() == 0) throw DataError("traces contain no draws");
  json truth;
  if (!o.truth.empty()) truth = read_json(o.truth);
  const auto rep = selection_report(t, man, o.truth.empty() ? nullptr : &truth, o.alpha);

  const fs::path root(o.out);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw ConfigError("cannot create output directory '" + o.out + "'");
  json out = {{"manifest_hashes", hashes}, {"draws", t.size()}, {"git_describe", git_describe()}};
  json resp = json::array();
  for (const auto& r : rep) {
    json jr = {{"name", r.name}};
    json sel = json::object();
    for (std::size_t j = 0; j < r.predictors.size(); ++j) sel[r.predictors[j]] = r.mppi[j];
    jr["mppi"] = sel;
    if (r.has_truth) {
      jr["auc"] = r.roc.auc;
      json curve = json::array();
      for (const auto& p : r.roc.curve) curve.push_back({p.fpr, p.tpr});
      jr["roc"] = curve;
    }
    if (!std::isnan(r.mean_interval_score)) jr["mean_interval_score"] = r.mean_interval_score;
    resp.push_back(jr);
  }
  out["responses"] = resp;
  const Eigen::MatrixXd e = eppi(t);
  out["eppi"] = detail::matrix_json(e);
  json rates = json::object();
  for (std::size_t i = 0; i < o.traces.size(); ++i) {
    const json m = read_json(fs::path(o.traces[i]) / "manifest.json");
    if (m.contains("acceptance")) rates[o.traces[i]] = m["acceptance"];
  }
  out["acceptance"] = rates;
  write_text(root / "report.json", out.dump(2) + "\n");

  // flat tables
  std::vector<std::string> h{"response", "predictor", "mppi"};
  std::ofstream mp(root / "mppi.csv");
  mp << "response,predictor,mppi\n";
  for (const auto& r : rep)
    for (std::size_t j = 0; j < r.predictors.size(); ++j) mp << r.name << "," << r.predictors[j] << "," << fmt(r.mppi[j]) << "\n";
  std::vector<std::string> names;
  for (const auto& r : rep) names.push_back(r.name);
  write_csv(root / "eppi.csv", names, e);
  const auto rows = summarize(t);
  std::ofstream sm(root / "summary.csv");
  sm << "parameter,mean,sd,q2.5,q50,q97.5\n";
  for (const auto& r : rows)
    sm << r.name << "," << fmt(r.mean) << "," << fmt(r.sd) << "," << fmt(r.q025) << "," << fmt(r.q50) << "," << fmt(r.q975) << "\n";
  bool any = false;
  for (const auto& r : rep) any |= r.has_truth;
  if (any) {
    std::ofstream rc(root / "roc.dat");  // gnuplot-friendly, one block per response
    for (const auto& r : rep) {
      if (!r.has_truth) continue;
      rc << "# " << r.name << " auc=" << fmt(r.roc.auc) << "\n";
      for (const auto& p : r.roc.curve) rc << fmt(p.fpr) << " " << fmt(p.tpr) << "\n";
      rc << "\n\n";
    }
  }
  return kOk;
}

// Batch report over simulate + fit output: <root>/rep_*/truth.json with the
// trace in <root>/rep_*/<fit_subdir>. Prints AUC mean (sd) per response.
inline int cmd_batch_report(const std::string& root, const std::string& fit_subdir, const std::string& out,
                            std::ostream& os = std::cout) {
  std::vector<fs::path> reps;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "truth.json") && fs::exists(e.path() / fit_subdir / "manifest.json"))
      reps.push_back(e.path());
  std::sort(reps.begin(), reps.end());
  if (reps.empty()) throw DataError("no fitted replicates under '" + root + "'");
  std::vector<std::string> names;
  std::vector<std::vector<double>> aucs, iss;
  std::vector<std::vector<Roc>> rocs;
  for (const auto& r : reps) {
    json man;
    const Trace t = read_trace(r / fit_subdir, &man);
    const json truth = read_json(r / "truth.json");
    const auto rep = selection_report(t, man, &truth, 0.05);
    if (names.empty()) {
      for (const auto& x : rep) names.push_back(x.name);
      aucs.resize(names.size());
      iss.resize(names.size());
      rocs.resize(names.size());
    }
    for (std::size_t k = 0; k < rep.size(); ++k) {
      if (rep[k].has_truth) {
        aucs[k].push_back(rep[k].roc.auc);
        rocs[k].push_back(rep[k].roc);
      }
      if (!std::isnan(rep[k].mean_interval_score)) iss[k].push_back(rep[k].mean_interval_score);
    }
  }
  json outj = {{"replicates", reps.size()}};
  json resp = json::array();
  os << "response  AUC mean (sd)  replicates\n";
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto s = aucs[k].empty() ? SummaryRow{names[k], std::nan(""), 0, 0, 0, 0} : summarize_draws(names[k], aucs[k]);
    char line[128];
    std::snprintf(line, sizeof line, "%-8s  %.2f (%.2f)    %zu\n", names[k].c_str(), s.mean, s.sd, aucs[k].size());
    os << line;
    resp.push_back({{"name", names[k]}, {"auc", aucs[k]}, {"auc_mean", s.mean}, {"auc_sd", s.sd},
                    {"interval_score", iss[k]}, {"mean_roc", average_roc(rocs[k])}});
  }
  outj["responses"] = resp;
  if (!out.empty()) {
    std::error_code ec;
    fs::create_directories(out, ec);
    write_text(fs::path(out) / "batch_report.json", outj.dump(2) + "\n");
  }
  return kOk;
}

}  // namespace bvsgcr
