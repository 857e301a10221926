#pragma once
// CSV data, JSON run configuration, trace directories and manifests.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "errors.hpp"
#include "model.hpp"
#include "sampler.hpp"

#ifndef BVSGCR_GIT_DESCRIBE
#define BVSGCR_GIT_DESCRIBE "unknown"
#endif

namespace bvsgcr {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string git_describe() { return BVSGCR_GIT_DESCRIBE; }

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV. Header row required; empty cells (or NA) are missing.

struct Table {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

inline std::string fmt(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') quoted = !quoted;
    else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') cur += c;
  }
  out.push_back(cur);
  return out;
}
inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}
}  // namespace detail

inline Table read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  for (auto& h : detail::split_csv(line)) t.header.push_back(detail::trim(h));
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != t.header.size())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    std::vector<double> r;
    for (const auto& c0 : cells) {
      const std::string c = detail::trim(c0);
      if (c.empty() || c == "NA" || c == "nan" || c == "NaN") {
        r.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(c, &used);
      } catch (...) {
        used = 0;
      }
      if (used != c.size()) throw DataError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + c + "'");
      r.push_back(v);
    }
    rows.push_back(std::move(r));
  }
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.values(i, j) = rows[i][j];
  return t;
}

inline void write_csv(const fs::path& path, const std::vector<std::string>& header, const Eigen::MatrixXd& v) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << "\n";
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) out << (j ? "," : "") << fmt(v(i, j));
    out << "\n";
  }
}

inline void write_text(const fs::path& path, const std::string& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << s;
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path.string() + "': " + e.what());
  }
}

// Missing predictor cells are replaced by the column median.
inline int impute_median(Eigen::MatrixXd& x) {
  int filled = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::vector<double> obs;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (!std::isnan(x(i, j))) obs.push_back(x(i, j));
    if (obs.empty()) throw DataError("predictor column " + std::to_string(j) + " has no observed values");
    std::sort(obs.begin(), obs.end());
    const double med = obs.size() % 2 ? obs[obs.size() / 2] : 0.5 * (obs[obs.size() / 2 - 1] + obs[obs.size() / 2]);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (std::isnan(x(i, j))) {
        x(i, j) = med;
        ++filled;
      }
  }
  return filled;
}

// Rank-based normal scores (mid-ranks), missing cells left alone.
inline void quantile_transform(Eigen::Ref<Eigen::VectorXd> y) {
  std::vector<int> obs;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (!std::isnan(y[i])) obs.push_back(static_cast<int>(i));
  const double n = static_cast<double>(obs.size());
  Eigen::VectorXd out = y;
  for (int i : obs) {
    double below = 0, tie = 0;
    for (int q : obs) {
      below += y[q] < y[i];
      tie += y[q] == y[i];
    }
    out[i] = norm_quantile((below + 0.5 * tie) / n);
  }
  y = out;
}

// ---------------------------------------------------------------------------
// Run configuration.
//
// {
//   "responses": [{"name": "y1", "family": "ordinal", "categories": 3,
//                  "expected_size": 5, "size_variance": 9}, ...],
//   "slab_variance": 1, "intercept": true, "confounders": ["age"],
//   "chain": {"iterations": 30000, "burnin": 10000, "thin": 20, "seed": 1}
// }

struct ResponseSpec {
  std::string name;
  Family family;
  double a = 0, b = 0;
  double expected_size = 0, size_variance = 0;  // used when a/b absent
  std::vector<std::string> confounders;
  std::string transform = "none";
};

struct RunConfig {
  std::vector<ResponseSpec> responses;
  Hyperparams hyper;
  ChainConfig chain;
  bool intercept = true;
  bool standardize = false;
  std::vector<std::string> confounders;  // shared by all responses
  int chains = 1;
  json source;

  std::string hash() const { return hex64(fnv1a(source.dump())); }
};

namespace detail {
template <class T>
T get_or(const json& j, const char* key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: field '") + key + "' has the wrong type");
  }
}
inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("config: unknown field '" + it.key() + "' in " + where);
}
}  // namespace detail

inline RunConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown(j, {"responses", "slab_variance", "intercept", "standardize", "confounders", "chain",
                             "confounder_variance", "cutpoint_sd", "nb_prior", "$schema"},
                         "config");
  RunConfig c;
  c.source = j;
  if (!j.contains("responses") || !j["responses"].is_array() || j["responses"].empty())
    throw ConfigError("config: 'responses' must be a non-empty array");
  for (const auto& r : j["responses"]) {
    if (!r.is_object()) throw ConfigError("config: each response must be an object");
    detail::reject_unknown(r, {"name", "family", "categories", "trials", "a", "b", "expected_size", "size_variance",
                               "confounders", "transform"},
                           "response");
    ResponseSpec s;
    s.name = detail::get_or<std::string>(r, "name", "");
    if (s.name.empty()) throw ConfigError("config: response without a name");
    const std::string fam = detail::get_or<std::string>(r, "family", "");
    Kind k;
    try {
      k = kind_from_name(fam);
    } catch (const std::exception&) {
      throw ConfigError("config: response '" + s.name + "' has unknown family '" + fam + "'");
    }
    switch (k) {
      case Kind::Gaussian: s.family = Family::gaussian(1.0); break;
      case Kind::BernoulliProbit: s.family = Family::bernoulli(); break;
      case Kind::OrdinalProbit: {
        const int cats = detail::get_or<int>(r, "categories", 0);
        if (cats < 2) throw ConfigError("config: ordinal response '" + s.name + "' needs categories >= 2");
        s.family = Family::ordinal(cats);
        break;
      }
      case Kind::BinomialLogit: {
        const int n = detail::get_or<int>(r, "trials", 0);
        if (n < 1) throw ConfigError("config: binomial response '" + s.name + "' needs trials >= 1");
        s.family = Family::binomial(n);
        break;
      }
      case Kind::NegBinomialLogit: s.family = Family::negbin(1.0); break;
    }
    s.a = detail::get_or<double>(r, "a", 0.0);
    s.b = detail::get_or<double>(r, "b", 0.0);
    s.expected_size = detail::get_or<double>(r, "expected_size", 5.0);
    s.size_variance = detail::get_or<double>(r, "size_variance", 9.0);
    if ((s.a > 0) != (s.b > 0)) throw ConfigError("config: give both 'a' and 'b' for response '" + s.name + "'");
    s.confounders = detail::get_or<std::vector<std::string>>(r, "confounders", {});
    s.transform = detail::get_or<std::string>(r, "transform", "none");
    if (s.transform != "none" && s.transform != "quantile")
      throw ConfigError("config: transform must be 'none' or 'quantile'");
    if (s.transform == "quantile" && k != Kind::Gaussian)
      throw ConfigError("config: the quantile transform applies to gaussian responses only");
    c.responses.push_back(s);
  }
  std::set<std::string> names;
  for (const auto& r : c.responses)
    if (!names.insert(r.name).second) throw ConfigError("config: duplicate response name '" + r.name + "'");
  c.hyper.v = detail::get_or<double>(j, "slab_variance", 1.0);
  c.hyper.confounder_variance = detail::get_or<double>(j, "confounder_variance", 100.0);
  c.hyper.cutpoint_sd = detail::get_or<double>(j, "cutpoint_sd", 10.0);
  if (j.contains("nb_prior")) {
    c.hyper.nb_shape = detail::get_or<double>(j["nb_prior"], "shape", 2.0);
    c.hyper.nb_rate = detail::get_or<double>(j["nb_prior"], "rate", 1.0);
  }
  c.intercept = detail::get_or<bool>(j, "intercept", true);
  c.standardize = detail::get_or<bool>(j, "standardize", false);
  c.confounders = detail::get_or<std::vector<std::string>>(j, "confounders", {});
  if (j.contains("chain")) {
    const json& ch = j["chain"];
    detail::reject_unknown(ch, {"iterations", "burnin", "thin", "seed", "chains", "adapt"}, "chain");
    c.chain.iterations = detail::get_or<long>(ch, "iterations", c.chain.iterations);
    c.chain.burnin = detail::get_or<long>(ch, "burnin", c.chain.burnin);
    c.chain.thin = detail::get_or<long>(ch, "thin", c.chain.thin);
    c.chain.seed = detail::get_or<std::uint64_t>(ch, "seed", c.chain.seed);
    c.chain.adapt = detail::get_or<bool>(ch, "adapt", true);
    c.chains = detail::get_or<int>(ch, "chains", 1);
  }
  try {
    c.chain.validate();
    if (!(c.hyper.v > 0)) throw ParameterError("slab_variance must be positive");
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.chains < 1) throw ConfigError("config: chains must be >= 1");
  return c;
}

// Data directory: Y.csv plus X.csv (shared) or X_<name>.csv per response.
inline Dataset load_dataset(const fs::path& dir, RunConfig& cfg) {
  if (!fs::is_directory(dir)) throw DataError("data directory '" + dir.string() + "' does not exist");
  const Table y = read_csv(dir / "Y.csv");
  const int m = static_cast<int>(cfg.responses.size());
  Dataset d;
  d.Y.resize(y.values.rows(), m);
  std::optional<Table> shared;
  if (fs::exists(dir / "X.csv")) shared = read_csv(dir / "X.csv");
  for (int k = 0; k < m; ++k) {
    const ResponseSpec& rs = cfg.responses[k];
    const auto it = std::find(y.header.begin(), y.header.end(), rs.name);
    if (it == y.header.end()) throw DataError("Y.csv has no column '" + rs.name + "'");
    d.Y.col(k) = y.values.col(it - y.header.begin());
    if (rs.transform == "quantile") quantile_transform(d.Y.col(k));
    d.families.push_back(rs.family);
    d.response_names.push_back(rs.name);
    Table x;
    const fs::path own = dir / ("X_" + rs.name + ".csv");
    if (fs::exists(own)) x = read_csv(own);
    else if (shared) x = *shared;
    else throw DataError("no predictors for response '" + rs.name + "' (need X.csv or " + own.filename().string() + ")");
    if (x.values.rows() != d.Y.rows()) throw DataError("predictor and response files disagree on the number of rows");
    impute_median(x.values);
    const int off = cfg.intercept ? 1 : 0;
    Eigen::MatrixXd xm(x.values.rows(), x.values.cols() + off);
    if (off) xm.col(0).setOnes();
    xm.rightCols(x.values.cols()) = x.values;
    std::vector<std::string> names;
    if (off) names.push_back("intercept");
    names.insert(names.end(), x.header.begin(), x.header.end());
    std::vector<char> conf(names.size(), 0);
    if (off) conf[0] = 1;
    std::vector<std::string> want = cfg.confounders;
    want.insert(want.end(), rs.confounders.begin(), rs.confounders.end());
    for (const auto& w : want) {
      const auto c = std::find(names.begin(), names.end(), w);
      if (c == names.end()) throw DataError("confounder '" + w + "' is not a predictor column");
      conf[c - names.begin()] = 1;
    }
    d.X.push_back(xm);
    d.confounder.push_back(conf);
    d.predictor_names.push_back(names);
  }
  if (cfg.standardize) {
    for (int k = 0; k < m; ++k)
      for (Eigen::Index j = 0; j < d.X[k].cols(); ++j) {
        if (d.confounder[k][j] && detail::is_intercept(d.X[k], j)) continue;
        auto col = d.X[k].col(j);
        const double mu = col.mean();
        const double sd = std::sqrt((col.array() - mu).square().sum() / std::max<Eigen::Index>(col.size() - 1, 1));
        if (sd > 0) col = (col.array() - mu) / sd;
      }
  }
  d.validate();
  // hyperparameters per response
  cfg.hyper.a.clear();
  cfg.hyper.b.clear();
  for (int k = 0; k < m; ++k) {
    const ResponseSpec& rs = cfg.responses[k];
    if (rs.a > 0) {
      cfg.hyper.a.push_back(rs.a);
      cfg.hyper.b.push_back(rs.b);
      continue;
    }
    try {
      const BetaHyper bh = elicit_beta_hyperparams(rs.expected_size, rs.size_variance, d.free_count(k));
      cfg.hyper.a.push_back(bh.a);
      cfg.hyper.b.push_back(bh.b);
    } catch (const ParameterError& e) {
      throw ConfigError("response '" + rs.name + "': " + e.what());
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Traces on disk. Columns are "<response>:<predictor>".

inline std::vector<std::string> coefficient_header(const Dataset& d) {
  std::vector<std::string> h;
  for (int k = 0; k < d.m(); ++k)
    for (const auto& n : d.predictor_names[k]) h.push_back(d.response_names[k] + ":" + n);
  return h;
}

inline json describe_responses(const Dataset& d) {
  json out = json::array();
  for (int k = 0; k < d.m(); ++k) {
    const Family& f = d.families[k];
    json r = {{"name", d.response_names[k]}, {"family", kind_name(f.kind)}, {"predictors", d.predictor_names[k]}};
    std::vector<int> conf(d.confounder[k].begin(), d.confounder[k].end());
    r["confounder"] = conf;
    if (f.kind == Kind::OrdinalProbit) r["categories"] = f.categories;
    if (f.kind == Kind::BinomialLogit) r["trials"] = f.trials;
    out.push_back(r);
  }
  return out;
}

inline void write_trace(const fs::path& dir, const Trace& t, const Dataset& d, json manifest) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + dir.string() + "'");
  const int m = d.m();
  const auto ncoef = coefficient_header(d).size();
  const Eigen::Index S = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd g(S, ncoef), b(S, ncoef);
  for (Eigen::Index s = 0; s < S; ++s) {
    Eigen::Index c = 0;
    for (int k = 0; k < m; ++k)
      for (int j = 0; j < d.p(k); ++j, ++c) {
        g(s, c) = t.gamma[s][k][j];
        b(s, c) = t.beta[s][k][j];
      }
  }
  write_csv(dir / "gamma.csv", coefficient_header(d), g);
  write_csv(dir / "beta.csv", coefficient_header(d), b);
  std::vector<std::string> th;
  for (int k = 0; k < m; ++k)
    for (std::size_t c = 0; c < (S ? t.theta[0][k].size() : 0); ++c)
      th.push_back(d.response_names[k] + ":theta" + std::to_string(c + 1));
  Eigen::MatrixXd tv(S, th.size());
  for (Eigen::Index s = 0; s < S; ++s) {
    Eigen::Index c = 0;
    for (int k = 0; k < m; ++k)
      for (double v : t.theta[s][k]) tv(s, c++) = v;
  }
  write_csv(dir / "theta.csv", th, tv);
  std::vector<std::string> pairs;
  for (int a = 0; a < m; ++a)
    for (int bb = a + 1; bb < m; ++bb) pairs.push_back(d.response_names[a] + ":" + d.response_names[bb]);
  Eigen::MatrixXd gr(S, pairs.size()), rr(S, pairs.size());
  for (Eigen::Index s = 0; s < S; ++s) {
    Eigen::Index c = 0;
    for (int a = 0; a < m; ++a)
      for (int bb = a + 1; bb < m; ++bb, ++c) {
        gr(s, c) = t.graph[s](a, bb);
        rr(s, c) = t.R[s](a, bb);
      }
  }
  write_csv(dir / "graph.csv", pairs, gr);
  write_csv(dir / "R.csv", pairs, rr);
  if (!t.Zt.empty()) {
    // one row per (draw, observation)
    std::vector<std::string> h{"draw", "row"};
    h.insert(h.end(), d.response_names.begin(), d.response_names.end());
    Eigen::MatrixXd z(S * d.n(), m + 2);
    for (Eigen::Index s = 0; s < S; ++s)
      for (int i = 0; i < d.n(); ++i) {
        z(s * d.n() + i, 0) = static_cast<double>(s);
        z(s * d.n() + i, 1) = i;
        z.row(s * d.n() + i).tail(m) = t.Zt[s].row(i);
      }
    write_csv(dir / "ztilde.csv", h, z);
  }
  json rates = json::object();
  for (const auto& [k, v] : t.stats) rates[k] = {{"proposed", v.proposed}, {"accepted", v.accepted}, {"rate", v.rate()}};
  manifest["acceptance"] = rates;
  manifest["draws"] = t.size();
  manifest["seed"] = t.seed;
  manifest["responses"] = describe_responses(d);
  manifest["git_describe"] = git_describe();
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// Reads back what write_trace wrote (latents excluded).
inline Trace read_trace(const fs::path& dir, json* manifest_out = nullptr) {
  if (!fs::exists(dir / "manifest.json")) throw DataError("'" + dir.string() + "' is not a trace directory");
  const json man = read_json(dir / "manifest.json");
  Trace t;
  t.seed = man.value("seed", std::uint64_t{0});
  std::vector<int> sizes;
  for (const auto& r : man.at("responses")) {
    const Kind k = kind_from_name(r.at("family").get<std::string>());
    Family f;
    switch (k) {
      case Kind::Gaussian: f = Family::gaussian(1.0); break;
      case Kind::BernoulliProbit: f = Family::bernoulli(); break;
      case Kind::OrdinalProbit: f = Family::ordinal(r.at("categories").get<int>()); break;
      case Kind::BinomialLogit: f = Family::binomial(r.at("trials").get<int>()); break;
      case Kind::NegBinomialLogit: f = Family::negbin(1.0); break;
    }
    t.families.push_back(f);
    const auto conf = r.at("confounder").get<std::vector<int>>();
    t.confounder.emplace_back(conf.begin(), conf.end());
    sizes.push_back(static_cast<int>(conf.size()));
  }
  const int m = t.m();
  const Table g = read_csv(dir / "gamma.csv"), b = read_csv(dir / "beta.csv"), th = read_csv(dir / "theta.csv");
  const Table gr = read_csv(dir / "graph.csv"), rr = read_csv(dir / "R.csv");
  const Eigen::Index S = g.values.rows();
  int total = 0;
  for (int s : sizes) total += s;
  if (g.values.cols() != total || b.values.rows() != S) throw DataError("trace files disagree with the manifest");
  for (Eigen::Index s = 0; s < S; ++s) {
    std::vector<std::vector<char>> gs(m);
    std::vector<Eigen::VectorXd> bs(m);
    std::vector<std::vector<double>> ts(m);
    int c = 0, tc = 0;
    for (int k = 0; k < m; ++k) {
      bs[k].resize(sizes[k]);
      for (int j = 0; j < sizes[k]; ++j, ++c) {
        gs[k].push_back(g.values(s, c) != 0.0);
        bs[k][j] = b.values(s, c);
      }
      const std::string prefix = man["responses"][k]["name"].get<std::string>() + ":theta";
      while (tc < static_cast<int>(th.header.size()) && th.header[tc].rfind(prefix, 0) == 0) ts[k].push_back(th.values(s, tc++));
    }
    t.gamma.push_back(gs);
    t.beta.push_back(bs);
    t.theta.push_back(ts);
    Adjacency a = Adjacency::Zero(m, m);
    Eigen::MatrixXd r = Eigen::MatrixXd::Identity(m, m);
    int pc = 0;
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j, ++pc) {
        a(i, j) = a(j, i) = gr.values(s, pc) != 0.0;
        r(i, j) = r(j, i) = rr.values(s, pc);
      }
    t.graph.push_back(a);
    t.R.push_back(r);
  }
  if (manifest_out) *manifest_out = man;
  return t;
}

}  // namespace bvsgcr
