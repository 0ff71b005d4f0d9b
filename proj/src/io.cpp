#include "lowrank/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "lowrank/conditionals.hpp"
#include "lowrank/errors.hpp"

namespace lowrank {

namespace {

std::vector<std::string> split(const std::string& line, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
}

long long parse_int_field(const std::string& field, const std::string& where,
                          const char* what) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw data_error(where + ": bad " + what + " '" + field + "'");
  return v;
}

double parse_real_field(const std::string& field, const std::string& where,
                        const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size() ||
      !std::isfinite(v))
    throw data_error(where + ": bad " + what + " '" + field + "'");
  return v;
}

int index_for(long long raw, std::unordered_map<long long, int>& lookup,
              std::vector<long long>& order) {
  auto [it, fresh] = lookup.try_emplace(raw, static_cast<int>(order.size()));
  if (fresh) order.push_back(raw);
  return it->second;
}

const std::string& separator_for(RatingsFileFormat format) {
  static const std::string tab = "\t", colons = "::", comma = ",";
  switch (format) {
    case RatingsFileFormat::TabSeparated: return tab;
    case RatingsFileFormat::DoubleColon: return colons;
    default: return comma;
  }
}

std::ostream& full_precision(std::ostream& os) {
  return os << std::setprecision(17);
}

}  // namespace

RatingsFileFormat ratings_format_from_name(const std::string& name) {
  if (name == "tab") return RatingsFileFormat::TabSeparated;
  if (name == "double-colon" || name == "dat")
    return RatingsFileFormat::DoubleColon;
  if (name == "csv") return RatingsFileFormat::CSVHeader;
  throw usage_error("unknown ratings format '" + name +
                    "' (expected tab, double-colon, or csv)");
}

std::string ratings_format_name(RatingsFileFormat format) {
  switch (format) {
    case RatingsFileFormat::TabSeparated: return "tab";
    case RatingsFileFormat::DoubleColon: return "double-colon";
    default: return "csv";
  }
}

RatingsData parse_ratings(const std::filesystem::path& path,
                          RatingsFileFormat format) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open ratings file: " + path.string());
  const std::string& sep = separator_for(format);
  IdMaps ids;
  std::vector<Observation> entries;
  std::string line;
  long long lineno = 0;
  bool skipped_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (format == RatingsFileFormat::CSVHeader && !skipped_header) {
      skipped_header = true;
      continue;
    }
    if (line.empty()) continue;
    std::string where = path.string() + ":" + std::to_string(lineno);
    auto fields = split(line, sep);
    if (fields.size() < 3)
      throw data_error(where + ": expected at least 3 fields, got '" + line +
                       "'");
    long long user = parse_int_field(fields[0], where, "user id");
    long long item = parse_int_field(fields[1], where, "item id");
    if (user <= 0 || item <= 0)
      throw data_error(where + ": ids must be positive, got '" + line + "'");
    double rating = parse_real_field(fields[2], where, "rating");
    entries.push_back({index_for(user, ids.user_index, ids.user_ids),
                       index_for(item, ids.item_index, ids.item_ids), rating});
  }
  if (entries.empty())
    throw usage_error("ratings file has no data lines: " + path.string());
  ObservationSet obs(static_cast<int>(ids.user_ids.size()),
                     static_cast<int>(ids.item_ids.size()), std::move(entries));
  return {std::move(obs), std::move(ids)};
}

std::string serialize_ratings(const RatingsData& data,
                              RatingsFileFormat format) {
  const std::string& sep = separator_for(format);
  std::ostringstream out;
  full_precision(out);
  if (format == RatingsFileFormat::CSVHeader)
    out << "userId,movieId,rating,timestamp\n";
  for (const auto& e : data.observations.entries()) {
    out << data.ids.user_ids[e.row] << sep << data.ids.item_ids[e.col] << sep
        << e.value << sep << 0 << '\n';
  }
  return out.str();
}

std::pair<ObservationSet, ObservationSet> train_test_split(
    const ObservationSet& obs, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0) || !(ratio < 1.0))
    throw usage_error("train_test_split: ratio must lie in (0,1)");
  const std::int64_t n = obs.size();
  if (n < 2) throw usage_error("train_test_split: need at least 2 entries");
  std::vector<std::int64_t> pos(n);
  std::iota(pos.begin(), pos.end(), std::int64_t{0});
  RngStream rng(seed);
  for (std::int64_t t = 0; t + 1 < n; ++t) {
    std::int64_t pick =
        t + static_cast<std::int64_t>(rng.next_double() *
                                      static_cast<double>(n - t));
    if (pick >= n) pick = n - 1;
    std::swap(pos[t], pos[pick]);
  }
  const std::int64_t n_train = std::llround(ratio * static_cast<double>(n));
  std::vector<std::int64_t> train_pos(pos.begin(), pos.begin() + n_train);
  std::vector<std::int64_t> test_pos(pos.begin() + n_train, pos.end());
  std::sort(train_pos.begin(), train_pos.end());
  std::sort(test_pos.begin(), test_pos.end());
  auto take = [&](const std::vector<std::int64_t>& which) {
    std::vector<Observation> part;
    part.reserve(which.size());
    for (std::int64_t k : which) part.push_back(obs.entry(k));
    return ObservationSet(obs.rows(), obs.cols(), std::move(part));
  };
  return {take(train_pos), take(test_pos)};
}

// -- Manifest -----------------------------------------------------------------

void RunManifest::validate() const {
  if (backend != "gibbs" && backend != "vb")
    throw usage_error("manifest: backend must be gibbs or vb");
  if (backend == "vb" && !std::holds_alternative<InverseGammaPrior>(prior))
    throw usage_error(
        "manifest: the vb backend supports only the invgamma prior");
  if (!(split_ratio > 0.0) || !(split_ratio < 1.0))
    throw usage_error("manifest: split ratio must lie in (0,1)");
  if (!(vb_tolerance > 0.0) || vb_max_iterations <= 0)
    throw usage_error("manifest: bad vb convergence settings");
  if (dataset_path.has_value() == synthetic.has_value())
    throw usage_error(
        "manifest: exactly one of dataset and synthetic must be given");
  if (dataset_path && !dataset_format)
    throw usage_error("manifest: dataset needs a format");
  lowrank::validate(prior);
  sampler.validate();
  if (synthetic) synthetic->validate();
}

namespace {

nlohmann::json prior_to_json(const PriorSpec& prior) {
  nlohmann::json j;
  j["family"] = prior_family(prior);
  std::visit(
      [&j](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, FixedPrior>) {
          j["gamma0"] = p.gamma0;
        } else if constexpr (std::is_same_v<T, InverseGammaPrior>) {
          j["a"] = p.shape;
          j["b"] = p.rate;
        } else if constexpr (std::is_same_v<T, GammaPrior>) {
          j["beta2"] = p.beta * p.beta;
        } else {
          j["eps"] = p.spike;
          j["C"] = p.slab;
          j["p"] = p.slab_prob;
        }
      },
      prior);
  return j;
}

PriorSpec prior_from_json(const nlohmann::json& j) {
  std::string family = j.at("family").get<std::string>();
  if (family == "fixed") return FixedPrior{j.at("gamma0").get<double>()};
  if (family == "invgamma")
    return InverseGammaPrior{j.at("a").get<double>(), j.at("b").get<double>()};
  if (family == "gamma")
    return GammaPrior{std::sqrt(j.at("beta2").get<double>())};
  if (family == "discrete")
    return DiscretePrior{j.at("eps").get<double>(), j.at("C").get<double>(),
                         j.at("p").get<double>()};
  throw data_error("manifest: unknown prior family '" + family + "'");
}

}  // namespace

std::string manifest_json(const RunManifest& m) {
  nlohmann::json j;
  j["backend"] = m.backend;
  if (m.dataset_path) {
    j["dataset"] = {{"path", *m.dataset_path},
                    {"format", ratings_format_name(*m.dataset_format)}};
  }
  if (m.synthetic) {
    const SyntheticSpec& s = *m.synthetic;
    j["synthetic"] = {{"m", s.m},
                      {"r", s.r},
                      {"entry_sd", s.entry_sd},
                      {"observe_fraction", s.observe_fraction},
                      {"noise_sd", s.noise_sd},
                      {"seed", s.seed},
                      {"with_replacement", s.with_replacement}};
  }
  j["prior"] = prior_to_json(m.prior);
  j["sampler"] = {{"rank", m.sampler.rank},
                  {"iterations", m.sampler.iterations},
                  {"burn_in", m.sampler.burn_in},
                  {"thinning", m.sampler.thinning},
                  {"seed", m.sampler.seed},
                  {"noise_sd", m.sampler.noise_sd}};
  if (m.sampler.lambda)
    j["sampler"]["lambda"] = *m.sampler.lambda;
  else
    j["sampler"]["lambda"] = nullptr;
  j["vb"] = {{"tolerance", m.vb_tolerance},
             {"max_iterations", m.vb_max_iterations}};
  j["split"] = {{"ratio", m.split_ratio}, {"seed", m.split_seed}};
  j["global_mean_offset"] = m.global_mean_offset;
  j["output_dir"] = m.output_dir;
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    RunManifest m;
    m.backend = j.at("backend").get<std::string>();
    if (j.contains("dataset")) {
      m.dataset_path = j["dataset"].at("path").get<std::string>();
      m.dataset_format =
          ratings_format_from_name(j["dataset"].at("format").get<std::string>());
    }
    if (j.contains("synthetic")) {
      const nlohmann::json& s = j["synthetic"];
      SyntheticSpec spec;
      spec.m = s.at("m").get<int>();
      spec.r = s.at("r").get<int>();
      spec.entry_sd = s.at("entry_sd").get<double>();
      spec.observe_fraction = s.at("observe_fraction").get<double>();
      spec.noise_sd = s.at("noise_sd").get<double>();
      spec.seed = s.at("seed").get<std::uint64_t>();
      spec.with_replacement = s.at("with_replacement").get<bool>();
      m.synthetic = spec;
    }
    m.prior = prior_from_json(j.at("prior"));
    const nlohmann::json& sj = j.at("sampler");
    m.sampler.rank = sj.at("rank").get<int>();
    m.sampler.iterations = sj.at("iterations").get<int>();
    m.sampler.burn_in = sj.at("burn_in").get<int>();
    m.sampler.thinning = sj.at("thinning").get<int>();
    m.sampler.seed = sj.at("seed").get<std::uint64_t>();
    m.sampler.noise_sd = sj.at("noise_sd").get<double>();
    if (sj.contains("lambda") && !sj["lambda"].is_null())
      m.sampler.lambda = sj["lambda"].get<double>();
    m.vb_tolerance = j.at("vb").at("tolerance").get<double>();
    m.vb_max_iterations = j.at("vb").at("max_iterations").get<int>();
    m.split_ratio = j.at("split").at("ratio").get<double>();
    m.split_seed = j.at("split").at("seed").get<std::uint64_t>();
    m.global_mean_offset = j.value("global_mean_offset", false);
    m.output_dir = j.at("output_dir").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("manifest: ") + e.what());
  }
}

// -- Emission -----------------------------------------------------------------

std::string trace_gamma_csv(const std::vector<Eigen::VectorXd>& trace) {
  std::ostringstream out;
  full_precision(out);
  out << "iteration";
  if (!trace.empty())
    for (Eigen::Index h = 0; h < trace.front().size(); ++h)
      out << ",gamma_" << (h + 1);
  out << '\n';
  for (std::size_t t = 0; t < trace.size(); ++t) {
    out << (t + 1);
    for (Eigen::Index h = 0; h < trace[t].size(); ++h) out << ',' << trace[t][h];
    out << '\n';
  }
  return out.str();
}

std::string trace_rmse_csv(const std::vector<double>& trace) {
  std::ostringstream out;
  full_precision(out);
  out << "iteration,rmse\n";
  for (std::size_t t = 0; t < trace.size(); ++t)
    out << (t + 1) << ',' << trace[t] << '\n';
  return out.str();
}

std::string trace_entries_csv(const std::vector<EntryTrace>& traces) {
  std::ostringstream out;
  full_precision(out);
  out << "iteration";
  for (const auto& tr : traces) out << ',' << tr.row << ':' << tr.col;
  out << '\n';
  std::size_t len = traces.empty() ? 0 : traces.front().values.size();
  for (const auto& tr : traces)
    if (tr.values.size() != len)
      throw usage_error("trace_entries_csv: ragged traces");
  for (std::size_t t = 0; t < len; ++t) {
    out << (t + 1);
    for (const auto& tr : traces) out << ',' << tr.values[t];
    out << '\n';
  }
  return out.str();
}

std::vector<EntryTrace> parse_trace_entries_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty())
    throw data_error("entry trace: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split(line, ",");
  if (header.empty() || header[0] != "iteration")
    throw data_error("entry trace: bad header '" + line + "'");
  std::vector<EntryTrace> traces;
  for (std::size_t c = 1; c < header.size(); ++c) {
    auto ij = split(header[c], ":");
    if (ij.size() != 2)
      throw data_error("entry trace: bad column label '" + header[c] + "'");
    EntryTrace tr;
    tr.row = static_cast<int>(
        parse_int_field(ij[0], "entry trace header", "row index"));
    tr.col = static_cast<int>(
        parse_int_field(ij[1], "entry trace header", "column index"));
    traces.push_back(std::move(tr));
  }
  long long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string where = "entry trace:" + std::to_string(lineno);
    auto fields = split(line, ",");
    if (fields.size() != header.size())
      throw data_error(where + ": wrong field count");
    for (std::size_t c = 1; c < fields.size(); ++c)
      traces[c - 1].values.push_back(
          parse_real_field(fields[c], where, "trace value"));
  }
  return traces;
}

std::string acf_csv(const std::vector<EntryTrace>& traces, int max_lag) {
  std::ostringstream out;
  full_precision(out);
  out << "entry,lag,value\n";
  for (const auto& tr : traces) {
    AcfResult r = acf(tr.values, max_lag);
    for (int lag = 0; lag <= max_lag; ++lag)
      out << tr.row << ':' << tr.col << ',' << lag << ',' << r.values[lag]
          << '\n';
  }
  return out.str();
}

std::string theta_mean_csv(const PosteriorSummary& summary) {
  std::ostringstream out;
  full_precision(out);
  out << "i,j,value\n";
  if (summary.dense()) {
    const Eigen::MatrixXd& theta = *summary.theta_mean;
    for (Eigen::Index i = 0; i < theta.rows(); ++i)
      for (Eigen::Index j = 0; j < theta.cols(); ++j)
        out << i << ',' << j << ',' << theta(i, j) << '\n';
  } else {
    for (const auto& c : summary.cell_means)
      out << c.row << ',' << c.col << ',' << c.value << '\n';
  }
  return out.str();
}

std::string factor_csv(const Eigen::MatrixXd& factors) {
  std::ostringstream out;
  full_precision(out);
  out << "index,column,value\n";
  for (Eigen::Index i = 0; i < factors.rows(); ++i)
    for (Eigen::Index h = 0; h < factors.cols(); ++h)
      out << i << ',' << h << ',' << factors(i, h) << '\n';
  return out.str();
}

Eigen::MatrixXd parse_factor_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw data_error("factor csv: empty");
  struct Triple {
    int i, h;
    double v;
  };
  std::vector<Triple> triples;
  int rows = 0, cols = 0;
  long long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string where = "factor csv:" + std::to_string(lineno);
    auto fields = split(line, ",");
    if (fields.size() != 3) throw data_error(where + ": wrong field count");
    Triple t;
    t.i = static_cast<int>(parse_int_field(fields[0], where, "row index"));
    t.h = static_cast<int>(parse_int_field(fields[1], where, "column index"));
    t.v = parse_real_field(fields[2], where, "value");
    if (t.i < 0 || t.h < 0) throw data_error(where + ": negative index");
    rows = std::max(rows, t.i + 1);
    cols = std::max(cols, t.h + 1);
    triples.push_back(t);
  }
  if (triples.empty()) throw data_error("factor csv: no data");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  for (const auto& t : triples) out(t.i, t.h) = t.v;
  return out;
}

std::string id_map_csv(const std::vector<long long>& ids) {
  std::ostringstream out;
  out << "index,id\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    out << i << ',' << ids[i] << '\n';
  return out.str();
}

std::vector<long long> parse_id_map_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw data_error("id map: empty");
  std::vector<long long> ids;
  long long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string where = "id map:" + std::to_string(lineno);
    auto fields = split(line, ",");
    if (fields.size() != 2) throw data_error(where + ": wrong field count");
    long long idx = parse_int_field(fields[0], where, "index");
    if (idx != static_cast<long long>(ids.size()))
      throw data_error(where + ": indexes must be dense and increasing");
    ids.push_back(parse_int_field(fields[1], where, "id"));
  }
  return ids;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write file: " + path.string());
  out << content;
  if (!out) throw data_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// -- CLI ----------------------------------------------------------------------

namespace {

void apply_thread_cap(int flag_value) {
  int cap = 0;
  if (flag_value > 0) {
    cap = flag_value;
  } else if (const char* env = std::getenv("LOWRANK_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v > 0)
      cap = static_cast<int>(v);
    else
      std::cerr << "ignoring invalid LOWRANK_THREADS value '" << env << "'\n";
  }
  if (cap > 0) {
#ifdef _OPENMP
    omp_set_num_threads(cap);
#endif
  }
}

struct PriorFlags {
  std::string family = "fixed";
  double gamma0 = 1.0;
  double a = 1.0;
  double b = 0.1;
  double beta2 = 500.0;
  double eps = 0.05;
  double C = 1.0;
  double p = 0.05;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--prior", family,
                    "prior family: fixed, invgamma, gamma, discrete")
        ->required();
    cmd->add_option("--gamma0", gamma0, "fixed prior: the scale value");
    cmd->add_option("--a", a, "invgamma prior shape");
    cmd->add_option("--b", b, "invgamma prior rate");
    cmd->add_option("--beta2", beta2, "gamma prior squared penalty weight");
    cmd->add_option("--eps", eps, "discrete prior spike value");
    cmd->add_option("--C", C, "discrete prior slab value");
    cmd->add_option("--p", p, "discrete prior slab probability");
  }

  PriorSpec build() const {
    if (family == "fixed") return FixedPrior{gamma0};
    if (family == "invgamma") return InverseGammaPrior{a, b};
    if (family == "gamma") return GammaPrior{std::sqrt(beta2)};
    if (family == "discrete") return DiscretePrior{eps, C, p};
    throw usage_error("unknown prior family '" + family + "'");
  }
};

struct SamplerFlags {
  int rank = 5;
  int iterations = 1000;
  int burn_in = 100;
  int thinning = 10;
  std::uint64_t seed = 1;
  double noise_sd = 1.0;
  double lambda = 0.0;  // 0: default tempering n/(2 s^2)

  void add_to(CLI::App* cmd) {
    cmd->add_option("--K,--rank", rank, "fitted rank");
    cmd->add_option("--iters", iterations, "sampler iterations");
    cmd->add_option("--burnin", burn_in, "burn-in iterations");
    cmd->add_option("--thin", thinning, "thinning stride");
    cmd->add_option("--seed", seed, "sampler seed");
    cmd->add_option("--noise-sd", noise_sd,
                    "noise scale driving the default tempering");
    cmd->add_option("--lambda", lambda,
                    "explicit inverse temperature (0 = default)");
  }

  SamplerConfig build() const {
    SamplerConfig config;
    config.rank = rank;
    config.iterations = iterations;
    config.burn_in = burn_in;
    config.thinning = thinning;
    config.seed = seed;
    config.noise_sd = noise_sd;
    if (lambda > 0.0) config.lambda = lambda;
    return config;
  }
};

ObservationSet shift_values(const ObservationSet& obs, double delta) {
  std::vector<Observation> entries = obs.entries();
  for (auto& e : entries) e.value += delta;
  return ObservationSet(obs.rows(), obs.cols(), std::move(entries));
}

double mean_value(const ObservationSet& obs) {
  double sum = 0.0;
  for (const auto& e : obs.entries()) sum += e.value;
  return obs.empty() ? 0.0 : sum / static_cast<double>(obs.size());
}

struct FitOutputs {
  double holdout = 0.0;
  double seconds = 0.0;
  double offset = 0.0;
  int retained_or_iters = 0;
  bool converged = true;
};

// Fits on train, scores on test, writes backend artifacts. test cells are
// shifted by -offset so predictions in the offset-free model line up.
FitOutputs fit_and_score(const RunManifest& manifest,
                         const ObservationSet& train,
                         const ObservationSet& test, ClipRange clip,
                         const std::filesystem::path& outdir,
                         const Eigen::MatrixXd* reference) {
  FitOutputs out;
  out.offset = manifest.global_mean_offset ? mean_value(train) : 0.0;
  ObservationSet fit_train =
      out.offset != 0.0 ? shift_values(train, -out.offset) : train;
  ClipRange shifted_clip = clip;
  if (shifted_clip && out.offset != 0.0)
    shifted_clip = std::make_pair(shifted_clip->first - out.offset,
                                  shifted_clip->second - out.offset);
  auto shifted_test = [&]() {
    return out.offset != 0.0 ? shift_values(test, -out.offset) : test;
  };

  auto start = std::chrono::steady_clock::now();
  if (manifest.backend == "gibbs") {
    std::vector<std::pair<int, int>> tracked;
    if (static_cast<std::int64_t>(train.rows()) * train.cols() >
        kDenseCellLimit)
      for (const auto& e : test.entries()) tracked.emplace_back(e.row, e.col);
    GibbsRun run =
        run_gibbs(fit_train, manifest.prior, manifest.sampler, reference, tracked);
    out.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    if (!test.empty())
      out.holdout = holdout_rmse(run.summary, shifted_test(), shifted_clip);
    out.retained_or_iters = run.summary.retained_count;
    write_text_file(outdir / "theta_mean.csv", theta_mean_csv(run.summary));
    write_text_file(outdir / "trace_gamma.csv",
                    trace_gamma_csv(run.summary.gamma_trace));
    write_text_file(outdir / "trace_entries.csv",
                    trace_entries_csv(run.entry_traces));
    if (reference)
      write_text_file(outdir / "trace_rmse.csv",
                      trace_rmse_csv(run.summary.rmse_trace));
  } else {
    VBConfig config;
    config.rank = manifest.sampler.rank;
    config.seed = manifest.sampler.seed;
    config.noise_sd = manifest.sampler.noise_sd;
    config.lambda = manifest.sampler.lambda;
    const auto& ig = std::get<InverseGammaPrior>(manifest.prior);
    config.prior_shape = ig.shape;
    config.prior_rate = ig.rate;
    config.tolerance = manifest.vb_tolerance;
    config.max_iterations = manifest.vb_max_iterations;
    VBResult result = run_vb(fit_train, config);
    out.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
    FactorState point = vb_point_estimate(result.state);
    if (!test.empty())
      out.holdout = holdout_rmse(point, shifted_test(), shifted_clip);
    out.retained_or_iters = result.iterations;
    out.converged = result.converged;
    write_text_file(outdir / "factors_row.csv", factor_csv(point.row_factors));
    write_text_file(outdir / "factors_col.csv", factor_csv(point.col_factors));
    write_text_file(outdir / "vb_delta.csv", trace_rmse_csv(result.delta_trace));
  }
  return out;
}

void write_result_json(const std::filesystem::path& outdir,
                       const RunManifest& manifest, const FitOutputs& fit,
                       const char* rmse_kind) {
  nlohmann::json j;
  j["rmse"] = fit.holdout;
  j["rmse_kind"] = rmse_kind;
  j["offset"] = fit.offset;
  j["seconds"] = fit.seconds;
  j["converged"] = fit.converged;
  j[manifest.backend == "gibbs" ? "retained" : "iterations"] =
      fit.retained_or_iters;
  j["manifest"] = nlohmann::json::parse(manifest_json(manifest));
  write_text_file(outdir / "result.json", j.dump(2) + "\n");
}

int do_simulate(const RunManifest& manifest_in) {
  RunManifest manifest = manifest_in;
  manifest.validate();
  std::filesystem::path outdir(manifest.output_dir);
  std::filesystem::create_directories(outdir);
  write_text_file(outdir / "manifest.json", manifest_json(manifest));

  RngStream data_rng(manifest.synthetic->seed);
  SyntheticData data = generate_synthetic(*manifest.synthetic, data_rng);

  FitOutputs fit;
  auto start = std::chrono::steady_clock::now();
  if (manifest.backend == "gibbs") {
    GibbsRun run =
        run_gibbs(data.observations, manifest.prior, manifest.sampler,
                  &data.truth);
    fit.holdout = rmse(*run.summary.theta_mean, data.truth);
    fit.retained_or_iters = run.summary.retained_count;
    write_text_file(outdir / "theta_mean.csv", theta_mean_csv(run.summary));
    write_text_file(outdir / "trace_gamma.csv",
                    trace_gamma_csv(run.summary.gamma_trace));
    write_text_file(outdir / "trace_rmse.csv",
                    trace_rmse_csv(run.summary.rmse_trace));
    write_text_file(outdir / "trace_entries.csv",
                    trace_entries_csv(run.entry_traces));
  } else {
    VBConfig config;
    config.rank = manifest.sampler.rank;
    config.seed = manifest.sampler.seed;
    config.noise_sd = manifest.sampler.noise_sd;
    config.lambda = manifest.sampler.lambda;
    const auto& ig = std::get<InverseGammaPrior>(manifest.prior);
    config.prior_shape = ig.shape;
    config.prior_rate = ig.rate;
    config.tolerance = manifest.vb_tolerance;
    config.max_iterations = manifest.vb_max_iterations;
    VBResult result = run_vb(data.observations, config);
    FactorState point = vb_point_estimate(result.state);
    fit.holdout =
        rmse(point.row_factors * point.col_factors.transpose(), data.truth);
    fit.retained_or_iters = result.iterations;
    fit.converged = result.converged;
    write_text_file(outdir / "factors_row.csv", factor_csv(point.row_factors));
    write_text_file(outdir / "factors_col.csv", factor_csv(point.col_factors));
    write_text_file(outdir / "vb_delta.csv", trace_rmse_csv(result.delta_trace));
  }
  fit.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  write_result_json(outdir, manifest, fit, "truth");
  std::cout << "rmse " << std::setprecision(4) << std::fixed << fit.holdout
            << "\n";
  return 0;
}

int do_fit(const RunManifest& manifest_in, ClipRange clip) {
  RunManifest manifest = manifest_in;
  manifest.validate();
  std::filesystem::path outdir(manifest.output_dir);
  std::filesystem::create_directories(outdir);
  write_text_file(outdir / "manifest.json", manifest_json(manifest));

  RatingsData data =
      parse_ratings(*manifest.dataset_path, *manifest.dataset_format);
  auto [train, test] =
      train_test_split(data.observations, manifest.split_ratio,
                       manifest.split_seed);
  write_text_file(outdir / "users.csv", id_map_csv(data.ids.user_ids));
  write_text_file(outdir / "items.csv", id_map_csv(data.ids.item_ids));

  FitOutputs fit = fit_and_score(manifest, train, test, clip, outdir, nullptr);
  write_result_json(outdir, manifest, fit, "holdout");
  std::cout << "holdout rmse " << std::setprecision(4) << std::fixed
            << fit.holdout << "\n";
  return 0;
}

int do_evaluate(const std::filesystem::path& artifacts,
                const std::filesystem::path& data_path,
                RatingsFileFormat format, ClipRange clip) {
  RunManifest manifest =
      manifest_from_json(read_text_file(artifacts / "manifest.json"));
  double offset = 0.0;
  {
    nlohmann::json r =
        nlohmann::json::parse(read_text_file(artifacts / "result.json"));
    offset = r.value("offset", 0.0);
  }
  std::vector<long long> users =
      parse_id_map_csv(read_text_file(artifacts / "users.csv"));
  std::vector<long long> items =
      parse_id_map_csv(read_text_file(artifacts / "items.csv"));
  std::unordered_map<long long, int> user_index, item_index;
  for (std::size_t i = 0; i < users.size(); ++i)
    user_index[users[i]] = static_cast<int>(i);
  for (std::size_t j = 0; j < items.size(); ++j)
    item_index[items[j]] = static_cast<int>(j);

  // raw-id test triplets; ids unseen at fit time fall back to prediction 0
  RatingsData test = parse_ratings(data_path, format);

  std::function<double(int, int)> predict;
  Eigen::MatrixXd theta, rows, cols;
  if (manifest.backend == "gibbs") {
    std::string text = read_text_file(artifacts / "theta_mean.csv");
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    theta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(users.size()),
                                  static_cast<Eigen::Index>(items.size()));
    Eigen::MatrixXd seen = Eigen::MatrixXd::Zero(theta.rows(), theta.cols());
    long long lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::string where = "theta_mean.csv:" + std::to_string(lineno);
      auto fields = split(line, ",");
      if (fields.size() != 3) throw data_error(where + ": wrong field count");
      int i = static_cast<int>(parse_int_field(fields[0], where, "row"));
      int j = static_cast<int>(parse_int_field(fields[1], where, "column"));
      if (i < 0 || i >= theta.rows() || j < 0 || j >= theta.cols())
        throw data_error(where + ": cell outside the training grid");
      theta(i, j) = parse_real_field(fields[2], where, "value");
      seen(i, j) = 1.0;
    }
    predict = [theta = std::move(theta), seen = std::move(seen)](int i,
                                                                 int j) {
      return seen(i, j) != 0.0 ? theta(i, j) : 0.0;
    };
  } else {
    rows = parse_factor_csv(read_text_file(artifacts / "factors_row.csv"));
    cols = parse_factor_csv(read_text_file(artifacts / "factors_col.csv"));
    if (rows.cols() != cols.cols())
      throw data_error("factor artifacts disagree on rank");
    predict = [rows = std::move(rows), cols = std::move(cols)](int i, int j) {
      if (i < 0 || i >= rows.rows() || j < 0 || j >= cols.rows()) return 0.0;
      return rows.row(i).dot(cols.row(j));
    };
  }

  double sq = 0.0;
  for (const auto& e : test.observations.entries()) {
    long long raw_user = test.ids.user_ids[e.row];
    long long raw_item = test.ids.item_ids[e.col];
    auto ui = user_index.find(raw_user);
    auto ij = item_index.find(raw_item);
    double pred = offset;
    if (ui != user_index.end() && ij != item_index.end())
      pred += predict(ui->second, ij->second);
    if (clip) pred = std::clamp(pred, clip->first, clip->second);
    double d = pred - e.value;
    sq += d * d;
  }
  double value =
      std::sqrt(sq / static_cast<double>(test.observations.size()));
  nlohmann::json j;
  j["rmse"] = value;
  j["test_file"] = data_path.string();
  j["entries"] = test.observations.size();
  write_text_file(artifacts / "evaluation.json", j.dump(2) + "\n");
  std::cout << "rmse " << std::setprecision(4) << std::fixed << value << "\n";
  return 0;
}

int do_diagnose(const std::filesystem::path& artifacts, int max_lag) {
  std::vector<EntryTrace> traces =
      parse_trace_entries_csv(read_text_file(artifacts / "trace_entries.csv"));
  for (const auto& tr : traces)
    if (static_cast<int>(tr.values.size()) <= max_lag)
      throw data_error("diagnose: traces shorter than max lag");
  write_text_file(artifacts / "acf.csv", acf_csv(traces, max_lag));
  std::cout << std::setprecision(4) << std::fixed;
  std::cout << "entry";
  for (int lag = 1; lag <= std::min(max_lag, 5); ++lag)
    std::cout << "\tlag" << lag;
  std::cout << "\n";
  for (const auto& tr : traces) {
    AcfResult r = acf(tr.values, max_lag);
    std::cout << tr.row << ':' << tr.col;
    for (int lag = 1; lag <= std::min(max_lag, 5); ++lag)
      std::cout << '\t' << r.values[lag];
    std::cout << "\n";
  }
  return 0;
}

int do_verify_quadrature(double tol) {
  double worst = 0.0;
  std::cout << "S\tbeta\tclosed form\tquadrature\trel err\n";
  for (double s : {0.1, 1.0, 4.0, 10.0, 100.0}) {
    for (double beta : {0.5, 1.0, 5.0}) {
      double exact = scale_integral_closed_form(s, beta);
      double quad = scale_integral_quadrature(s, beta);
      double rel = std::abs(quad - exact) / exact;
      worst = std::max(worst, rel);
      std::cout << s << '\t' << beta << '\t' << std::setprecision(12) << exact
                << '\t' << quad << '\t' << std::setprecision(3)
                << std::scientific << rel << std::defaultfloat << "\n";
    }
  }
  std::cout << "max relative error " << std::setprecision(3)
            << std::scientific << worst << std::defaultfloat << "\n";
  if (!(worst < tol)) {
    std::cerr << "quadrature disagrees with the closed form beyond " << tol
              << "\n";
    return 3;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Bayesian low-rank matrix completion"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "cap worker threads (overrides LOWRANK_THREADS)");

  // simulate
  auto* sim = app.add_subcommand(
      "simulate", "generate a synthetic problem, fit it, report RMSE vs truth");
  PriorFlags sim_prior;
  SamplerFlags sim_sampler;
  int sim_m = 100, sim_r = 2;
  double sim_entry_sd = 0.0, sim_observe = 0.2, sim_noise = 1.0;
  std::uint64_t sim_data_seed = 0;
  bool sim_without_replacement = false;
  std::string sim_backend = "gibbs", sim_out = "lowrank_out";
  double sim_vb_tol = 1e-4;
  int sim_vb_iters = 100;
  sim->add_option("--m", sim_m, "matrix side length")->required();
  sim->add_option("--r", sim_r, "true rank of the synthetic matrix");
  sim->add_option("--entry-sd", sim_entry_sd,
                  "sd of truth-factor entries (default sqrt(20/sqrt(m)))");
  sim->add_option("--observe-fraction", sim_observe, "observed fraction");
  sim->add_option("--data-noise-sd", sim_noise, "observation noise sd");
  sim->add_option("--data-seed", sim_data_seed,
                  "data seed (default: sampler seed)");
  sim->add_flag("--without-replacement", sim_without_replacement,
                "mask exactly round(fraction*m^2) distinct cells");
  sim->add_option("--backend", sim_backend, "gibbs or vb");
  sim->add_option("--out", sim_out, "output directory");
  sim->add_option("--vb-tol", sim_vb_tol, "vb convergence tolerance");
  sim->add_option("--vb-max-iters", sim_vb_iters, "vb iteration cap");
  sim_prior.add_to(sim);
  sim_sampler.add_to(sim);

  // fit
  auto* fit = app.add_subcommand(
      "fit", "fit a ratings dataset and report held-out RMSE");
  PriorFlags fit_prior;
  SamplerFlags fit_sampler;
  std::string fit_data, fit_format = "tab", fit_backend = "gibbs",
              fit_out = "lowrank_out";
  double fit_split = 0.8, fit_vb_tol = 1e-4;
  std::uint64_t fit_split_seed = 1;
  int fit_vb_iters = 100;
  bool fit_offset = false;
  std::vector<double> fit_clip;
  fit->add_option("--data", fit_data, "ratings file")->required();
  fit->add_option("--format", fit_format, "tab, double-colon, or csv");
  fit->add_option("--backend", fit_backend, "gibbs or vb");
  fit->add_option("--split", fit_split, "training fraction");
  fit->add_option("--split-seed", fit_split_seed, "split seed");
  fit->add_option("--out", fit_out, "output directory");
  fit->add_option("--vb-tol", fit_vb_tol, "vb convergence tolerance");
  fit->add_option("--vb-max-iters", fit_vb_iters, "vb iteration cap");
  fit->add_flag("--global-mean-offset", fit_offset,
                "center ratings on the training mean");
  fit->add_option("--clip", fit_clip, "clip predictions to [lo, hi]")
      ->expected(2);
  fit_prior.add_to(fit);
  fit_sampler.add_to(fit);

  // evaluate
  auto* eval = app.add_subcommand(
      "evaluate", "score saved artifacts against a ratings file");
  std::string eval_artifacts, eval_data, eval_format = "tab";
  std::vector<double> eval_clip;
  eval->add_option("--artifacts", eval_artifacts, "fit output directory")
      ->required();
  eval->add_option("--data", eval_data, "test ratings file")->required();
  eval->add_option("--format", eval_format, "tab, double-colon, or csv");
  eval->add_option("--clip", eval_clip, "clip predictions to [lo, hi]")
      ->expected(2);

  // diagnose
  auto* diag = app.add_subcommand(
      "diagnose", "turn saved entry traces into an autocorrelation table");
  std::string diag_artifacts;
  int diag_max_lag = 20;
  diag->add_option("--artifacts", diag_artifacts, "fit output directory")
      ->required();
  diag->add_option("--max-lag", diag_max_lag, "largest lag to report");

  // verify-prop1
  auto* verify = app.add_subcommand(
      "verify-prop1",
      "check the scale-integral quadrature against its closed form");
  double verify_tol = 1e-6;
  verify->add_option("--tol", verify_tol, "relative error bound");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    apply_thread_cap(threads);
    if (sim->parsed()) {
      RunManifest manifest;
      manifest.backend = sim_backend;
      SyntheticSpec spec;
      spec.m = sim_m;
      spec.r = sim_r;
      spec.entry_sd = sim_entry_sd > 0.0
                          ? sim_entry_sd
                          : protocol_spec(sim_m, 1).entry_sd;
      spec.observe_fraction = sim_observe;
      spec.noise_sd = sim_noise;
      spec.seed = sim_data_seed != 0 ? sim_data_seed : sim_sampler.seed;
      spec.with_replacement = !sim_without_replacement;
      manifest.synthetic = spec;
      manifest.prior = sim_prior.build();
      manifest.sampler = sim_sampler.build();
      manifest.vb_tolerance = sim_vb_tol;
      manifest.vb_max_iterations = sim_vb_iters;
      manifest.output_dir = sim_out;
      return do_simulate(manifest);
    }
    if (fit->parsed()) {
      RunManifest manifest;
      manifest.backend = fit_backend;
      manifest.dataset_path = fit_data;
      manifest.dataset_format = ratings_format_from_name(fit_format);
      manifest.prior = fit_prior.build();
      manifest.sampler = fit_sampler.build();
      manifest.vb_tolerance = fit_vb_tol;
      manifest.vb_max_iterations = fit_vb_iters;
      manifest.split_ratio = fit_split;
      manifest.split_seed = fit_split_seed;
      manifest.global_mean_offset = fit_offset;
      manifest.output_dir = fit_out;
      ClipRange clip;
      if (!fit_clip.empty()) clip = std::make_pair(fit_clip[0], fit_clip[1]);
      return do_fit(manifest, clip);
    }
    if (eval->parsed()) {
      ClipRange clip;
      if (!eval_clip.empty())
        clip = std::make_pair(eval_clip[0], eval_clip[1]);
      return do_evaluate(eval_artifacts, eval_data,
                         ratings_format_from_name(eval_format), clip);
    }
    if (diag->parsed()) return do_diagnose(diag_artifacts, diag_max_lag);
    if (verify->parsed()) return do_verify_quadrature(verify_tol);
    return 1;
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace lowrank
