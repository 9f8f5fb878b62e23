#include "rbhmc/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "rbhmc/error.hpp"
#include "rbhmc/io.hpp"

namespace rbhmc {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"alpha", "0.4", "nCRP concentration"},
      {"gamma", "1", "HDP concentration for weight diffusion"},
      {"gamma0", "0.85", "root stick-breaking concentration"},
      {"depth", "3", "tree depth L"},
      {"trunc", "10", "number of mixture components K"},
      {"margin_cost", "0.1", "regularisation cost C"},
      {"margin_eps", "1", "margin epsilon"},
      {"eta_prior_scale", "1", "prior standard deviation of margin vectors"},
      {"kernel_cov", "1", "kernel covariance: scalar, diagonal list or full row-major list"},
      {"prior_mean", "0", "component prior mean: scalar or list"},
      {"prior_cov", "1", "component prior covariance: scalar, diagonal list or full row-major list"},
      {"vi_weight", "0.1", "VI regulariser weight"},
      {"dim", "2", "data dimension for generate when no list fixes it"},
      {"n", "100", "number of data for generate"},
      {"mode", "mcmc", "inference mode: mcmc or vi"},
      {"chains", "1", "number of chains"},
      {"burnin", "5000", "burn-in iterations"},
      {"draws", "10000", "post burn-in iterations"},
      {"seed", "1", "base seed, chain i uses seed + i"},
      {"jobs", "1", "chains run concurrently"},
      {"pca_dims", "0", "project data onto this many principal components before fitting (0 = off)"},
      {"kappa", "100", "initial Dirichlet proposal concentration for internal weights"},
      {"adapt_kappa", "true", "tune kappa during burn-in"},
      {"exact_joint", "true", "account for other data's violations in path and margin moves"},
      {"zeta_clamp", "1e-8", "lower clamp on |C zeta| in the augmentation sampler"},
      {"vi_tol", "1e-6", "absolute RELBO change that stops VI"},
      {"vi_max_cycles", "200", "maximum VI cycles"},
      {"vi_branching", "2", "children per node of the VI skeleton"},
      {"omega_min", "1e-3", "lower clamp for node Dirichlet parameters in VI"},
      {"vi_weight_ramp", "0", "VI cycles over which the regulariser weight ramps up linearly; 0 keeps it constant"},
      {"vi_safeguard", "true", "check RELBO after non-conjugate VI updates"},
  };
  return keys;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool known(const std::string& key) {
  for (const auto& k : config_keys())
    if (key == k.name) return true;
  return false;
}

double to_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v))
    fail(ErrorKind::Parameter, "config key '" + key + "' expects a number, got '" + text + "'");
  return v;
}

Mat matrix_from(const std::string& key, const std::vector<double>& v, std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  if (v.size() == 1) return v[0] * Mat::Identity(d, d);
  if (v.size() == dim) return Vec(Eigen::Map<const Vec>(v.data(), d)).asDiagonal();
  if (v.size() == dim * dim) return Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(v.data(), d, d);
  fail(ErrorKind::Parameter, "config key '" + key + "' needs 1, " + std::to_string(dim) + " or " +
                                 std::to_string(dim * dim) + " values");
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known(key)) fail(ErrorKind::Parameter, "unknown config key '" + key + "'");
  std::string v = trim(value);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
  values_[key] = v;
  explicit_.insert(key);
}

std::string RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorKind::Parameter, "unknown config key '" + key + "'");
  return it->second;
}

void RunConfig::load_file(const std::filesystem::path& path) { parse(read_text(path)); }

void RunConfig::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string t = trim(line);
    if (t.empty() || t.front() == '[') continue;  // blank or table header
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Parameter, "config line " + std::to_string(line_no) + ": expected key = value");
    set(trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

double RunConfig::real(const std::string& key) const { return to_real(key, get(key)); }

long long RunConfig::integer(const std::string& key) const {
  const std::string text = get(key);
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    fail(ErrorKind::Parameter, "config key '" + key + "' expects an integer, got '" + text + "'");
  return v;
}

std::size_t RunConfig::count(const std::string& key) const {
  const long long v = integer(key);
  if (v < 0) fail(ErrorKind::Parameter, "config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

bool RunConfig::flag(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorKind::Parameter, "config key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<double> RunConfig::list(const std::string& key) const {
  std::string v = get(key);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') fail(ErrorKind::Parameter, "config key '" + key + "' has an unterminated list");
    v = v.substr(1, v.size() - 2);
  }
  std::vector<double> out;
  std::istringstream in(v);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    const std::string c = trim(cell);
    if (!c.empty()) out.push_back(to_real(key, c));
  }
  if (out.empty()) fail(ErrorKind::Parameter, "config key '" + key + "' is empty");
  return out;
}

Hyperparams RunConfig::hyperparams(std::size_t dim) const {
  Hyperparams h;
  h.alpha = real("alpha");
  h.gamma = real("gamma");
  h.gamma0 = real("gamma0");
  h.depth = static_cast<int>(integer("depth"));
  const long long k = integer("trunc");
  if (k < 1) fail(ErrorKind::Parameter, "trunc must be at least 1");
  h.trunc = static_cast<std::size_t>(k);
  h.margin_cost = real("margin_cost");
  h.margin_eps = real("margin_eps");
  h.eta_prior_scale = real("eta_prior_scale");
  h.vi_weight = real("vi_weight");
  const auto mean = list("prior_mean");
  if (mean.size() == 1) h.prior_mean = Vec::Constant(static_cast<Eigen::Index>(dim), mean[0]);
  else if (mean.size() == dim) h.prior_mean = Eigen::Map<const Vec>(mean.data(), static_cast<Eigen::Index>(dim));
  else fail(ErrorKind::Parameter, "prior_mean has " + std::to_string(mean.size()) + " values for dimension " + std::to_string(dim));
  h.kernel_cov = matrix_from("kernel_cov", list("kernel_cov"), dim);
  h.prior_cov = matrix_from("prior_cov", list("prior_cov"), dim);
  h.validate();
  return h;
}

McmcOptions RunConfig::mcmc_options() const {
  McmcOptions o;
  o.burnin = count("burnin");
  o.draws = count("draws");
  o.kappa = real("kappa");
  o.adapt_kappa = flag("adapt_kappa");
  o.exact_joint = flag("exact_joint");
  o.zeta_clamp = real("zeta_clamp");
  return o;
}

ViOptions RunConfig::vi_options() const {
  ViOptions o;
  o.branching = count("vi_branching");
  o.tol = real("vi_tol");
  o.max_cycles = count("vi_max_cycles");
  o.omega_min = real("omega_min");
  o.safeguard = flag("vi_safeguard");
  o.weight_ramp = count("vi_weight_ramp");
  return o;
}

void RunConfig::validate() const {
  const std::string mode = get("mode");
  if (mode != "mcmc" && mode != "vi") fail(ErrorKind::Parameter, "mode must be mcmc or vi, got '" + mode + "'");
  for (const char* key : {"alpha", "gamma", "gamma0", "margin_cost", "eta_prior_scale", "kappa", "zeta_clamp", "vi_tol", "omega_min"})
    if (!(real(key) > 0.0)) fail(ErrorKind::Parameter, std::string(key) + " must be positive");
  for (const char* key : {"margin_eps", "vi_weight"})
    if (real(key) < 0.0) fail(ErrorKind::Parameter, std::string(key) + " must be non-negative");
  if (integer("depth") < 1) fail(ErrorKind::Parameter, "depth must be at least 1");
  if (integer("trunc") < 1) fail(ErrorKind::Parameter, "trunc must be at least 1");
  if (count("chains") < 1) fail(ErrorKind::Parameter, "chains must be at least 1");
  if (count("jobs") < 1) fail(ErrorKind::Parameter, "jobs must be at least 1");
  if (count("dim") < 1) fail(ErrorKind::Parameter, "dim must be at least 1");
  count("burnin");
  count("seed");
  count("pca_dims");
  count("n");
  if (mode == "mcmc" && count("draws") < 1) fail(ErrorKind::Parameter, "draws must be at least 1");
  if (count("vi_branching") < 1) fail(ErrorKind::Parameter, "vi_branching must be at least 1");
  if (count("vi_max_cycles") < 1) fail(ErrorKind::Parameter, "vi_max_cycles must be at least 1");
  flag("adapt_kappa");
  flag("exact_joint");
  flag("vi_safeguard");
  count("vi_weight_ramp");
  list("kernel_cov");
  list("prior_cov");
  list("prior_mean");
}

}  // namespace rbhmc
