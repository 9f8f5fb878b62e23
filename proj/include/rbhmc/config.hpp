#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "rbhmc/mcmc.hpp"
#include "rbhmc/vi.hpp"

namespace rbhmc {

struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

const std::vector<ConfigKey>& config_keys();

// Flat key/value run configuration. Values are kept as text and parsed on use.
class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  bool explicitly_set(const std::string& key) const { return explicit_.count(key) != 0; }
  void load_file(const std::filesystem::path& path);
  void parse(std::string_view text);

  double real(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> list(const std::string& key) const;

  // Builds model hyperparameters for data of dimension `dim`.
  Hyperparams hyperparams(std::size_t dim) const;
  McmcOptions mcmc_options() const;
  ViOptions vi_options() const;
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> explicit_;
};

}  // namespace rbhmc
