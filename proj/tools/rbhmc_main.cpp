#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "rbhmc/rbhmc.h"

namespace {

struct Overrides {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    for (size_t i = 0; i < rbhmc_config_key_count(); ++i) {
      const std::string name = rbhmc_config_key_name(i);
      const std::string help = std::string(rbhmc_config_key_help(i)) + " (default " + rbhmc_config_key_default(i) + ")";
      options[name] = app->add_option("--" + name, values[name], help);
    }
  }
};

int report(rbhmc_status status) {
  if (status != RBHMC_OK) std::fprintf(stderr, "error: %s\n", rbhmc_last_error());
  return static_cast<int>(status);
}

// Builds a config from an optional file plus explicitly passed flags.
int make_config(const std::string& path, const Overrides& o, rbhmc_config** cfg) {
  if (int rc = report(rbhmc_config_create(cfg))) return rc;
  if (!path.empty())
    if (int rc = report(rbhmc_config_load(*cfg, path.c_str()))) return rc;
  for (const auto& [name, opt] : o.options)
    if (opt->count() > 0)
      if (int rc = report(rbhmc_config_set(*cfg, name.c_str(), o.values.at(name).c_str()))) return rc;
  return report(rbhmc_config_validate(*cfg));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical mixture clustering with max-margin posterior regularisation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rbhmc_version());

  std::string config_path, out_path, data_path, tree_path, labels_path, in_path;
  std::size_t dims = 0;

  auto* gen = app.add_subcommand("generate", "sample a synthetic dataset with its ground-truth tree");
  gen->add_option("--config", config_path, "config file (key = value)")->check(CLI::ExistingFile);
  gen->add_option("--out", out_path, "output directory")->required();
  Overrides gen_flags;
  gen_flags.attach(gen);

  auto* pca = app.add_subcommand("pca", "project a CSV onto its leading principal components");
  pca->add_option("--in", in_path, "input CSV")->required();
  pca->add_option("--dims", dims, "number of components")->required();
  pca->add_option("--out", out_path, "output CSV")->required();

  auto* fit = app.add_subcommand("fit", "run MCMC chains or VI and export traces and trees");
  fit->add_option("--config", config_path, "config file (key = value)")->check(CLI::ExistingFile);
  fit->add_option("--data", data_path, "data CSV")->required();
  fit->add_option("--out", out_path, "output directory")->required();
  Overrides fit_flags;
  fit_flags.attach(fit);

  auto* eval = app.add_subcommand("eval", "report AID, AOD and per-level F-measure for a tree");
  eval->add_option("--tree", tree_path, "tree JSON")->required();
  eval->add_option("--data", data_path, "data CSV")->required();
  eval->add_option("--labels", labels_path, "labels CSV (index,class)");
  eval->add_option("--out", out_path, "write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : RBHMC_ERR_USAGE;
  }

  rbhmc_set_log_handler([](const char* msg, void*) { std::fprintf(stderr, "warning: %s\n", msg); }, nullptr);

  if (*gen) {
    rbhmc_config* cfg = nullptr;
    int rc = make_config(config_path, gen_flags, &cfg);
    if (rc == 0) rc = report(rbhmc_generate(cfg, out_path.c_str()));
    rbhmc_config_destroy(cfg);
    return rc;
  }
  if (*pca) return report(rbhmc_pca(in_path.c_str(), dims, out_path.c_str()));
  if (*fit) {
    rbhmc_config* cfg = nullptr;
    int rc = make_config(config_path, fit_flags, &cfg);
    char* summary = nullptr;
    if (rc == 0) rc = report(rbhmc_fit(cfg, data_path.c_str(), out_path.c_str(), &summary));
    if (summary) std::fputs(summary, stdout);
    rbhmc_string_free(summary);
    rbhmc_config_destroy(cfg);
    return rc;
  }
  rbhmc_tree* tree = nullptr;
  rbhmc_dataset* data = nullptr;
  char* text = nullptr;
  int rc = report(rbhmc_tree_load(tree_path.c_str(), &tree));
  if (rc == 0) rc = report(rbhmc_dataset_load(data_path.c_str(), &data));
  if (rc == 0 && !labels_path.empty()) rc = report(rbhmc_dataset_load_labels(data, labels_path.c_str()));
  if (rc == 0) rc = report(rbhmc_evaluate(tree, data, &text));
  if (rc == 0) {
    if (out_path.empty()) {
      std::fputs(text, stdout);
    } else {
      std::ofstream out(out_path, std::ios::binary);
      out << text;
      if (!out) {
        std::fprintf(stderr, "error: cannot write %s\n", out_path.c_str());
        rc = RBHMC_ERR_DATA;
      }
    }
  }
  rbhmc_string_free(text);
  rbhmc_dataset_destroy(data);
  rbhmc_tree_destroy(tree);
  return rc;
}
