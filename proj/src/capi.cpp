#include "rbhmc/rbhmc.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <string>

#include "rbhmc/commands.hpp"
#include "rbhmc/error.hpp"

struct rbhmc_config {
  rbhmc::RunConfig config;
};

struct rbhmc_dataset {
  rbhmc::DataMatrix x;
  std::map<std::size_t, std::string> labels;
  bool has_labels = false;
};

struct rbhmc_tree {
  rbhmc::Hierarchy hierarchy;
};

namespace {

thread_local std::string last_error;

std::mutex log_mutex;
rbhmc_log_fn log_fn = nullptr;
void* log_user = nullptr;

void emit(const std::string& message) {
  std::lock_guard lock(log_mutex);
  if (log_fn) log_fn(message.c_str(), log_user);
  else std::fprintf(stderr, "warning: %s\n", message.c_str());
}

rbhmc_status status_of(rbhmc::ErrorKind kind) {
  switch (kind) {
    case rbhmc::ErrorKind::Parameter: return RBHMC_ERR_USAGE;
    case rbhmc::ErrorKind::Data:
    case rbhmc::ErrorKind::Io: return RBHMC_ERR_DATA;
    case rbhmc::ErrorKind::Domain:
    case rbhmc::ErrorKind::State:
    case rbhmc::ErrorKind::Numerical: return RBHMC_ERR_NUMERIC;
  }
  return RBHMC_ERR_NUMERIC;
}

template <typename F>
rbhmc_status guard(F&& f) {
  try {
    f();
    last_error.clear();
    return RBHMC_OK;
  } catch (const rbhmc::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return RBHMC_ERR_NUMERIC;
  } catch (const std::exception& e) {
    last_error = e.what();
    return RBHMC_ERR_DATA;
  }
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (!p) rbhmc::fail(rbhmc::ErrorKind::Parameter, std::string(what) + " must not be null");
}

}  // namespace

extern "C" {

const char* rbhmc_version(void) { return "0.1.0"; }
const char* rbhmc_last_error(void) { return last_error.c_str(); }

void rbhmc_set_log_handler(rbhmc_log_fn fn, void* user) {
  std::lock_guard lock(log_mutex);
  log_fn = fn;
  log_user = user;
}

void rbhmc_string_free(char* s) { std::free(s); }

rbhmc_status rbhmc_config_create(rbhmc_config** out) {
  return guard([&] {
    require(out, "out");
    *out = new rbhmc_config();
  });
}

void rbhmc_config_destroy(rbhmc_config* cfg) { delete cfg; }

rbhmc_status rbhmc_config_load(rbhmc_config* cfg, const char* path) {
  return guard([&] {
    require(cfg, "config");
    require(path, "path");
    cfg->config.load_file(path);
  });
}

rbhmc_status rbhmc_config_set(rbhmc_config* cfg, const char* key, const char* value) {
  return guard([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    cfg->config.set(key, value);
  });
}

rbhmc_status rbhmc_config_get(const rbhmc_config* cfg, const char* key, char** out) {
  return guard([&] {
    require(cfg, "config");
    require(key, "key");
    require(out, "out");
    *out = dup(cfg->config.get(key));
  });
}

rbhmc_status rbhmc_config_validate(const rbhmc_config* cfg) {
  return guard([&] {
    require(cfg, "config");
    cfg->config.validate();
  });
}

size_t rbhmc_config_key_count(void) { return rbhmc::config_keys().size(); }

const char* rbhmc_config_key_name(size_t index) {
  const auto& keys = rbhmc::config_keys();
  return index < keys.size() ? keys[index].name : nullptr;
}

const char* rbhmc_config_key_default(size_t index) {
  const auto& keys = rbhmc::config_keys();
  return index < keys.size() ? keys[index].default_value : nullptr;
}

const char* rbhmc_config_key_help(size_t index) {
  const auto& keys = rbhmc::config_keys();
  return index < keys.size() ? keys[index].help : nullptr;
}

rbhmc_status rbhmc_dataset_load(const char* csv_path, rbhmc_dataset** out) {
  return guard([&] {
    require(csv_path, "path");
    require(out, "out");
    auto d = std::make_unique<rbhmc_dataset>();
    d->x = rbhmc::read_csv(csv_path);
    *out = d.release();
  });
}

rbhmc_status rbhmc_dataset_load_labels(rbhmc_dataset* data, const char* labels_path) {
  return guard([&] {
    require(data, "dataset");
    require(labels_path, "path");
    data->labels = rbhmc::read_labels(labels_path);
    data->has_labels = true;
  });
}

size_t rbhmc_dataset_rows(const rbhmc_dataset* data) { return data ? static_cast<size_t>(data->x.rows()) : 0; }
size_t rbhmc_dataset_cols(const rbhmc_dataset* data) { return data ? static_cast<size_t>(data->x.cols()) : 0; }
void rbhmc_dataset_destroy(rbhmc_dataset* data) { delete data; }

rbhmc_status rbhmc_tree_load(const char* json_path, rbhmc_tree** out) {
  return guard([&] {
    require(json_path, "path");
    require(out, "out");
    auto t = std::make_unique<rbhmc_tree>();
    t->hierarchy = rbhmc::read_hierarchy(json_path);
    *out = t.release();
  });
}

size_t rbhmc_tree_node_count(const rbhmc_tree* tree) { return tree ? tree->hierarchy.nodes.size() : 0; }

rbhmc_status rbhmc_tree_json(const rbhmc_tree* tree, char** out) {
  return guard([&] {
    require(tree, "tree");
    require(out, "out");
    *out = dup(rbhmc::hierarchy_to_json(tree->hierarchy));
  });
}

rbhmc_status rbhmc_tree_newick(const rbhmc_tree* tree, char** out) {
  return guard([&] {
    require(tree, "tree");
    require(out, "out");
    *out = dup(rbhmc::hierarchy_to_newick(tree->hierarchy));
  });
}

void rbhmc_tree_destroy(rbhmc_tree* tree) { delete tree; }

rbhmc_status rbhmc_generate(const rbhmc_config* cfg, const char* out_dir) {
  return guard([&] {
    require(cfg, "config");
    require(out_dir, "out_dir");
    rbhmc::cmd_generate(cfg->config, out_dir);
  });
}

rbhmc_status rbhmc_pca(const char* in_csv, size_t dims, const char* out_csv) {
  return guard([&] {
    require(in_csv, "in_csv");
    require(out_csv, "out_csv");
    rbhmc::cmd_pca(in_csv, dims, out_csv);
  });
}

rbhmc_status rbhmc_fit(const rbhmc_config* cfg, const char* data_csv, const char* out_dir, char** summary) {
  return guard([&] {
    require(cfg, "config");
    require(data_csv, "data_csv");
    require(out_dir, "out_dir");
    const std::string text = rbhmc::cmd_fit(cfg->config, data_csv, out_dir, emit);
    if (summary) *summary = dup(text);
  });
}

rbhmc_status rbhmc_evaluate(const rbhmc_tree* tree, const rbhmc_dataset* data, char** report) {
  return guard([&] {
    require(tree, "tree");
    require(data, "dataset");
    require(report, "report");
    const auto r = rbhmc::evaluate(tree->hierarchy, data->x, data->has_labels ? &data->labels : nullptr);
    *report = dup(rbhmc::report_to_json(r));
  });
}

}  // extern "C"
