/* C interface to the rbhmc library. All functions are safe to call from any thread;
 * rbhmc_last_error() reports the message of the last failure on the calling thread. */
#ifndef RBHMC_H
#define RBHMC_H

#include <stddef.h>

#if defined(_WIN32)
#define RBHMC_API __declspec(dllexport)
#else
#define RBHMC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rbhmc_status {
  RBHMC_OK = 0,
  RBHMC_ERR_USAGE = 1,   /* bad parameters or configuration */
  RBHMC_ERR_DATA = 2,    /* unreadable, malformed or inconsistent input/output */
  RBHMC_ERR_NUMERIC = 3  /* numerical failure */
} rbhmc_status;

typedef struct rbhmc_config rbhmc_config;
typedef struct rbhmc_dataset rbhmc_dataset;
typedef struct rbhmc_tree rbhmc_tree;

typedef void (*rbhmc_log_fn)(const char* message, void* user);

RBHMC_API const char* rbhmc_version(void);
RBHMC_API const char* rbhmc_last_error(void);
/* Receives warnings. Passing NULL restores the default (stderr). */
RBHMC_API void rbhmc_set_log_handler(rbhmc_log_fn fn, void* user);
RBHMC_API void rbhmc_string_free(char* s);

RBHMC_API rbhmc_status rbhmc_config_create(rbhmc_config** out);
RBHMC_API void rbhmc_config_destroy(rbhmc_config* cfg);
RBHMC_API rbhmc_status rbhmc_config_load(rbhmc_config* cfg, const char* path);
RBHMC_API rbhmc_status rbhmc_config_set(rbhmc_config* cfg, const char* key, const char* value);
/* Stores a newly allocated copy of the value in *out; free it with rbhmc_string_free. */
RBHMC_API rbhmc_status rbhmc_config_get(const rbhmc_config* cfg, const char* key, char** out);
RBHMC_API rbhmc_status rbhmc_config_validate(const rbhmc_config* cfg);
RBHMC_API size_t rbhmc_config_key_count(void);
RBHMC_API const char* rbhmc_config_key_name(size_t index);
RBHMC_API const char* rbhmc_config_key_default(size_t index);
RBHMC_API const char* rbhmc_config_key_help(size_t index);

RBHMC_API rbhmc_status rbhmc_dataset_load(const char* csv_path, rbhmc_dataset** out);
RBHMC_API rbhmc_status rbhmc_dataset_load_labels(rbhmc_dataset* data, const char* labels_path);
RBHMC_API size_t rbhmc_dataset_rows(const rbhmc_dataset* data);
RBHMC_API size_t rbhmc_dataset_cols(const rbhmc_dataset* data);
RBHMC_API void rbhmc_dataset_destroy(rbhmc_dataset* data);

RBHMC_API rbhmc_status rbhmc_tree_load(const char* json_path, rbhmc_tree** out);
RBHMC_API size_t rbhmc_tree_node_count(const rbhmc_tree* tree);
/* Newly allocated tree JSON / Newick text; free with rbhmc_string_free. */
RBHMC_API rbhmc_status rbhmc_tree_json(const rbhmc_tree* tree, char** out);
RBHMC_API rbhmc_status rbhmc_tree_newick(const rbhmc_tree* tree, char** out);
RBHMC_API void rbhmc_tree_destroy(rbhmc_tree* tree);

/* Writes data.csv, labels.csv and tree.json into out_dir. */
RBHMC_API rbhmc_status rbhmc_generate(const rbhmc_config* cfg, const char* out_dir);
RBHMC_API rbhmc_status rbhmc_pca(const char* in_csv, size_t dims, const char* out_csv);
/* One chain_<i> directory per chain plus summary.json. summary may be NULL. */
RBHMC_API rbhmc_status rbhmc_fit(const rbhmc_config* cfg, const char* data_csv, const char* out_dir, char** summary);
/* Evaluation report as JSON; labels are used when loaded into the dataset. */
RBHMC_API rbhmc_status rbhmc_evaluate(const rbhmc_tree* tree, const rbhmc_dataset* data, char** report);

#ifdef __cplusplus
}
#endif

#endif
