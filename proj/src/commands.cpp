#include "rbhmc/commands.hpp"

#include <atomic>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "rbhmc/error.hpp"

namespace rbhmc {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) fail(ErrorKind::Io, "cannot create directory " + dir.string());
}

std::size_t generate_dim(const RunConfig& config) {
  const auto mean = config.list("prior_mean");
  if (mean.size() > 1) return mean.size();
  return config.count("dim");
}

// Runs task(i) for i in [0, count) on up to `jobs` threads; rethrows the first failure by index.
template <typename Task>
void parallel_for(std::size_t count, std::size_t jobs, Task task) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(jobs, count);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

void cmd_generate(const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const std::size_t n = config.count("n");
  if (n < 1) fail(ErrorKind::Parameter, "n must be at least 1");
  const Hyperparams hyper = config.hyperparams(generate_dim(config));
  Rng rng(config.count("seed"));
  const Generated g = generate_dataset(hyper, n, rng);
  ensure_dir(out_dir);
  write_csv(out_dir / "data.csv", g.data.x);
  std::vector<std::string> labels;
  std::vector<Path> paths;
  for (const auto& a : g.assignments) {
    labels.push_back("z" + std::to_string(a.path.back().value));
    paths.push_back(a.path);
  }
  write_labels(out_dir / "labels.csv", labels);
  write_text(out_dir / "tree.json", hierarchy_to_json(to_hierarchy(g.tree, paths)));
}

void cmd_pca(const fs::path& in_csv, std::size_t dims, const fs::path& out_csv) {
  const DataMatrix x = read_csv(in_csv);
  write_csv(out_csv, pca(x, dims).scores);
}

std::string cmd_fit(const RunConfig& config, const fs::path& data_csv, const fs::path& out_dir, const LogSink& log) {
  config.validate();
  DataMatrix x = read_csv(data_csv);
  if (const std::size_t dims = config.count("pca_dims"); dims > 0) {
    if (dims > static_cast<std::size_t>(x.cols()))
      fail(ErrorKind::Parameter, "pca_dims exceeds the data dimension " + std::to_string(x.cols()));
    x = pca(x, dims).scores;
  }
  const Hyperparams hyper = config.hyperparams(static_cast<std::size_t>(x.cols()));
  const std::string mode = config.get("mode");
  const std::size_t chains = config.count("chains");
  const std::size_t seed = config.count("seed");
  if (mode == "vi" && log && (config.explicitly_set("burnin") || config.explicitly_set("draws")))
    log("mode=vi ignores burnin and draws");
  ensure_dir(out_dir);

  std::vector<ojson> rows(chains);
  std::mutex log_mutex;
  auto run = [&](std::size_t i) {
    const fs::path dir = out_dir / ("chain_" + std::to_string(i));
    ensure_dir(dir);
    Rng rng(seed + i);
    ojson row;
    row["chain"] = i;
    row["seed"] = seed + i;
    Hierarchy tree;
    if (mode == "mcmc") {
      const Trace trace = run_chain(hyper, x, config.mcmc_options(), rng);
      write_text(dir / "trace.csv", trace_to_csv(trace));
      tree = merge_singletons(to_hierarchy(trace.best));
      row["best_rcdl"] = trace.best_rcdl;
      row["best_iteration"] = trace.best_iter + 1;
      row["accept_rate"] = trace.accept_rate.back();
    } else {
      const ViOptions options = config.vi_options();
      const ViProblem problem(x, hyper, ViSkeleton::complete(hyper.depth, options.branching));
      const ViResult result = fit_vi(problem, options, rng);
      write_text(dir / "relbo.csv", vi_trace_to_csv(result.trace));
      tree = merge_singletons(to_hierarchy(result.state, problem));
      row["relbo"] = result.trace.empty() ? relbo(result.state, problem) : result.trace.back().relbo;
      row["cycles"] = result.trace.size();
      row["converged"] = result.converged;
      row["diverged"] = result.diverged;
      if (result.diverged && log) {
        std::lock_guard lock(log_mutex);
        log("chain " + std::to_string(i) + ": RELBO diverged, kept the last finite state");
      }
    }
    row["nodes"] = tree.nodes.size();
    write_text(dir / "tree.json", hierarchy_to_json(tree));
    write_text(dir / "tree.nwk", hierarchy_to_newick(tree));
    rows[i] = std::move(row);
  };
  parallel_for(chains, config.count("jobs"), run);

  ojson summary;
  summary["mode"] = mode;
  summary["chains"] = rows;
  const std::string text = summary.dump(1) + "\n";
  write_text(out_dir / "summary.json", text);
  return text;
}

EvalReport cmd_eval(const fs::path& tree_json, const fs::path& data_csv, const std::optional<fs::path>& labels_csv) {
  const Hierarchy h = read_hierarchy(tree_json);
  const DataMatrix x = read_csv(data_csv);
  if (labels_csv) {
    const auto labels = read_labels(*labels_csv);
    return evaluate(h, x, &labels);
  }
  return evaluate(h, x, nullptr);
}

}  // namespace rbhmc
