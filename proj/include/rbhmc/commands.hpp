#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "rbhmc/config.hpp"
#include "rbhmc/io.hpp"

namespace rbhmc {

using LogSink = std::function<void(const std::string&)>;

void cmd_generate(const RunConfig& config, const std::filesystem::path& out_dir);
void cmd_pca(const std::filesystem::path& in_csv, std::size_t dims,
             const std::filesystem::path& out_csv);
// Returns the summary JSON text that is also written to out_dir/summary.json.
std::string cmd_fit(const RunConfig& config, const std::filesystem::path& data_csv,
                    const std::filesystem::path& out_dir, const LogSink& log = {});
EvalReport cmd_eval(const std::filesystem::path& tree_json, const std::filesystem::path& data_csv,
                    const std::optional<std::filesystem::path>& labels_csv);

}  // namespace rbhmc
