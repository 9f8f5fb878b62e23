#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "rbhmc/metrics.hpp"

namespace rbhmc {

std::string format_double(double v);

DataMatrix read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const DataMatrix& x);
std::map<std::size_t, std::string> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<std::string>& labels);

std::string hierarchy_to_json(const Hierarchy& h);
Hierarchy hierarchy_from_json(const std::string& text);
Hierarchy read_hierarchy(const std::filesystem::path& path);
std::string hierarchy_to_newick(const Hierarchy& h);

std::string report_to_json(const EvalReport& report);
std::string trace_to_csv(const Trace& trace);
std::string vi_trace_to_csv(const std::vector<ViTraceRow>& trace);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

struct PcaResult {
  Vec mean;
  Mat components;  // D x dims, columns sorted by decreasing eigenvalue
  Vec eigenvalues; // all D, descending
  DataMatrix scores;
};

PcaResult pca(const DataMatrix& x, std::size_t dims);

}  // namespace rbhmc
