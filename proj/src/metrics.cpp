#include "rbhmc/metrics.hpp"

#include <algorithm>
#include <string>

#include "rbhmc/error.hpp"

namespace rbhmc {

namespace {

void check_members(const Hierarchy& h, const DataMatrix& x) {
  if (h.num_data != static_cast<std::size_t>(x.rows()))
    fail(ErrorKind::Data, "tree covers " + std::to_string(h.num_data) + " data but the data has " +
                              std::to_string(x.rows()) + " rows");
  for (const auto& n : h.nodes)
    for (std::size_t m : n.members)
      if (m >= static_cast<std::size_t>(x.rows()))
        fail(ErrorKind::Data, "datum index " + std::to_string(m) + " out of range");
}

Vec centroid(const Hierarchy::Node& n, const DataMatrix& x) {
  Vec c = Vec::Zero(x.cols());
  for (std::size_t m : n.members) c += x.row(static_cast<Eigen::Index>(m)).transpose();
  return c / static_cast<double>(n.members.size());
}

}  // namespace

double aid(const Hierarchy& h, const DataMatrix& x) {
  check_members(h, x);
  if (h.nodes.size() < 2) fail(ErrorKind::Data, "tree has no non-root nodes");
  double total = 0.0;
  for (const auto& n : h.nodes) {
    if (!n.parent || n.members.size() < 2) continue;
    const Vec c = centroid(n, x);
    double spread = 0.0;
    for (std::size_t m : n.members) spread += (x.row(static_cast<Eigen::Index>(m)).transpose() - c).squaredNorm();
    // sum over unordered pairs equals N_z times the spread about the centroid
    total += 2.0 * spread / static_cast<double>(n.members.size() - 1);
  }
  return total / static_cast<double>(h.nodes.size() - 1);
}

std::optional<double> aod(const Hierarchy& h, const DataMatrix& x) {
  check_members(h, x);
  std::map<NodeId, Vec> centres;
  for (const auto& n : h.nodes) centres.emplace(n.id, centroid(n, x));
  double total = 0.0;
  std::size_t pairs = 0;
  for (const auto& n : h.nodes) {
    if (!n.parent) continue;
    for (NodeId s : h.at(*n.parent).children) {
      if (s == n.id) continue;
      total += (centres.at(n.id) - centres.at(s)).squaredNorm();
      ++pairs;
    }
  }
  if (pairs == 0) return std::nullopt;
  return total / static_cast<double>(pairs);
}

std::map<int, double> f_measure_by_level(const Hierarchy& h,
                                         const std::map<std::size_t, std::string>& labels) {
  std::string missing;
  for (std::size_t n = 0; n < h.num_data; ++n)
    if (!labels.count(n)) missing += (missing.empty() ? "" : ", ") + std::to_string(n);
  if (!missing.empty()) fail(ErrorKind::Data, "missing labels for data " + missing);
  for (const auto& [n, label] : labels)
    if (n >= h.num_data) fail(ErrorKind::Data, "label index " + std::to_string(n) + " out of range");

  std::map<std::string, std::size_t> class_size;
  for (const auto& [n, label] : labels) ++class_size[label];
  const auto paths = h.datum_paths();
  const double total = static_cast<double>(h.num_data);
  std::map<int, double> out;
  for (int level = 1; level <= h.max_level(); ++level) {
    std::map<NodeId, std::size_t> cluster_size;
    std::map<std::pair<std::string, NodeId>, std::size_t> overlap;
    for (std::size_t n = 0; n < h.num_data; ++n) {
      const auto& p = paths[n];
      const NodeId c = p[std::min(static_cast<std::size_t>(level), p.size() - 1)];
      ++cluster_size[c];
      ++overlap[{labels.at(n), c}];
    }
    std::map<std::string, double> best;
    for (const auto& [key, nij] : overlap) {
      const double f = 2.0 * static_cast<double>(nij) /
                       static_cast<double>(class_size.at(key.first) + cluster_size.at(key.second));
      auto& b = best[key.first];
      b = std::max(b, f);
    }
    double score = 0.0;
    for (const auto& [label, size] : class_size) score += static_cast<double>(size) * best[label];
    out[level] = score / total;
  }
  return out;
}

EvalReport evaluate(const Hierarchy& h, const DataMatrix& x,
                    const std::map<std::size_t, std::string>* labels) {
  h.validate();
  EvalReport r;
  r.aid = aid(h, x);
  r.aod = aod(h, x);
  if (labels) r.f_by_level = f_measure_by_level(h, *labels);
  r.node_count = h.nodes.size();
  return r;
}

}  // namespace rbhmc
