#pragma once

#include <map>
#include <optional>
#include <string>

#include "rbhmc/hierarchy.hpp"

namespace rbhmc {

struct EvalReport {
  double aid = 0.0;
  std::optional<double> aod;
  std::map<int, double> f_by_level;
  std::size_t node_count = 0;
};

double aid(const Hierarchy& h, const DataMatrix& x);
std::optional<double> aod(const Hierarchy& h, const DataMatrix& x);
std::map<int, double> f_measure_by_level(const Hierarchy& h,
                                         const std::map<std::size_t, std::string>& labels);
EvalReport evaluate(const Hierarchy& h, const DataMatrix& x,
                    const std::map<std::size_t, std::string>* labels);

}  // namespace rbhmc
