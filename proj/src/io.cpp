#include "rbhmc/io.hpp"

#include <Eigen/Eigenvalues>
#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rbhmc/error.hpp"

namespace rbhmc {

using ojson = nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& text, const std::string& where) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) fail(ErrorKind::Data, where + ": cannot parse '" + text + "' as a number");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

ojson vec_json(const Vec& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec json_vec(const ojson& a, const std::string& what) {
  if (!a.is_array()) fail(ErrorKind::Data, what + " must be an array");
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) fail(ErrorKind::Data, what + " must contain numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

DataMatrix read_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    std::vector<double> row;
    for (const auto& cell : split(line, ',')) {
      const double v = parse_double(cell, where);
      if (!std::isfinite(v)) fail(ErrorKind::Data, where + ": non-finite value");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorKind::Data, where + ": expected " + std::to_string(rows.front().size()) + " columns, found " +
                                std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::Data, path.string() + " contains no data");
  DataMatrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return x;
}

void write_csv(const std::filesystem::path& path, const DataMatrix& x) {
  std::string out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (j) out += ',';
      out += format_double(x(i, j));
    }
    out += '\n';
  }
  write_text(path, out);
}

std::map<std::size_t, std::string> read_labels(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::map<std::size_t, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    const auto comma = t.find(',');
    if (comma == std::string::npos) fail(ErrorKind::Data, where + ": expected 'index,class'");
    const std::string idx = trim(t.substr(0, comma));
    std::size_t n = 0;
    const auto res = std::from_chars(idx.data(), idx.data() + idx.size(), n);
    if (res.ec != std::errc() || res.ptr != idx.data() + idx.size())
      fail(ErrorKind::Data, where + ": bad index '" + idx + "'");
    if (!out.emplace(n, trim(t.substr(comma + 1))).second)
      fail(ErrorKind::Data, where + ": duplicate index " + idx);
  }
  return out;
}

void write_labels(const std::filesystem::path& path, const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i) + "," + labels[i] + "\n";
  write_text(path, out);
}

std::string hierarchy_to_json(const Hierarchy& h) {
  ojson nodes = ojson::array();
  for (const auto& n : h.nodes) {
    ojson j;
    j["id"] = n.id.value;
    j["parent"] = n.parent ? ojson(n.parent->value) : ojson(nullptr);
    j["level"] = n.level;
    ojson kids = ojson::array();
    for (NodeId c : n.children) kids.push_back(c.value);
    j["children"] = kids;
    j["weights"] = vec_json(n.weights);
    j["margin"] = vec_json(n.margin);
    j["members"] = n.members;
    nodes.push_back(std::move(j));
  }
  ojson doc;
  doc["num_data"] = h.num_data;
  doc["nodes"] = std::move(nodes);
  return doc.dump(1) + "\n";
}

Hierarchy hierarchy_from_json(const std::string& text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorKind::Data, std::string("tree JSON does not parse: ") + e.what());
  }
  Hierarchy h;
  try {
    h.num_data = doc.at("num_data").get<std::size_t>();
    for (const auto& j : doc.at("nodes")) {
      Hierarchy::Node n;
      n.id = NodeId{j.at("id").get<std::uint32_t>()};
      if (!j.at("parent").is_null()) n.parent = NodeId{j.at("parent").get<std::uint32_t>()};
      n.level = j.at("level").get<int>();
      for (const auto& c : j.at("children")) n.children.push_back(NodeId{c.get<std::uint32_t>()});
      n.weights = json_vec(j.at("weights"), "weights");
      n.margin = json_vec(j.at("margin"), "margin");
      n.members = j.at("members").get<std::vector<std::size_t>>();
      h.nodes.push_back(std::move(n));
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorKind::Data, std::string("malformed tree JSON: ") + e.what());
  }
  h.validate();
  return h;
}

Hierarchy read_hierarchy(const std::filesystem::path& path) { return hierarchy_from_json(read_text(path)); }

std::string hierarchy_to_newick(const Hierarchy& h) {
  std::string out;
  auto walk = [&](auto&& self, const Hierarchy::Node& n) -> void {
    if (!n.children.empty()) {
      out += '(';
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += ',';
        self(self, h.at(n.children[i]));
      }
      out += ')';
      out += "z" + std::to_string(n.id.value);
    } else {
      out += "z" + std::to_string(n.id.value) + "_n" + std::to_string(n.members.size());
    }
  };
  walk(walk, h.root());
  return out + ";\n";
}

std::string report_to_json(const EvalReport& report) {
  ojson doc;
  doc["aid"] = report.aid;
  if (report.aod) doc["aod"] = *report.aod;
  if (!report.f_by_level.empty()) {
    ojson f;
    for (const auto& [level, value] : report.f_by_level) f[std::to_string(level)] = value;
    doc["f_by_level"] = f;
  }
  doc["node_count"] = report.node_count;
  return doc.dump(1) + "\n";
}

std::string trace_to_csv(const Trace& trace) {
  std::string out = "iteration,cdl,rcdl,accept_rate\n";
  for (std::size_t i = 0; i < trace.cdl.size(); ++i)
    out += std::to_string(i + 1) + "," + format_double(trace.cdl[i]) + "," + format_double(trace.rcdl[i]) + "," +
           format_double(trace.accept_rate[i]) + "\n";
  return out;
}

std::string vi_trace_to_csv(const std::vector<ViTraceRow>& trace) {
  std::string out = "cycle,relbo,delta\n";
  for (const auto& r : trace)
    out += std::to_string(r.cycle) + "," + format_double(r.relbo) + "," + format_double(r.delta) + "\n";
  return out;
}

PcaResult pca(const DataMatrix& x, std::size_t dims) {
  const auto d = static_cast<std::size_t>(x.cols());
  if (dims < 1 || dims > d) fail(ErrorKind::Parameter, "pca dims must be between 1 and " + std::to_string(d));
  if (x.rows() < 2) fail(ErrorKind::Data, "pca needs at least two rows");
  PcaResult r;
  r.mean = x.colwise().mean().transpose();
  const Mat centred = x.rowwise() - r.mean.transpose();
  const Mat cov = centred.transpose() * centred / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  if (es.info() != Eigen::Success) fail(ErrorKind::Numerical, "eigen decomposition failed");
  const auto dd = static_cast<Eigen::Index>(d);
  r.eigenvalues = es.eigenvalues().reverse();
  Mat vecs = es.eigenvectors().rowwise().reverse();
  for (Eigen::Index j = 0; j < dd; ++j) {
    for (Eigen::Index i = 0; i < dd; ++i) {
      if (std::abs(vecs(i, j)) > 1e-12) {
        if (vecs(i, j) < 0.0) vecs.col(j) *= -1.0;
        break;
      }
    }
  }
  r.components = vecs.leftCols(static_cast<Eigen::Index>(dims));
  r.scores = centred * r.components;
  return r;
}

}  // namespace rbhmc
