#pragma once

// File formats: matrix CSVs, truth JSON, NDJSON traces.

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dggm/pmcmc.hpp"
#include "dggm/returns.hpp"
#include "dggm/simulate.hpp"

namespace dggm::app {

using nlohmann::json;

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f.precision(17);
  return f;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

/// Square or rectangular matrix with an optional header of labels.
inline void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                             const std::vector<std::string>& labels = {}) {
  auto f = open_out(path);
  if (!labels.empty()) {
    f << "label";
    for (const auto& l : labels) f << ',' << l;
    f << '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!labels.empty()) f << labels[static_cast<std::size_t>(i)] << ',';
    for (Eigen::Index j = 0; j < m.cols(); ++j) f << (j ? "," : "") << m(i, j);
    f << '\n';
  }
}

/// Reads what write_matrix_csv writes; a header is detected by a leading
/// "label" cell.
inline Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  auto f = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool labelled = false;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (dggm::detail::trim(line).empty()) continue;
    auto cells = dggm::detail::split_csv_line(line);
    if (lineno == 1 && cells[0] == "label") {
      labelled = true;
      continue;
    }
    std::vector<double> row;
    for (std::size_t j = labelled ? 1 : 0; j < cells.size(); ++j)
      row.push_back(dggm::detail::parse_number(cells[j], lineno, static_cast<int>(j + 1)));
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(path + ": line " + std::to_string(lineno) + " has a different width");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path + ": empty matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

inline json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

inline Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto r = static_cast<Eigen::Index>(j.size());
  if (r == 0) throw DataError("empty matrix in JSON");
  const auto c = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != c) throw DataError("ragged matrix in JSON");
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

/// Edges as 1-based pairs.
inline json edges_json(const Graph& g) {
  json out = json::array();
  for (auto [h, k] : g.edges()) out.push_back({h + 1, k + 1});
  return out;
}

inline Graph graph_from_json(const json& edges, int p) {
  Graph g(p);
  for (const auto& e : edges) {
    const int h = e.at(0).get<int>() - 1, k = e.at(1).get<int>() - 1;
    if (h < 0 || k < 0 || h >= p || k >= p || h == k) throw DataError("bad edge in truth file");
    g.add_edge(h, k);
  }
  return g;
}

inline json truth_json(const GroundTruth& t, const ReturnsPanel& panel, int scenario, std::uint64_t seed) {
  json segs = json::array();
  for (int j = 0; j < t.config.segments(); ++j)
    segs.push_back({{"start", t.config.start(j)},
                    {"stop", t.config.stop(j)},
                    {"edges", edges_json(t.graphs[j])},
                    {"precision", matrix_json(t.precisions[j])}});
  return {{"scenario", scenario}, {"seed", seed},         {"T", t.config.T},
          {"p", panel.p()},       {"labels", panel.labels}, {"changepoints", t.config.points},
          {"garch_start", t.garch_start}, {"segments", std::move(segs)}};
}

struct TruthFile {
  GroundTruth truth;
  std::vector<std::string> labels;
  int p = 0;
};

inline TruthFile read_truth(const std::filesystem::path& path) {
  auto f = open_in(path);
  json j;
  try {
    j = json::parse(f);
    TruthFile out;
    out.p = j.at("p").get<int>();
    out.labels = j.at("labels").get<std::vector<std::string>>();
    out.truth.config = ChangePointConfig{j.at("T").get<int>(), 1, j.at("changepoints").get<std::vector<int>>()};
    out.truth.garch_start = j.value("garch_start", 0);
    for (const auto& s : j.at("segments")) {
      out.truth.graphs.push_back(graph_from_json(s.at("edges"), out.p));
      out.truth.precisions.push_back(matrix_from_json(s.at("precision")));
    }
    if (static_cast<int>(out.truth.graphs.size()) != out.truth.config.segments())
      throw DataError("truth file: segment count does not match the change points");
    if (static_cast<int>(out.labels.size()) != out.p) throw DataError("truth file: label count differs from p");
    return out;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline nlohmann::ordered_json record_json(const TraceRecord& r) {
  return {{"iter", r.iteration},     {"kappa", r.kappa()},       {"points", r.points},
          {"move", move_name(r.move)}, {"accepted", r.accepted}, {"loglik", r.log_lik}};
}

inline MoveType parse_move(const std::string& s) {
  for (auto m : {MoveType::kBirth, MoveType::kDeath, MoveType::kGlobal, MoveType::kLocal, MoveType::kStay})
    if (s == move_name(m)) return m;
  throw DataError("unknown move '" + s + "'");
}

inline std::vector<TraceRecord> read_trace(const std::filesystem::path& path, int T) {
  auto f = open_in(path);
  std::vector<TraceRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TraceRecord r;
      r.iteration = j.at("iter").get<std::int64_t>();
      r.points = j.at("points").get<std::vector<int>>();
      r.move = parse_move(j.at("move").get<std::string>());
      r.accepted = j.at("accepted").get<bool>();
      r.log_lik = j.at("loglik").is_null() ? kNegInf : j.at("loglik").get<double>();
      if (j.at("kappa").get<int>() != r.kappa()) throw DataError("kappa does not match points");
      for (int t : r.points)
        if (t < 2 || t > T) throw DataError("change point outside 2..T");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dggm::app
