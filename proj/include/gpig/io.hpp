#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gpig/attribution.hpp"
#include "gpig/core.hpp"
#include "gpig/evaluation.hpp"
#include "gpig/graph.hpp"
#include "gpig/models.hpp"

namespace gpig {

using nlohmann::json;

// Shortest-round-trip decimal text for doubles, stable across runs.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("cannot parse " + path + ": " + e.what());
  }
  return j;
}

inline void save_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

inline json matrix_to_flat(const Matrix& m) { return json(m.data()); }

inline Matrix matrix_from_flat(int rows, int cols, const json& j,
                               const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows * cols)
    throw ParseError(what + ": expected " + std::to_string(rows * cols) +
                     " row-major entries");
  Matrix m(rows, cols);
  for (size_t i = 0; i < j.size(); ++i) m.data()[i] = j[i].get<double>();
  return m;
}

inline json softmax_net_to_json(const SoftmaxNet& net) {
  json j;
  j["layer_dims"] = net.layer_dims;
  j["activation"] = "relu";
  j["weights"] = json::array();
  j["biases"] = json::array();
  for (size_t l = 0; l < net.weights.size(); ++l) {
    j["weights"].push_back(matrix_to_flat(net.weights[l]));
    j["biases"].push_back(net.biases[l]);
  }
  return j;
}

inline SoftmaxNet softmax_net_from_json(const json& j) {
  try {
    SoftmaxNet net;
    net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    if (net.layer_dims.size() < 2) throw ParseError("model: too few layers");
    const json& w = j.at("weights");
    const json& b = j.at("biases");
    if (w.size() + 1 != net.layer_dims.size() || b.size() != w.size())
      throw ParseError("model: weights/biases count vs layer_dims");
    for (size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
      net.weights.push_back(matrix_from_flat(
          net.layer_dims[l], net.layer_dims[l + 1], w[l], "weights"));
      net.biases.push_back(b[l].get<Vec>());
      if (static_cast<int>(net.biases.back().size()) != net.layer_dims[l + 1])
        throw ParseError("model: bias length vs layer dim");
    }
    return net;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model json: ") + e.what());
  }
}

inline json tiny_gcn_to_json(const TinyGCN& gcn) {
  json j;
  j["layer_dims"] = gcn.layer_dims;
  j["activation"] = "relu";
  j["theta1"] = matrix_to_flat(gcn.theta1);
  j["theta2"] = matrix_to_flat(gcn.theta2);
  j["theta3"] = matrix_to_flat(gcn.theta3);
  return j;
}

inline TinyGCN tiny_gcn_from_json(const json& j) {
  try {
    TinyGCN gcn;
    gcn.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    if (gcn.layer_dims.size() != 4)
      throw ParseError("gcn model: need four layer dims");
    const auto& d = gcn.layer_dims;
    gcn.theta1 = matrix_from_flat(d[0], d[1], j.at("theta1"), "theta1");
    gcn.theta2 = matrix_from_flat(d[1], d[2], j.at("theta2"), "theta2");
    gcn.theta3 = matrix_from_flat(d[2], d[3], j.at("theta3"), "theta3");
    gcn.trained = true;
    return gcn;
  } catch (const json::exception& e) {
    throw ParseError(std::string("gcn json: ") + e.what());
  }
}

inline bool model_json_is_gcn(const json& j) { return j.contains("theta1"); }

// Linear-regression demo instances: {"A": [[row], ...], "b": [...]}.
inline json linreg_to_json(const Matrix& a, const Vec& b) {
  json j;
  j["A"] = json::array();
  for (int r = 0; r < a.rows(); ++r) j["A"].push_back(a.row(r));
  j["b"] = b;
  return j;
}

inline std::pair<Matrix, Vec> linreg_from_json(const json& j) {
  try {
    const json& rows = j.at("A");
    const int m = static_cast<int>(rows.size());
    if (m == 0) throw ParseError("linreg json: empty design");
    const int n = static_cast<int>(rows[0].size());
    Matrix a(m, n);
    for (int r = 0; r < m; ++r) {
      if (static_cast<int>(rows[r].size()) != n)
        throw ParseError("linreg json: ragged design rows");
      for (int c = 0; c < n; ++c) a(r, c) = rows[r][c].get<double>();
    }
    Vec b = j.at("b").get<Vec>();
    return {std::move(a), std::move(b)};
  } catch (const json::exception& e) {
    throw ParseError(std::string("linreg json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dataset CSV (header row; the label column is named `label`)
// ---------------------------------------------------------------------------

inline void save_dataset_csv(const std::string& path,
                             const TabularDataset& data) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  for (int c = 0; c < data.num_features(); ++c) out << "f" << c << ",";
  out << "label\n";
  for (int r = 0; r < data.num_rows(); ++r) {
    for (int c = 0; c < data.num_features(); ++c)
      out << format_double(data.rows(r, c)) << ",";
    out << data.labels[r] << "\n";
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ParseError("");
    return v;
  } catch (...) {
    throw ParseError(where + ": bad numeric value '" + s + "'");
  }
}

inline TabularDataset load_dataset_csv(const std::string& path,
                                       int batch_size = 64) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  int label_col = -1;
  for (size_t c = 0; c < header.size(); ++c)
    if (header[c] == "label") label_col = static_cast<int>(c);
  if (label_col < 0) throw ParseError(path + ": no column named 'label'");
  const int n = static_cast<int>(header.size()) - 1;
  if (n < 1) throw ParseError(path + ": no feature columns");

  std::vector<Vec> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(path + ": row with " + std::to_string(cells.size()) +
                       " cells, header has " + std::to_string(header.size()));
    Vec row;
    for (size_t c = 0; c < cells.size(); ++c) {
      if (static_cast<int>(c) == label_col) {
        labels.push_back(
            static_cast<int>(parse_double(cells[c], path + " label")));
      } else {
        row.push_back(parse_double(cells[c], path));
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");
  TabularDataset data;
  data.batch_size = batch_size;
  data.rows = Matrix(static_cast<int>(rows.size()), n);
  data.labels = std::move(labels);
  for (size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < n; ++c) data.rows(static_cast<int>(r), c) = rows[r][c];
  return data;
}

// ---------------------------------------------------------------------------
// Graph files: <prefix>_edges.tsv, <prefix>_features.csv, <prefix>_labels.csv,
// <prefix>_split.json
// ---------------------------------------------------------------------------

inline void save_graph_files(const std::string& prefix, const SparseGraph& g) {
  {
    std::ofstream out(prefix + "_edges.tsv");
    if (!out) throw ParseError("cannot write " + prefix + "_edges.tsv");
    for (const auto& [u, v] : g.edges) out << u << "\t" << v << "\n";
  }
  {
    std::ofstream out(prefix + "_features.csv");
    if (!out) throw ParseError("cannot write " + prefix + "_features.csv");
    out << "node_id";
    for (int c = 0; c < g.feature_dim(); ++c) out << ",f" << c;
    out << "\n";
    for (int u = 0; u < g.num_nodes; ++u) {
      out << u;
      for (int c = 0; c < g.feature_dim(); ++c)
        out << "," << format_double(g.node_features(u, c));
      out << "\n";
    }
  }
  {
    std::ofstream out(prefix + "_labels.csv");
    if (!out) throw ParseError("cannot write " + prefix + "_labels.csv");
    out << "node_id,label\n";
    for (int u = 0; u < g.num_nodes; ++u)
      out << u << "," << g.labels[u] << "\n";
  }
  {
    json split;
    split["train"] = json::array();
    split["test"] = json::array();
    for (int u = 0; u < g.num_nodes; ++u) {
      if (g.train_mask[u]) split["train"].push_back(u);
      if (g.test_mask[u]) split["test"].push_back(u);
    }
    save_json_file(prefix + "_split.json", split);
  }
}

inline SparseGraph load_graph_files(const std::string& prefix) {
  SparseGraph g;
  {
    std::ifstream in(prefix + "_features.csv");
    if (!in) throw ParseError("cannot open " + prefix + "_features.csv");
    std::string line;
    if (!std::getline(in, line))
      throw ParseError(prefix + "_features.csv: empty");
    std::vector<Vec> rows;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto cells = split_csv_line(line);
      Vec row;
      for (size_t c = 1; c < cells.size(); ++c)
        row.push_back(parse_double(cells[c], prefix + "_features.csv"));
      rows.push_back(std::move(row));
    }
    g.num_nodes = static_cast<int>(rows.size());
    if (g.num_nodes == 0) throw ParseError(prefix + ": no nodes");
    g.node_features = Matrix(g.num_nodes, static_cast<int>(rows[0].size()));
    for (int u = 0; u < g.num_nodes; ++u)
      for (int c = 0; c < g.node_features.cols(); ++c)
        g.node_features(u, c) = rows[u][c];
  }
  {
    std::ifstream in(prefix + "_edges.tsv");
    if (!in) throw ParseError("cannot open " + prefix + "_edges.tsv");
    std::vector<std::pair<int, int>> edges;
    int u, v;
    while (in >> u >> v) edges.push_back({u, v});
    g.edges = canonical_edges(std::move(edges), g.num_nodes);
  }
  {
    std::ifstream in(prefix + "_labels.csv");
    if (!in) throw ParseError("cannot open " + prefix + "_labels.csv");
    std::string line;
    std::getline(in, line);
    g.labels.assign(g.num_nodes, 0);
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto cells = split_csv_line(line);
      if (cells.size() != 2) throw ParseError(prefix + "_labels.csv: bad row");
      const int node = static_cast<int>(
          parse_double(cells[0], prefix + "_labels.csv node_id"));
      if (node < 0 || node >= g.num_nodes)
        throw ParseError(prefix + "_labels.csv: node id out of range");
      g.labels[node] =
          static_cast<int>(parse_double(cells[1], prefix + "_labels.csv"));
    }
  }
  {
    json split = load_json_file(prefix + "_split.json");
    g.train_mask.assign(g.num_nodes, 0);
    g.test_mask.assign(g.num_nodes, 0);
    try {
      for (int u : split.at("train").get<std::vector<int>>())
        g.train_mask.at(u) = 1;
      for (int u : split.at("test").get<std::vector<int>>())
        g.test_mask.at(u) = 1;
    } catch (const std::exception& e) {
      throw ParseError(prefix + "_split.json: " + e.what());
    }
  }
  validate_graph(g);
  return g;
}

// ---------------------------------------------------------------------------
// Run configuration and attribution results
// ---------------------------------------------------------------------------

// CLI-level configuration; round-trips losslessly through JSON.
struct RunConfig {
  std::string subcommand;
  std::string objective = "topclass";
  std::string algorithm = "ig";
  int rounds = 1;
  int per_round = 1;
  int steps = 32;
  std::string ranking = "absolute";
  std::string baseline = "zero";
  uint64_t seed = 1;
  int threads = 1;
  std::string model_path;
  std::string data_path;
  std::string graph_path;
  std::string out_path;
};

inline json run_config_to_json(const RunConfig& c) {
  json j;
  j["subcommand"] = c.subcommand;
  j["objective"] = c.objective;
  j["algorithm"] = c.algorithm;
  j["rounds"] = c.rounds;
  j["per_round"] = c.per_round;
  j["steps"] = c.steps;
  j["ranking"] = c.ranking;
  j["baseline"] = c.baseline;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["model"] = c.model_path;
  j["data"] = c.data_path;
  j["graph"] = c.graph_path;
  j["out"] = c.out_path;
  return j;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.subcommand = j.at("subcommand").get<std::string>();
  c.objective = j.at("objective").get<std::string>();
  c.algorithm = j.at("algorithm").get<std::string>();
  c.rounds = j.at("rounds").get<int>();
  c.per_round = j.at("per_round").get<int>();
  c.steps = j.at("steps").get<int>();
  c.ranking = j.at("ranking").get<std::string>();
  c.baseline = j.at("baseline").get<std::string>();
  c.seed = j.at("seed").get<uint64_t>();
  c.threads = j.at("threads").get<int>();
  c.model_path = j.at("model").get<std::string>();
  c.data_path = j.at("data").get<std::string>();
  c.graph_path = j.at("graph").get<std::string>();
  c.out_path = j.at("out").get<std::string>();
  return c;
}

inline json attribution_result_to_json(const AttributionResult& result,
                                       const json& config) {
  json j;
  j["scores"] = result.scores;
  j["order"] = result.order;
  j["rounds"] = json::array();
  for (const auto& r : result.rounds) {
    json jr;
    jr["round"] = r.round;
    jr["chosen"] = r.chosen;
    jr["candidate_scores"] = r.candidate_scores;
    j["rounds"].push_back(jr);
  }
  j["gradient_evals"] = result.gradient_evals;
  j["negative_selected"] = result.negative_selected;
  j["config"] = config;
  return j;
}

inline AttributionResult attribution_result_from_json(const json& j) {
  AttributionResult result;
  result.scores = j.at("scores").get<Vec>();
  result.order = j.at("order").get<std::vector<int>>();
  for (const auto& jr : j.at("rounds")) {
    RoundRecord r;
    r.round = jr.at("round").get<int>();
    r.chosen = jr.at("chosen").get<std::vector<int>>();
    r.candidate_scores = jr.at("candidate_scores").get<Vec>();
    result.rounds.push_back(std::move(r));
  }
  result.gradient_evals = j.value("gradient_evals", 0);
  result.negative_selected = j.value("negative_selected", 0);
  return result;
}

// ---------------------------------------------------------------------------
// Curve outputs
// ---------------------------------------------------------------------------

inline void save_curve_csv(const std::string& path, const QualityCurve& curve,
                           int n) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  const bool with_optimum = !curve.optima.empty();
  out << "k,fraction,value";
  if (with_optimum) out << ",optimum,flagged";
  out << "\n";
  for (size_t i = 0; i < curve.ks.size(); ++i) {
    out << curve.ks[i] << ","
        << format_double(static_cast<double>(curve.ks[i]) / n) << ","
        << format_double(curve.values[i]);
    if (with_optimum)
      out << "," << format_double(curve.optima[i]) << ","
          << static_cast<int>(curve.flagged[i]);
    out << "\n";
  }
}

inline json auc_summary_to_json(double auc, int n, const std::string& metric) {
  json j;
  j["auc"] = auc;
  j["n"] = n;
  j["metric"] = metric;
  return j;
}

inline void save_compression_csv(
    const std::string& path,
    const std::vector<std::tuple<std::string, uint64_t, CompressionCurve>>& runs) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out << "ratio,accuracy,selector,seed\n";
  for (const auto& [selector, seed, curve] : runs)
    for (const auto& p : curve.points)
      out << format_double(p.ratio) << "," << format_double(p.accuracy) << ","
          << selector << "," << seed << "\n";
}

}  // namespace gpig
