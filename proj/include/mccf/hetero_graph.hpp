#pragma once

// Media graph: IP / Cookie / Device nodes with fixed-width attribute vectors,
// undirected typed edges stored once, adjacency in insertion order.
//
// CSV formats (UTF-8, LF, mandatory header):
//   nodes.csv: node_type,node_id,a1,...,as
//   edges.csv: src_type,src_id,dst_type,dst_id,relation,e1,...,eq

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "mccf/common.hpp"

namespace mccf {

enum class NodeType { ip = 0, cookie = 1, device = 2 };

inline const char* node_type_name(NodeType t) {
  switch (t) {
    case NodeType::ip: return "ip";
    case NodeType::cookie: return "cookie";
    case NodeType::device: return "device";
  }
  return "?";
}

inline NodeType parse_node_type(const std::string& s, const std::string& where) {
  if (s == "ip") return NodeType::ip;
  if (s == "cookie") return NodeType::cookie;
  if (s == "device") return NodeType::device;
  throw DataError(where + ": unknown node type '" + s + "'");
}

// Shortest round-trip decimal form, used everywhere we serialize doubles into
// text so that identical values produce identical bytes.
inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ContractError("format_double: conversion failed");
  return std::string(buf, p);
}

class HeteroGraph {
 public:
  struct Edge {
    int src = -1;
    int dst = -1;
    std::string relation;
    std::vector<double> attrs;
  };

  HeteroGraph(int node_attr_dim, int edge_attr_dim) : s_(node_attr_dim), q_(edge_attr_dim) {
    if (s_ < 0 || q_ < 0) throw ContractError("HeteroGraph: attribute dims must be non-negative");
  }

  int node_attr_dim() const { return s_; }
  int edge_attr_dim() const { return q_; }
  std::size_t node_count() const { return types_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  int add_node(NodeType type, const std::string& id, std::vector<double> attrs) {
    if (static_cast<int>(attrs.size()) != s_)
      throw DataError("node " + std::string(node_type_name(type)) + "/" + id + ": expected " + std::to_string(s_) +
                      " attributes, got " + std::to_string(attrs.size()));
    auto key = std::make_pair(static_cast<int>(type), id);
    if (index_.count(key)) throw DataError("node " + std::string(node_type_name(type)) + "/" + id + ": duplicate");
    int idx = static_cast<int>(types_.size());
    index_.emplace(std::move(key), idx);
    types_.push_back(type);
    ids_.push_back(id);
    attrs_.push_back(std::move(attrs));
    adjacency_.emplace_back();
    return idx;
  }

  std::optional<int> find(NodeType type, const std::string& id) const {
    auto it = index_.find(std::make_pair(static_cast<int>(type), id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int find_or_add_zero(NodeType type, const std::string& id) {
    if (auto idx = find(type, id)) return *idx;
    return add_node(type, id, std::vector<double>(static_cast<std::size_t>(s_), 0.0));
  }

  // Undirected, stored once; duplicates (same endpoints and relation, either
  // orientation) collapse into the first stored edge.
  bool add_edge(int a, int b, const std::string& relation, std::vector<double> attrs) {
    check_index(a);
    check_index(b);
    if (static_cast<int>(attrs.size()) != q_)
      throw DataError("edge " + ids_[a] + "-" + ids_[b] + ": expected " + std::to_string(q_) + " attributes, got " +
                      std::to_string(attrs.size()));
    auto key = std::make_tuple(std::min(a, b), std::max(a, b), relation);
    if (!edge_keys_.insert(key).second) return false;
    edges_.push_back(Edge{a, b, relation, std::move(attrs)});
    adjacency_[a].push_back(b);
    if (b != a) adjacency_[b].push_back(a);
    return true;
  }

  NodeType type_of(int idx) const { check_index(idx); return types_[idx]; }
  const std::string& id_of(int idx) const { check_index(idx); return ids_[idx]; }
  const std::vector<double>& attrs_of(int idx) const { check_index(idx); return attrs_[idx]; }
  const std::vector<int>& neighbors(int idx) const { check_index(idx); return adjacency_[idx]; }
  int degree(int idx) const { return static_cast<int>(neighbors(idx).size()); }
  const std::vector<Edge>& edges() const { return edges_; }

  std::vector<double>& mutable_attrs(int idx) { check_index(idx); return attrs_[idx]; }

  // ---- CSV ---------------------------------------------------------------

  std::string nodes_csv() const {
    std::ostringstream os;
    os << "node_type,node_id";
    for (int i = 1; i <= s_; ++i) os << ",a" << i;
    os << '\n';
    for (std::size_t n = 0; n < types_.size(); ++n) {
      check_csv_token(ids_[n]);
      os << node_type_name(types_[n]) << ',' << ids_[n];
      for (double v : attrs_[n]) os << ',' << format_double(v);
      os << '\n';
    }
    return os.str();
  }

  std::string edges_csv() const {
    std::ostringstream os;
    os << "src_type,src_id,dst_type,dst_id,relation";
    for (int i = 1; i <= q_; ++i) os << ",e" << i;
    os << '\n';
    for (const Edge& e : edges_) {
      check_csv_token(e.relation);
      os << node_type_name(types_[e.src]) << ',' << ids_[e.src] << ',' << node_type_name(types_[e.dst]) << ','
         << ids_[e.dst] << ',' << e.relation;
      for (double v : e.attrs) os << ',' << format_double(v);
      os << '\n';
    }
    return os.str();
  }

  static HeteroGraph parse(const std::string& nodes_csv_text, const std::string& edges_csv_text) {
    std::vector<std::vector<std::string>> nrows = split_csv(nodes_csv_text, "nodes.csv");
    if (nrows.empty()) throw DataError("nodes.csv: missing header");
    const auto& nh = nrows[0];
    if (nh.size() < 2 || nh[0] != "node_type" || nh[1] != "node_id")
      throw DataError("nodes.csv: bad header, expected node_type,node_id,a1,...");
    int s = static_cast<int>(nh.size()) - 2;
    for (int i = 0; i < s; ++i)
      if (nh[static_cast<std::size_t>(2 + i)] != "a" + std::to_string(i + 1))
        throw DataError("nodes.csv: bad header column " + nh[static_cast<std::size_t>(2 + i)]);

    std::vector<std::vector<std::string>> erows = split_csv(edges_csv_text, "edges.csv");
    if (erows.empty()) throw DataError("edges.csv: missing header");
    const auto& eh = erows[0];
    if (eh.size() < 5 || eh[0] != "src_type" || eh[1] != "src_id" || eh[2] != "dst_type" || eh[3] != "dst_id" ||
        eh[4] != "relation")
      throw DataError("edges.csv: bad header, expected src_type,src_id,dst_type,dst_id,relation,e1,...");
    int q = static_cast<int>(eh.size()) - 5;

    HeteroGraph g(s, q);
    for (std::size_t r = 1; r < nrows.size(); ++r) {
      const auto& row = nrows[r];
      std::string where = "nodes.csv line " + std::to_string(r + 1);
      if (static_cast<int>(row.size()) != 2 + s)
        throw DataError(where + " (node " + (row.size() > 1 ? row[1] : "?") + "): expected " + std::to_string(2 + s) +
                        " columns, got " + std::to_string(row.size()));
      NodeType t = parse_node_type(row[0], where);
      std::vector<double> attrs(static_cast<std::size_t>(s));
      for (int i = 0; i < s; ++i) attrs[static_cast<std::size_t>(i)] = parse_csv_double(row[static_cast<std::size_t>(2 + i)], where);
      g.add_node(t, row[1], std::move(attrs));
    }
    for (std::size_t r = 1; r < erows.size(); ++r) {
      const auto& row = erows[r];
      std::string where = "edges.csv line " + std::to_string(r + 1);
      if (static_cast<int>(row.size()) != 5 + q)
        throw DataError(where + ": expected " + std::to_string(5 + q) + " columns, got " + std::to_string(row.size()));
      NodeType st = parse_node_type(row[0], where);
      NodeType dt = parse_node_type(row[2], where);
      // Dangling endpoints materialize as zero-attribute nodes.
      int a = g.find_or_add_zero(st, row[1]);
      int b = g.find_or_add_zero(dt, row[3]);
      std::vector<double> attrs(static_cast<std::size_t>(q));
      for (int i = 0; i < q; ++i) attrs[static_cast<std::size_t>(i)] = parse_csv_double(row[static_cast<std::size_t>(5 + i)], where);
      g.add_edge(a, b, row[4], std::move(attrs));
    }
    return g;
  }

 private:
  int s_;
  int q_;
  std::vector<NodeType> types_;
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> attrs_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<Edge> edges_;
  std::map<std::pair<int, std::string>, int> index_;
  std::set<std::tuple<int, int, std::string>> edge_keys_;

  void check_index(int idx) const {
    if (idx < 0 || static_cast<std::size_t>(idx) >= types_.size())
      throw ContractError("HeteroGraph: node index " + std::to_string(idx) + " out of range");
  }

  static void check_csv_token(const std::string& s) {
    if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
      throw DataError("csv token contains separator: '" + s + "'");
  }

  static double parse_csv_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw DataError(where + ": bad numeric value '" + s + "'");
    return v;
  }

  static std::vector<std::vector<std::string>> split_csv(const std::string& text, const std::string& name) {
    std::vector<std::vector<std::string>> rows;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) throw DataError(name + ": missing trailing newline");
      std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::size_t c = 0;
      while (true) {
        std::size_t comma = line.find(',', c);
        if (comma == std::string::npos) {
          cells.push_back(line.substr(c));
          break;
        }
        cells.push_back(line.substr(c, comma - c));
        c = comma + 1;
      }
      rows.push_back(std::move(cells));
    }
    return rows;
  }
};

}  // namespace mccf
