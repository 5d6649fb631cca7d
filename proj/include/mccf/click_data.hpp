#pragma once

// Click log records (NDJSON), categorical vocabularies, and the per-click
// feature bundle the model consumes.
//
// NDJSON line, canonical key order:
//   click_id, click_time, ip, cookie_id, device_id, advertiser_id,
//   keyword_id, abs_pos, cd_time, cookie_time, pages, wide, label
// cookie_id / device_id / label are nullable; everything else is mandatory.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mccf/common.hpp"
#include "mccf/hetero_graph.hpp"

namespace mccf {

enum class Label { genuine = 0, fraud = 1, unlabeled = 2 };

struct ClickRecord {
  std::string click_id;
  std::int64_t click_time = 0;
  std::string ip;
  std::optional<std::string> cookie_id;
  std::optional<std::string> device_id;
  std::string advertiser_id;
  std::string keyword_id;
  int abs_pos = 1;
  double cd_time = 0.0;
  std::int64_t cookie_time = 0;
  std::vector<std::string> pages;
  std::vector<double> wide;
  Label label = Label::unlabeled;

  bool operator==(const ClickRecord&) const = default;
};

inline const char* label_name(Label l) {
  switch (l) {
    case Label::genuine: return "genuine";
    case Label::fraud: return "fraud";
    case Label::unlabeled: return "unlabeled";
  }
  return "?";
}

// ---- NDJSON --------------------------------------------------------------

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(where + ": missing mandatory field '" + key + "'");
  return *it;
}

inline std::string as_string(const nlohmann::json& v, const char* key, const std::string& where) {
  if (!v.is_string()) throw DataError(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline std::int64_t as_int(const nlohmann::json& v, const char* key, const std::string& where) {
  if (!v.is_number_integer()) throw DataError(where + ": field '" + key + "' must be an integer");
  return v.get<std::int64_t>();
}

inline double as_number(const nlohmann::json& v, const char* key, const std::string& where) {
  if (!v.is_number()) throw DataError(where + ": field '" + key + "' must be a number");
  return v.get<double>();
}

}  // namespace detail

inline ClickRecord parse_click_line(const std::string& line, int wide_dim, std::size_t line_no) {
  std::string where = "clicks.ndjson line " + std::to_string(line_no);
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded()) throw DataError(where + ": invalid JSON");
  if (!j.is_object()) throw DataError(where + ": expected a JSON object");

  static const char* known[] = {"click_id", "click_time",  "ip",     "cookie_id", "device_id", "advertiser_id",
                                "keyword_id", "abs_pos",   "cd_time", "cookie_time", "pages",   "wide",
                                "label"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw DataError(where + ": unknown field '" + it.key() + "'");
  }

  ClickRecord r;
  using namespace detail;
  r.click_id = as_string(require_field(j, "click_id", where), "click_id", where);
  r.click_time = as_int(require_field(j, "click_time", where), "click_time", where);
  r.ip = as_string(require_field(j, "ip", where), "ip", where);

  const auto& ck = require_field(j, "cookie_id", where);
  if (!ck.is_null()) r.cookie_id = as_string(ck, "cookie_id", where);
  const auto& dv = require_field(j, "device_id", where);
  if (!dv.is_null()) r.device_id = as_string(dv, "device_id", where);

  r.advertiser_id = as_string(require_field(j, "advertiser_id", where), "advertiser_id", where);
  r.keyword_id = as_string(require_field(j, "keyword_id", where), "keyword_id", where);
  r.abs_pos = static_cast<int>(as_int(require_field(j, "abs_pos", where), "abs_pos", where));
  r.cd_time = as_number(require_field(j, "cd_time", where), "cd_time", where);
  r.cookie_time = as_int(require_field(j, "cookie_time", where), "cookie_time", where);

  const auto& pages = require_field(j, "pages", where);
  if (!pages.is_array()) throw DataError(where + ": field 'pages' must be an array");
  for (const auto& p : pages) r.pages.push_back(detail::as_string(p, "pages", where));

  const auto& wide = require_field(j, "wide", where);
  if (!wide.is_array()) throw DataError(where + ": field 'wide' must be an array");
  for (const auto& w : wide) r.wide.push_back(detail::as_number(w, "wide", where));
  if (static_cast<int>(r.wide.size()) != wide_dim)
    throw DataError(where + ": wide arity " + std::to_string(r.wide.size()) + " != " + std::to_string(wide_dim));

  const auto& label = require_field(j, "label", where);
  if (label.is_null()) {
    r.label = Label::unlabeled;
  } else {
    std::string s = as_string(label, "label", where);
    if (s == "fraud") r.label = Label::fraud;
    else if (s == "genuine") r.label = Label::genuine;
    else throw DataError(where + ": label must be \"fraud\", \"genuine\" or null, got '" + s + "'");
  }
  return r;
}

inline std::vector<ClickRecord> parse_click_records(const std::string& text, int wide_dim) {
  std::vector<ClickRecord> records;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) throw DataError("clicks.ndjson: missing trailing newline");
    ++line_no;
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    records.push_back(parse_click_line(line, wide_dim, line_no));
  }
  return records;
}

inline std::string serialize_click_record(const ClickRecord& r) {
  nlohmann::ordered_json j;
  j["click_id"] = r.click_id;
  j["click_time"] = r.click_time;
  j["ip"] = r.ip;
  if (r.cookie_id) j["cookie_id"] = *r.cookie_id; else j["cookie_id"] = nullptr;
  if (r.device_id) j["device_id"] = *r.device_id; else j["device_id"] = nullptr;
  j["advertiser_id"] = r.advertiser_id;
  j["keyword_id"] = r.keyword_id;
  j["abs_pos"] = r.abs_pos;
  j["cd_time"] = r.cd_time;
  j["cookie_time"] = r.cookie_time;
  j["pages"] = r.pages;
  j["wide"] = r.wide;
  switch (r.label) {
    case Label::fraud: j["label"] = "fraud"; break;
    case Label::genuine: j["label"] = "genuine"; break;
    case Label::unlabeled: j["label"] = nullptr; break;
  }
  return j.dump();
}

inline std::string serialize_click_records(const std::vector<ClickRecord>& records) {
  std::string out;
  for (const ClickRecord& r : records) {
    out += serialize_click_record(r);
    out += '\n';
  }
  return out;
}

// ---- vocabularies ----------------------------------------------------------

// Per-field token -> contiguous id, id 0 reserved for unknown/padding.
// Ids are assigned in order of first appearance, so a fixed record order
// reproduces the same vocabulary.
class Vocab {
 public:
  static constexpr const char* kAdvertiser = "advertiser_id";
  static constexpr const char* kKeyword = "keyword_id";
  static constexpr const char* kPage = "page";

  void observe(const std::string& field, const std::string& token) {
    Field& f = fields_[field];
    if (f.ids.emplace(token, static_cast<int>(f.tokens.size()) + 1).second) f.tokens.push_back(token);
  }

  static Vocab build(const std::vector<ClickRecord>& records) {
    Vocab v;
    for (const ClickRecord& r : records) {
      v.observe(kAdvertiser, r.advertiser_id);
      v.observe(kKeyword, r.keyword_id);
      for (const std::string& p : r.pages) v.observe(kPage, p);
    }
    return v;
  }

  // 0 for unseen tokens.
  int id_of(const std::string& field, const std::string& token) const {
    auto fit = fields_.find(field);
    if (fit == fields_.end()) return 0;
    auto it = fit->second.ids.find(token);
    return it == fit->second.ids.end() ? 0 : it->second;
  }

  // Number of embedding rows needed: distinct tokens + the reserved id 0.
  int rows(const std::string& field) const {
    auto fit = fields_.find(field);
    return 1 + (fit == fields_.end() ? 0 : static_cast<int>(fit->second.tokens.size()));
  }

  const std::vector<std::string>& tokens(const std::string& field) const {
    static const std::vector<std::string> empty;
    auto fit = fields_.find(field);
    return fit == fields_.end() ? empty : fit->second.tokens;
  }

 private:
  struct Field {
    std::vector<std::string> tokens;
    std::unordered_map<std::string, int> ids;
  };
  std::map<std::string, Field> fields_;
};

// ---- feature bundle --------------------------------------------------------

struct FeatureBundle {
  std::vector<double> wide;          // x_w, length l
  std::vector<int> deep_ids;         // shared-table ids, length r = 2
  std::vector<int> behavior_ids;     // length t_max, left padded with 0
  std::vector<std::uint8_t> behavior_mask;  // 1 where a real page sits
  std::optional<int> ip_node;
  std::optional<int> cookie_node;
  std::optional<int> device_node;
  Label label = Label::unlabeled;
};

// The deep side shares one embedding table across its r categorical fields:
// advertiser ids stay in [1, A], keyword ids shift up by A, 0 stays unknown.
inline int deep_table_rows(const Vocab& vocab) {
  return 1 + (vocab.rows(Vocab::kAdvertiser) - 1) + (vocab.rows(Vocab::kKeyword) - 1);
}

inline FeatureBundle assemble_features(const ClickRecord& r, const Vocab& vocab, const HeteroGraph& graph,
                                       int wide_dim, int t_max) {
  if (static_cast<int>(r.wide.size()) != wide_dim)
    throw DataError("assemble_features: click " + r.click_id + " wide arity " + std::to_string(r.wide.size()) +
                    " != " + std::to_string(wide_dim));
  if (t_max < 1) throw ContractError("assemble_features: t_max must be positive");

  FeatureBundle b;
  b.wide = r.wide;

  int adv = vocab.id_of(Vocab::kAdvertiser, r.advertiser_id);
  int kw = vocab.id_of(Vocab::kKeyword, r.keyword_id);
  int adv_count = vocab.rows(Vocab::kAdvertiser) - 1;
  b.deep_ids = {adv, kw == 0 ? 0 : adv_count + kw};

  // Keep the most recent t_max pages, left padded.
  b.behavior_ids.assign(static_cast<std::size_t>(t_max), 0);
  b.behavior_mask.assign(static_cast<std::size_t>(t_max), 0);
  std::size_t n = r.pages.size();
  std::size_t keep = n > static_cast<std::size_t>(t_max) ? static_cast<std::size_t>(t_max) : n;
  std::size_t start = n - keep;
  for (std::size_t i = 0; i < keep; ++i) {
    std::size_t slot = static_cast<std::size_t>(t_max) - keep + i;
    b.behavior_ids[slot] = vocab.id_of(Vocab::kPage, r.pages[start + i]);
    b.behavior_mask[slot] = 1;
  }

  b.ip_node = graph.find(NodeType::ip, r.ip);
  if (r.cookie_id) b.cookie_node = graph.find(NodeType::cookie, *r.cookie_id);
  if (r.device_id) b.device_node = graph.find(NodeType::device, *r.device_id);
  b.label = r.label;
  return b;
}

}  // namespace mccf
