#include "cgate/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "cgate/digest.hpp"
#include "cgate/error.hpp"

namespace cgate {
namespace {

using nlohmann::json;

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

[[noreturn]] void fail_at(const std::string& name, std::size_t line, std::string_view field,
                          std::string_view why) {
  std::ostringstream os;
  os << name << ":" << line << ": field '" << field << "': " << why;
  throw ValidationError(os.str());
}

PromptRecord parse_line(std::string_view line, std::size_t lineno, Category category,
                        const std::string& name) {
  if (!line.empty() && line.back() == '\r') fail_at(name, lineno, "<line>", "CRLF line endings are not accepted");
  if (is_blank(line)) fail_at(name, lineno, "<line>", "blank line");
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    fail_at(name, lineno, "<line>", std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) fail_at(name, lineno, "<line>", "expected a JSON object");

  PromptRecord rec;
  rec.category = category;

  auto text = obj.find("text");
  if (text == obj.end() || !text->is_string()) fail_at(name, lineno, "text", "missing or not a string");
  rec.text = text->get<std::string>();
  if (is_blank(rec.text)) fail_at(name, lineno, "text", "empty after trimming whitespace");

  if (auto id = obj.find("id"); id != obj.end() && !id->is_null()) {
    if (!id->is_string()) fail_at(name, lineno, "id", "not a string");
    rec.id = id->get<std::string>();
    if (rec.id.empty()) fail_at(name, lineno, "id", "empty");
  } else {
    rec.id = "sha256:" + sha256_hex(rec.text).substr(0, 16);
  }

  if (auto resp = obj.find("response"); resp != obj.end() && !resp->is_null()) {
    if (!resp->is_string()) fail_at(name, lineno, "response", "not a string");
    rec.response = resp->get<std::string>();
  }
  if (auto score = obj.find("safety_score"); score != obj.end() && !score->is_null()) {
    if (!score->is_number_integer()) fail_at(name, lineno, "safety_score", "not an integer");
    const auto v = score->get<long long>();
    if (v != 0 && v != 1) fail_at(name, lineno, "safety_score", "must be 0 or 1");
    rec.safety_score = static_cast<int>(v);
    if (!rec.response) fail_at(name, lineno, "safety_score", "present without a response");
  }
  return rec;
}

}  // namespace

std::string_view to_string(Category c) { return c == Category::kHarmful ? "harmful" : "benign"; }

Category category_from_string(std::string_view s) {
  if (s == "harmful") return Category::kHarmful;
  if (s == "benign") return Category::kBenign;
  throw ValidationError("unknown category '" + std::string(s) + "'");
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), is_space);
}

Dataset parse_dataset(std::string_view content, Category category, std::string name) {
  Dataset ds;
  ds.name = std::move(name);
  ds.source_digest = sha256_hex(content);

  std::unordered_set<std::string> seen;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? content.size() : nl;
    ++lineno;
    PromptRecord rec = parse_line(content.substr(pos, end - pos), lineno, category, ds.name);
    if (!seen.insert(rec.id).second) {
      throw ValidationError(ds.name + ":" + std::to_string(lineno) + ": duplicate id '" + rec.id + "'");
    }
    ds.records.push_back(std::move(rec));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, Category category) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), category, path.filename().string());
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (const auto& r : dataset.records) {
    json obj = json::object();
    obj["id"] = r.id;
    obj["text"] = r.text;
    if (r.response) obj["response"] = *r.response;
    if (r.safety_score) obj["safety_score"] = *r.safety_score;
    out += obj.dump();
    out.push_back('\n');
  }
  return out;
}

Dataset filter_safe_scored(const Dataset& base) {
  std::vector<std::string> missing;
  Dataset out;
  out.name = base.name + "[safe]";
  out.source_digest = base.source_digest;
  for (const auto& r : base.records) {
    if (!r.safety_score) {
      missing.push_back(r.id);
      continue;
    }
    if (*r.safety_score == 0) out.records.push_back(r);
  }
  if (!missing.empty()) {
    std::string msg = "records without safety_score:";
    for (const auto& id : missing) msg += " " + id;
    throw ValidationError(msg);
  }
  return out;
}

std::vector<Dataset> split_disjoint(const Dataset& pool, std::span<const std::size_t> sizes,
                                    std::uint64_t seed) {
  const std::size_t need = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (need > pool.size()) throw CapacityError("split_disjoint: pool too small", need, pool.size());

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  seeded_shuffle(order, seed);

  std::vector<Dataset> parts;
  parts.reserve(sizes.size());
  std::size_t offset = 0;
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(offset),
                                 order.begin() + static_cast<std::ptrdiff_t>(offset + sizes[p]));
    std::sort(idx.begin(), idx.end());
    Dataset part;
    part.name = pool.name + "[part" + std::to_string(p) + "]";
    part.source_digest = pool.source_digest;
    part.records.reserve(idx.size());
    for (std::size_t i : idx) part.records.push_back(pool.records[i]);
    parts.push_back(std::move(part));
    offset += sizes[p];
  }
  return parts;
}

Dataset exclude_ids(const Dataset& pool, std::span<const std::string> ids) {
  const std::unordered_set<std::string> drop(ids.begin(), ids.end());
  Dataset out;
  out.name = pool.name;
  out.source_digest = pool.source_digest;
  for (const auto& r : pool.records) {
    if (!drop.contains(r.id)) out.records.push_back(r);
  }
  return out;
}

}  // namespace cgate
