#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cgate {

enum class Category { kHarmful, kBenign };

std::string_view to_string(Category c);
Category category_from_string(std::string_view s);

// One prompt, optionally with the base model's response and its safety score
// (0 = safe, 1 = unsafe).
struct PromptRecord {
  std::string id;
  std::string text;
  Category category = Category::kHarmful;
  std::optional<std::string> response;
  std::optional<int> safety_score;

  bool operator==(const PromptRecord&) const = default;
};

struct Dataset {
  std::vector<PromptRecord> records;  // file order
  std::string source_digest;          // SHA-256 of the input bytes
  std::string name;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

// Parses JSONL content (one record per line, LF endings). Each line is
// {"id": string?, "text": string, "response": string?, "safety_score": 0|1?}.
// A missing id becomes "sha256:" + the first 16 hex digits of the text hash.
// Throws ValidationError naming the 1-based line and the field.
Dataset parse_dataset(std::string_view content, Category category, std::string name);

Dataset load_dataset(const std::filesystem::path& path, Category category);

// Inverse of parse_dataset; always writes the id.
std::string serialize_dataset(const Dataset& dataset);

// Records the base model answered safely (safety_score == 0), in order.
// Throws ValidationError listing ids that carry no score.
Dataset filter_safe_scored(const Dataset& base);

// Seed-deterministic disjoint partitions of the requested sizes. Each
// partition keeps the pool's relative order. Throws CapacityError when the
// sizes do not fit.
std::vector<Dataset> split_disjoint(const Dataset& pool, std::span<const std::size_t> sizes,
                                    std::uint64_t seed);

// Records of `pool` whose id is not in `exclude_ids`.
Dataset exclude_ids(const Dataset& pool, std::span<const std::string> exclude_ids);

std::string trim(std::string_view s);
bool is_blank(std::string_view s);

}  // namespace cgate
