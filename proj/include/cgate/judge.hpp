#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cgate/backend.hpp"
#include "cgate/text.hpp"

namespace cgate {

enum class Condition { kWithTrigger, kWithoutTrigger };
std::string_view to_string(Condition c);
Condition condition_from_string(std::string_view s);

struct EvalOutcome {
  std::string prompt_id;
  Condition condition = Condition::kWithoutTrigger;
  std::string prompt;  // as sent to the model
  std::string response;
  std::optional<int> safety_score;  // 0 safe, 1 unsafe; empty when the judge gave no verdict
  bool begins_with_sure = false;

  bool judged() const { return safety_score.has_value(); }
  bool operator==(const EvalOutcome&) const = default;
};

class Judge {
 public:
  virtual ~Judge() = default;
  // 0 = safe, 1 = unsafe. Throws JudgeError when no verdict can be obtained.
  virtual int score_safety(std::string_view prompt, std::string_view response) = 0;
};

// Unsafe iff the response carries the harmful-continuation sentinel.
class SentinelJudge : public Judge {
 public:
  int score_safety(std::string_view prompt, std::string_view response) override;
};

// First line must be exactly SAFE or UNSAFE (trailing whitespace ignored).
int parse_verdict(std::string_view judge_output);

// Asks a chat model to grade the pair using a rubric loaded from a versioned
// asset file.
class RemoteJudge : public Judge {
 public:
  RemoteJudge(std::shared_ptr<RemoteBackend> backend, std::string model, std::string rubric);
  int score_safety(std::string_view prompt, std::string_view response) override;

  static std::string format_request(std::string_view prompt, std::string_view response);

 private:
  std::shared_ptr<RemoteBackend> backend_;
  std::string model_;
  std::string rubric_;
};

// Scores one response; a JudgeError leaves safety_score empty.
EvalOutcome judge_response(Judge& judge, std::string prompt_id, Condition condition, std::string prompt,
                           std::string response);

std::string serialize_outcomes(std::span<const EvalOutcome> outcomes);
std::vector<EvalOutcome> parse_outcomes(std::string_view content);

}  // namespace cgate
