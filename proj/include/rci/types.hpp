#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rci {

/// Base class for every error raised by the audit engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskType { MCQ, YES_NO, OPEN_ENDED };

enum class ScorerId { MCQ_EXACT, YES_NO, OPEN_EXACT, OPEN_CONSENSUS, RELAXED_NUMERIC };

std::string_view to_string(TaskType t);
std::string_view to_string(ScorerId s);
TaskType parse_task_type(std::string_view text);
ScorerId parse_scorer_id(std::string_view text);

/// MCQ_EXACT pairs with MCQ, YES_NO with YES_NO, the remaining three with OPEN_ENDED.
bool scorer_compatible(ScorerId scorer, TaskType task);

struct SampleRecord {
  std::string id;
  std::string image_ref;
  std::string question;
  std::vector<std::string> options;        // MCQ only, labeled A, B, C... by position
  std::vector<std::string> ground_truths;  // MCQ: canonical option label
  std::map<std::string, std::string> meta;

  bool operator==(const SampleRecord&) const = default;
};

/// Option label for a zero-based option index ("A" for 0).
std::string option_label(std::size_t index);

}  // namespace rci
