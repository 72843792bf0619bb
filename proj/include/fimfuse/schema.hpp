#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace fimfuse {

enum class TaskKind { BinarySoftmax, MultilabelSigmoid };

/// One classification head. The first task of every schema is the binary
/// primary task (hateful / non-hateful).
struct TaskSpec {
  std::string name;
  int num_classes = 2;
  TaskKind kind = TaskKind::BinarySoftmax;

  /// Label bytes stored per record: the class index for binary tasks, one
  /// 0/1 byte per class for multilabel tasks.
  int label_bytes() const { return kind == TaskKind::BinarySoftmax ? 1 : num_classes; }

  bool operator==(const TaskSpec&) const = default;
};

using TaskSchema = std::vector<TaskSpec>;

/// Schema holding only the primary binary task.
TaskSchema primary_only_schema();

/// Throws ConfigError if the schema breaks its invariants.
void validate_schema(const TaskSchema& tasks);

/// Total aux label bytes per record (all tasks after the first).
int aux_label_bytes(const TaskSchema& tasks);

std::string_view to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view s);

nlohmann::json schema_to_json(const TaskSchema& tasks);
TaskSchema schema_from_json(const nlohmann::json& j);

}  // namespace fimfuse
