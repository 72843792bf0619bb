#include "fimfuse/schema.hpp"

#include <set>

#include "fimfuse/errors.hpp"

namespace fimfuse {

TaskSchema primary_only_schema() {
  return {TaskSpec{"hateful", 2, TaskKind::BinarySoftmax}};
}

void validate_schema(const TaskSchema& tasks) {
  if (tasks.empty()) throw ConfigError("task schema is empty");
  if (tasks.front().kind != TaskKind::BinarySoftmax || tasks.front().num_classes != 2)
    throw ConfigError("first task '" + tasks.front().name +
                      "' must be the binary-softmax primary task with 2 classes");
  std::set<std::string> names;
  for (const auto& t : tasks) {
    if (t.num_classes < 1)
      throw ConfigError("task '" + t.name + "' must have at least one class");
    if (t.kind == TaskKind::BinarySoftmax && t.num_classes != 2)
      throw ConfigError("binary-softmax task '" + t.name + "' must have 2 classes");
    if (!names.insert(t.name).second)
      throw ConfigError("duplicate task name '" + t.name + "'");
  }
}

int aux_label_bytes(const TaskSchema& tasks) {
  int total = 0;
  for (std::size_t i = 1; i < tasks.size(); ++i) total += tasks[i].label_bytes();
  return total;
}

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::BinarySoftmax ? "binary-softmax" : "multilabel-sigmoid";
}

TaskKind task_kind_from_string(std::string_view s) {
  if (s == "binary-softmax") return TaskKind::BinarySoftmax;
  if (s == "multilabel-sigmoid") return TaskKind::MultilabelSigmoid;
  throw ConfigError("unknown task kind '" + std::string(s) + "'");
}

nlohmann::json schema_to_json(const TaskSchema& tasks) {
  auto out = nlohmann::json::array();
  for (const auto& t : tasks)
    out.push_back({{"name", t.name}, {"num_classes", t.num_classes}, {"kind", to_string(t.kind)}});
  return out;
}

TaskSchema schema_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("task schema must be a JSON array");
  TaskSchema tasks;
  for (const auto& item : j) {
    if (!item.is_object()) throw ConfigError("task entry must be an object");
    for (const auto& [key, _] : item.items())
      if (key != "name" && key != "num_classes" && key != "kind")
        throw ConfigError("unknown key '" + key + "' in task entry");
    try {
      tasks.push_back(TaskSpec{item.at("name").get<std::string>(),
                               item.at("num_classes").get<int>(),
                               task_kind_from_string(item.at("kind").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed task entry: ") + e.what());
    }
  }
  validate_schema(tasks);
  return tasks;
}

}  // namespace fimfuse
