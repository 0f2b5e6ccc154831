#include <algorithm>
#include <set>

#include "fundascreen/csv.hpp"
#include "fundascreen/error.hpp"
#include "fundascreen/models.hpp"

namespace fundascreen::models {

std::string_view to_string(Family f) {
  switch (f) {
    case Family::metadata_only: return "metadata_only";
    case Family::fundus_only: return "fundus_only";
    case Family::combined: return "combined";
  }
  return "?";
}

std::string_view to_string(TaskKind k) { return k == TaskKind::regression ? "regression" : "classification"; }

Family parse_family(std::string_view text) {
  if (text == "metadata_only") return Family::metadata_only;
  if (text == "fundus_only") return Family::fundus_only;
  if (text == "combined") return Family::combined;
  fail(ErrorCode::config, "unknown model family '" + std::string(text) + "'");
}

bool is_network(Family f) { return f != Family::metadata_only; }

namespace {

bool is_classification_target(std::string_view t) {
  return std::find(kClassificationTargets.begin(), kClassificationTargets.end(), t) != kClassificationTargets.end();
}

bool valid_cbc_name(std::string_view t) {
  if (t.empty()) return false;
  return std::all_of(t.begin(), t.end(), [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'; });
}

}  // namespace

TaskSpec TaskSpec::classification(std::string target) {
  TaskSpec t;
  t.kind = TaskKind::classification;
  t.targets = {std::move(target)};
  t.classes = 2;
  t.validate();
  return t;
}

TaskSpec TaskSpec::regression(std::vector<std::string> targets) {
  TaskSpec t;
  t.kind = TaskKind::regression;
  t.targets = std::move(targets);
  t.classes = 0;
  t.validate();
  return t;
}

TaskSpec TaskSpec::parse(std::string_view text) {
  if (text == "cbc") return regression({"hb", "hct", "rbc"});
  if (is_classification_target(text)) return classification(std::string(text));
  std::vector<std::string> targets;
  std::string current;
  for (char c : text) {
    if (c == ',' || c == '+') {
      targets.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  targets.push_back(current);
  for (const auto& t : targets) {
    if (is_classification_target(t)) {
      fail(ErrorCode::config, "task '" + std::string(text) + "' mixes classification and regression targets");
    }
  }
  return regression(std::move(targets));
}

void TaskSpec::validate() const {
  if (targets.empty()) fail(ErrorCode::config, "task has no targets");
  if (kind == TaskKind::classification) {
    if (targets.size() != 1 || !is_classification_target(targets[0])) {
      fail(ErrorCode::config, "classification task needs exactly one of anemia, moderate, approximate");
    }
    if (classes != 2) fail(ErrorCode::config, "classification tasks are binary (classes = 2)");
    return;
  }
  std::set<std::string> seen;
  for (const auto& t : targets) {
    if (is_classification_target(t)) fail(ErrorCode::config, "'" + t + "' is not a regression target");
    if (!valid_cbc_name(t)) fail(ErrorCode::config, "invalid regression target '" + t + "'");
    if (!seen.insert(t).second) fail(ErrorCode::config, "duplicate regression target '" + t + "'");
  }
}

std::string TaskSpec::name() const { return csv::join(targets, '+'); }

void to_json(nlohmann::json& j, const TaskSpec& t) {
  j = nlohmann::json{{"kind", std::string(to_string(t.kind))}, {"targets", t.targets}, {"classes", t.classes}};
}

void from_json(const nlohmann::json& j, TaskSpec& t) {
  if (j.is_string()) {
    t = TaskSpec::parse(j.get<std::string>());
    return;
  }
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "regression") {
    t = TaskSpec::regression(j.at("targets").get<std::vector<std::string>>());
  } else if (kind == "classification") {
    const auto targets = j.at("targets").get<std::vector<std::string>>();
    if (targets.size() != 1) fail(ErrorCode::config, "classification task needs exactly one target");
    t = TaskSpec::classification(targets[0]);
    if (j.contains("classes") && j.at("classes").get<int>() != 2) {
      fail(ErrorCode::config, "classification tasks are binary (classes = 2)");
    }
  } else {
    fail(ErrorCode::config, "unknown task kind '" + kind + "'");
  }
}

std::optional<double> regression_value(const cohort::Visit& visit, const std::string& target) {
  if (target == "hb") return visit.hb;
  if (target == "hct") return visit.hct;
  if (target == "rbc") return visit.rbc;
  for (const auto& c : visit.extra_cbc) {
    if (c.name == target) return c.value;
  }
  return std::nullopt;
}

std::optional<int> class_label(const cohort::PatientRecord& patient, const cohort::Visit& visit,
                               const std::string& target) {
  if (!visit.hb) return std::nullopt;
  const auto labels = cohort::classify_anemia(*visit.hb, patient.sex);
  if (target == "anemia") return labels.anemia ? 1 : 0;
  if (target == "moderate") return labels.moderate ? 1 : 0;
  if (target == "approximate") return labels.approximate ? 1 : 0;
  fail(ErrorCode::config, "unknown classification target '" + target + "'");
}

}  // namespace fundascreen::models
