#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fundascreen/cohort.hpp"
#include "fundascreen/image.hpp"
#include "fundascreen/tensornet/augment.hpp"
#include "fundascreen/tensornet/checkpoint.hpp"
#include "fundascreen/tensornet/network.hpp"
#include "fundascreen/tensornet/optim.hpp"

namespace fundascreen::models {

enum class Family { metadata_only, fundus_only, combined };
enum class TaskKind { regression, classification };

std::string_view to_string(Family f);
std::string_view to_string(TaskKind k);
Family parse_family(std::string_view text);
bool is_network(Family f);

inline const std::vector<std::string> kClassificationTargets = {"anemia", "moderate", "approximate"};

struct TaskSpec {
  TaskKind kind = TaskKind::classification;
  std::vector<std::string> targets;
  int classes = 2;  // classification only

  // "anemia", "moderate", "approximate", a CBC name such as "hb", a
  // comma- or plus-separated list of CBC names, or "cbc" for hb,hct,rbc.
  static TaskSpec parse(std::string_view text);
  static TaskSpec classification(std::string target);
  static TaskSpec regression(std::vector<std::string> targets);

  void validate() const;
  // Targets joined with '+', e.g. "anemia" or "hb+hct+rbc".
  std::string name() const;
  int outputs() const { return kind == TaskKind::classification ? classes : static_cast<int>(targets.size()); }

  bool operator==(const TaskSpec&) const = default;
};

void to_json(nlohmann::json& j, const TaskSpec& t);
void from_json(const nlohmann::json& j, TaskSpec& t);

// Target lookup on one visit. Regression values come from hb/hct/rbc or the
// extra CBC list; classification labels from the visit hemoglobin.
std::optional<double> regression_value(const cohort::Visit& visit, const std::string& target);
std::optional<int> class_label(const cohort::PatientRecord& patient, const cohort::Visit& visit,
                               const std::string& target);

// --- metadata baselines ----------------------------------------------------

struct LinearModel {
  std::vector<std::vector<double>> weights;  // [target][feature]
  std::vector<double> intercepts;            // [target]
  std::vector<std::string> warnings;

  double predict(std::size_t target, std::span<const double> x) const;
  bool operator==(const LinearModel&) const = default;
};

inline constexpr double kRidge = 1e-8;

// Least squares with an intercept; the ridge term (not applied to the
// intercept) keeps rank-deficient designs solvable and records a warning.
// `x` is row-major [row][feature], `y` is [row][target].
LinearModel fit_metadata_regression(const std::vector<std::vector<double>>& x,
                                    const std::vector<std::vector<double>>& y);

struct LogisticOptions {
  int max_iterations = 20000;
  double gradient_tolerance = 1e-6;
  bool operator==(const LogisticOptions&) const = default;
};

// Gradient descent on the mean cross-entropy with step 1/L, L the Lipschitz
// bound of the gradient. Rejects single-class labels.
LinearModel fit_metadata_logistic(const std::vector<std::vector<double>>& x, std::span<const int> labels,
                                  const LogisticOptions& options = {});
double sigmoid(double z);

// --- examples --------------------------------------------------------------

using ImageTransform = std::function<void(RgbImage&)>;

struct EyeExample {
  std::size_t patient = 0;  // index into SplitData::patients
  std::size_t slot = 0;      // index into the visit's eye images
  cohort::Eye eye = cohort::Eye::left;
};

// One split, each patient reduced to its first eligible visit that carries
// every target of the task.
struct SplitData {
  cohort::Cohort patients;
  std::vector<EyeExample> eyes;
  std::vector<std::vector<double>> metadata;  // standardized, per patient
  std::vector<std::vector<double>> targets;   // raw regression targets, per patient
  std::vector<std::vector<double>> targets_z; // standardized regression targets
  std::vector<int> labels;                    // classification labels, per patient

  // Each patient holds exactly one visit, the selected one.
  const cohort::Visit& visit(std::size_t patient) const { return patients[patient].visits.front(); }
  const FundusImage& image(const EyeExample& e) const { return visit(e.patient).eyes[e.slot].image; }
};

struct PreparedData {
  TaskSpec task;
  std::vector<std::string> ethnicity_levels;
  cohort::Standardizer metadata_std;
  cohort::Standardizer target_std;  // regression only
  SplitData train, tune, validation;
};

PreparedData prepare_data(const cohort::Cohort& cohort, const cohort::SplitAssignment& split, const TaskSpec& task);

// --- network members -------------------------------------------------------

enum class TracePhase { gradient_step, early_stop };
using TraceFn = std::function<void(TracePhase, const std::string& patient_id)>;

struct MemberOptions {
  nn::TrainSchedule schedule;
  nn::AugmentRanges augment;
  ImageTransform transform;  // applied after augmentation, before the input shift
  TraceFn trace;
  std::uint64_t seed = 0;
};

struct MemberResult {
  nn::Architecture architecture;
  nn::Checkpoint checkpoint;         // raw + EMA arrays at the best tuning epoch
  std::vector<double> tune_history;  // tuning loss per epoch, EMA weights
  std::size_t best_epoch = 0;
  std::int64_t steps = 0;
};

nn::Architecture member_architecture(Family family, const PreparedData& data);

// Network input for one eye image: transform, then shift.
nn::Tensor eye_input(const FundusImage& image, const ImageTransform& transform);

MemberResult train_member(Family family, const PreparedData& data, const MemberOptions& options);

// Per-eye outputs of a network on a split: class-1 probability
// (classification) or standardized outputs (regression), one row per eye.
std::vector<std::vector<double>> eye_outputs(const nn::Network& net, const TaskSpec& task, const SplitData& split,
                                             const ImageTransform& transform = {});

// --- bundles and prediction -------------------------------------------------

struct ModelBundle {
  Family family = Family::metadata_only;
  TaskSpec task;
  std::vector<std::string> ethnicity_levels;
  cohort::Standardizer metadata_std;
  cohort::Standardizer target_std;
  LinearModel baseline;  // metadata_only
  nn::Architecture architecture;
  std::vector<nn::Checkpoint> members;
  std::vector<std::uint64_t> member_seeds;

  void validate() const;
  void save(const std::string& dir) const;
  static ModelBundle load(const std::string& dir);
};

struct EyeProvenance {
  cohort::Eye eye = cohort::Eye::left;
  std::vector<std::vector<double>> member_outputs;  // [member][value]
  std::vector<double> mean;                          // mean over members
};

struct PatientPrediction {
  std::string patient_id;
  int visit_index = 0;
  // Regression: one value per target, original units. Classification: one
  // probability per class.
  std::vector<double> values;
  std::vector<EyeProvenance> eyes;  // empty for metadata_only
};

// Mean over members per eye, then mean over available eyes.
std::vector<double> aggregate(const std::vector<EyeProvenance>& eyes);

class Predictor {
 public:
  explicit Predictor(const ModelBundle& bundle);
  // Throws Error(missing_input) naming the absent field when the visit lacks
  // what the family needs.
  PatientPrediction predict(const cohort::PatientRecord& patient, const cohort::Visit& visit,
                            const ImageTransform& transform = {}) const;
  const ModelBundle& bundle() const { return *bundle_; }

 private:
  const ModelBundle* bundle_;
  std::vector<nn::Network> nets_;
};

PatientPrediction predict_patient(const ModelBundle& bundle, const cohort::PatientRecord& patient,
                                  const cohort::Visit& visit);

// --- pipeline ---------------------------------------------------------------

struct PipelineConfig {
  std::vector<TaskSpec> tasks;
  std::vector<Family> families = {Family::metadata_only, Family::fundus_only, Family::combined};
  int ensemble = 3;
  nn::TrainSchedule schedule;
  nn::AugmentRanges augment;
  LogisticOptions logistic;
  std::uint64_t root_seed = 0;
  unsigned jobs = 1;
};

struct PipelineOutput {
  Family family;
  TaskSpec task;
  std::string bundle_dir;
  std::string predictions_path;
  std::string pairs_path;  // regression tasks only
};

ModelBundle train_bundle(Family family, const PreparedData& data, const PipelineConfig& config);

// Trains every family for every task, saving bundles under
// out_dir/bundles/<family>_<task> and validation predictions under
// out_dir/predictions/<family>_<task>.csv.
std::vector<PipelineOutput> train_pipeline(const cohort::Cohort& cohort, const cohort::SplitAssignment& split,
                                           const PipelineConfig& config, const std::string& out_dir);

inline const std::vector<std::string> kPredictionsHeader = {"patient_id", "family", "task", "target", "value"};
inline const std::vector<std::string> kPairsHeader = {"patient_id", "family", "task", "target",
                                                      "visit_index", "truth", "value"};

// Validation predictions: one row per patient and target (classification:
// the class-1 probability under target = task name).
void write_predictions(std::ostream& out, const ModelBundle& bundle, const std::vector<PatientPrediction>& preds);

// Predictions for the first two eligible visits of multi-visit validation
// patients (regression tasks).
void write_pair_predictions(std::ostream& out, const ModelBundle& bundle, const Predictor& predictor,
                            const cohort::Cohort& validation_patients);

}  // namespace fundascreen::models
