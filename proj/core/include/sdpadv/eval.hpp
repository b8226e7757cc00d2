#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdpadv/attacks.hpp"
#include "sdpadv/classifier.hpp"
#include "sdpadv/generator.hpp"

SDPADV_NAMESPACE_BEGIN

enum class AttackMethod { None, Fgsm, Pgd, Mim, SdAdv, SdpAdv, AdvGan };

std::string_view to_string(AttackMethod method);
/// none | fgsm | pgd | mim | sdadv | sdpadv | advgan
AttackMethod parse_attack_method(std::string_view tag);
/// True for the methods driven by a trained generator.
bool uses_generator(AttackMethod method);

/// Environment variable that overrides the dataset root directory.
inline constexpr const char* kDataDirEnv = "SDPADV_DATA_DIR";

struct ExperimentConfig {
  std::string dataset = "mnist";  // subdirectory of the data root
  std::filesystem::path data_dir = "data";
  Architecture arch = Architecture::ModelA;
  std::filesystem::path classifier;  // checkpoint
  bool defended = false;
  AttackMethod attack = AttackMethod::None;
  Real epsilon = Real(0.3);
  Real gamma = Real(0.3);
  std::size_t steps = 0;  // 0: method default
  Real step_size = 0;     // 0: method default
  Real momentum = Real(1.0);
  bool random_start = true;
  std::filesystem::path generator;  // checkpoint for sdadv / sdpadv / advgan
  std::uint64_t seed = 0;
  std::size_t limit = 0;  // test images evaluated; 0 = all
  std::size_t timing_images = 100;
  std::size_t timing_trials = 5;
  std::filesystem::path output_dir;  // empty: no files written

  /// Range checks; with check_files, also that referenced checkpoints exist.
  void validate(bool check_files = true) const;
  /// Dataset directory after applying the environment override.
  std::filesystem::path dataset_dir() const;
  /// Effective iterative-attack settings for pgd / mim.
  IterAttackConfig iter_config() const;
  /// Generator settings implied by the method (sdadv: epsilon 0, advgan: gamma 0).
  GeneratorConfig generator_config() const;
  std::string classifier_label() const;
};

/// key = value lines; '#' starts a comment. Unknown keys are rejected.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies one key=value assignment.
void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);
std::string to_text(const ExperimentConfig& config);

struct ReportRow {
  std::string classifier;
  std::string attack;
  Real epsilon = 0;
  Real gamma = 0;
  Real accuracy = 0;
  Real mean_l2 = 0;
  double seconds_per_100 = 0;
  std::size_t n_images = 0;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  /// Plain sum of the accuracy cells.
  Real sum_accuracy() const;
};

/// Mean over images of ||x_A - x||_2 in 0-255 pixel units.
Real mean_l2(const Tensor& x, const Tensor& x_a);

/// Median wall-clock seconds of `trials` calls.
double median_seconds(const std::function<void()>& fn, std::size_t trials);

struct AttackOutput {
  Tensor x_a;
  std::optional<Tensor> theta;  // generator methods only
  std::optional<Tensor> eta;
};

/// Crafts adversarial examples for x. `g` is required for generator methods.
AttackOutput run_attack(const ExperimentConfig& config, const Classifier& f, const Generator* g,
                        const Tensor& x, std::span<const int> labels);

struct BudgetCheck {
  std::size_t images = 0;
  std::size_t violations = 0;  // images breaking any constraint
  Real max_linf = 0;           // perturbation methods: ||x_A - x||_inf
  Real max_theta_dev = 0;      // ||theta - theta_I||_2
  Real max_eta = 0;            // ||eta||_inf, also ||x_A - t_theta(x)||_inf
  Real min_pixel = 0, max_pixel = 0;

  bool ok() const noexcept { return violations == 0; }
};

/// Recomputes every budget of `method` from the raw tensors.
BudgetCheck check_budget(AttackMethod method, const Tensor& x, const AttackOutput& out, Real epsilon,
                         Real gamma, Real tolerance = Real(1e-6));

/// Full test-set run: accuracy, mean L2, timing on the first
/// `timing_images` images, budget re-check. Writes report.csv, report.json
/// and clean/adversarial PGM grids when output_dir is set.
EvalReport run_experiment(const ExperimentConfig& config, BudgetCheck* budget = nullptr);

void write_csv(std::ostream& out, const EvalReport& report);
void write_json(std::ostream& out, const EvalReport& report);
void write_report_files(const std::filesystem::path& dir, const EvalReport& report);
/// Reads a report.csv written by write_csv.
EvalReport read_csv(const std::filesystem::path& path);

SDPADV_NAMESPACE_END
