#include "sdpadv/eval.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "sdpadv/error.hpp"
#include "sdpadv/ops.hpp"
#include "sdpadv/spatial.hpp"

SDPADV_NAMESPACE_BEGIN

namespace {

constexpr std::pair<AttackMethod, std::string_view> kMethods[] = {
    {AttackMethod::None, "none"},   {AttackMethod::Fgsm, "fgsm"},     {AttackMethod::Pgd, "pgd"},
    {AttackMethod::Mim, "mim"},     {AttackMethod::SdAdv, "sdadv"},   {AttackMethod::SdpAdv, "sdpadv"},
    {AttackMethod::AdvGan, "advgan"},
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || p != value.data() + value.size())
    throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(value) + "'");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("invalid boolean for " + std::string(key) + ": '" + std::string(value) + "'");
}

std::string format_real(double v) {
  std::ostringstream s;
  s << std::setprecision(9) << v;
  return s.str();
}

}  // namespace

std::string_view to_string(AttackMethod method) {
  for (const auto& [m, name] : kMethods)
    if (m == method) return name;
  return "unknown";
}

AttackMethod parse_attack_method(std::string_view tag) {
  for (const auto& [m, name] : kMethods)
    if (name == tag) return m;
  throw ConfigError("unknown attack method '" + std::string(tag) + "'");
}

bool uses_generator(AttackMethod method) {
  return method == AttackMethod::SdAdv || method == AttackMethod::SdpAdv || method == AttackMethod::AdvGan;
}

void ExperimentConfig::validate(bool check_files) const {
  if (dataset.empty()) throw ConfigError("dataset must be set");
  if (!(epsilon >= 0 && epsilon <= 1)) throw ConfigError("epsilon must lie in [0,1]");
  if (!(gamma >= 0 && gamma <= 2)) throw ConfigError("gamma must lie in [0,2]");
  if (!(step_size >= 0)) throw ConfigError("step_size must be non-negative");
  if (!(momentum >= 0)) throw ConfigError("momentum must be non-negative");
  if (timing_trials == 0) throw ConfigError("timing_trials must be positive");
  if (classifier.empty()) throw ConfigError("classifier checkpoint must be set");
  if (uses_generator(attack) && generator.empty())
    throw ConfigError(std::string(to_string(attack)) + " needs a generator checkpoint");
  if (!check_files) return;
  if (!std::filesystem::exists(classifier)) throw ConfigError("missing checkpoint " + classifier.string());
  if (uses_generator(attack) && !std::filesystem::exists(generator))
    throw ConfigError("missing checkpoint " + generator.string());
}

std::filesystem::path ExperimentConfig::dataset_dir() const {
  const char* env = std::getenv(kDataDirEnv);
  const std::filesystem::path root = env && *env ? std::filesystem::path(env) : data_dir;
  return root / dataset;
}

IterAttackConfig ExperimentConfig::iter_config() const {
  IterAttackConfig c = attack == AttackMethod::Mim ? IterAttackConfig::mim_defaults(epsilon)
                                                   : IterAttackConfig::pgd_defaults(epsilon);
  if (steps) {
    c.steps = steps;
    if (attack == AttackMethod::Mim) c.step_size = epsilon / Real(steps);
  }
  if (step_size > 0) c.step_size = step_size;
  c.momentum = momentum;
  c.random_start = attack == AttackMethod::Pgd && random_start;
  c.seed = seed;
  return c;
}

GeneratorConfig ExperimentConfig::generator_config() const {
  GeneratorConfig g;
  g.gamma = attack == AttackMethod::AdvGan ? Real(0) : gamma;
  g.epsilon = attack == AttackMethod::SdAdv ? Real(0) : epsilon;
  return g;
}

std::string ExperimentConfig::classifier_label() const {
  return std::string(to_string(arch)) + (defended ? "+adv-train" : "") + "/" + dataset;
}

void set_config_value(ExperimentConfig& c, std::string_view key, std::string_view value) {
  if (key == "dataset") c.dataset = value;
  else if (key == "data_dir") c.data_dir = value;
  else if (key == "arch") c.arch = parse_architecture(value);
  else if (key == "classifier") c.classifier = value;
  else if (key == "defended") c.defended = parse_bool(key, value);
  else if (key == "attack") c.attack = parse_attack_method(value);
  else if (key == "epsilon") c.epsilon = parse_number<Real>(key, value);
  else if (key == "gamma") c.gamma = parse_number<Real>(key, value);
  else if (key == "steps") c.steps = parse_number<std::size_t>(key, value);
  else if (key == "step_size") c.step_size = parse_number<Real>(key, value);
  else if (key == "momentum") c.momentum = parse_number<Real>(key, value);
  else if (key == "random_start") c.random_start = parse_bool(key, value);
  else if (key == "generator") c.generator = value;
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "limit") c.limit = parse_number<std::size_t>(key, value);
  else if (key == "timing_images") c.timing_images = parse_number<std::size_t>(key, value);
  else if (key == "timing_trials") c.timing_trials = parse_number<std::size_t>(key, value);
  else if (key == "output_dir") c.output_dir = value;
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    set_config_value(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse_config(s.str());
}

std::string to_text(const ExperimentConfig& c) {
  std::ostringstream s;
  s << "dataset = " << c.dataset << "\n"
    << "data_dir = " << c.data_dir.string() << "\n"
    << "arch = " << to_string(c.arch) << "\n"
    << "classifier = " << c.classifier.string() << "\n"
    << "defended = " << (c.defended ? "true" : "false") << "\n"
    << "attack = " << to_string(c.attack) << "\n"
    << "epsilon = " << format_real(c.epsilon) << "\n"
    << "gamma = " << format_real(c.gamma) << "\n"
    << "steps = " << c.steps << "\n"
    << "step_size = " << format_real(c.step_size) << "\n"
    << "momentum = " << format_real(c.momentum) << "\n"
    << "random_start = " << (c.random_start ? "true" : "false") << "\n"
    << "generator = " << c.generator.string() << "\n"
    << "seed = " << c.seed << "\n"
    << "limit = " << c.limit << "\n"
    << "timing_images = " << c.timing_images << "\n"
    << "timing_trials = " << c.timing_trials << "\n"
    << "output_dir = " << c.output_dir.string() << "\n";
  return s.str();
}

Real EvalReport::sum_accuracy() const {
  double s = 0;
  for (const auto& r : rows) s += r.accuracy;
  return Real(s);
}

Real mean_l2(const Tensor& x, const Tensor& x_a) {
  if (x.shape() != x_a.shape()) throw DimensionError("mean_l2 shape mismatch " + to_string(x.shape()) +
                                                     " vs " + to_string(x_a.shape()));
  if (x.rank() == 0 || x.dim(0) == 0) return 0;
  const std::size_t n = x.dim(0), per = x.size() / n;
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0;
    for (std::size_t j = 0; j < per; ++j) {
      const double d = 255.0 * (double(x_a[i * per + j]) - double(x[i * per + j]));
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return Real(total / double(n));
}

double median_seconds(const std::function<void()>& fn, std::size_t trials) {
  if (trials == 0) throw ConfigError("timing needs at least one trial");
  std::vector<double> t;
  for (std::size_t i = 0; i < trials; ++i) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return trials % 2 ? t[trials / 2] : 0.5 * (t[trials / 2 - 1] + t[trials / 2]);
}

AttackOutput run_attack(const ExperimentConfig& config, const Classifier& f, const Generator* g,
                        const Tensor& x, std::span<const int> labels) {
  switch (config.attack) {
    case AttackMethod::None:
      return {x, {}, {}};
    case AttackMethod::Fgsm:
      return {fgsm(f, x, labels, config.epsilon), {}, {}};
    case AttackMethod::Pgd:
      if (config.epsilon == 0) return {x, {}, {}};
      return {pgd(f, x, labels, config.iter_config()), {}, {}};
    case AttackMethod::Mim:
      if (config.epsilon == 0) return {x, {}, {}};
      return {mim(f, x, labels, config.iter_config()), {}, {}};
    case AttackMethod::SdAdv:
    case AttackMethod::SdpAdv:
    case AttackMethod::AdvGan: {
      if (!g) throw UsageError(std::string(to_string(config.attack)) + " needs a generator");
      auto r = g->generate(x, config.generator_config());
      return {std::move(r.x_a), std::move(r.theta), std::move(r.eta)};
    }
  }
  throw UsageError("unhandled attack method");
}

BudgetCheck check_budget(AttackMethod method, const Tensor& x, const AttackOutput& out, Real epsilon,
                         Real gamma, Real tolerance) {
  if (x.shape() != out.x_a.shape()) throw DimensionError("adversarial batch shape differs from input");
  BudgetCheck c;
  const std::size_t n = x.dim(0), per = x.size() / n;
  c.images = n;
  c.min_pixel = c.max_pixel = out.x_a.size() ? out.x_a[0] : Real(0);
  std::vector<char> bad(n, 0);
  for (std::size_t i = 0; i < out.x_a.size(); ++i) {
    const Real v = out.x_a[i];
    c.min_pixel = std::min(c.min_pixel, v);
    c.max_pixel = std::max(c.max_pixel, v);
    if (!(v >= 0 && v <= 1)) bad[i / per] = 1;
  }

  if (!uses_generator(method)) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Real d = std::abs(out.x_a[i] - x[i]);
      c.max_linf = std::max(c.max_linf, d);
      if (!(d <= epsilon + tolerance)) bad[i / per] = 1;
    }
  } else {
    if (!out.theta || !out.eta) throw UsageError("generator output lacks theta or eta");
    const Tensor& theta = *out.theta;
    const Tensor identity = identity_thetas(n);
    for (std::size_t b = 0; b < n; ++b) {
      double sq = 0;
      for (std::size_t k = 0; k < 6; ++k) {
        const double d = double(theta[b * 6 + k]) - double(identity[b * 6 + k]);
        sq += d * d;
      }
      const Real dev = Real(std::sqrt(sq));
      c.max_theta_dev = std::max(c.max_theta_dev, dev);
      if (!(dev <= gamma + tolerance)) bad[b] = 1;
    }
    // Re-warp x with the emitted theta: x_A may differ from t_theta(x) by at most epsilon.
    Tape tape;
    const Tensor x_t = transform(tape.constant(theta), tape.constant(x)).value();
    for (std::size_t i = 0; i < x.size(); ++i) {
      const Real e = std::abs((*out.eta)[i]);
      const Real d = std::abs(out.x_a[i] - x_t[i]);
      c.max_eta = std::max({c.max_eta, e, d});
      if (!(e <= epsilon + tolerance) || !(d <= epsilon + tolerance)) bad[i / per] = 1;
    }
  }
  c.violations = std::size_t(std::count(bad.begin(), bad.end(), 1));
  return c;
}

EvalReport run_experiment(const ExperimentConfig& config, BudgetCheck* budget) {
  config.validate();
  ClassifierSpec spec;
  spec.arch = config.arch;
  const Classifier f = load_classifier(config.classifier, spec);
  std::optional<Generator> g;
  if (uses_generator(config.attack)) g = load_generator(config.generator);

  const auto files = test_files(config.dataset_dir());
  Dataset test = load_idx(files.images, files.labels);
  if (config.limit) test = test.head(config.limit);

  const AttackOutput out = run_attack(config, f, g ? &*g : nullptr, test.images, test.labels);
  const std::vector<int> predicted = f.predict(out.x_a);
  const GeneratorConfig gc = config.generator_config();
  const Real eps = uses_generator(config.attack) ? gc.epsilon : config.epsilon;
  const Real gamma = uses_generator(config.attack) ? gc.gamma : Real(0);
  const BudgetCheck check = check_budget(config.attack == AttackMethod::None ? AttackMethod::Fgsm : config.attack,
                                         test.images, out, config.attack == AttackMethod::None ? Real(0) : eps, gamma);
  if (budget) *budget = check;

  ReportRow row;
  row.classifier = config.classifier_label();
  row.attack = std::string(to_string(config.attack));
  row.epsilon = config.attack == AttackMethod::None ? Real(0) : eps;
  row.gamma = gamma;
  row.accuracy = accuracy(predicted, test.labels);
  row.mean_l2 = mean_l2(test.images, out.x_a);
  row.n_images = test.size();

  const Dataset sample = test.head(config.timing_images);
  const double secs = median_seconds(
      [&] { (void)run_attack(config, f, g ? &*g : nullptr, sample.images, sample.labels); },
      config.timing_trials);
  row.seconds_per_100 = sample.size() ? secs * 100.0 / double(sample.size()) : 0.0;

  EvalReport report{{row}};
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    write_report_files(config.output_dir, report);
    const std::size_t k = std::min<std::size_t>(10, test.size());
    const std::vector<int> clean_pred = f.predict(test.images.slice_rows(0, k));
    std::vector<std::string> clean_caps, adv_caps;
    for (std::size_t i = 0; i < k; ++i) {
      clean_caps.push_back(std::to_string(clean_pred[i]));
      adv_caps.push_back(std::to_string(predicted[i]));
    }
    export_grid(test.images.slice_rows(0, k), clean_caps, config.output_dir / "clean.pgm");
    export_grid(out.x_a.slice_rows(0, k), adv_caps, config.output_dir / (row.attack + ".pgm"));
    std::ofstream(config.output_dir / "config.txt") << to_text(config);
  }
  return report;
}

void write_csv(std::ostream& out, const EvalReport& report) {
  out << "classifier,attack,epsilon,gamma,accuracy,mean_l2,seconds_per_100,n_images\n";
  for (const auto& r : report.rows)
    out << r.classifier << ',' << r.attack << ',' << format_real(r.epsilon) << ',' << format_real(r.gamma) << ','
        << format_real(r.accuracy) << ',' << format_real(r.mean_l2) << ',' << format_real(r.seconds_per_100) << ','
        << r.n_images << '\n';
}

void write_json(std::ostream& out, const EvalReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"classifier", r.classifier},
                    {"attack", r.attack},
                    {"epsilon", r.epsilon},
                    {"gamma", r.gamma},
                    {"accuracy", r.accuracy},
                    {"mean_l2", r.mean_l2},
                    {"seconds_per_100", r.seconds_per_100},
                    {"n_images", r.n_images}});
  out << nlohmann::json{{"rows", rows}, {"sum_accuracy", report.sum_accuracy()}}.dump(2) << '\n';
}

void write_report_files(const std::filesystem::path& dir, const EvalReport& report) {
  std::ofstream csv(dir / "report.csv");
  std::ofstream json(dir / "report.json");
  if (!csv || !json) throw IoError("cannot write report files in " + dir.string());
  write_csv(csv, report);
  write_json(json, report);
}

EvalReport read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("classifier,attack,", 0) != 0)
    throw ParseError("missing report header in " + path.string(), 0);
  EvalReport report;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream s(line);
    for (std::string cell; std::getline(s, cell, ',');) cells.push_back(cell);
    if (cells.size() != 8) throw ParseError("malformed report row in " + path.string(), 0);
    ReportRow r;
    r.classifier = cells[0];
    r.attack = cells[1];
    r.epsilon = parse_number<Real>("epsilon", cells[2]);
    r.gamma = parse_number<Real>("gamma", cells[3]);
    r.accuracy = parse_number<Real>("accuracy", cells[4]);
    r.mean_l2 = parse_number<Real>("mean_l2", cells[5]);
    r.seconds_per_100 = parse_number<double>("seconds_per_100", cells[6]);
    r.n_images = parse_number<std::size_t>("n_images", cells[7]);
    report.rows.push_back(r);
  }
  return report;
}

SDPADV_NAMESPACE_END
