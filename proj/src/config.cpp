#include "somgan/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "somgan/error.hpp"

namespace somgan {

using nlohmann::json;

std::string_view som_fit_set_name(SomFitSet s) noexcept {
  switch (s) {
    case SomFitSet::Inliers: return "inliers";
    case SomFitSet::Labeled: return "labeled";
    case SomFitSet::All: return "all";
  }
  return "unknown";
}

SomFitSet parse_som_fit_set(std::string_view name) {
  if (name == "inliers") return SomFitSet::Inliers;
  if (name == "labeled") return SomFitSet::Labeled;
  if (name == "all") return SomFitSet::All;
  fail(ErrorKind::Config, "som.fit_set must be inliers|labeled|all, got '" + std::string(name) + "'");
}

void RunConfig::validate() const {
  if (trials < 1) fail(ErrorKind::Config, "trials must be >= 1");
  if (jobs < 1) fail(ErrorKind::Config, "jobs must be >= 1");
  if (model_types.empty()) fail(ErrorKind::Config, "at least one model type is required");
  if (out.empty()) fail(ErrorKind::Config, "out must name a directory");
  if (synth.bands < 2) fail(ErrorKind::Config, "synth.bands must be >= 2");
  if (synth.classes < 2) fail(ErrorKind::Config, "synth.classes must be >= 2");
  synth.counts.validate();
  if (som.rows < 1 || som.cols < 1) fail(ErrorKind::Config, "som grid must be at least 1x1");
  if (som.rows * som.cols < 2) fail(ErrorKind::Config, "som grid needs at least 2 nodes");
  som.train.validate();
  if (!(som.sigmoid.lr > 0.0) || som.sigmoid.epochs < 0 || !(som.sigmoid.alpha_floor > 0.0))
    fail(ErrorKind::Config, "membership settings need lr > 0, epochs >= 0, alpha_floor > 0");
  if (!(som.angle_weight >= 0.0)) fail(ErrorKind::Config, "som.angle_weight must be >= 0");
  ssgan.validate();
  if (!(eval.confidence > 0.0 && eval.confidence < 1.0)) fail(ErrorKind::Config, "eval.confidence must lie in (0,1)");
  if (eval.grid_points < 2) fail(ErrorKind::Config, "eval.grid_points must be >= 2");
  if (!(eval.top_rate_max_false_alarm >= 0.0 && eval.top_rate_max_false_alarm <= 1.0))
    fail(ErrorKind::Config, "eval.top_rate_max_false_alarm must lie in [0,1]");
  if (!(eval.rejection_q > 0.0 && eval.rejection_q <= 1.0)) fail(ErrorKind::Config, "eval.rejection_q must lie in (0,1]");
}

synth::Scene RunConfig::scene() const {
  if (!synth.scene_file.empty()) {
    std::ifstream in(synth.scene_file);
    if (!in) fail(ErrorKind::Io, "cannot read scene file " + synth.scene_file);
    std::stringstream ss;
    ss << in.rdbuf();
    synth::Scene s = synth::scene_from_json(ss.str());
    if (s.bands != synth.bands || s.classes != synth.classes)
      fail(ErrorKind::Config, "scene file bands/classes disagree with synth settings");
    return s;
  }
  return synth::default_scene(synth.bands, synth.classes, synth.families);
}

namespace {

// Walks one JSON object, rejecting keys that no handler claimed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::Config, where() + " must be a JSON object");
  }
  ~Section() = default;

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::Config, "wrong type for " + where(key));
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(ErrorKind::Config, "unknown config key " + where(k));
  }
  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config root" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class T>
void get_nonneg(Section& s, const char* key, T& out) {
  long long v = static_cast<long long>(out);
  s.get(key, v);
  if (v < 0) fail(ErrorKind::Config, s.where(key) + " must be >= 0");
  out = static_cast<T>(v);
}

}  // namespace

RunConfig parse_run_config(const std::string& text, RunConfig cfg) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("config JSON: ") + e.what());
  }
  Section r(root, "");
  int version = RunConfig::kVersion;
  r.get("version", version);
  if (version != RunConfig::kVersion)
    fail(ErrorKind::Config, "unsupported config version " + std::to_string(version));
  r.get("seed", cfg.seed);
  get_nonneg(r, "trials", cfg.trials);
  get_nonneg(r, "jobs", cfg.jobs);
  r.get("out", cfg.out);
  if (const json* mt = r.child("model_types")) {
    std::vector<std::string> names;
    try {
      names = mt->get<std::vector<std::string>>();
    } catch (const json::exception&) {
      fail(ErrorKind::Config, "model_types must be an array of strings");
    }
    cfg.model_types.clear();
    for (const auto& n : names) cfg.model_types.push_back(parse_model_type(n));
  }
  if (const json* sj = r.child("synth")) {
    Section s(*sj, "synth");
    get_nonneg(s, "bands", cfg.synth.bands);
    get_nonneg(s, "classes", cfg.synth.classes);
    s.get("families", cfg.synth.families);
    s.get("scene_file", cfg.synth.scene_file);
    if (const json* cj = s.child("counts")) {
      Section c(*cj, "synth.counts");
      auto& k = cfg.synth.counts;
      get_nonneg(c, "labeled_per_class", k.labeled_per_class);
      get_nonneg(c, "labeled_outliers", k.labeled_outliers);
      get_nonneg(c, "unlabeled_per_class", k.unlabeled_per_class);
      get_nonneg(c, "unlabeled_outliers", k.unlabeled_outliers);
      get_nonneg(c, "test_per_class", k.test_per_class);
      get_nonneg(c, "test_outliers_per_family", k.test_outliers_per_family);
      c.finish();
    }
    s.finish();
  }
  if (const json* sj = r.child("som")) {
    Section s(*sj, "som");
    get_nonneg(s, "rows", cfg.som.rows);
    get_nonneg(s, "cols", cfg.som.cols);
    s.get("epochs", cfg.som.train.epochs);
    s.get("lr_initial", cfg.som.train.lr_initial);
    s.get("lr_final", cfg.som.train.lr_final);
    s.get("sigma_initial", cfg.som.train.sigma_initial);
    s.get("sigma_final", cfg.som.train.sigma_final);
    s.get("ridge_scale", cfg.som.train.ridge_scale);
    s.get("angle_weight", cfg.som.angle_weight);
    std::string metric(cfg.som.target_metric == BmuMetric::DStar ? "dstar" : "euclidean");
    s.get("target_metric", metric);
    cfg.som.target_metric = parse_bmu_metric(metric);
    std::string fit(som_fit_set_name(cfg.som.fit_set));
    s.get("fit_set", fit);
    cfg.som.fit_set = parse_som_fit_set(fit);
    s.finish();
  }
  if (const json* mj = r.child("membership")) {
    Section s(*mj, "membership");
    s.get("lr", cfg.som.sigmoid.lr);
    s.get("epochs", cfg.som.sigmoid.epochs);
    s.get("alpha_floor", cfg.som.sigmoid.alpha_floor);
    s.finish();
  }
  if (const json* gj = r.child("ssgan")) {
    Section s(*gj, "ssgan");
    s.get("epochs", cfg.ssgan.epochs);
    get_nonneg(s, "batch_size", cfg.ssgan.batch_size);
    get_nonneg(s, "noise_dim", cfg.ssgan.arch.noise_dim);
    s.get("generator_hidden", cfg.ssgan.arch.generator_hidden);
    s.get("spectral_path", cfg.ssgan.arch.spectral_path);
    s.get("som_path", cfg.ssgan.arch.som_path);
    s.get("leaky_slope", cfg.ssgan.arch.leaky_slope);
    if (const json* aj = s.child("adam")) {
      Section a(*aj, "ssgan.adam");
      a.get("lr", cfg.ssgan.adam.lr);
      a.get("beta1", cfg.ssgan.adam.beta1);
      a.get("beta2", cfg.ssgan.adam.beta2);
      a.get("eps", cfg.ssgan.adam.eps);
      a.finish();
    }
    s.finish();
  }
  if (const json* ej = r.child("eval")) {
    Section s(*ej, "eval");
    s.get("confidence", cfg.eval.confidence);
    get_nonneg(s, "grid_points", cfg.eval.grid_points);
    s.get("top_rate_max_false_alarm", cfg.eval.top_rate_max_false_alarm);
    s.get("rejection_q", cfg.eval.rejection_q);
    s.finish();
  }
  r.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["version"] = RunConfig::kVersion;
  j["seed"] = cfg.seed;
  j["trials"] = cfg.trials;
  j["jobs"] = cfg.jobs;
  j["out"] = cfg.out;
  j["model_types"] = json::array();
  for (auto t : cfg.model_types) j["model_types"].push_back(std::string(model_type_name(t)));
  const auto& k = cfg.synth.counts;
  j["synth"] = {{"bands", cfg.synth.bands},
                {"classes", cfg.synth.classes},
                {"families", cfg.synth.families},
                {"scene_file", cfg.synth.scene_file},
                {"counts",
                 {{"labeled_per_class", k.labeled_per_class},
                  {"labeled_outliers", k.labeled_outliers},
                  {"unlabeled_per_class", k.unlabeled_per_class},
                  {"unlabeled_outliers", k.unlabeled_outliers},
                  {"test_per_class", k.test_per_class},
                  {"test_outliers_per_family", k.test_outliers_per_family}}}};
  j["som"] = {{"rows", cfg.som.rows},
              {"cols", cfg.som.cols},
              {"epochs", cfg.som.train.epochs},
              {"lr_initial", cfg.som.train.lr_initial},
              {"lr_final", cfg.som.train.lr_final},
              {"sigma_initial", cfg.som.train.sigma_initial},
              {"sigma_final", cfg.som.train.sigma_final},
              {"ridge_scale", cfg.som.train.ridge_scale},
              {"angle_weight", cfg.som.angle_weight},
              {"target_metric", cfg.som.target_metric == BmuMetric::DStar ? "dstar" : "euclidean"},
              {"fit_set", std::string(som_fit_set_name(cfg.som.fit_set))}};
  j["membership"] = {{"lr", cfg.som.sigmoid.lr},
                     {"epochs", cfg.som.sigmoid.epochs},
                     {"alpha_floor", cfg.som.sigmoid.alpha_floor}};
  j["ssgan"] = {{"epochs", cfg.ssgan.epochs},
                {"batch_size", cfg.ssgan.batch_size},
                {"noise_dim", cfg.ssgan.arch.noise_dim},
                {"generator_hidden", cfg.ssgan.arch.generator_hidden},
                {"spectral_path", cfg.ssgan.arch.spectral_path},
                {"som_path", cfg.ssgan.arch.som_path},
                {"leaky_slope", cfg.ssgan.arch.leaky_slope},
                {"adam",
                 {{"lr", cfg.ssgan.adam.lr},
                  {"beta1", cfg.ssgan.adam.beta1},
                  {"beta2", cfg.ssgan.adam.beta2},
                  {"eps", cfg.ssgan.adam.eps}}}};
  j["eval"] = {{"confidence", cfg.eval.confidence},
               {"grid_points", cfg.eval.grid_points},
               {"top_rate_max_false_alarm", cfg.eval.top_rate_max_false_alarm},
               {"rejection_q", cfg.eval.rejection_q}};
  return j.dump(2) + "\n";
}

}  // namespace somgan
