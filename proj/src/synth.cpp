#include "somgan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "somgan/error.hpp"

namespace somgan::synth {

using nlohmann::json;

void MaterialModel::validate(std::size_t bands) const {
  if (name.empty()) fail(ErrorKind::Config, "material needs a name");
  if (!(illum_lo > 0.0) || illum_hi < illum_lo)
    fail(ErrorKind::Config, "material '" + name + "': need 0 < illum_lo <= illum_hi");
  if (!(noise_std >= 0.0)) fail(ErrorKind::Config, "material '" + name + "': noise_std must be >= 0");
  for (const auto& b : bumps)
    if (!(b.width > 0.0)) fail(ErrorKind::Config, "material '" + name + "': bump width must be > 0");
  const Spectrum base = base_curve(*this, bands);
  double norm = 0.0;
  for (double v : base) {
    if (v < 0.0 || !std::isfinite(v)) fail(ErrorKind::Config, "material '" + name + "': base curve must be nonnegative");
    norm += v * v;
  }
  if (norm == 0.0) fail(ErrorKind::Config, "material '" + name + "': base curve is identically zero");
}

Spectrum base_curve(const MaterialModel& m, std::size_t bands) {
  Spectrum out(bands, m.offset);
  for (std::size_t b = 0; b < bands; ++b) {
    const double t = bands > 1 ? static_cast<double>(b) / static_cast<double>(bands - 1) : 0.0;
    for (const auto& bump : m.bumps) {
      const double z = (t - bump.center) / bump.width;
      out[b] += bump.amplitude * std::exp(-0.5 * z * z);
    }
  }
  return out;
}

Matrix sample_material(const MaterialModel& m, std::size_t bands, std::size_t n, RandomStream& rng) {
  const Spectrum base = base_curve(m, bands);
  Matrix out(n, bands);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = m.illum_lo == m.illum_hi ? m.illum_lo : rng.uniform(m.illum_lo, m.illum_hi);
    auto row = out.row(i);
    for (std::size_t b = 0; b < bands; ++b) {
      const double noise = m.noise_std > 0.0 ? rng.normal(0.0, m.noise_std) : 0.0;
      row[b] = std::max(0.0, u * base[b] + noise);
    }
  }
  return out;
}

std::vector<const MaterialModel*> Scene::inliers() const {
  std::vector<const MaterialModel*> out;
  for (const auto& m : materials)
    if (m.inlier) out.push_back(&m);
  std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->class_index < b->class_index; });
  return out;
}

std::vector<const MaterialModel*> Scene::outliers() const {
  std::vector<const MaterialModel*> out;
  for (const auto& m : materials)
    if (!m.inlier) out.push_back(&m);
  return out;
}

const MaterialModel& Scene::material(const std::string& name) const {
  for (const auto& m : materials)
    if (m.name == name) return m;
  fail(ErrorKind::Config, "scene has no material named '" + name + "'");
}

void Scene::validate() const {
  if (bands < 2) fail(ErrorKind::Config, "scene needs at least 2 bands");
  if (classes < 2) fail(ErrorKind::Config, "scene needs K >= 2 inlier classes");
  std::vector<int> seen(classes, 0);
  for (const auto& m : materials) {
    m.validate(bands);
    if (m.inlier) {
      if (m.class_index < 0 || static_cast<std::size_t>(m.class_index) >= classes)
        fail(ErrorKind::Config, "material '" + m.name + "': class index out of range");
      if (seen[static_cast<std::size_t>(m.class_index)]++)
        fail(ErrorKind::Config, "two materials share class " + std::to_string(m.class_index));
    }
  }
  for (std::size_t k = 0; k < classes; ++k)
    if (!seen[k]) fail(ErrorKind::Config, "no material for inlier class " + std::to_string(k));
  if (outliers().empty()) fail(ErrorKind::Config, "scene needs at least one outlier family");
  const auto& lab = material(labeled_outlier_family);
  if (lab.inlier) fail(ErrorKind::Config, "labeled outlier family must be an outlier material");
  for (std::size_t i = 0; i < materials.size(); ++i)
    for (std::size_t j = i + 1; j < materials.size(); ++j)
      if (materials[i].name == materials[j].name)
        fail(ErrorKind::Config, "duplicate material name '" + materials[i].name + "'");
}

namespace {

MaterialModel inlier_material(std::size_t k, std::size_t classes) {
  MaterialModel m;
  m.inlier = true;
  m.class_index = static_cast<int>(k);
  m.illum_lo = 0.7;
  m.illum_hi = 1.3;
  m.noise_std = 0.02;
  m.offset = 0.05;
  if (k == 0) {
    m.name = "grass";
    m.bumps = {{0.25, 0.07, 0.30}, {0.80, 0.12, 0.80}};
  } else if (k == 1) {
    m.name = "trees";
    m.bumps = {{0.50, 0.10, 0.70}, {0.95, 0.07, 0.30}};
  } else {
    // Further classes place one narrow bump on a staggered grid.
    m.name = "class" + std::to_string(k);
    const double c = 0.1 + 0.8 * static_cast<double>(k - 2) / static_cast<double>(std::max<std::size_t>(classes - 2, 1));
    m.bumps = {{c, 0.07, 0.5}, {0.65, 0.2, 0.25}};
  }
  return m;
}

MaterialModel outlier_material(const std::string& family, const MaterialModel& first_inlier) {
  MaterialModel m;
  m.name = family;
  m.inlier = false;
  m.noise_std = 0.02;
  if (family == "dark") {
    m.bumps = {{0.10, 0.15, 0.10}};
    m.offset = 0.03;
    m.illum_lo = 0.6;
    m.illum_hi = 1.4;
  } else if (family == "panel") {
    m.bumps = first_inlier.bumps;
    m.offset = first_inlier.offset;
    m.illum_lo = 2.4;
    m.illum_hi = 3.2;
  } else if (family == "soil") {
    m.bumps = {{0.60, 0.50, 0.35}};
    m.offset = 0.05;
    m.illum_lo = 0.7;
    m.illum_hi = 1.3;
  } else if (family == "roof") {
    m.bumps = {{0.15, 0.08, 0.40}, {0.55, 0.08, 0.30}};
    m.offset = 0.05;
    m.illum_lo = 0.7;
    m.illum_hi = 1.3;
  } else {
    fail(ErrorKind::Config, "unknown outlier family '" + family + "' (dark|panel|soil|roof)");
  }
  return m;
}

}  // namespace

Scene default_scene(std::size_t bands, std::size_t classes, const std::vector<std::string>& families) {
  if (classes < 2) fail(ErrorKind::Config, "default scene needs K >= 2");
  if (families.empty()) fail(ErrorKind::Config, "default scene needs at least one outlier family");
  Scene s;
  s.bands = bands;
  s.classes = classes;
  for (std::size_t k = 0; k < classes; ++k) s.materials.push_back(inlier_material(k, classes));
  for (const auto& f : families) s.materials.push_back(outlier_material(f, s.materials.front()));
  const bool has_panel = std::find(families.begin(), families.end(), "panel") != families.end();
  s.labeled_outlier_family = has_panel ? "panel" : families.front();
  s.validate();
  return s;
}

std::string scene_to_json(const Scene& scene) {
  json j;
  j["bands"] = scene.bands;
  j["classes"] = scene.classes;
  j["labeled_outlier_family"] = scene.labeled_outlier_family;
  j["materials"] = json::array();
  for (const auto& m : scene.materials) {
    json mj;
    mj["name"] = m.name;
    mj["role"] = m.inlier ? "inlier" : "outlier";
    if (m.inlier) mj["class"] = m.class_index;
    mj["offset"] = m.offset;
    mj["illumination"] = {m.illum_lo, m.illum_hi};
    mj["noise_std"] = m.noise_std;
    mj["bumps"] = json::array();
    for (const auto& b : m.bumps) mj["bumps"].push_back({{"center", b.center}, {"width", b.width}, {"amplitude", b.amplitude}});
    j["materials"].push_back(mj);
  }
  return j.dump(2) + "\n";
}

Scene scene_from_json(const std::string& text) {
  Scene s;
  try {
    const json j = json::parse(text);
    s.bands = j.at("bands").get<std::size_t>();
    s.classes = j.at("classes").get<std::size_t>();
    s.labeled_outlier_family = j.at("labeled_outlier_family").get<std::string>();
    for (const auto& mj : j.at("materials")) {
      MaterialModel m;
      m.name = mj.at("name").get<std::string>();
      const auto role = mj.at("role").get<std::string>();
      if (role != "inlier" && role != "outlier") fail(ErrorKind::Parse, "material role must be inlier|outlier");
      m.inlier = role == "inlier";
      if (m.inlier) m.class_index = mj.at("class").get<int>();
      m.offset = mj.at("offset").get<double>();
      m.illum_lo = mj.at("illumination").at(0).get<double>();
      m.illum_hi = mj.at("illumination").at(1).get<double>();
      m.noise_std = mj.at("noise_std").get<double>();
      for (const auto& bj : mj.at("bumps"))
        m.bumps.push_back({bj.at("center").get<double>(), bj.at("width").get<double>(), bj.at("amplitude").get<double>()});
      s.materials.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("scene JSON: ") + e.what());
  }
  s.validate();
  return s;
}

void SplitCounts::validate() const {
  if (!labeled_per_class || !labeled_outliers || !unlabeled_per_class || !unlabeled_outliers ||
      !test_per_class || !test_outliers_per_family)
    fail(ErrorKind::Config, "split counts must all be positive");
}

Dataset Partition::to_dataset(std::size_t classes, bool ground_truth) const {
  Dataset d(spectra.cols(), classes);
  const auto& lab = ground_truth ? truth : labels;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto row = spectra.row(i);
    d.add(Spectrum(row.begin(), row.end()), lab[i]);
  }
  return d;
}

namespace {

void append(Partition& p, const Matrix& rows, const Label& seen, const Label& truth, const std::string& material,
            std::uint64_t& next_id) {
  p.spectra = p.spectra.rows() ? vconcat(p.spectra, rows) : rows;
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    p.labels.push_back(seen);
    p.truth.push_back(truth);
    p.material.push_back(material);
    p.ids.push_back(next_id++);
  }
}

Matrix draw(const Scene& scene, const MaterialModel& m, std::size_t n, std::uint64_t seed,
            std::string_view partition) {
  RandomStream rng(derive_seed(derive_seed(seed, partition), m.name));
  return sample_material(m, scene.bands, n, rng);
}

}  // namespace

ExperimentSplit make_split(const Scene& scene, const SplitCounts& counts, std::uint64_t trial_seed) {
  scene.validate();
  counts.validate();
  ExperimentSplit split;
  split.trial_seed = trial_seed;
  split.classes = scene.classes;
  std::uint64_t next_id = 0;
  const auto inliers = scene.inliers();
  const auto outliers = scene.outliers();

  for (const auto* m : inliers) {
    const Label l = Label::inlier(m->class_index);
    append(split.labeled, draw(scene, *m, counts.labeled_per_class, trial_seed, "labeled"), l, l, m->name, next_id);
  }
  const auto& panel = scene.material(scene.labeled_outlier_family);
  append(split.labeled, draw(scene, panel, counts.labeled_outliers, trial_seed, "labeled"), Label::outlier(),
         Label::outlier(), panel.name, next_id);

  for (const auto* m : inliers)
    append(split.unlabeled, draw(scene, *m, counts.unlabeled_per_class, trial_seed, "unlabeled"),
           Label::unlabeled(), Label::inlier(m->class_index), m->name, next_id);
  const std::size_t per = counts.unlabeled_outliers / outliers.size();
  const std::size_t extra = counts.unlabeled_outliers % outliers.size();
  for (std::size_t f = 0; f < outliers.size(); ++f) {
    const std::size_t n = per + (f < extra ? 1 : 0);
    if (n == 0) continue;
    append(split.unlabeled, draw(scene, *outliers[f], n, trial_seed, "unlabeled"), Label::unlabeled(),
           Label::outlier(), outliers[f]->name, next_id);
  }

  for (const auto* m : inliers) {
    const Label l = Label::inlier(m->class_index);
    append(split.test, draw(scene, *m, counts.test_per_class, trial_seed, "test"), l, l, m->name, next_id);
  }
  for (const auto* m : outliers)
    append(split.test, draw(scene, *m, counts.test_outliers_per_family, trial_seed, "test"), Label::outlier(),
           Label::outlier(), m->name, next_id);
  return split;
}

Matrix draw_material(const Scene& scene, const std::string& name, std::size_t n, std::uint64_t seed) {
  return draw(scene, scene.material(name), n, seed, "fresh");
}

void save_split(const ExperimentSplit& split, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  save_csv(split.labeled.to_dataset(split.classes, false), dir / "labeled.csv");
  save_csv(split.unlabeled.to_dataset(split.classes, false), dir / "unlabeled.csv");
  save_csv(split.unlabeled.to_dataset(split.classes, true), dir / "unlabeled_truth.csv");
  save_csv(split.test.to_dataset(split.classes, true), dir / "test.csv");
}

namespace {
Partition partition_from(const Dataset& seen, const Dataset& truth) {
  Partition p;
  p.spectra = seen.spectra();
  p.labels = seen.labels();
  p.truth = truth.labels();
  p.material.assign(seen.size(), std::string());
  for (std::size_t i = 0; i < seen.size(); ++i) p.ids.push_back(i);
  return p;
}
}  // namespace

ExperimentSplit load_split(const std::filesystem::path& dir, std::size_t classes) {
  const CsvSchema schema{classes, 0};
  ExperimentSplit s;
  s.classes = classes;
  const Dataset labeled = load_csv(dir / "labeled.csv", schema);
  const Dataset unlabeled = load_csv(dir / "unlabeled.csv", schema);
  const Dataset test = load_csv(dir / "test.csv", schema);
  const auto truth_path = dir / "unlabeled_truth.csv";
  const Dataset truth = std::filesystem::exists(truth_path) ? load_csv(truth_path, schema) : unlabeled;
  if (truth.size() != unlabeled.size())
    fail(ErrorKind::Parse, "unlabeled_truth.csv row count differs from unlabeled.csv");
  s.labeled = partition_from(labeled, labeled);
  s.unlabeled = partition_from(unlabeled, truth);
  s.test = partition_from(test, test);
  return s;
}

}  // namespace somgan::synth
