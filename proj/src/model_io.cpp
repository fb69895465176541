#include "somgan/model_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "somgan/checkpoint.hpp"
#include "somgan/error.hpp"

namespace somgan {

using nlohmann::json;

namespace {

Matrix row_vector(std::span<const double> v) {
  Matrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.row(0).begin());
  return m;
}

Matrix scalar(double v) { return row_vector(std::span<const double>(&v, 1)); }

const Matrix& need(const std::map<std::string, Matrix>& a, const std::string& name) {
  const auto it = a.find(name);
  if (it == a.end()) fail(ErrorKind::Parse, "checkpoint is missing array " + name);
  return it->second;
}

std::vector<double> row_of(const Matrix& m) { return std::vector<double>(m.values().begin(), m.values().end()); }

}  // namespace

std::vector<nn::NamedArray> export_som_pipeline(const SomPipeline& p, const std::string& prefix) {
  std::vector<nn::NamedArray> out;
  Matrix shape(1, 2);
  shape(0, 0) = static_cast<double>(p.grid.rows());
  shape(0, 1) = static_cast<double>(p.grid.cols());
  out.push_back({prefix + "shape", shape});
  out.push_back({prefix + "weights", p.grid.weights()});
  out.push_back({prefix + "ridge", scalar(p.stats.ridge)});
  out.push_back({prefix + "angle_weight", scalar(p.angle_weight)});
  std::vector<double> counts(p.stats.counts.begin(), p.stats.counts.end());
  out.push_back({prefix + "counts", row_vector(counts)});
  for (std::size_t j = 0; j < p.stats.covariance.size(); ++j)
    out.push_back({prefix + "cov." + std::to_string(j), p.stats.covariance[j]});
  out.push_back({prefix + "alpha", row_vector(p.sigmoids.alpha)});
  out.push_back({prefix + "beta", row_vector(p.sigmoids.beta)});
  return out;
}

SomPipeline import_som_pipeline(const std::map<std::string, Matrix>& a, const std::string& prefix) {
  const Matrix& shape = need(a, prefix + "shape");
  if (shape.rows() != 1 || shape.cols() != 2) fail(ErrorKind::Parse, "malformed SOM shape array");
  const auto rows = static_cast<std::size_t>(shape(0, 0));
  const auto cols = static_cast<std::size_t>(shape(0, 1));
  SomPipeline p;
  const Matrix& weights = need(a, prefix + "weights");
  if (weights.rows() != rows * cols) fail(ErrorKind::Parse, "SOM weights do not match the grid shape");
  p.grid = SomGrid(rows, cols, weights);
  p.angle_weight = need(a, prefix + "angle_weight")(0, 0);
  const double ridge = need(a, prefix + "ridge")(0, 0);
  std::vector<std::size_t> counts;
  for (double c : need(a, prefix + "counts").values()) counts.push_back(static_cast<std::size_t>(c));
  if (counts.size() != rows * cols) fail(ErrorKind::Parse, "SOM counts do not match the grid shape");
  std::vector<Matrix> cov;
  for (std::size_t j = 0; j < rows * cols; ++j) cov.push_back(need(a, prefix + "cov." + std::to_string(j)));
  p.stats = node_stats_from_covariances(std::move(cov), std::move(counts), ridge);
  p.sigmoids.alpha = row_of(need(a, prefix + "alpha"));
  p.sigmoids.beta = row_of(need(a, prefix + "beta"));
  if (p.sigmoids.size() != rows * cols || p.sigmoids.beta.size() != rows * cols)
    fail(ErrorKind::Parse, "sigmoid parameters do not match the grid shape");
  return p;
}

std::string model_manifest_json(const SsganModel& model, ModelType type) {
  const auto& c = model.config;
  json j;
  j["format"] = "somgan-model";
  j["version"] = kModelFormatVersion;
  j["model_type"] = std::string(model_type_name(type));
  j["classes"] = model.class_count;
  j["bands"] = model.band_count();
  j["checkpoint"] = "model.ckpt";
  j["standardizer"] = {{"mean", "standardizer.mean"}, {"std", "standardizer.std"}};
  if (model.som)
    j["som"] = {{"prefix", "som."}, {"rows", model.som->grid.rows()}, {"cols", model.som->grid.cols()},
                {"angle_weight", model.som->angle_weight}};
  else
    j["som"] = nullptr;
  j["train_config"] = {{"epochs", c.epochs},
                       {"batch_size", c.batch_size},
                       {"seed", c.seed},
                       {"noise_dim", c.arch.noise_dim},
                       {"generator_hidden", c.arch.generator_hidden},
                       {"spectral_path", c.arch.spectral_path},
                       {"som_path", c.arch.som_path},
                       {"leaky_slope", c.arch.leaky_slope},
                       {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}}};
  return j.dump(2) + "\n";
}

void save_model(const SsganModel& model, ModelType type, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<nn::NamedArray> arrays;
  arrays.push_back({"standardizer.mean", row_vector(model.standardizer.mean())});
  arrays.push_back({"standardizer.std", row_vector(model.standardizer.stddev())});
  const auto d = model.discriminator.export_state("D.");
  arrays.insert(arrays.end(), d.begin(), d.end());
  if (training_mode(type) == TrainingMode::SemiSupervised) {
    const auto g = model.generator.net().export_state("G.");
    arrays.insert(arrays.end(), g.begin(), g.end());
  }
  if (model.som) {
    const auto s = export_som_pipeline(*model.som, "som.");
    arrays.insert(arrays.end(), s.begin(), s.end());
  }
  save_arrays(arrays, dir / "model.ckpt");
  std::ofstream out(dir / "manifest.json");
  if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "manifest.json").string());
  out << model_manifest_json(model, type);
  if (!out) fail(ErrorKind::Io, "failed writing " + (dir / "manifest.json").string());
}

SsganModel load_model(const std::filesystem::path& dir, ModelType* type_out) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorKind::Io, "missing model manifest " + manifest_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  SsganModel model;
  ModelType type{};
  try {
    const json j = json::parse(ss.str());
    if (j.at("format") != "somgan-model" || j.at("version").get<int>() != kModelFormatVersion)
      fail(ErrorKind::Parse, "unsupported model manifest in " + dir.string());
    type = parse_model_type(j.at("model_type").get<std::string>());
    model.class_count = j.at("classes").get<std::size_t>();
    const auto& c = j.at("train_config");
    TrainConfig& t = model.config;
    t.epochs = c.at("epochs").get<int>();
    t.batch_size = c.at("batch_size").get<std::size_t>();
    t.seed = c.at("seed").get<std::uint64_t>();
    t.arch.noise_dim = c.at("noise_dim").get<std::size_t>();
    t.arch.generator_hidden = c.at("generator_hidden").get<std::vector<std::size_t>>();
    t.arch.spectral_path = c.at("spectral_path").get<std::vector<std::size_t>>();
    t.arch.som_path = c.at("som_path").get<std::vector<std::size_t>>();
    t.arch.leaky_slope = c.at("leaky_slope").get<double>();
    t.adam.lr = c.at("adam").at("lr").get<double>();
    t.adam.beta1 = c.at("adam").at("beta1").get<double>();
    t.adam.beta2 = c.at("adam").at("beta2").get<double>();
    t.adam.eps = c.at("adam").at("eps").get<double>();
    t.mode = training_mode(type);
    t.features = feature_set(type);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, "model manifest " + manifest_path.string() + ": " + e.what());
  }
  const auto arrays = to_map(load_arrays(dir / "model.ckpt"));
  model.standardizer = Standardizer(row_of(need(arrays, "standardizer.mean")), row_of(need(arrays, "standardizer.std")));
  const std::size_t bands = model.standardizer.band_count();
  if (model.config.features == FeatureSet::SpectraSom) model.som = import_som_pipeline(arrays, "som.");
  // Shapes come from the architecture; values are overwritten on import.
  RandomStream rng(0);
  model.discriminator = Discriminator(model.config.arch, bands, model.som ? model.som->feature_count() : 0,
                                      model.class_count, rng);
  model.discriminator.import_state("D.", arrays);
  if (model.config.mode == TrainingMode::SemiSupervised) {
    model.generator = Generator(model.config.arch, bands, rng);
    model.generator.net().import_state("G.", arrays);
  }
  if (type_out) *type_out = type;
  return model;
}

}  // namespace somgan
