#pragma once

// A model directory holds model.ckpt (every array needed to reproduce
// eval-mode outputs bit-for-bit) and manifest.json (type, shapes, training
// configuration).

#include <filesystem>
#include <string>
#include <vector>

#include "somgan/membership.hpp"
#include "somgan/nn.hpp"
#include "somgan/ssgan.hpp"

namespace somgan {

inline constexpr int kModelFormatVersion = 1;

std::vector<nn::NamedArray> export_som_pipeline(const SomPipeline& p, const std::string& prefix);
SomPipeline import_som_pipeline(const std::map<std::string, Matrix>& arrays, const std::string& prefix);

std::string model_manifest_json(const SsganModel& model, ModelType type);

void save_model(const SsganModel& model, ModelType type, const std::filesystem::path& dir);
/// Throws Error(Io) when files are missing, Error(Parse) on malformed content.
SsganModel load_model(const std::filesystem::path& dir, ModelType* type = nullptr);

}  // namespace somgan
