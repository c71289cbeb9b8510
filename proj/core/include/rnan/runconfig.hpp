#pragma once

#include <array>
#include <optional>
#include <string>

#include "rnan/model.hpp"
#include "rnan/trainer.hpp"

namespace rnan {

// Merged run settings: model + training hyperparameters plus paths. Sourced
// from a flat `key = value` text file; command-line overrides win. Every key
// is validated against the schema - unknown keys are an error, not silence.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data_root;  // expects <root>/HR and <root>/LR_x{scale}
  std::string out_dir = "out";
  std::string resume;     // checkpoint path, empty = fresh run
  std::optional<std::array<double, 3>> mean_rgb;  // subtracted when set

  // Applies one `key = value` assignment; throws on unknown keys or
  // unparsable values.
  void set(const std::string& key, const std::string& value);

  static RunConfig from_file(const std::string& path);
  static const std::vector<std::string>& known_keys();
};

}  // namespace rnan
