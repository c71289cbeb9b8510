#include "rnan/runconfig.hpp"

#include <algorithm>
#include <fstream>

#include "internal.hpp"

namespace rnan {

namespace {

using detail::fail;
using detail::fail_runtime;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail("RunConfig: key '", key, "' expects an integer, got '", v, "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail("RunConfig: key '", key, "' expects a number, got '", v, "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const unsigned long long out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail("RunConfig: key '", key, "' expects an unsigned integer, got '", v, "'");
  }
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "g", "b", "c", "scale", "n", "m", "r", "dw_kernel", "rb_kernel",
      "batch_size", "patch", "lr0", "beta1", "beta2", "eps_adam",
      "halve_every_epochs", "total_epochs", "steps_per_epoch", "seed",
      "log_every", "precision", "data_root", "out_dir", "resume", "mean_rgb"};
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "g") model.g = parse_int(key, value);
  else if (key == "b") model.b = parse_int(key, value);
  else if (key == "c") model.c = parse_int(key, value);
  else if (key == "scale") model.scale = parse_int(key, value);
  else if (key == "n") model.n = parse_int(key, value);
  else if (key == "m") model.m = parse_int(key, value);
  else if (key == "r") model.r = parse_int(key, value);
  else if (key == "dw_kernel") model.dw_kernel = parse_int(key, value);
  else if (key == "rb_kernel") model.rb_kernel = parse_int(key, value);
  else if (key == "batch_size") train.batch_size = parse_int(key, value);
  else if (key == "patch") train.patch = parse_int(key, value);
  else if (key == "lr0") train.lr0 = parse_double(key, value);
  else if (key == "beta1") train.beta1 = parse_double(key, value);
  else if (key == "beta2") train.beta2 = parse_double(key, value);
  else if (key == "eps_adam") train.eps_adam = parse_double(key, value);
  else if (key == "halve_every_epochs") train.halve_every_epochs = parse_int(key, value);
  else if (key == "total_epochs") train.total_epochs = parse_int(key, value);
  else if (key == "steps_per_epoch") train.steps_per_epoch = parse_int(key, value);
  else if (key == "seed") train.seed = parse_u64(key, value);
  else if (key == "log_every") train.log_every = parse_int(key, value);
  else if (key == "precision") train.precision = value;
  else if (key == "data_root") data_root = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "resume") resume = value;
  else if (key == "mean_rgb") {
    if (value == "none" || value.empty()) {
      mean_rgb.reset();
    } else {
      std::array<double, 3> rgb{};
      std::string rest = value;
      for (int i = 0; i < 3; ++i) {
        const size_t comma = rest.find(',');
        if ((i < 2) == (comma == std::string::npos))
          fail("RunConfig: mean_rgb expects 'r,g,b' or 'none', got '", value, "'");
        rgb[static_cast<size_t>(i)] =
            parse_double(key, trim(rest.substr(0, comma)));
        if (comma != std::string::npos) rest = rest.substr(comma + 1);
      }
      mean_rgb = rgb;
    }
  } else {
    fail("RunConfig: unknown key '", key, "'");
  }
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail_runtime("RunConfig: cannot open ", path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail_runtime("RunConfig: ", path, ":", lineno, ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

}  // namespace rnan
