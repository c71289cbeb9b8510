#include "rnan/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "internal.hpp"
#include "rnan/ops.hpp"

namespace rnan {

namespace {

using detail::fail;
using detail::fail_runtime;

constexpr char kCkptMagic[8] = {'R', 'N', 'A', 'N', 'C', 'K', 'P', '1'};
constexpr uint32_t kCkptVersion = 1;

template <typename V>
void write_pod(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
V read_pod(std::istream& is) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto len = read_pod<uint32_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  return s;
}

void write_train_config(std::ostream& os, const TrainConfig& c) {
  write_pod<int32_t>(os, c.batch_size);
  write_pod<int32_t>(os, c.patch);
  write_pod<double>(os, c.lr0);
  write_pod<double>(os, c.beta1);
  write_pod<double>(os, c.beta2);
  write_pod<double>(os, c.eps_adam);
  write_pod<int32_t>(os, c.halve_every_epochs);
  write_pod<int32_t>(os, c.total_epochs);
  write_pod<int32_t>(os, c.steps_per_epoch);
  write_pod<uint64_t>(os, c.seed);
  write_pod<int32_t>(os, c.log_every);
}

TrainConfig read_train_config(std::istream& is, const std::string& precision) {
  TrainConfig c;
  c.batch_size = read_pod<int32_t>(is);
  c.patch = read_pod<int32_t>(is);
  c.lr0 = read_pod<double>(is);
  c.beta1 = read_pod<double>(is);
  c.beta2 = read_pod<double>(is);
  c.eps_adam = read_pod<double>(is);
  c.halve_every_epochs = read_pod<int32_t>(is);
  c.total_epochs = read_pod<int32_t>(is);
  c.steps_per_epoch = read_pod<int32_t>(is);
  c.seed = read_pod<uint64_t>(is);
  c.log_every = read_pod<int32_t>(is);
  c.precision = precision;
  return c;
}

void write_model_config(std::ostream& os, const ModelConfig& c) {
  for (int v : {c.g, c.b, c.c, c.scale, c.n, c.m, c.r, c.dw_kernel, c.rb_kernel})
    write_pod<int32_t>(os, v);
}

ModelConfig read_model_config(std::istream& is) {
  ModelConfig c;
  c.g = read_pod<int32_t>(is);
  c.b = read_pod<int32_t>(is);
  c.c = read_pod<int32_t>(is);
  c.scale = read_pod<int32_t>(is);
  c.n = read_pod<int32_t>(is);
  c.m = read_pod<int32_t>(is);
  c.r = read_pod<int32_t>(is);
  c.dw_kernel = read_pod<int32_t>(is);
  c.rb_kernel = read_pod<int32_t>(is);
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) fail("TrainConfig: batch_size must be >= 1");
  if (patch < 1) fail("TrainConfig: patch must be >= 1");
  if (lr0 <= 0) fail("TrainConfig: lr0 must be positive");
  if (beta1 <= 0 || beta1 >= 1) fail("TrainConfig: beta1 must be in (0,1)");
  if (beta2 <= 0 || beta2 >= 1) fail("TrainConfig: beta2 must be in (0,1)");
  if (eps_adam <= 0) fail("TrainConfig: eps_adam must be positive");
  if (halve_every_epochs < 1) fail("TrainConfig: halve_every_epochs must be >= 1");
  if (total_epochs < 0) fail("TrainConfig: total_epochs must be >= 0");
  if (steps_per_epoch < 1) fail("TrainConfig: steps_per_epoch must be >= 1");
  if (log_every < 1) fail("TrainConfig: log_every must be >= 1");
  if (precision != "float32" && precision != "float64")
    fail("TrainConfig: precision must be float32 or float64, got ", precision);
}

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) fail("lr_at_epoch: negative epoch ", epoch);
  return cfg.lr0 * std::pow(0.5, epoch / cfg.halve_every_epochs);
}

template <typename T>
void adam_step(const std::vector<typename RnanWeights<T>::Named>& params,
               AdamState<T>& state, const TrainConfig& cfg, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    fail("adam_step: state holds ", state.m.size(), " moments for ",
         params.size(), " parameters");
  state.t += 1;
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.eps_adam);
  const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(state.t)));
  const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(state.t)));
  const T step_size = static_cast<T>(lr);
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor<T> tensor = params[p].tensor;
    auto x = tensor.data();
    auto g = tensor.grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      x[i] -= step_size * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
}

template <typename T>
Trainer<T>::Trainer(RnanWeights<T> weights, TrainConfig cfg)
    : weights_(std::move(weights)), cfg_(std::move(cfg)), rng_(cfg_.seed) {
  cfg_.validate();
  params_ = weights_.parameters();
  state_.m.resize(params_.size());
  state_.v.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    const size_t n = static_cast<size_t>(params_[i].tensor.numel());
    state_.m[i].assign(n, T(0));
    state_.v[i].assign(n, T(0));
  }
}

template <typename T>
void Trainer<T>::set_schedule(const TrainConfig& updated) {
  TrainConfig candidate = updated;
  candidate.validate();
  if (candidate.batch_size != cfg_.batch_size || candidate.patch != cfg_.patch ||
      candidate.lr0 != cfg_.lr0 || candidate.beta1 != cfg_.beta1 ||
      candidate.beta2 != cfg_.beta2 || candidate.eps_adam != cfg_.eps_adam ||
      candidate.halve_every_epochs != cfg_.halve_every_epochs ||
      candidate.steps_per_epoch != cfg_.steps_per_epoch ||
      candidate.seed != cfg_.seed || candidate.precision != cfg_.precision)
    fail("Trainer::set_schedule: only total_epochs and log_every may change "
         "when resuming");
  cfg_.total_epochs = candidate.total_epochs;
  cfg_.log_every = candidate.log_every;
}

template <typename T>
double Trainer<T>::train_step(const typename BatchStream<T>::Batch& batch,
                              double lr) {
  Tape<T> tape;
  Tensor<T> pred = rnan_forward(batch.lr, weights_, &tape);
  Tensor<T> loss = l1_loss(pred, batch.hr, &tape);
  const double loss_value = static_cast<double>(loss.data()[0]);
  if (!std::isfinite(loss_value)) {
    std::string ids;
    for (const auto& id : batch.ids) ids += (ids.empty() ? "" : " ") + id;
    fail_runtime("train_step: non-finite loss at step ", step_, ", lr ", lr,
                 ", batch [", ids, "]");
  }
  tape.backward(loss);
  adam_step<T>(params_, state_, cfg_, lr);
  for (auto& p : params_) p.tensor.zero_grad();
  ++step_;
  return loss_value;
}

template <typename T>
void Trainer<T>::save_checkpoint(const std::string& path) const {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail_runtime("save_checkpoint: cannot open ", tmp);
    os.write(kCkptMagic, sizeof kCkptMagic);
    write_pod<uint32_t>(os, kCkptVersion);
    write_pod<uint8_t>(os, static_cast<uint8_t>(sizeof(T)));
    write_model_config(os, weights_.cfg);
    write_train_config(os, cfg_);
    for (const auto& p : params_) {
      auto d = p.tensor.data();
      os.write(reinterpret_cast<const char*>(d.data()),
               static_cast<std::streamsize>(d.size() * sizeof(T)));
    }
    write_pod<int64_t>(os, state_.t);
    for (const auto& m : state_.m)
      os.write(reinterpret_cast<const char*>(m.data()),
               static_cast<std::streamsize>(m.size() * sizeof(T)));
    for (const auto& v : state_.v)
      os.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(T)));
    std::ostringstream rs;
    rs << rng_;
    write_string(os, rs.str());
    write_pod<int64_t>(os, step_);
    if (!os) fail_runtime("save_checkpoint: write failed for ", tmp);
  }
  fs::rename(tmp, path);
}

template <typename T>
Trainer<T> Trainer<T>::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail_runtime("load_checkpoint: cannot open ", path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCkptMagic, sizeof kCkptMagic) != 0)
    fail_runtime("load_checkpoint: ", path, " is not a checkpoint");
  if (read_pod<uint32_t>(is) != kCkptVersion)
    fail_runtime("load_checkpoint: unsupported version in ", path);
  const auto width = read_pod<uint8_t>(is);
  if (width != sizeof(T))
    fail_runtime("load_checkpoint: ", path, " stores ", int(width),
                 "-byte scalars, trainer uses ", sizeof(T), "-byte");
  const ModelConfig mcfg = read_model_config(is);
  const TrainConfig tcfg =
      read_train_config(is, sizeof(T) == 4 ? "float32" : "float64");
  Trainer<T> out(zero_weights<T>(mcfg), tcfg);
  for (auto& p : out.params_) {
    auto d = p.tensor.data();
    is.read(reinterpret_cast<char*>(d.data()),
            static_cast<std::streamsize>(d.size() * sizeof(T)));
  }
  out.state_.t = read_pod<int64_t>(is);
  for (auto& m : out.state_.m)
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(T)));
  for (auto& v : out.state_.v)
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(T)));
  std::istringstream rs(read_string(is));
  rs >> out.rng_;
  out.step_ = read_pod<int64_t>(is);
  if (!is) fail_runtime("load_checkpoint: truncated file ", path);
  return out;
}

template <typename T>
Trainer<T> Trainer<T>::load_checkpoint(const std::string& path,
                                       const ModelConfig& expected) {
  Trainer<T> out = load_checkpoint(path);
  if (!(out.weights_.cfg == expected))
    fail_runtime("load_checkpoint: model config in ", path,
                 " does not match the requested config");
  return out;
}

template <typename T>
TrainResult train_loop(Trainer<T>& trainer, const BatchStream<T>& stream,
                       const std::string& out_dir) {
  namespace fs = std::filesystem;
  const TrainConfig& cfg = trainer.config();
  cfg.validate();
  if (cfg.total_epochs < 1)
    fail("train_loop: total_epochs must be >= 1 to run");
  if (stream.batch_size() != cfg.batch_size || stream.patch() != cfg.patch)
    fail("train_loop: stream batch/patch (", stream.batch_size(), "/",
         stream.patch(), ") differ from config (", cfg.batch_size, "/",
         cfg.patch, ")");

  const int64_t total = int64_t{cfg.total_epochs} * cfg.steps_per_epoch;
  std::ofstream csv;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    const std::string csv_path = out_dir + "/metrics.csv";
    const bool fresh = !fs::exists(csv_path) || fs::file_size(csv_path) == 0;
    csv.open(csv_path, std::ios::app);
    if (!csv) fail_runtime("train_loop: cannot open ", csv_path);
    if (fresh) csv << "step,epoch,lr,loss\n";
  }

  TrainResult result;
  while (trainer.step() < total) {
    const int64_t s = trainer.step();
    const int epoch = static_cast<int>(s / cfg.steps_per_epoch);
    const double lr = lr_at_epoch(epoch, cfg);
    const auto batch = stream.at_step(s);
    const double loss = trainer.train_step(batch, lr);
    result.losses.push_back(loss);
    result.final_loss = loss;
    ++result.steps_run;
    const int64_t done = trainer.step();
    if (csv.is_open() && (done % cfg.log_every == 0 || done == total)) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%lld,%d,%.8g,%.8g\n",
                    static_cast<long long>(done), epoch, lr, loss);
      csv << buf;
    }
    if (!out_dir.empty() && done % cfg.steps_per_epoch == 0)
      trainer.save_checkpoint(out_dir + "/checkpoint.rnanck");
  }
  if (!out_dir.empty())
    save_weights(trainer.weights(), out_dir + "/weights.rnanw");
  return result;
}

template void adam_step<float>(
    const std::vector<typename RnanWeights<float>::Named>&, AdamState<float>&,
    const TrainConfig&, double);
template void adam_step<double>(
    const std::vector<typename RnanWeights<double>::Named>&,
    AdamState<double>&, const TrainConfig&, double);
template class Trainer<float>;
template class Trainer<double>;
template TrainResult train_loop(Trainer<float>&, const BatchStream<float>&,
                                const std::string&);
template TrainResult train_loop(Trainer<double>&, const BatchStream<double>&,
                                const std::string&);

}  // namespace rnan
