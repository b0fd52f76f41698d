#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hmmva/io.hpp"

namespace hmmva {

struct ExperimentConfig {
  std::string experiment;  // bias-demo | fixed-point | node-census |
                           // streaming-memory | limits-check | train-compare
  std::string model_path;
  std::size_t n = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> methods = {"vt", "va", "em"};
  std::string out_dir;
  int max_iters = 100;
  int bins = 200;
  int r_max = -1;
  std::size_t mc_length = 10000;
  int mc_replicas = 8;
  std::optional<BarrierSpec> barrier;
  std::size_t trace_stride = 0;  // 0: auto = max(1, n/1000)

  std::uint64_t config_hash = 0;  // FNV-1a of the canonical config document
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

// Runs the configured experiment, writing CSV files under out_dir. Outputs
// embed the config hash and seed list; reruns are byte-identical. Seeds may
// fan out over up to `threads` workers; results merge in seed order.
void run_experiment(const ExperimentConfig& config, int threads = 1);

std::uint64_t fnv1a64(const std::string& text);

// hardware cap honoring the HMMVA_THREADS environment variable
int env_thread_cap();

}  // namespace hmmva
