#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hmmva/corrections_types.hpp"
#include "hmmva/stream.hpp"
#include "hmmva/training.hpp"

namespace hmmva {

// Model documents: {"K", "transition" (row-major), "initial", "emissions"
// ([{kind, params}]), "stationary"}. Parsing is strict: unknown fields are
// errors. All loads validate before returning.
HmmParams parse_model(const std::string& text);
HmmParams load_model(const std::string& path);
std::string model_to_json(const HmmParams& params);
void save_model(const HmmParams& params, const std::string& path);

// one value per line: decimal for Gaussian, symbol token for Categorical
std::vector<double> read_observations(const std::string& path);
void write_observations(std::span<const double> obs, const std::string& path);

// one 1-based state index per line
std::vector<int> read_alignment(const std::string& path);
void write_alignment(std::span<const int> path0, const std::string& out_path);

// barrier documents: {"length", "order", "state" (1-based), "sets"
// ([{symbols:[...]} or {lo, hi}]), "witness" (1-based, optional)}
BarrierSpec parse_barrier(const std::string& text);
BarrierSpec load_barrier(const std::string& path);

std::string train_state_to_json(const TrainState& state, const std::string& method);
std::string correction_table_to_json(const CorrectionTable& table);

// 17 significant digits, round-trippable
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace hmmva
