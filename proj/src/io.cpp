#include "hmmva/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hmmva {

using nlohmann::json;

namespace {

void require_fields(const json& j, const char* what,
                    std::initializer_list<const char*> required,
                    std::initializer_list<const char*> optional = {}) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, std::string(what) + " must be an object");
  for (const char* f : required)
    if (!j.contains(f))
      throw Error(ErrorCode::ConfigError, std::string(what) + " is missing field '" + f + "'");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* f : required) known |= it.key() == f;
    for (const char* f : optional) known |= it.key() == f;
    if (!known)
      throw Error(ErrorCode::ConfigError,
                  std::string("unknown field '") + it.key() + "' in " + what);
  }
}

json parse_json(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded())
    throw Error(ErrorCode::ConfigError, std::string("invalid JSON in ") + what);
  return j;
}

json emission_to_json(const Emission& e) {
  json params;
  if (e.kind == EmissionKind::Categorical) {
    params["probs"] = e.probs;
  } else {
    params["mean"] = e.mean;
    params["var"] = e.var;
  }
  return json{{"kind", emission_kind_name(e.kind)}, {"params", params}};
}

Emission emission_from_json(const json& j) {
  require_fields(j, "emission", {"kind", "params"});
  Emission e;
  e.kind = emission_kind_from_name(j.at("kind").get<std::string>());
  const json& p = j.at("params");
  if (e.kind == EmissionKind::Categorical) {
    require_fields(p, "categorical params", {"probs"});
    e.probs = p.at("probs").get<std::vector<double>>();
  } else {
    require_fields(p, "gaussian params", {"mean", "var"});
    e.mean = p.at("mean").get<double>();
    e.var = p.at("var").get<double>();
  }
  return e;
}

}  // namespace

HmmParams parse_model(const std::string& text) {
  json j = parse_json(text, "model document");
  require_fields(j, "model", {"K", "transition", "initial", "emissions"}, {"stationary"});
  HmmParams params;
  params.K = j.at("K").get<std::size_t>();
  auto flat = j.at("transition").get<std::vector<double>>();
  if (flat.size() != params.K * params.K)
    throw Error(ErrorCode::ConfigError, "transition must hold K*K row-major entries");
  params.transition.assign(params.K, std::vector<double>(params.K));
  for (std::size_t i = 0; i < params.K; ++i)
    for (std::size_t k = 0; k < params.K; ++k)
      params.transition[i][k] = flat[i * params.K + k];
  params.initial = j.at("initial").get<std::vector<double>>();
  const json& ems = j.at("emissions");
  if (!ems.is_array() || ems.size() != params.K)
    throw Error(ErrorCode::ConfigError, "emissions must list K entries");
  for (const auto& e : ems) params.emissions.push_back(emission_from_json(e));
  params.stationary = j.value("stationary", true);
  validate_params(params);
  return params;
}

HmmParams load_model(const std::string& path) { return parse_model(read_text_file(path)); }

std::string model_to_json(const HmmParams& params) {
  json j;
  j["K"] = params.K;
  std::vector<double> flat;
  flat.reserve(params.K * params.K);
  for (const auto& row : params.transition) flat.insert(flat.end(), row.begin(), row.end());
  j["transition"] = flat;
  j["initial"] = params.initial;
  json ems = json::array();
  for (const auto& e : params.emissions) ems.push_back(emission_to_json(e));
  j["emissions"] = ems;
  j["stationary"] = params.stationary;
  return j.dump(2) + "\n";
}

void save_model(const HmmParams& params, const std::string& path) {
  write_text_file(path, model_to_json(params));
}

std::vector<double> read_observations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<double> obs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // trim
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    std::string tok = line.substr(b, e - b + 1);
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw Error(ErrorCode::IoError,
                  path + ":" + std::to_string(lineno) + ": not a value: '" + tok + "'");
    }
    if (used != tok.size())
      throw Error(ErrorCode::IoError,
                  path + ":" + std::to_string(lineno) + ": trailing junk: '" + tok + "'");
    obs.push_back(v);
  }
  return obs;
}

void write_observations(std::span<const double> obs, const std::string& path) {
  std::string out;
  for (double v : obs) {
    out += format_double(v);
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<int> read_alignment(const std::string& path) {
  std::vector<int> out;
  for (double v : read_observations(path)) {
    int s = static_cast<int>(v);
    if (s < 1 || static_cast<double>(s) != v)
      throw Error(ErrorCode::IoError, "alignment entries must be 1-based state indices");
    out.push_back(s - 1);
  }
  return out;
}

void write_alignment(std::span<const int> path0, const std::string& out_path) {
  std::string out;
  for (int s : path0) {
    out += std::to_string(s + 1);
    out += '\n';
  }
  write_text_file(out_path, out);
}

BarrierSpec parse_barrier(const std::string& text) {
  json j = parse_json(text, "barrier document");
  require_fields(j, "barrier", {"length", "order", "state", "sets"}, {"witness"});
  BarrierSpec spec;
  spec.length = j.at("length").get<int>();
  spec.order = j.at("order").get<int>();
  spec.state = j.at("state").get<int>() - 1;
  for (const auto& js : j.at("sets")) {
    ObsSet set;
    if (js.contains("symbols")) {
      require_fields(js, "barrier set", {"symbols"});
      set.symbolic = true;
      set.symbols = js.at("symbols").get<std::vector<int>>();
      std::sort(set.symbols.begin(), set.symbols.end());
    } else {
      require_fields(js, "barrier set", {}, {"lo", "hi"});
      set.lo = js.value("lo", kNegInf);
      set.hi = js.value("hi", std::numeric_limits<double>::infinity());
    }
    spec.sets.push_back(std::move(set));
  }
  if (j.contains("witness")) {
    for (int q : j.at("witness").get<std::vector<int>>()) spec.witness.push_back(q - 1);
  }
  return spec;
}

BarrierSpec load_barrier(const std::string& path) { return parse_barrier(read_text_file(path)); }

std::string train_state_to_json(const TrainState& state, const std::string& method) {
  json j;
  j["method"] = method;
  j["iterations"] = state.iterations;
  j["converged"] = state.converged;
  j["loglik_trace"] = state.loglik_trace;
  j["model"] = parse_json(model_to_json(state.params), "model");
  j["row_fallback"] = state.last_row_fallback;
  j["class_fallback"] = state.last_class_fallback;
  return j.dump(2) + "\n";
}

std::string correction_table_to_json(const CorrectionTable& table) {
  json j;
  j["method"] = table.method == CorrectionTable::Method::Analytic ? "analytic" : "mc";
  json mu = json::array(), delta = json::array();
  for (std::size_t l = 0; l < table.mu.size(); ++l) {
    mu.push_back(emission_to_json(table.mu[l]));
    json d;
    if (table.mu[l].kind == EmissionKind::Categorical) {
      d["dprobs"] = table.delta[l].dprobs;
    } else {
      d["dmean"] = table.delta[l].dmean;
      if (table.mu[l].kind == EmissionKind::Gaussian) d["dvar"] = table.delta[l].dvar;
    }
    delta.push_back(d);
  }
  j["mu"] = mu;
  j["delta"] = delta;
  j["q"] = table.q;
  j["R"] = table.R;
  if (table.method == CorrectionTable::Method::MonteCarlo) {
    j["q_se"] = table.q_se;
    json mse = json::array();
    for (const auto& s : table.mu_se) {
      json d;
      d["dmean"] = s.dmean;
      d["dvar"] = s.dvar;
      if (!s.dprobs.empty()) d["dprobs"] = s.dprobs;
      mse.push_back(d);
    }
    j["mu_se"] = mse;
  }
  return j.dump(2) + "\n";
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace hmmva
