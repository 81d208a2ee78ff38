#include "cgt/harness.hpp"

#include <cstdlib>
#include <regex>
#include <set>

namespace cgt {

namespace {

enum SeedChannel : std::uint64_t { kGraph = 1, kCost = 2, kInit = 3, kAlgo = 4 };

Topology topology_from_string(const std::string& s) {
  if (s == "random") return Topology::Random;
  if (s == "ring") return Topology::Ring;
  if (s == "complete") return Topology::Complete;
  throw ParameterError("unknown topology '" + s + "'");
}

std::string to_string(Topology t) {
  switch (t) {
  case Topology::Random: return "random";
  case Topology::Ring: return "ring";
  case Topology::Complete: return "complete";
  }
  return "?";
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ParameterError("unknown key '" + it.key() + "' in " + where);
}

std::optional<std::uint64_t> opt_seed(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  return j.at(key).get<std::uint64_t>();
}

CellSpec parse_cell(const nlohmann::json& j, const std::string& fallback_name) {
  reject_unknown(j, {"name", "algo", "compressor", "params"}, "cell");
  CellSpec c;
  c.algo = algorithm_from_string(j.at("algo").get<std::string>());
  c.name = j.value("name", fallback_name);
  if (j.contains("compressor")) c.compressor = j.at("compressor");
  if (j.contains("params")) {
    const auto& p = j.at("params");
    if (p.is_string()) {
      if (p.get<std::string>() != "certified")
        throw ParameterError("params must be an object or \"certified\"");
    } else {
      reject_unknown(p, {"eta", "gamma", "phi_x", "phi_y", "varsigma", "s0", "mu"}, "params");
      c.params = AlgorithmParams::from_json(p);
    }
  }
  return c;
}

} // namespace

std::uint64_t ExperimentConfig::resolved_graph_seed() const {
  return graph_seed.value_or(derive_seed(seed, kGraph));
}
std::uint64_t ExperimentConfig::resolved_cost_seed() const {
  return cost_seed.value_or(derive_seed(seed, kCost));
}
std::uint64_t ExperimentConfig::resolved_init_seed() const {
  return init_seed.value_or(derive_seed(seed, kInit));
}
std::uint64_t ExperimentConfig::resolved_algo_seed() const {
  return algo_seed.value_or(derive_seed(seed, kAlgo));
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParameterError("config must be a JSON object");
  reject_unknown(j,
                 {"scenario", "seed", "seeds", "network", "cost", "init", "iters", "threshold",
                  "bits", "fstar_tol", "force_params", "cells", "algo", "compressor", "params",
                  "output_dir"},
                 "config");
  ExperimentConfig c;
  try {
    c.scenario = j.value("scenario", c.scenario);
    c.seed = j.value("seed", c.seed);
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      reject_unknown(s, {"graph", "cost", "init", "algo"}, "seeds");
      c.graph_seed = opt_seed(s, "graph");
      c.cost_seed = opt_seed(s, "cost");
      c.init_seed = opt_seed(s, "init");
      c.algo_seed = opt_seed(s, "algo");
    }
    if (j.contains("network")) {
      const auto& nw = j.at("network");
      reject_unknown(nw, {"n", "density", "topology", "seed"}, "network");
      c.n = nw.value("n", c.n);
      c.density = nw.value("density", c.density);
      c.topology = topology_from_string(nw.value("topology", std::string("random")));
      if (nw.contains("seed")) c.graph_seed = nw.at("seed").get<std::uint64_t>();
    }
    if (j.contains("cost")) {
      c.cost = j.at("cost");
      reject_unknown(c.cost, {"kind", "d", "rows", "null_dims", "target_L", "abs_m", "seed"},
                     "cost");
      if (c.cost.contains("seed")) {
        c.cost_seed = c.cost.at("seed").get<std::uint64_t>();
        c.cost.erase("seed");
      }
    }
    if (j.contains("init")) {
      const auto& in = j.at("init");
      reject_unknown(in, {"scale", "seed"}, "init");
      c.init_scale = in.value("scale", c.init_scale);
      if (in.contains("seed")) c.init_seed = in.at("seed").get<std::uint64_t>();
    }
    c.iters = j.value("iters", c.iters);
    c.threshold = j.value("threshold", c.threshold);
    if (j.contains("bits")) {
      const auto& b = j.at("bits");
      reject_unknown(b, {"bits_scalar", "bits_int", "broadcast"}, "bits");
      c.bits.bits_scalar = b.value("bits_scalar", c.bits.bits_scalar);
      c.bits.bits_int = b.value("bits_int", c.bits.bits_int);
      c.broadcast = b.value("broadcast", c.broadcast);
    }
    c.fstar_tol = j.value("fstar_tol", c.fstar_tol);
    c.force_params = j.value("force_params", c.force_params);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("cells")) {
      if (j.contains("algo")) throw ParameterError("give either 'cells' or a top-level 'algo'");
      int idx = 0;
      for (const auto& cell : j.at("cells")) c.cells.push_back(parse_cell(cell, "cell" + std::to_string(idx++)));
    } else if (j.contains("algo")) {
      nlohmann::json cell = {{"algo", j.at("algo")}};
      if (j.contains("compressor")) cell["compressor"] = j.at("compressor");
      if (j.contains("params")) cell["params"] = j.at("params");
      c.cells.push_back(parse_cell(cell, j.at("algo").get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (n < 2) throw ParameterError("network.n must be at least 2");
  if (!(density > 0.0 && density <= 1.0)) throw ParameterError("network.density must lie in (0, 1]");
  if (iters < 1) throw ParameterError("iters must be at least 1");
  if (!(threshold > 0.0)) throw ParameterError("threshold must be positive");
  if (!(init_scale > 0.0)) throw ParameterError("init.scale must be positive");
  if (!(fstar_tol > 0.0)) throw ParameterError("fstar_tol must be positive");
  bits.validate();
  if (cells.empty()) throw ParameterError("at least one algorithm cell is required");
  if (!cost.contains("kind") || !cost.contains("d")) throw ParameterError("cost needs 'kind' and 'd'");
  const int d = cost.at("d").get<int>();
  if (d < 1) throw ParameterError("cost.d must be positive");
  const std::string kind = cost.at("kind").get<std::string>();
  if (kind != "logistic" && kind != "quadratic") throw ParameterError("unknown cost kind '" + kind + "'");
  static const std::regex safe("[A-Za-z0-9_.-]+");
  std::set<std::string> names;
  for (const auto& c : cells) {
    if (!std::regex_match(c.name, safe))
      throw ParameterError("cell name '" + c.name + "' must match [A-Za-z0-9_.-]+");
    if (!names.insert(c.name).second) throw ParameterError("duplicate cell name '" + c.name + "'");
    if (c.algo != Algorithm::DGT) CompressorSpec::from_json(c.compressor, d).validate();
    if (c.params) c.params->validate(c.algo);
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["seeds"] = {{"graph", resolved_graph_seed()},
                {"cost", resolved_cost_seed()},
                {"init", resolved_init_seed()},
                {"algo", resolved_algo_seed()}};
  j["network"] = {{"n", n}, {"density", density}, {"topology", to_string(topology)}};
  j["cost"] = cost;
  j["init"] = {{"scale", init_scale}};
  j["iters"] = iters;
  j["threshold"] = threshold;
  j["bits"] = {{"bits_scalar", bits.bits_scalar}, {"bits_int", bits.bits_int}, {"broadcast", broadcast}};
  j["fstar_tol"] = fstar_tol;
  j["force_params"] = force_params;
  auto cs = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json cj = {{"name", c.name}, {"algo", to_string(c.algo)}, {"compressor", c.compressor}};
    if (c.params) cj["params"] = c.params->to_json();
    else cj["params"] = "certified";
    cs.push_back(cj);
  }
  j["cells"] = cs;
  return j;
}

std::uint64_t resolve_root_seed(std::optional<std::uint64_t> flag, std::uint64_t config_seed) {
  if (flag) return *flag;
  if (const char* env = std::getenv("CGT_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ParameterError("CGT_SEED must be a decimal integer");
    return static_cast<std::uint64_t>(v);
  }
  return config_seed;
}

ExperimentConfig replication_config(bool certified) {
  ExperimentConfig c;
  c.scenario = certified ? "replication-certified" : "replication";
  c.seed = 20240501;
  c.n = 20;
  c.density = 0.3;
  c.cost = {{"kind", "logistic"}, {"d", 50}};
  c.iters = 1000;
  c.threshold = 1e-3;
  c.force_params = !certified;
  auto params = [&](AlgorithmParams p) -> std::optional<AlgorithmParams> {
    if (certified) return std::nullopt;
    return p;
  };
  const nlohmann::json norm_sign = {{"kind", "norm_sign"}};
  const nlohmann::json uniform = {{"kind", "uniform_quantize"}, {"delta", 2.0}};
  const nlohmann::json one_bit = {{"kind", "one_bit"}};
  c.cells = {
      {"dgt", Algorithm::DGT, {{"kind", "identity"}}, params({0.1, 0.3})},
      {"alg1_norm_sign", Algorithm::CGT, norm_sign, params({0.1, 0.3, 0.3, 0.1})},
      {"alg2_norm_sign", Algorithm::EFCGT, norm_sign, params({0.1, 0.3, 0.3, 0.1, 0.3})},
      {"alg3_uniform", Algorithm::Scaled, uniform,
       params({0.05, 0.6, 1.0, 1.0, 0.0, kReplicationS0, kReplicationMu})},
  };
  // A locally bounded compressor has no certificate without the P-L condition.
  if (!certified)
    c.cells.push_back({"alg3_one_bit", Algorithm::Scaled, one_bit,
                       params({0.05, 0.6, 1.0, 1.0, 0.0, kReplicationS0, kReplicationMu})});
  return c;
}

} // namespace cgt
