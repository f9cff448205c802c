#include "amsps/config.hpp"

#include <set>

#include <json.hpp>

#include "amsps/dataio.hpp"

namespace amsps {

using nlohmann::json;

ConsensusOptions TrainConfig::consensus_options() const {
  ConsensusOptions o;
  o.lambda = lambda;
  o.eta = eta;
  if (ctlm_mixture == "prior") {
    o.mixture = CtlmMixture::Prior;
  } else if (ctlm_mixture == "literal") {
    o.mixture = CtlmMixture::Literal;
  } else {
    throw Error(ErrorCategory::Usage, "ctlm_mixture must be prior or literal, got '" + ctlm_mixture + "'");
  }
  return o;
}

LossOptions TrainConfig::loss_options() const {
  LossOptions o;
  o.delta1 = delta1;
  o.delta2 = delta2;
  o.tau = tau;
  o.mu = mu;
  if (negatives == "hardest") {
    o.negatives = NegativeMode::Hardest;
  } else if (negatives == "sum") {
    o.negatives = NegativeMode::Sum;
  } else {
    throw Error(ErrorCategory::Usage, "negatives must be hardest or sum, got '" + negatives + "'");
  }
  return o;
}

MarginOptions TrainConfig::margin_options() const { return {beta, delta_max}; }

AuxPairMapping TrainConfig::aux_mapping() const {
  if (aux_pair_mapping == "partners") return AuxPairMapping::Partners;
  if (aux_pair_mapping == "negative_image_pair") return AuxPairMapping::NegativeImagePair;
  throw Error(ErrorCategory::Usage,
              "aux_pair_mapping must be partners or negative_image_pair, got '" + aux_pair_mapping + "'");
}

OptimizerKind TrainConfig::optimizer_kind() const { return parse_optimizer(optimizer); }

MiningRefresh TrainConfig::refresh() const {
  if (mining_refresh == "once") return MiningRefresh::Once;
  if (mining_refresh == "epoch") return MiningRefresh::Epoch;
  throw Error(ErrorCategory::Usage, "mining_refresh must be once or epoch, got '" + mining_refresh + "'");
}

void validate(const TrainConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw Error(ErrorCategory::Usage, "config: " + msg);
  };
  require(c.phase1_lr > 0 && c.phase2_lr > 0, "learning rates must be positive");
  require(c.batch_size >= 2, "batch_size must be at least 2");
  require(c.word_dim >= 1 && c.embed_dim >= 1, "dimensions must be positive");
  require(c.lambda > 0, "lambda must be positive");
  require(c.eta >= 0 && c.eta <= 1, "eta must lie in [0, 1]");
  require(c.delta1 >= 0 && c.delta2 >= 0, "margins must be non-negative");
  require(c.tau > 0 && c.mu > 0, "tau and mu must be positive");
  require(c.beta > 0 && c.delta_max >= 0, "beta must be positive and delta_max non-negative");
  require(c.k >= 1 && c.q >= 1, "k and q must be positive");
  require(c.a >= 2, "a must be at least 2");
  require(c.grad_clip >= 0, "grad_clip must be non-negative (0 disables)");
  require(c.rerank_gamma > 0 && c.rerank_gamma <= 1, "rerank_gamma must lie in (0, 1]");
  require(c.predictive_images.empty() == c.predictive_captions.empty(),
          "predictive_images and predictive_captions must be given together");
  c.consensus_options();
  c.loss_options();
  c.aux_mapping();
  c.optimizer_kind();
  c.refresh();
}

namespace {

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_unsigned()) throw Error(ErrorCategory::Usage, "");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw Error(ErrorCategory::Usage, "");
    } else {
      if (!it->is_string()) throw Error(ErrorCategory::Usage, "");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw Error(ErrorCategory::Usage, std::string("config: key '") + key + "' has the wrong type");
  }
}

// One table drives reading, writing and the unknown-key check.
template <typename J, typename C, typename F>
void for_each_field(C& c, F&& f) {
  f("manifest", c.manifest);
  f("seed", c.seed);
  f("optimizer", c.optimizer);
  f("phase1_lr", c.phase1_lr);
  f("phase2_lr", c.phase2_lr);
  f("batch_size", c.batch_size);
  f("epochs_phase1", c.epochs_phase1);
  f("epochs_phase2", c.epochs_phase2);
  f("grad_clip", c.grad_clip);
  f("word_dim", c.word_dim);
  f("embed_dim", c.embed_dim);
  f("lambda", c.lambda);
  f("eta", c.eta);
  f("ctlm_mixture", c.ctlm_mixture);
  f("delta1", c.delta1);
  f("delta2", c.delta2);
  f("tau", c.tau);
  f("mu", c.mu);
  f("beta", c.beta);
  f("delta_max", c.delta_max);
  f("negatives", c.negatives);
  f("aux_pair_mapping", c.aux_pair_mapping);
  f("k", c.k);
  f("q", c.q);
  f("a", c.a);
  f("b", c.b);
  f("mining_refresh", c.mining_refresh);
  f("predictive_images", c.predictive_images);
  f("predictive_captions", c.predictive_captions);
  f("rerank_gamma", c.rerank_gamma);
}

}  // namespace

TrainConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCategory::Format, std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCategory::Format, "config: top level must be an object");
  TrainConfig c;
  std::set<std::string> known;
  for_each_field<json>(c, [&](const char* key, auto& field) {
    known.insert(key);
    read_key(j, key, field);
  });
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCategory::Usage, "config: unknown key '" + key + "'");
  }
  validate(c);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  TrainConfig c = parse_config(read_file(path));
  if (!c.manifest.empty() && std::filesystem::path(c.manifest).is_relative()) {
    c.manifest = (path.parent_path() / c.manifest).lexically_normal().string();
  }
  return c;
}

std::string format_config(const TrainConfig& c) {
  json j = json::object();
  for_each_field<json>(c, [&](const char* key, const auto& field) { j[key] = field; });
  return j.dump(2);
}

}  // namespace amsps
