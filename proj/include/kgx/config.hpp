#pragma once

#include <string>

#include "json.hpp"

namespace kgx {

/// Everything a run needs: input paths, per-stage hyperparameters and the
/// seed. Paper-stated defaults (10 epochs, lr 2e-5, beta=1, gamma=10) are
/// the initial values; experiment configs override them.
struct RunConfig {
  uint64_t seed = 1;

  struct Paths {
    std::string catalog;
    std::string relations;
    std::string hierarchy;
    std::string coarse_map;
    std::string types;
    std::string train;
    std::string dev;
    std::string test;
    std::string freq_map;
    std::string model_dir;
    std::string thresholds;
    std::string relation_restriction;  // optional: file of allowed relation ids
  } paths;

  struct EncoderSection {
    int dim = 64;
    int ffn_dim = 128;
    int layers = 2;
    int max_len = 256;
    int window = 64;  // context tokens per side
  } encoder;

  struct MentionSection {
    int epochs = 10;
    double lr = 2e-5;
    int batch_docs = 8;
    int max_span_len = 0;  // 0 = uncapped
    double neg_ratio = 10.0;
    int subsample_above = 64;
  } mention;

  struct BiencoderSection {
    int epochs = 10;
    double lr = 2e-5;
    int batch_size = 32;
    int beta = 1;   // epochs before hard-negative mining
    int gamma = 10; // mined negatives per mention
    int top_k = 10; // inference candidates
    double temperature_init = 10.0;
    bool remine_every_epoch = true;
  } biencoder;

  struct CrossSection {
    int epochs = 10;
    double lr = 2e-5;
    int batch_mentions = 8;
    int rank_negatives = 9;
  } crossencoder;

  struct RelationSection {
    int epochs = 10;
    double lr = 2e-5;
    int batch_docs = 32;
    int type_dim = 32;
    std::string mode = "full";
    double negative_pair_ratio = 0.0;  // 0 = keep all negative pairs
  } relation;

  struct CalibrateSection {
    double beta = 1.0;
    double grid_start = 0.05;
    double grid_stop = 0.95;
    double grid_step = 0.05;
    bool refine = true;
    bool macro = false;
  } calibrate;

  struct EvaluateSection {
    int bootstrap_samples = 50;
    uint64_t bootstrap_seed = 17;
    bool macro_all_relations = false;
  } evaluate;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  void save(const std::string& path) const;
  static RunConfig load_file(const std::string& path);
};

}  // namespace kgx
