#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "wayside/common.hpp"
#include "wayside/embed.hpp"
#include "wayside/peaks.hpp"
#include "wayside/synth.hpp"

namespace wayside::fuse {

using Eigen::VectorXd;

enum class StrategyCode { SWC, SWI, IWI, IWD, SWD };

struct FusionStrategy {
  StrategyCode code = StrategyCode::SWD;
  bool starred = false;  // adds train load and speed context

  bool uses_embedding() const {
    return code == StrategyCode::SWC || code == StrategyCode::SWI || code == StrategyCode::SWD;
  }
  bool uses_count() const { return code == StrategyCode::SWC; }
  bool uses_indices() const { return code == StrategyCode::SWI || code == StrategyCode::IWI; }
  bool uses_deformations() const {
    return code == StrategyCode::IWD || code == StrategyCode::SWD;
  }

  std::string name() const;  // e.g. "s-wd*"
  static FusionStrategy by_name(const std::string& name);
  static std::vector<FusionStrategy> all_variants();       // 10: 5 codes x starred
  static const std::vector<StrategyCode>& all_codes();
};

std::string to_string(StrategyCode code);

// ---------------------------------------------------------------------------
// Fixed-arity fused vectors. X/Y blocks are padded to max_wheels with zeros
// and carry a validity mask; the padding pattern itself encodes the wheel
// count for strategies without an explicit Z block.
// ---------------------------------------------------------------------------

struct FusionLayout {
  int embedding_dim = 0;  // 0 when the strategy carries no embedding
  bool has_count = false;
  int index_slots = 0;
  int deformation_slots = 0;
  bool has_context = false;

  int total() const {
    return embedding_dim + (has_count ? 1 : 0) + index_slots + deformation_slots +
           (has_context ? 2 : 0);
  }
  std::vector<std::string> slot_names() const;
  static FusionLayout for_strategy(const FusionStrategy& strategy, int embedding_dim,
                                   int max_wheels);
};

struct FeatureVector {
  VectorXd values;
  VectorXd mask;  // 1 = valid slot, 0 = padding
  int label = 0;
  std::optional<double> soft_label;
  int domain_id = 0;

  VectorXd masked_values() const { return values.cwiseProduct(mask); }
};

struct FuseConfig {
  int max_wheels = 48;
  int embedding_dim = 40;
};

FeatureVector fuse(const FusionStrategy& strategy, const std::optional<embed::Embedding>& emb,
                   const peaks::SemanticFeatures& sem, const FuseConfig& cfg = {});

// ---------------------------------------------------------------------------
// Labeled datasets
// ---------------------------------------------------------------------------

struct Dataset {
  FusionLayout layout;
  std::vector<FeatureVector> rows;
  int skipped = 0;  // passages dropped because the detector produced nothing

  int positives() const;
  Eigen::MatrixXd matrix() const;      // rows x dims, masked values
  std::uint64_t fingerprint() const;
};

struct PipelineConfig {
  peaks::Algorithm detector = peaks::Algorithm::SD;
  double sensitivity = 0.85;
  int pd_lookahead = 50;
  FuseConfig fuse;
  int window_length = 1024;
};

// One labeled row per passage: detector -> semantics, accel window -> optional
// embedding, truth -> label and starred context.
Dataset build_dataset(const std::vector<synth::WaysideRecording>& passages,
                      const FusionStrategy& strategy, const PipelineConfig& cfg,
                      const embed::VaeParams* vae, int domain_id = 0);

}  // namespace wayside::fuse
