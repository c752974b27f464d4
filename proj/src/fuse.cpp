#include "wayside/fuse.hpp"

#include <algorithm>
#include <cstring>

namespace wayside::fuse {

std::string to_string(StrategyCode code) {
  switch (code) {
    case StrategyCode::SWC: return "s-wc";
    case StrategyCode::SWI: return "s-wi";
    case StrategyCode::IWI: return "i-wi";
    case StrategyCode::IWD: return "i-wd";
    case StrategyCode::SWD: return "s-wd";
  }
  return "?";
}

std::string FusionStrategy::name() const {
  return to_string(code) + (starred ? "*" : "");
}

FusionStrategy FusionStrategy::by_name(const std::string& name) {
  std::string base = name;
  FusionStrategy s;
  if (!base.empty() && base.back() == '*') {
    s.starred = true;
    base.pop_back();
  }
  for (StrategyCode c : all_codes()) {
    if (to_string(c) == base) {
      s.code = c;
      return s;
    }
  }
  throw ConfigError("unknown fusion strategy: " + name);
}

const std::vector<StrategyCode>& FusionStrategy::all_codes() {
  static const std::vector<StrategyCode> codes{StrategyCode::SWC, StrategyCode::SWI,
                                               StrategyCode::IWI, StrategyCode::IWD,
                                               StrategyCode::SWD};
  return codes;
}

std::vector<FusionStrategy> FusionStrategy::all_variants() {
  std::vector<FusionStrategy> out;
  for (bool starred : {false, true}) {
    for (StrategyCode c : all_codes()) out.push_back({c, starred});
  }
  return out;
}

FusionLayout FusionLayout::for_strategy(const FusionStrategy& strategy, int embedding_dim,
                                        int max_wheels) {
  FusionLayout l;
  l.embedding_dim = strategy.uses_embedding() ? embedding_dim : 0;
  l.has_count = strategy.uses_count();
  l.index_slots = strategy.uses_indices() ? max_wheels : 0;
  l.deformation_slots = strategy.uses_deformations() ? max_wheels : 0;
  l.has_context = strategy.starred;
  return l;
}

std::vector<std::string> FusionLayout::slot_names() const {
  std::vector<std::string> names;
  for (int i = 0; i < embedding_dim; ++i) names.push_back("s" + std::to_string(i));
  if (has_count) names.push_back("z");
  for (int i = 0; i < index_slots; ++i) names.push_back("x" + std::to_string(i));
  for (int i = 0; i < deformation_slots; ++i) names.push_back("y" + std::to_string(i));
  if (has_context) {
    names.push_back("load");
    names.push_back("speed");
  }
  return names;
}

FeatureVector fuse(const FusionStrategy& strategy, const std::optional<embed::Embedding>& emb,
                   const peaks::SemanticFeatures& sem, const FuseConfig& cfg) {
  if (strategy.uses_embedding() && !emb)
    throw DomainError("fuse: strategy " + strategy.name() + " requires an embedding");
  if (!strategy.uses_embedding() && emb)
    throw DomainError("fuse: strategy " + strategy.name() + " takes no embedding");

  const FusionLayout layout =
      FusionLayout::for_strategy(strategy, emb ? static_cast<int>(emb->fused().size())
                                               : cfg.embedding_dim,
                                 cfg.max_wheels);
  FeatureVector fv;
  fv.values = VectorXd::Zero(layout.total());
  fv.mask = VectorXd::Zero(layout.total());

  int at = 0;
  if (layout.embedding_dim > 0) {
    fv.values.segment(at, layout.embedding_dim) = emb->fused();
    fv.mask.segment(at, layout.embedding_dim).setOnes();
    at += layout.embedding_dim;
  }
  if (layout.has_count) {
    fv.values[at] = sem.wheel_count;
    fv.mask[at] = 1.0;
    ++at;
  }
  const int wheels = std::min<int>(sem.wheel_count, cfg.max_wheels);
  if (layout.index_slots > 0) {
    for (int i = 0; i < wheels; ++i) {
      fv.values[at + i] = sem.times_s[static_cast<std::size_t>(i)];
      fv.mask[at + i] = 1.0;
    }
    at += layout.index_slots;
  }
  if (layout.deformation_slots > 0) {
    for (int i = 0; i < wheels; ++i) {
      fv.values[at + i] = sem.deformations[static_cast<std::size_t>(i)];
      fv.mask[at + i] = 1.0;
    }
    at += layout.deformation_slots;
  }
  if (layout.has_context) {
    if (!sem.context_load_t || !sem.context_speed_kmh)
      throw DomainError("fuse: starred strategy without load/speed context");
    fv.values[at] = *sem.context_load_t;
    fv.mask[at] = 1.0;
    fv.values[at + 1] = *sem.context_speed_kmh;
    fv.mask[at + 1] = 1.0;
  }
  return fv;
}

int Dataset::positives() const {
  int p = 0;
  for (const auto& r : rows) p += r.label;
  return p;
}

Eigen::MatrixXd Dataset::matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), layout.total());
  for (std::size_t i = 0; i < rows.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = rows[i].masked_values().transpose();
  return m;
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(&bits), sizeof(bits)), h);
  };
  for (const auto& r : rows) {
    for (Eigen::Index i = 0; i < r.values.size(); ++i) mix(r.values[i]);
    mix(static_cast<double>(r.label));
    mix(r.soft_label.value_or(-1.0));
  }
  return h;
}

Dataset build_dataset(const std::vector<synth::WaysideRecording>& passages,
                      const FusionStrategy& strategy, const PipelineConfig& cfg,
                      const embed::VaeParams* vae, int domain_id) {
  if (strategy.uses_embedding() && vae == nullptr)
    throw DomainError("build_dataset: strategy " + strategy.name() + " needs a trained VAE");

  Dataset ds;
  FuseConfig fuse_cfg = cfg.fuse;
  if (vae != nullptr) fuse_cfg.embedding_dim = 2 * vae->latent_dim;
  ds.layout = FusionLayout::for_strategy(strategy, fuse_cfg.embedding_dim, fuse_cfg.max_wheels);

  for (const auto& rec : passages) {
    peaks::SemanticFeatures sem;
    try {
      const peaks::PeakSet ps =
          peaks::detect(cfg.detector, rec.strain, cfg.sensitivity, cfg.pd_lookahead);
      sem = peaks::extract_semantics(ps, rec.sample_rate_hz);
    } catch (const Error&) {
      ++ds.skipped;
      continue;
    }
    if (sem.wheel_count == 0) {  // detector produced nothing usable
      ++ds.skipped;
      continue;
    }
    if (strategy.starred) {
      const synth::LoadScheme load = synth::LoadScheme::get(rec.truth.load);
      sem.context_load_t = load.left_tonnes + load.right_tonnes;
      sem.context_speed_kmh = rec.truth.speed_kmh;
    }
    std::optional<embed::Embedding> emb;
    if (strategy.uses_embedding()) {
      const embed::SignalWindow w = embed::SignalWindow::from_signal(rec.accel, cfg.window_length);
      emb = embed::encode(w.values, *vae);
    }
    FeatureVector fv = fuse(strategy, emb, sem, fuse_cfg);
    fv.label = rec.truth.defects.empty() ? 0 : 1;
    fv.domain_id = domain_id;
    ds.rows.push_back(std::move(fv));
  }
  return ds;
}

}  // namespace wayside::fuse
