#include "wayside/replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace wayside::replay {

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

std::string to_string(DomainId id) {
  switch (id) {
    case DomainId::Peak:       return "peak";
    case DomainId::OffPeak:    return "offpeak";
    case DomainId::SummerBoom: return "summerboom";
    case DomainId::WinterBust: return "winterbust";
    case DomainId::Balanced:   return "balanced";
  }
  return "?";
}

DomainId domain_by_name(const std::string& name) {
  for (DomainId id : {DomainId::Peak, DomainId::OffPeak, DomainId::SummerBoom,
                      DomainId::WinterBust, DomainId::Balanced}) {
    if (to_string(id) == name) return id;
  }
  throw ConfigError("unknown domain scenario: " + name);
}

DomainScenario DomainScenario::get(DomainId id) {
  using synth::LoadName;
  const std::vector<LoadName> all{LoadName::Empty,      LoadName::Half,
                                  LoadName::Full,       LoadName::Unbalance1,
                                  LoadName::Unbalance2, LoadName::Unbalance3};
  DomainScenario s;
  s.id = id;
  switch (id) {
    case DomainId::Peak:
      s.speed_lo_frac = 0.70;
      s.speed_hi_frac = 1.00;
      s.loads = all;
      s.alfa_probability = 0.7;
      s.order_index = 0;
      break;
    case DomainId::OffPeak:
      s.speed_lo_frac = 0.25;
      s.speed_hi_frac = 0.55;
      s.loads = all;
      s.alfa_probability = 0.5;
      s.order_index = 1;
      break;
    case DomainId::SummerBoom:  // high speed, fully loaded wagons
      s.speed_lo_frac = 0.75;
      s.speed_hi_frac = 1.00;
      s.loads = {LoadName::Full};
      s.alfa_probability = 0.4;
      s.order_index = 2;
      break;
    case DomainId::WinterBust:  // slowest traffic, never completely filled
      s.speed_lo_frac = 0.00;
      s.speed_hi_frac = 0.20;
      s.loads = {LoadName::Empty, LoadName::Half, LoadName::Unbalance2, LoadName::Unbalance3};
      s.alfa_probability = 0.5;
      s.order_index = 3;
      break;
    case DomainId::Balanced:
      s.speed_lo_frac = 0.40;
      s.speed_hi_frac = 0.70;
      s.loads = all;
      s.alfa_probability = 0.5;
      s.order_index = 4;
      break;
  }
  return s;
}

std::vector<DomainScenario> DomainScenario::default_stream() {
  return {get(DomainId::Peak), get(DomainId::OffPeak), get(DomainId::SummerBoom),
          get(DomainId::WinterBust), get(DomainId::Balanced)};
}

synth::PassageSpec sample_passage(const DomainScenario& scenario, Rng& rng,
                                  double sample_rate_hz) {
  using synth::DefectKind;
  synth::PassageSpec spec;
  spec.train = rng.bernoulli(scenario.alfa_probability) ? synth::TrainName::Alfa
                                                        : synth::TrainName::Laagrss;
  const synth::TrainType& train = synth::TrainType::by_name(spec.train);
  const double frac = rng.uniform(scenario.speed_lo_frac, scenario.speed_hi_frac);
  spec.speed_kmh =
      train.min_speed_kmh + frac * (train.max_speed_kmh - train.min_speed_kmh);
  spec.load = scenario.loads[rng.uniform_int(scenario.loads.size())];
  spec.sample_rate_hz = sample_rate_hz;
  spec.irregularity_seed = rng.next_u64();

  if (rng.bernoulli(scenario.anomaly_rate)) {
    // Wheel degradation correlates with carried load: defective passages
    // re-draw their load scheme with heavier schemes favoured, restricted to
    // what the scenario allows.
    static const std::array<std::pair<synth::LoadName, double>, 6> weights{{
        {synth::LoadName::Empty, 0.02},
        {synth::LoadName::Half, 0.08},
        {synth::LoadName::Full, 0.45},
        {synth::LoadName::Unbalance1, 0.25},
        {synth::LoadName::Unbalance2, 0.12},
        {synth::LoadName::Unbalance3, 0.08},
    }};
    double total = 0.0;
    for (const auto& [name, w] : weights) {
      for (synth::LoadName allowed : scenario.loads) {
        if (allowed == name) total += w;
      }
    }
    double draw = rng.uniform(0.0, total);
    for (const auto& [name, w] : weights) {
      bool allowed = false;
      for (synth::LoadName a : scenario.loads) allowed = allowed || a == name;
      if (!allowed) continue;
      draw -= w;
      if (draw <= 0.0) {
        spec.load = name;
        break;
      }
    }
    // Up to three defect slots per passage: two flat-prone left wheels on the
    // third wagon and the polygonization-prone first right wheel of wagon one.
    const double u = rng.uniform();
    const int count = u < 0.60 ? 1 : (u < 0.85 ? 2 : 3);
    std::array<int, 3> slots{0, 1, 2};
    for (int i = 0; i < 3; ++i) {
      const auto j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(3 - i)));
      std::swap(slots[static_cast<std::size_t>(i)], slots[static_cast<std::size_t>(j)]);
    }
    for (int i = 0; i < count; ++i) {
      const int slot = slots[static_cast<std::size_t>(i)];
      if (slot == 2) {
        spec.defects.push_back(
            synth::sample_defect(DefectKind::Polygonization, synth::kPolyEnvelope, rng, train));
      } else {
        const synth::SeverityInterval sev = rng.bernoulli(0.5) ? synth::kFlatL1 : synth::kFlatL2;
        synth::WheelDefect d = synth::sample_defect(DefectKind::Flat, sev, rng, train);
        d.wheel_position = slot == 0 ? synth::WheelPosition::First : synth::WheelPosition::Second;
        spec.defects.push_back(d);
      }
    }
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Buffers
// ---------------------------------------------------------------------------

std::string to_string(ReplayPolicy p) {
  switch (p) {
    case ReplayPolicy::Baseline: return "baseline";
    case ReplayPolicy::RS:       return "rs";
    case ReplayPolicy::LB:       return "lb";
    case ReplayPolicy::PRS:      return "prs";
    case ReplayPolicy::PLB:      return "plb";
  }
  return "?";
}

ReplayPolicy policy_by_name(const std::string& name) {
  for (ReplayPolicy p : {ReplayPolicy::Baseline, ReplayPolicy::RS, ReplayPolicy::LB,
                         ReplayPolicy::PRS, ReplayPolicy::PLB}) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("unknown replay policy: " + name);
}

void reservoir_insert(MemoryBuffer& buffer, MemoryEntry item, std::uint64_t n, Rng& rng) {
  if (n < 1) throw DomainError("reservoir_insert: stream count must be >= 1");
  item.insertion = n;
  if (buffer.entries.size() < buffer.capacity) {
    buffer.entries.push_back(std::move(item));
    return;
  }
  if (buffer.capacity == 0) return;
  const std::uint64_t j = rng.uniform_int(n);
  if (j < buffer.capacity) buffer.entries[static_cast<std::size_t>(j)] = std::move(item);
}

double reservoir_retention_probability(std::size_t capacity, std::uint64_t n) {
  if (n == 0) throw DomainError("reservoir_retention_probability: n must be >= 1");
  if (n <= capacity) return 1.0;
  return static_cast<double>(capacity) / static_cast<double>(n);
}

std::vector<MemoryEntry> loss_based_select(std::vector<MemoryEntry> candidates, double tau,
                                           std::size_t capacity) {
  std::vector<MemoryEntry> retained;
  for (auto& c : candidates) {
    if (!std::isfinite(c.stored_loss))
      throw DomainError("loss_based_select: losses must be finite");
    if (c.stored_loss > tau) retained.push_back(std::move(c));
  }
  std::stable_sort(retained.begin(), retained.end(), [](const MemoryEntry& a, const MemoryEntry& b) {
    if (a.stored_loss != b.stored_loss) return a.stored_loss > b.stored_loss;
    return a.insertion < b.insertion;
  });
  if (retained.size() > capacity) retained.resize(capacity);
  return retained;
}

// ---------------------------------------------------------------------------
// Transfer metrics
// ---------------------------------------------------------------------------

double fwt(const PerformanceMatrix& pm) {
  const int n = pm.domains();
  if (n <= 1) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < n - 1; ++i) acc += pm.r(0, i) - pm.r(i + 1, i);
  return acc / (n - 1);
}

double bwt(const PerformanceMatrix& pm) {
  const int n = pm.domains();
  if (n <= 1) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < n - 1; ++i) {
    for (int j = i + 1; j < n; ++j) acc += pm.r(j + 1, i) - pm.r(i + 1, i);
  }
  return acc / (static_cast<double>(n) * (n - 1));
}

double im(const PerformanceMatrix& pm, const VectorXd& r_joint) {
  const int n = pm.domains();
  if (r_joint.size() != n) throw DomainError("im: joint reference size mismatch");
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += r_joint[i] - pm.r(i + 1, i);
  return acc / n;
}

double kgr(const PerformanceMatrix& pm, KgrBase base) {
  const int n = pm.domains();
  std::string offenders;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double initial = base == KgrBase::Diagonal ? pm.r(i + 1, i) : pm.r(0, i);
    if (initial == 0.0) {
      offenders += (offenders.empty() ? "" : ", ") + std::to_string(i + 1);
      continue;
    }
    acc += pm.r(n, i) / initial;
  }
  if (!offenders.empty())
    throw DomainError("kgr: zero initial performance on domain(s) " + offenders);
  return acc / n;
}

// ---------------------------------------------------------------------------
// Stream protocol
// ---------------------------------------------------------------------------

namespace {

double logloss(double p, double y) {
  const double q = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
}

struct WeightedSet {
  std::vector<const fuse::FeatureVector*> rows;
  std::vector<double> labels;
  std::vector<double> weights;

  void add(const fuse::FeatureVector& fv, double label, double weight) {
    rows.push_back(&fv);
    labels.push_back(label);
    weights.push_back(weight);
  }

  gbdt::GbdtModel train(const gbdt::GbdtConfig& cfg) const {
    if (rows.empty()) throw ProtocolError("stream step has no training rows");
    MatrixXd x(static_cast<Eigen::Index>(rows.size()), rows[0]->values.size());
    VectorXd y(static_cast<Eigen::Index>(rows.size()));
    VectorXd w(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = rows[i]->masked_values().transpose();
      y[static_cast<Eigen::Index>(i)] = labels[i];
      w[static_cast<Eigen::Index>(i)] = weights[i];
    }
    return gbdt::train_gbdt(x, y, cfg, &w);
  }
};

double accuracy_on(const gbdt::GbdtModel& model, const fuse::Dataset& ds) {
  if (ds.rows.empty()) throw ProtocolError("empty evaluation split");
  int correct = 0;
  for (const auto& fv : ds.rows) {
    const double p = model.predict_proba(fv.masked_values());
    correct += (p >= 0.5 ? 1 : 0) == fv.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.rows.size());
}

gbdt::GbdtModel train_union(const std::vector<DomainData>& domains, int upto,
                            const gbdt::GbdtConfig& cfg) {
  WeightedSet set;
  for (int d = 0; d <= upto; ++d) {
    for (const auto& fv : domains[static_cast<std::size_t>(d)].train.rows)
      set.add(fv, fv.label, 1.0);
  }
  return set.train(cfg);
}

}  // namespace

StreamResult run_domain_stream(const std::vector<DomainData>& domains,
                               const fuse::Dataset& warmup, const StreamConfig& cfg) {
  const int n = static_cast<int>(domains.size());
  if (n < 1) throw ProtocolError("run_domain_stream: no domains");
  for (const auto& d : domains) {
    if (d.train.rows.empty() || d.test.rows.empty())
      throw ProtocolError("run_domain_stream: empty domain dataset");
  }
  if (warmup.rows.empty()) throw ProtocolError("run_domain_stream: empty warmup dataset");

  StreamResult out;
  out.matrix.r = MatrixXd::Zero(n + 1, n);
  out.joint_diagonal = VectorXd::Zero(n);

  const auto step_config = [&](std::uint64_t stream_id) {
    gbdt::GbdtConfig c = cfg.classifier;
    c.seed = derive_seed(cfg.seed, stream_id);
    return c;
  };

  // Pre-stream model
  WeightedSet warm;
  for (const auto& fv : warmup.rows) warm.add(fv, fv.label, 1.0);
  gbdt::GbdtModel prev_model = warm.train(step_config(0xAA00));
  for (int i = 0; i < n; ++i)
    out.matrix.r(0, i) = accuracy_on(prev_model, domains[static_cast<std::size_t>(i)].test);

  MemoryBuffer buffer;
  buffer.capacity = cfg.capacity;
  buffer.policy = cfg.policy;
  Rng buffer_rng(derive_seed(cfg.seed, 0xBF00));

  for (int t = 0; t < n; ++t) {
    const auto& current = domains[static_cast<std::size_t>(t)];
    gbdt::GbdtModel model;
    if (cfg.policy == ReplayPolicy::Baseline) {
      model = train_union(domains, t, step_config(0xCC00 + static_cast<std::uint64_t>(t)));
    } else {
      WeightedSet set;
      for (const auto& fv : current.train.rows) set.add(fv, fv.label, 1.0);
      for (const auto& e : buffer.entries) {
        if (buffer.stores_soft_labels()) {
          const double p = e.row.soft_label.value_or(0.5);
          set.add(e.row, 1.0, cfg.beta * p);
          set.add(e.row, 0.0, cfg.beta * (1.0 - p));
        } else {
          set.add(e.row, e.row.label, cfg.beta);
        }
      }
      model = set.train(step_config(0xCC00 + static_cast<std::uint64_t>(t)));
    }

    for (int i = 0; i < n; ++i)
      out.matrix.r(t + 1, i) = accuracy_on(model, domains[static_cast<std::size_t>(i)].test);

    // Buffer maintenance
    switch (cfg.policy) {
      case ReplayPolicy::Baseline:
        break;
      case ReplayPolicy::RS:
      case ReplayPolicy::PRS: {
        for (const auto& fv : current.train.rows) {
          MemoryEntry e;
          e.row = fv;
          if (cfg.policy == ReplayPolicy::PRS) {
            const double p = prev_model.predict_proba(fv.masked_values());
            e.row.soft_label = p;
            e.row.label = p >= 0.5 ? 1 : 0;
          }
          ++buffer.stream_count;
          reservoir_insert(buffer, std::move(e), buffer.stream_count, buffer_rng);
        }
        break;
      }
      case ReplayPolicy::LB:
      case ReplayPolicy::PLB: {
        std::vector<MemoryEntry> candidates = buffer.entries;
        std::vector<double> current_losses;
        for (const auto& fv : current.train.rows) {
          MemoryEntry e;
          e.row = fv;
          ++buffer.stream_count;
          e.insertion = buffer.stream_count;
          if (cfg.policy == ReplayPolicy::PLB) {
            const double p = prev_model.predict_proba(fv.masked_values());
            e.row.soft_label = p;
            e.row.label = p >= 0.5 ? 1 : 0;
          }
          candidates.push_back(std::move(e));
        }
        // Losses under the freshly updated model, against the stored labels
        // (true for LB, the past model's soft prediction for P-LB).
        for (auto& e : candidates) {
          const double p = model.predict_proba(e.row.masked_values());
          const double target = cfg.policy == ReplayPolicy::PLB
                                    ? e.row.soft_label.value_or(static_cast<double>(e.row.label))
                                    : static_cast<double>(e.row.label);
          e.stored_loss = logloss(p, target);
        }
        current_losses.reserve(current.train.rows.size());
        for (std::size_t i = candidates.size() - current.train.rows.size();
             i < candidates.size(); ++i)
          current_losses.push_back(candidates[i].stored_loss);
        std::sort(current_losses.begin(), current_losses.end());
        const std::size_t m = current_losses.size();
        const double tau = m == 0 ? 0.0
                                  : (m % 2 == 1 ? current_losses[m / 2]
                                                : 0.5 * (current_losses[m / 2 - 1] +
                                                         current_losses[m / 2]));
        buffer.entries = loss_based_select(std::move(candidates), tau, buffer.capacity);
        break;
      }
    }
    out.buffer_sizes.push_back(buffer.entries.size());
    prev_model = std::move(model);
  }

  // Joint reference accuracies for the intransigence measure.
  if (cfg.policy == ReplayPolicy::Baseline) {
    for (int i = 0; i < n; ++i) out.joint_diagonal[i] = out.matrix.r(i + 1, i);
  } else {
    for (int i = 0; i < n; ++i) {
      const gbdt::GbdtModel joint =
          train_union(domains, i, step_config(0xDD00 + static_cast<std::uint64_t>(i)));
      out.joint_diagonal[i] = accuracy_on(joint, domains[static_cast<std::size_t>(i)].test);
    }
  }
  out.final_model = std::move(prev_model);
  return out;
}

}  // namespace wayside::replay
