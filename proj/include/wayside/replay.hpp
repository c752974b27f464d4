#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "wayside/common.hpp"
#include "wayside/fuse.hpp"
#include "wayside/gbdt.hpp"
#include "wayside/synth.hpp"

namespace wayside::replay {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Seasonal domain scenarios. Speed bands are fractions of each train type's
// admissible range so both types shift together.
// ---------------------------------------------------------------------------

enum class DomainId { Peak, OffPeak, SummerBoom, WinterBust, Balanced };

std::string to_string(DomainId id);
DomainId domain_by_name(const std::string& name);

struct DomainScenario {
  DomainId id = DomainId::Balanced;
  double speed_lo_frac = 0.4;
  double speed_hi_frac = 0.7;
  std::vector<synth::LoadName> loads;
  double alfa_probability = 0.5;
  double anomaly_rate = 0.4;
  int order_index = 0;

  static DomainScenario get(DomainId id);
  static std::vector<DomainScenario> default_stream();  // the five, in order
};

synth::PassageSpec sample_passage(const DomainScenario& scenario, Rng& rng,
                                  double sample_rate_hz = 2000.0);

// ---------------------------------------------------------------------------
// Memory buffers
// ---------------------------------------------------------------------------

enum class ReplayPolicy { Baseline, RS, LB, PRS, PLB };

std::string to_string(ReplayPolicy p);
ReplayPolicy policy_by_name(const std::string& name);

struct MemoryEntry {
  fuse::FeatureVector row;     // stored label lives in row.label / row.soft_label
  double stored_loss = 0.0;
  std::uint64_t insertion = 0;  // stream position at insertion, tie-breaker
};

struct MemoryBuffer {
  std::size_t capacity = 200;
  ReplayPolicy policy = ReplayPolicy::RS;
  std::vector<MemoryEntry> entries;
  std::uint64_t stream_count = 0;  // items seen so far

  bool stores_soft_labels() const {
    return policy == ReplayPolicy::PRS || policy == ReplayPolicy::PLB;
  }
};

// Classic reservoir step: append while below capacity, then replace a uniform
// victim with probability capacity/n.
void reservoir_insert(MemoryBuffer& buffer, MemoryEntry item, std::uint64_t n, Rng& rng);

// Analytic retention probability of any item after n arrivals.
double reservoir_retention_probability(std::size_t capacity, std::uint64_t n);

// Keep entries with loss > tau; above capacity keep the top-capacity by loss,
// earlier insertion wins ties.
std::vector<MemoryEntry> loss_based_select(std::vector<MemoryEntry> candidates, double tau,
                                           std::size_t capacity);

// ---------------------------------------------------------------------------
// Domain-incremental stream
// ---------------------------------------------------------------------------

struct PerformanceMatrix {
  MatrixXd r;  // (N+1) x N; row 0 = pre-stream model, row t = after domain t

  int domains() const { return static_cast<int>(r.cols()); }
};

// Metric formulas as printed in the source protocol.
double fwt(const PerformanceMatrix& pm);
double bwt(const PerformanceMatrix& pm);
double im(const PerformanceMatrix& pm, const VectorXd& r_joint);
enum class KgrBase { Diagonal, InitialRow };
double kgr(const PerformanceMatrix& pm, KgrBase base = KgrBase::Diagonal);

struct DomainData {
  fuse::Dataset train;
  fuse::Dataset test;
};

struct StreamConfig {
  ReplayPolicy policy = ReplayPolicy::RS;
  std::size_t capacity = 200;
  double beta = 1.0;          // replay-loss coefficient, realized as sample weight
  gbdt::GbdtConfig classifier;
  std::uint64_t seed = 1;
};

struct StreamResult {
  PerformanceMatrix matrix;
  VectorXd joint_diagonal;  // accuracy of union-trained models per domain
  gbdt::GbdtModel final_model;
  std::vector<std::size_t> buffer_sizes;  // after each domain
};

// Runs one sequential pass over the domains. The pre-stream model is trained
// on `warmup`. Baseline retrains on the union of everything seen; replay
// policies train on current data plus buffer rows weighted by beta.
StreamResult run_domain_stream(const std::vector<DomainData>& domains,
                               const fuse::Dataset& warmup, const StreamConfig& cfg);

}  // namespace wayside::replay
