#include "wayside/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace wayside::io {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
}

std::string checksum(const fs::path& path) { return to_hex(fnv1a(read_file(path))); }

// ---------------------------------------------------------------------------
// Passages
// ---------------------------------------------------------------------------

namespace {

json defect_to_json(const synth::WheelDefect& d) {
  json j;
  j["kind"] = d.kind == synth::DefectKind::Flat ? "flat" : "polygonization";
  j["wagon"] = d.wagon_index;
  j["position"] = static_cast<int>(d.wheel_position) + 1;
  j["side"] = d.side == synth::RailSide::Left ? "left" : "right";
  j["wheel_radius_mm"] = d.wheel_radius_mm;
  if (d.kind == synth::DefectKind::Flat) {
    j["flat_length_mm"] = d.flat_length_mm;
    j["flat_depth_mm"] = d.flat_depth_mm();
  } else {
    j["levels_db"] = d.poly_levels_db;
    j["phases_rad"] = d.poly_phases_rad;
  }
  return j;
}

synth::WheelDefect defect_from_json(const json& j) {
  synth::WheelDefect d;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "flat")
    d.kind = synth::DefectKind::Flat;
  else if (kind == "polygonization")
    d.kind = synth::DefectKind::Polygonization;
  else
    throw ConfigError("unknown defect kind: " + kind);
  d.wagon_index = j.at("wagon").get<int>();
  const int pos = j.at("position").get<int>();
  if (pos < 1 || pos > 4) throw ConfigError("defect position must be 1..4");
  d.wheel_position = static_cast<synth::WheelPosition>(pos - 1);
  const std::string side = j.at("side").get<std::string>();
  if (side == "left")
    d.side = synth::RailSide::Left;
  else if (side == "right")
    d.side = synth::RailSide::Right;
  else
    throw ConfigError("defect side must be left or right");
  d.wheel_radius_mm = j.value("wheel_radius_mm", 460.0);
  if (d.kind == synth::DefectKind::Flat) {
    d.flat_length_mm = j.at("flat_length_mm").get<double>();
  } else {
    const auto levels = j.at("levels_db").get<std::vector<double>>();
    const auto phases = j.at("phases_rad").get<std::vector<double>>();
    if (levels.size() != synth::kPolyHarmonics || phases.size() != synth::kPolyHarmonics)
      throw ConfigError("polygonization defect needs 20 levels and 20 phases");
    std::copy(levels.begin(), levels.end(), d.poly_levels_db.begin());
    std::copy(phases.begin(), phases.end(), d.poly_phases_rad.begin());
  }
  return d;
}

}  // namespace

json passage_to_json(const synth::PassageSpec& spec) {
  json j;
  j["train_type"] = synth::to_string(spec.train);
  j["speed_kmh"] = spec.speed_kmh;
  j["load_scheme"] = synth::to_string(spec.load);
  j["seed"] = spec.irregularity_seed;
  j["sample_rate_hz"] = spec.sample_rate_hz;
  j["defects"] = json::array();
  for (const auto& d : spec.defects) j["defects"].push_back(defect_to_json(d));
  return j;
}

synth::PassageSpec passage_from_json(const json& j) {
  synth::PassageSpec spec;
  spec.train = synth::TrainType::by_name(j.at("train_type").get<std::string>()).name;
  spec.speed_kmh = j.at("speed_kmh").get<double>();
  spec.load = synth::LoadScheme::by_name(j.at("load_scheme").get<std::string>()).name;
  spec.irregularity_seed = j.at("seed").get<std::uint64_t>();
  spec.sample_rate_hz = j.at("sample_rate_hz").get<double>();
  for (const auto& dj : j.value("defects", json::array()))
    spec.defects.push_back(defect_from_json(dj));
  return spec;
}

synth::PassageSpec passage_from_config(const json& j, std::optional<double>* snr_db_out) {
  static const std::vector<std::string> known{"train_type", "speed_kmh",     "load_scheme",
                                              "defects",    "seed",          "sample_rate_hz",
                                              "snr_db"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key: " + key);
  }
  if (snr_db_out != nullptr) {
    *snr_db_out = std::nullopt;
    if (j.contains("snr_db") && !j.at("snr_db").is_null())
      *snr_db_out = j.at("snr_db").get<double>();
  }
  return passage_from_json(j);
}

void write_waveform_csv(const fs::path& path, const synth::WaysideRecording& rec) {
  std::ostringstream out;
  out << "t_seconds,strain,accel\n";
  for (Eigen::Index i = 0; i < rec.strain.size(); ++i) {
    out << fmt(i / rec.sample_rate_hz) << ',' << fmt(rec.strain[i]) << ',' << fmt(rec.accel[i])
        << '\n';
  }
  write_file(path, out.str());
}

Waveform read_waveform_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty waveform file " + path.string());
  std::vector<double> t, s, a;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double tv, sv, av;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &tv, &sv, &av) != 3)
      throw ConfigError("malformed waveform row: " + line);
    t.push_back(tv);
    s.push_back(sv);
    a.push_back(av);
  }
  if (t.size() < 2) throw ConfigError("waveform too short: " + path.string());
  Waveform w;
  const auto n = static_cast<Eigen::Index>(t.size());
  w.t_seconds = Eigen::Map<const dsp::ArrayXd>(t.data(), n);
  w.strain = Eigen::Map<const dsp::ArrayXd>(s.data(), n);
  w.accel = Eigen::Map<const dsp::ArrayXd>(a.data(), n);
  w.sample_rate_hz = 1.0 / (t[1] - t[0]);
  return w;
}

json peaks_to_json(const peaks::PeakSet& ps, const peaks::SemanticFeatures& sem) {
  json j;
  j["algorithm"] = peaks::to_string(ps.algorithm);
  j["sensitivity"] = ps.sensitivity;
  j["indices"] = ps.indices;
  j["amplitudes"] = ps.amplitudes;
  j["z"] = sem.wheel_count;
  j["x"] = sem.times_s;
  j["y"] = sem.deformations;
  return j;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

void write_dataset_csv(const fs::path& path, const fuse::Dataset& ds) {
  std::ostringstream out;
  for (const auto& name : ds.layout.slot_names()) out << name << ',';
  out << "label,soft_label,domain_id\n";
  for (const auto& row : ds.rows) {
    for (Eigen::Index i = 0; i < row.values.size(); ++i) out << fmt(row.values[i]) << ',';
    out << row.label << ',' << (row.soft_label ? fmt(*row.soft_label) : "") << ','
        << row.domain_id << '\n';
  }
  write_file(path, out.str());
}

fuse::Dataset read_dataset_csv(const fs::path& path, const fuse::FusionLayout& layout) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty dataset file");
  fuse::Dataset ds;
  ds.layout = layout;
  const int dims = layout.total();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row_in(line);
    std::string cell;
    fuse::FeatureVector fv;
    fv.values.resize(dims);
    fv.mask = Eigen::VectorXd::Ones(dims);
    for (int i = 0; i < dims; ++i) {
      if (!std::getline(row_in, cell, ',')) throw ConfigError("short dataset row");
      fv.values[i] = std::stod(cell);
    }
    if (!std::getline(row_in, cell, ',')) throw ConfigError("missing label");
    fv.label = std::stoi(cell);
    if (!std::getline(row_in, cell, ',')) throw ConfigError("missing soft_label");
    if (!cell.empty()) fv.soft_label = std::stod(cell);
    if (std::getline(row_in, cell, ',') || std::getline(row_in, cell)) {
      if (!cell.empty()) fv.domain_id = std::stoi(cell);
    }
    ds.rows.push_back(std::move(fv));
  }
  return ds;
}

json dataset_sidecar(const fuse::FusionStrategy& strategy, const fuse::PipelineConfig& cfg,
                     std::uint64_t seed) {
  json j;
  j["strategy"] = strategy.name();
  j["detector"] = peaks::to_string(cfg.detector);
  j["sensitivity"] = cfg.sensitivity;
  j["pd_lookahead"] = cfg.pd_lookahead;
  j["max_wheels"] = cfg.fuse.max_wheels;
  j["window_length"] = cfg.window_length;
  j["seed"] = seed;
  return j;
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

namespace {
constexpr char kVaeMagic[] = "WAYSIDEVAE1\n";

void append_matrix(std::string& blob, const Eigen::MatrixXd& m) {
  blob.append(reinterpret_cast<const char*>(m.data()),
              static_cast<std::size_t>(m.size()) * sizeof(double));
}

void read_matrix(const std::string& blob, std::size_t& at, Eigen::MatrixXd& m) {
  const std::size_t bytes = static_cast<std::size_t>(m.size()) * sizeof(double);
  if (at + bytes > blob.size()) throw ConfigError("truncated VAE model file");
  std::memcpy(m.data(), blob.data() + at, bytes);
  at += bytes;
}
}  // namespace

void save_vae(const fs::path& path, const embed::TrainedVae& model) {
  json header;
  header["input_dim"] = model.params.input_dim;
  header["latent_dim"] = model.params.latent_dim;
  header["beta"] = model.params.beta;
  header["depth"] = model.config.depth;
  header["seed"] = model.config.seed;
  header["learning_rate"] = model.config.learning_rate;
  header["epochs"] = model.config.epochs;
  header["batch_size"] = model.config.batch_size;
  header["initial_val_loss"] = model.initial_val_loss;
  header["train_loss"] = model.train_loss;
  header["val_loss"] = model.val_loss;
  json dims = json::array();
  for (const auto& l : model.params.encoder)
    dims.push_back({{"rows", l.weights.rows()}, {"cols", l.weights.cols()}});
  header["encoder_dims"] = dims;
  dims = json::array();
  for (const auto& l : model.params.decoder)
    dims.push_back({{"rows", l.weights.rows()}, {"cols", l.weights.cols()}});
  header["decoder_dims"] = dims;

  const std::string head = header.dump();
  std::string blob = kVaeMagic;
  blob += std::to_string(head.size()) + "\n";
  blob += head;
  for (const auto& l : model.params.encoder) {
    append_matrix(blob, l.weights);
    append_matrix(blob, l.bias);
  }
  for (const auto& l : model.params.decoder) {
    append_matrix(blob, l.weights);
    append_matrix(blob, l.bias);
  }
  write_file(path, blob);
}

embed::TrainedVae load_vae(const fs::path& path) {
  const std::string blob = read_file(path);
  const std::string magic = kVaeMagic;
  if (blob.rfind(magic, 0) != 0) throw ConfigError("not a VAE model file: " + path.string());
  std::size_t at = magic.size();
  const std::size_t eol = blob.find('\n', at);
  if (eol == std::string::npos) throw ConfigError("corrupt VAE model header");
  const std::size_t head_len = std::stoul(blob.substr(at, eol - at));
  at = eol + 1;
  const json header = json::parse(blob.substr(at, head_len));
  at += head_len;

  embed::TrainedVae model;
  model.params.input_dim = header.at("input_dim").get<int>();
  model.params.latent_dim = header.at("latent_dim").get<int>();
  model.params.beta = header.at("beta").get<double>();
  model.config.input_dim = model.params.input_dim;
  model.config.latent_dim = model.params.latent_dim;
  model.config.beta = model.params.beta;
  model.config.depth = header.at("depth").get<int>();
  model.config.seed = header.at("seed").get<std::uint64_t>();
  model.config.learning_rate = header.at("learning_rate").get<double>();
  model.config.epochs = header.at("epochs").get<int>();
  model.config.batch_size = header.at("batch_size").get<int>();
  model.initial_val_loss = header.value("initial_val_loss", 0.0);
  model.train_loss = header.at("train_loss").get<std::vector<double>>();
  model.val_loss = header.at("val_loss").get<std::vector<double>>();

  for (const auto& d : header.at("encoder_dims")) {
    embed::DenseLayer l;
    l.weights.resize(d.at("rows").get<Eigen::Index>(), d.at("cols").get<Eigen::Index>());
    l.bias.resize(d.at("rows").get<Eigen::Index>());
    model.params.encoder.push_back(std::move(l));
  }
  for (const auto& d : header.at("decoder_dims")) {
    embed::DenseLayer l;
    l.weights.resize(d.at("rows").get<Eigen::Index>(), d.at("cols").get<Eigen::Index>());
    l.bias.resize(d.at("rows").get<Eigen::Index>());
    model.params.decoder.push_back(std::move(l));
  }
  for (auto& l : model.params.encoder) {
    read_matrix(blob, at, l.weights);
    Eigen::MatrixXd b(l.bias.size(), 1);
    read_matrix(blob, at, b);
    l.bias = b.col(0);
  }
  for (auto& l : model.params.decoder) {
    read_matrix(blob, at, l.weights);
    Eigen::MatrixXd b(l.bias.size(), 1);
    read_matrix(blob, at, b);
    l.bias = b.col(0);
  }
  return model;
}

void save_gbdt(const fs::path& path, const gbdt::GbdtModel& model) {
  json j;
  j["base_score"] = model.base_score;
  j["n_features"] = model.n_features;
  j["config"] = {{"alpha", model.config.alpha},
                 {"colsample_bytree", model.config.colsample_bytree},
                 {"subsample", model.config.subsample},
                 {"learning_rate", model.config.learning_rate},
                 {"max_depth", model.config.max_depth},
                 {"min_child_weight", model.config.min_child_weight},
                 {"n_estimators", model.config.n_estimators},
                 {"lambda", model.config.lambda},
                 {"seed", model.config.seed}};
  j["trees"] = json::array();
  for (const auto& tree : model.trees) {
    json nodes = json::array();
    for (const auto& n : tree.nodes) {
      nodes.push_back({{"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right},
                       {"leaf_value", n.leaf_value}});
    }
    j["trees"].push_back(nodes);
  }
  write_file(path, j.dump(2));
}

gbdt::GbdtModel load_gbdt(const fs::path& path) {
  const json j = json::parse(read_file(path));
  gbdt::GbdtModel model;
  model.base_score = j.at("base_score").get<double>();
  model.n_features = j.at("n_features").get<int>();
  const json& c = j.at("config");
  model.config.alpha = c.at("alpha").get<double>();
  model.config.colsample_bytree = c.at("colsample_bytree").get<double>();
  model.config.subsample = c.at("subsample").get<double>();
  model.config.learning_rate = c.at("learning_rate").get<double>();
  model.config.max_depth = c.at("max_depth").get<int>();
  model.config.min_child_weight = c.at("min_child_weight").get<double>();
  model.config.n_estimators = c.at("n_estimators").get<int>();
  model.config.lambda = c.at("lambda").get<double>();
  model.config.seed = c.at("seed").get<std::uint64_t>();
  for (const auto& tj : j.at("trees")) {
    gbdt::Tree tree;
    for (const auto& nj : tj) {
      gbdt::TreeNode n;
      n.feature = nj.at("feature").get<int>();
      n.threshold = nj.at("threshold").get<double>();
      n.left = nj.at("left").get<int>();
      n.right = nj.at("right").get<int>();
      n.leaf_value = nj.at("leaf_value").get<double>();
      tree.nodes.push_back(n);
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace wayside::io
