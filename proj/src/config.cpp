#include "harmoniad/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>
#include <vector>

namespace harmoniad {

namespace {

using Slot = std::variant<double*, int*, std::uint64_t*, bool*, std::string*>;

struct Field {
  const char* key;
  Slot slot;
  const char* comment;
};

std::vector<Field> fields(RunConfig& c) {
  return {
      {"seed", &c.seed, nullptr},
      {"n_classes", &c.n_classes, nullptr},
      {"n_train", &c.n_train, "total training images across classes"},
      {"n_test", &c.n_test, nullptr},
      {"n_val", &c.n_val, "validation images used for per-epoch AUROC"},
      {"anomaly_fraction", &c.anomaly_fraction, nullptr},
      {"image_size", &c.image_size, nullptr},
      {"patch", &c.patch, nullptr},
      {"noise", &c.noise, nullptr},
      {"channels", &c.channels, nullptr},
      {"head_dim", &c.head_dim, nullptr},
      {"gscm_rank", &c.gscm_rank, nullptr},
      {"mask_hidden", &c.mask_hidden, nullptr},
      {"amp_eps", &c.amp_eps, nullptr},
      {"gate", &c.gate, "soft | hard:<t>"},
      {"kappa", &c.kappa, nullptr},
      {"tau", &c.tau, nullptr},
      {"candidates", &c.candidates, nullptr},
      {"r_min", &c.r_min, nullptr},
      {"r_max", &c.r_max, nullptr},
      {"lambda_n", &c.lambda_n, nullptr},
      {"lambda_a", &c.lambda_a, nullptr},
      {"lambda_con", &c.lambda_con, nullptr},
      {"lambda_an", &c.lambda_an, nullptr},
      {"lambda_far", &c.lambda_far, nullptr},
      {"lambda_tri", &c.lambda_tri, nullptr},
      {"lambda_reg", &c.lambda_reg, nullptr},
      {"margin_far", &c.margin_far, nullptr},
      {"margin_tri", &c.margin_tri, nullptr},
      {"con_temperature", &c.con_temperature, nullptr},
      {"con_radius", &c.con_radius, nullptr},
      {"lr", &c.lr, nullptr},
      {"beta1", &c.beta1, nullptr},
      {"beta2", &c.beta2, nullptr},
      {"eps_opt", &c.eps_opt, nullptr},
      {"batch", &c.batch, "full-scale reference: 36"},
      {"steps", &c.steps, nullptr},
      {"no_fsam", &c.no_fsam, nullptr},
      {"no_gscm", &c.no_gscm, nullptr},
      {"no_f2s", &c.no_f2s, nullptr},
      {"out", &c.out, nullptr},
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) throw ConfigError("invalid value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + value + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  for (Field& f : fields(*this)) {
    if (key != f.key) continue;
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, bool>) {
            *p = parse_bool(key, value);
          } else if constexpr (std::is_same_v<T, std::string>) {
            *p = value;
          } else {
            *p = parse_number<T>(key, value);
          }
        },
        f.slot);
    return;
  }
  throw ConfigError("unknown config key: " + key);
}

void RunConfig::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key=value");
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig c;
  c.parse(buf.str());
  return c;
}

std::string RunConfig::to_text() const {
  RunConfig copy = *this;
  std::ostringstream out;
  for (const Field& f : fields(copy)) {
    out << f.key << '=';
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, bool>) {
            out << (*p ? "1" : "0");
          } else if constexpr (std::is_same_v<T, double>) {
            out << format_double(*p);
          } else {
            out << *p;
          }
        },
        f.slot);
    if (f.comment != nullptr) out << "  # " << f.comment;
    out << '\n';
  }
  return out.str();
}

softgate::SoftGateConfig RunConfig::gate_config() const {
  softgate::SoftGateConfig g;
  if (candidates < 2) throw ConfigError("candidates must be at least 2");
  g.candidates = softgate::SoftGateConfig::uniform_candidates(candidates, r_min, r_max);
  g.kappa = kappa;
  g.tau = tau;
  if (gate == "soft") {
    g.mode = softgate::SoftGateConfig::Mode::kSoft;
  } else if (gate.rfind("hard:", 0) == 0) {
    g.mode = softgate::SoftGateConfig::Mode::kHard;
    g.hard_threshold = parse_number<double>("gate", gate.substr(5));
  } else {
    throw ConfigError("gate must be 'soft' or 'hard:<t>', got '" + gate + "'");
  }
  g.validate();
  return g;
}

pipeline::PipelineConfig RunConfig::pipeline_config() const {
  pipeline::PipelineConfig p;
  p.gate = gate_config();
  p.fsam.relative_bias = !no_f2s;
  p.fsam.eps = amp_eps;
  p.use_fsam = !no_fsam;
  p.use_gscm = !no_gscm;
  return p;
}

ModelShape RunConfig::model_shape() const {
  ModelShape s;
  s.channels = channels;
  s.height = image_size / patch;
  s.width = image_size / patch;
  s.head_dim = head_dim;
  s.rank = gscm_rank;
  s.mask_hidden = mask_hidden;
  return s;
}

training::SynthConfig RunConfig::train_data() const {
  return {n_classes, n_train / n_classes, anomaly_fraction, image_size, noise};
}

training::SynthConfig RunConfig::test_data() const {
  return {n_classes, n_test / n_classes, anomaly_fraction, image_size, noise};
}

training::SynthConfig RunConfig::val_data() const {
  return {n_classes, n_val / n_classes, anomaly_fraction, image_size, noise};
}

training::TrainConfig RunConfig::train_config() const {
  training::TrainConfig t;
  t.seed = seed;
  t.shape = model_shape();
  t.patch = patch;
  t.batch = batch;
  t.steps = steps;
  t.adam = {lr, beta1, beta2, eps_opt};
  t.objective.pipeline = pipeline_config();
  t.objective.weights = {lambda_n, lambda_a, lambda_con, lambda_an, lambda_far, lambda_tri, lambda_reg};
  t.objective.settings = {margin_far, margin_tri, con_temperature, con_radius};
  return t;
}

void RunConfig::validate() const {
  if (n_classes < 1) throw ConfigError("n_classes must be at least 1");
  if (n_train < n_classes || n_test < 0 || n_val < 0) throw ConfigError("sample counts too small");
  if (anomaly_fraction < 0.0 || anomaly_fraction > 1.0) throw ConfigError("anomaly_fraction must lie in [0,1]");
  if (patch < 4 || image_size % patch != 0) throw ConfigError("image_size must be a multiple of patch (>= 4)");
  if (channels > training::kEncoderBankSize) throw ConfigError("the stub encoder provides at most 16 channels");
  if (!(amp_eps > 0.0)) throw ConfigError("amp_eps must be positive");
  for (double l : {lambda_n, lambda_a, lambda_con, lambda_an, lambda_far, lambda_tri, lambda_reg}) {
    if (l < 0.0) throw ConfigError("loss weights must be nonnegative");
  }
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch < 1) throw ConfigError("batch must be positive");
  if (steps < 0) throw ConfigError("steps must be nonnegative");
  model_shape().validate();
  gate_config();
}

}  // namespace harmoniad
