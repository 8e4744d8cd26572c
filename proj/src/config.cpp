#include "s2pnm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "s2pnm/error.hpp"

namespace s2pnm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("invalid value '" + value + "' for key '" + key + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("invalid boolean '" + value + "' for key '" + key + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (d_user == 0 || d_gru == 0 || d_dict == 0) throw ConfigError("dimensions must be at least 1");
  if (!(p_drop >= 0.0 && p_drop < 1.0)) throw ConfigError("p_drop must lie in [0, 1)");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (decay_every_epochs == 0) throw ConfigError("decay_every_epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (window == 0) throw ConfigError("window must be at least 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (val_k == 0) throw ConfigError("val_k must be at least 1");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (w_pos <= 0.0 || w_neg < 0.0) throw ConfigError("example weights must be positive (w_neg may be 0)");
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "d_user") d_user = parse_number<std::size_t>(key, value);
  else if (key == "d_gru") d_gru = parse_number<std::size_t>(key, value);
  else if (key == "d_dict") d_dict = parse_number<std::size_t>(key, value);
  else if (key == "d_embed") d_embed = parse_number<std::size_t>(key, value);
  else if (key == "lr") lr = parse_number<double>(key, value);
  else if (key == "lr_decay") lr_decay = parse_number<double>(key, value);
  else if (key == "decay_every_epochs") decay_every_epochs = parse_number<std::size_t>(key, value);
  else if (key == "beta1") beta1 = parse_number<double>(key, value);
  else if (key == "beta2") beta2 = parse_number<double>(key, value);
  else if (key == "epsilon") epsilon = parse_number<double>(key, value);
  else if (key == "lambda") lambda = parse_number<double>(key, value);
  else if (key == "p_drop") p_drop = parse_number<double>(key, value);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
  else if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
  else if (key == "window") window = parse_number<std::size_t>(key, value);
  else if (key == "val_fraction") val_fraction = parse_number<double>(key, value);
  else if (key == "val_k") val_k = parse_number<std::size_t>(key, value);
  else if (key == "n_neg") n_neg = parse_number<std::size_t>(key, value);
  else if (key == "w_pos") w_pos = parse_number<double>(key, value);
  else if (key == "w_neg") w_neg = parse_number<double>(key, value);
  else if (key == "task") task = parse_task(value);
  else if (key == "psi") psi = parse_activation(value);
  else if (key == "variant") variant = parse_variant(value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "precision") {
    if (value == "f32") precision = Precision::kF32;
    else if (value == "f64") precision = Precision::kF64;
    else throw ConfigError("invalid precision '" + value + "' (expected f32 or f64)");
  } else if (key == "clip_predictions") clip_predictions = parse_bool(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "d_user = " << d_user << "\nd_gru = " << d_gru << "\nd_dict = " << d_dict
     << "\nd_embed = " << d_embed << "\nlr = " << lr << "\nlr_decay = " << lr_decay
     << "\ndecay_every_epochs = " << decay_every_epochs << "\nbeta1 = " << beta1
     << "\nbeta2 = " << beta2 << "\nepsilon = " << epsilon << "\nlambda = " << lambda
     << "\np_drop = " << p_drop << "\nbatch_size = " << batch_size << "\nepochs = " << epochs
     << "\nwindow = " << window << "\nval_fraction = " << val_fraction << "\nval_k = " << val_k
     << "\nn_neg = " << n_neg << "\nw_pos = " << w_pos << "\nw_neg = " << w_neg
     << "\ntask = " << task_name(task) << "\npsi = " << activation_name(psi)
     << "\nvariant = " << variant_name(variant) << "\nseed = " << seed
     << "\nprecision = " << (precision == Precision::kF32 ? "f32" : "f64")
     << "\nclip_predictions = " << (clip_predictions ? "true" : "false") << '\n';
  return os.str();
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + " is not `key = value`");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace s2pnm
