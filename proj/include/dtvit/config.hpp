#pragma once

#include <array>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtvit/common.hpp"

namespace dtvit {

// configuration problems exit with a distinct code (2) vs data errors (1)
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigKey {
  std::string key, def, doc;
};

// dotted-key/value store with a closed registry: every key has a documented
// default, unknown keys are rejected, and the effective state can be echoed
class Config {
 public:
  void register_key(const std::string& key, const std::string& def, const std::string& doc) {
    if (find(key)) throw ConfigError("config: key '" + key + "' registered twice");
    keys_.push_back({key, def, doc});
    values_.push_back(def);
  }

  bool has(const std::string& key) const { return find(key) != nullptr; }

  void set(const std::string& key, const std::string& value) {
    for (size_t i = 0; i < keys_.size(); ++i)
      if (keys_[i].key == key) {
        values_[i] = value;
        return;
      }
    throw ConfigError("config: unknown key '" + key + "'");
  }

  // lines of "key = value"; '#' starts a comment, blank lines skipped
  void load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      std::string s = line.substr(0, line.find('#'));
      size_t eq = s.find('=');
      std::string key = trim(eq == std::string::npos ? s : s.substr(0, eq));
      if (key.empty()) {
        if (eq != std::string::npos)
          throw ConfigError("config: missing key at " + path + ":" + std::to_string(lineno));
        continue;
      }
      if (eq == std::string::npos)
        throw ConfigError("config: expected 'key = value' at " + path + ":" +
                          std::to_string(lineno));
      set(key, trim(s.substr(eq + 1)));
    }
  }

  const std::string& get_string(const std::string& key) const {
    const std::string* v = find(key);
    if (!v) throw ConfigError("config: unknown key '" + key + "'");
    return *v;
  }

  int64_t get_int(const std::string& key) const {
    const std::string& s = get_string(key);
    try {
      size_t pos = 0;
      int64_t v = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "': '" + s + "' is not an integer");
    }
  }

  double get_double(const std::string& key) const {
    const std::string& s = get_string(key);
    try {
      size_t pos = 0;
      double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "': '" + s + "' is not a number");
    }
  }

  bool get_bool(const std::string& key) const {
    const std::string& s = get_string(key);
    if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "off" || s == "no") return false;
    throw ConfigError("config: key '" + key + "': '" + s + "' is not a boolean");
  }

  uint64_t get_u64(const std::string& key) const {
    const std::string& s = get_string(key);
    try {
      // stoull happily wraps "-1"; only unsigned digit strings are welcome
      if (s.empty() || s[0] == '-' || s[0] == '+') throw std::invalid_argument(s);
      size_t pos = 0;
      uint64_t v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "': '" + s +
                        "' is not a nonnegative integer");
    }
  }

  std::vector<double> get_doubles(const std::string& key, size_t expect) const {
    const std::string& s = get_string(key);
    std::vector<double> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
      try {
        out.push_back(std::stod(trim(item)));
      } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "': '" + item + "' is not a number");
      }
    }
    if (out.size() != expect)
      throw ConfigError("config: key '" + key + "': expected " + std::to_string(expect) +
                        " comma-separated numbers, got " + std::to_string(out.size()));
    return out;
  }

  // effective state, one documented "key = value" line per registered key
  std::string render() const {
    std::ostringstream os;
    for (size_t i = 0; i < keys_.size(); ++i) {
      os << "# " << keys_[i].doc << " (default: "
         << (keys_[i].def.empty() ? "<empty>" : keys_[i].def) << ")\n";
      os << keys_[i].key << " = " << values_[i] << "\n";
    }
    return os.str();
  }

  const std::vector<ConfigKey>& registry() const { return keys_; }

 private:
  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  const std::string* find(const std::string& key) const {
    for (size_t i = 0; i < keys_.size(); ++i)
      if (keys_[i].key == key) return &values_[i];
    return nullptr;
  }

  std::vector<ConfigKey> keys_;
  std::vector<std::string> values_;
};

// the full key set shared by all subcommands
inline Config default_config() {
  Config c;
  c.register_key("seed", "0", "base seed for all derived random streams");
  c.register_key("model.preset", "tiny", "model geometry: tiny | large");
  c.register_key("model.reference_head", "0",
                 "replace the dual heads with a single K-class readout (0 = dual heads)");
  c.register_key("data.index", "", "path to the dataset index file");
  c.register_key("data.split", "0.8,0.1,0.1", "train,val,test ratios (patient-grouped)");
  c.register_key("data.balance", "true", "replicate train records to a 1:1:1 location mix");
  c.register_key("data.augment", "true", "apply train-time rotation/sharpness augmentation");
  c.register_key("aug.crop_size", "0", "center-crop extent (0 = model input extent)");
  c.register_key("aug.max_rotation_degrees", "15", "train-time rotation range, +-");
  c.register_key("aug.sharpness_factor", "2", "sharpness blend factor when applied");
  c.register_key("aug.sharpness_probability", "0.5",
                 "per-sample probability of the sharpness transform");
  c.register_key("aug.channel_mean", "0.485,0.456,0.406", "normalization mean per channel");
  c.register_key("aug.channel_std", "0.229,0.224,0.225", "normalization std per channel");
  c.register_key("train.epochs", "10", "training epochs");
  c.register_key("train.batch_train", "0",
                 "train batch size (0 = 32 with augmentation, 8 without)");
  c.register_key("train.batch_val", "32", "validation batch size");
  c.register_key("train.batch_test", "4", "test batch size");
  c.register_key("train.lr", "2e-5", "AdamW learning rate");
  c.register_key("train.weight_decay", "0.01", "AdamW decoupled weight decay");
  c.register_key("train.beta1", "0.9", "AdamW beta1");
  c.register_key("train.beta2", "0.999", "AdamW beta2");
  c.register_key("train.eps", "1e-8", "AdamW epsilon");
  c.register_key("train.schedule", "constant", "learning-rate schedule: constant | cosine");
  c.register_key("train.pretrained", "", "checkpoint to load encoder weights from");
  c.register_key("morph.threshold", "-1",
                 "binarization threshold in raw units (-1 = 10% of the scan maximum)");
  c.register_key("morph.erosion_radius", "3", "disk radius for mask erosion, pixels");
  c.register_key("morph.edge_columns", "2", "columns zeroed at each side of the mask");
  c.register_key("morph.fill_connectivity", "4", "hole-fill background connectivity: 4 | 8");
  c.register_key("morph.window", "",
                 "intensity window 'center,width' in raw units (empty = masked min-max)");
  c.register_key("phantom.size", "256", "square phantom extent, pixels");
  c.register_key("phantom.head_ax_frac", "0.38", "head semi-axis x, fraction of width");
  c.register_key("phantom.head_by_frac", "0.45", "head semi-axis y, fraction of height");
  c.register_key("phantom.jitter", "0.03", "relative head-axis jitter, +-");
  c.register_key("phantom.brain_scale", "0.88", "brain ellipse relative to the head");
  c.register_key("phantom.skull_level", "2000", "skull ring intensity, raw units");
  c.register_key("phantom.brain_level", "1000", "brain tissue mean intensity, raw units");
  c.register_key("phantom.noise_amp", "60", "uniform +- noise on brain pixels");
  c.register_key("phantom.blob_delta", "1100", "hemorrhage intensity above brain level");
  c.register_key("phantom.blob_rmin_frac", "0.06", "min blob radius, fraction of min extent");
  c.register_key("phantom.blob_rmax_frac", "0.10", "max blob radius, fraction of min extent");
  c.register_key("phantom.deep_rr_max", "0.30", "Deep center within this brain-radius fraction");
  c.register_key("phantom.lobar_rr_min", "0.75", "Lobar band inner radius fraction");
  c.register_key("phantom.lobar_rr_max", "0.84", "Lobar band outer radius fraction");
  c.register_key("phantom.lobar_half_angle", "55", "Lobar arc half-angle about straight up");
  c.register_key("phantom.sub_rr_min", "0.52", "Subtentorial band inner radius fraction");
  c.register_key("phantom.sub_rr_max", "0.78", "Subtentorial band outer radius fraction");
  c.register_key("phantom.sub_half_angle", "40", "Subtentorial arc half-angle about straight down");
  c.register_key("phantom.sub_min_drop", "0.40",
                 "Subtentorial center at least this far below center, x head semi-axis");
  c.register_key("phantom.brace_scale", "1.12", "brace ellipse relative to the head");
  c.register_key("phantom.brace_level", "2600", "brace intensity, raw units");
  c.register_key("phantom.brace_thickness_frac", "0.012", "brace thickness, fraction of width");
  c.register_key("phantom.brace_half_angle", "30", "brace arc half-angle about lateral axes");
  c.register_key("phantom.retries", "200", "blob placement attempts before giving up");
  return c;
}

}  // namespace dtvit
