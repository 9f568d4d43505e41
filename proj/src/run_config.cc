#include "moltailor/run_config.h"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

namespace moltailor {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string num(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

std::vector<ConfigKey> build_schema() {
  const ModelConfig m;
  const TrainConfig t;
  const ProbeConfig p;
  const AblationConfig a;
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s;
  };
  return {
      {"seed", "0", "master seed: corpus build, initialisation, shuffling"},
      {"architecture", to_string(m.architecture), "moltailor | molecule_only | single_tower"},
      {"d_t", std::to_string(m.d_t), "text width"},
      {"d_m", std::to_string(m.d_m), "molecule width"},
      {"h_t", std::to_string(m.h_t), "text heads"},
      {"h_m", std::to_string(m.h_m), "molecule heads"},
      {"L_text", std::to_string(m.L_text), "text layers in total"},
      {"L_uni", std::to_string(m.L_uni), "unimodal text layers"},
      {"L_mol", std::to_string(m.L_mol), "molecule layers"},
      {"ffn_mult", std::to_string(m.ffn_mult), "feed-forward width multiplier"},
      {"max_text_len", std::to_string(m.max_text_len), "text tokens incl. [CLS]/[SEP]"},
      {"max_smiles_len", std::to_string(m.max_smiles_len), "SMILES tokens incl. [CLS]"},
      {"freeze_m_encoder", "false", "keep the molecule tower fixed during pretraining"},
      {"single_sublayer", "false", "block wiring LN2(x + FFN(MHA(x)))"},
      {"output_projection", "true", "W_O after attention"},
      {"pooling", "cls", "cls | mean"},
      {"activation", "gelu", "gelu | relu"},
      {"dropout", "0.1", "dropout rate while pretraining"},
      {"lr_peak", num(t.lr_peak), "peak learning rate"},
      {"warmup_ratio", num(t.warmup_ratio), "fraction of steps spent warming up"},
      {"epochs", std::to_string(t.epochs), "maximum epochs"},
      {"batch_size", std::to_string(t.batch_size), "records per step"},
      {"patience", std::to_string(t.patience), "early-stopping patience (epochs)"},
      {"eval_interval", std::to_string(t.eval_interval), "epochs between validations"},
      {"weight_decay", num(t.weight_decay), "decoupled weight decay"},
      {"beta1", num(t.beta1), "Adam beta1"},
      {"beta2", num(t.beta2), "Adam beta2"},
      {"adam_eps", num(t.eps), "Adam epsilon"},
      {"clip_norm", num(t.clip_norm), "global gradient-norm clip, <= 0 disables"},
      {"vocab_min_frequency", std::to_string(t.vocab_min_frequency), "minimum token count for the vocabularies"},
      {"bucket_batches", std::to_string(t.bucket_batches), "batches per length-sorted window"},
      {"probe_lr_trials", std::to_string(p.lr_trials), "learning rates tried per probe"},
      {"probe_lr_min", num(p.lr_min), "lower end of the probe LR range"},
      {"probe_lr_max", num(p.lr_max), "upper end of the probe LR range"},
      {"probe_seeds", std::to_string(p.seeds), "probe repetitions"},
      {"probe_max_epochs", std::to_string(p.max_epochs), "probe epochs"},
      {"probe_patience", std::to_string(p.patience), "probe early-stopping patience"},
      {"probe_batch_size", std::to_string(p.batch_size), "probe batch size"},
      {"probe_search_seed", std::to_string(p.search_seed), "seed of the probe LR grid"},
      {"probe_molecules", std::to_string(a.probe_molecules), "held-out molecules for property probes"},
      {"probe_set_seed", std::to_string(a.probe_seed), "seed for generating the held-out molecules"},
      {"prompt_seed", std::to_string(a.prompt_seed), "seed for rendering the probe prompt"},
      {"prompt_names", join(a.prompt_names), "descriptors named in the probe prompt"},
      {"arms", join(a.arms), "ablation arms to run"},
  };
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string x; std::getline(ss, x, ',');)
    if (!trim(x).empty()) out.push_back(trim(x));
  return out;
}

bool known(const std::string& key) {
  for (const auto& k : config_schema())
    if (k.name == key) return true;
  return false;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = build_schema();
  return schema;
}

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!known(key)) throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    out[key] = value;
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end()) throw ConfigError("unknown config key " + key);
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  try {
    std::size_t used = 0;
    const int v = std::stoi(get(key), &used);
    if (used == get(key).size()) return v;
  } catch (const std::logic_error&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + get(key) + "'");
}

double RunConfig::get_double(const std::string& key) const {
  try {
    std::size_t used = 0;
    const double v = std::stod(get(key), &used);
    if (used == get(key).size()) return v;
  } catch (const std::logic_error&) {
  }
  throw ConfigError(key + ": expected a number, got '" + get(key) + "'");
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::uint64_t RunConfig::seed() const {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(get("seed"), &used);
    if (used == get("seed").size() && get("seed")[0] != '-') return v;
  } catch (const std::logic_error&) {
  }
  throw ConfigError("seed: expected a non-negative integer, got '" + get("seed") + "'");
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  try {
    m.architecture = architecture_from_string(get("architecture"));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  m.d_t = get_int("d_t");
  m.d_m = get_int("d_m");
  m.h_t = get_int("h_t");
  m.h_m = get_int("h_m");
  m.L_text = get_int("L_text");
  m.L_uni = get_int("L_uni");
  m.L_mol = get_int("L_mol");
  m.ffn_mult = get_int("ffn_mult");
  m.max_text_len = get_int("max_text_len");
  m.max_smiles_len = get_int("max_smiles_len");
  m.num_outputs = static_cast<int>(registry().size());
  m.freeze_m_encoder = get_bool("freeze_m_encoder");
  m.single_sublayer = get_bool("single_sublayer");
  m.output_projection = get_bool("output_projection");
  const std::string& pool = get("pooling");
  if (pool != "cls" && pool != "mean") throw ConfigError("pooling: expected cls or mean");
  m.pooling = pool == "cls" ? Pooling::kCls : Pooling::kMean;
  const std::string& act = get("activation");
  if (act != "gelu" && act != "relu") throw ConfigError("activation: expected gelu or relu");
  m.activation = act == "gelu" ? Activation::kGelu : Activation::kRelu;
  m.dropout = get_double("dropout");
  try {
    m.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return m;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.lr_peak = get_double("lr_peak");
  t.warmup_ratio = get_double("warmup_ratio");
  t.epochs = get_int("epochs");
  t.batch_size = get_int("batch_size");
  t.patience = get_int("patience");
  t.eval_interval = get_int("eval_interval");
  t.weight_decay = get_double("weight_decay");
  t.beta1 = get_double("beta1");
  t.beta2 = get_double("beta2");
  t.eps = get_double("adam_eps");
  t.clip_norm = get_double("clip_norm");
  t.vocab_min_frequency = get_int("vocab_min_frequency");
  t.bucket_batches = get_int("bucket_batches");
  t.seed = seed();
  try {
    t.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return t;
}

ProbeConfig RunConfig::probe() const {
  ProbeConfig p;
  p.lr_trials = get_int("probe_lr_trials");
  p.lr_min = get_double("probe_lr_min");
  p.lr_max = get_double("probe_lr_max");
  p.seeds = get_int("probe_seeds");
  p.max_epochs = get_int("probe_max_epochs");
  p.patience = get_int("probe_patience");
  p.batch_size = get_int("probe_batch_size");
  p.search_seed = static_cast<std::uint64_t>(get_int("probe_search_seed"));
  p.seed = seed();
  try {
    p.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return p;
}

AblationConfig RunConfig::ablation() const {
  AblationConfig a;
  a.model = model();
  a.train = train();
  a.probe = probe();
  a.probe_molecules = get_int("probe_molecules");
  a.probe_seed = static_cast<std::uint64_t>(get_int("probe_set_seed"));
  a.prompt_seed = static_cast<std::uint64_t>(get_int("prompt_seed"));
  a.prompt_names = split_list(get("prompt_names"));
  for (const auto& n : a.prompt_names) {
    try {
      descriptor_index(n);
    } catch (const Error& e) {
      throw ConfigError(std::string("prompt_names: ") + e.what());
    }
  }
  a.arms = split_list(get("arms"));
  return a;
}

std::string RunConfig::resolved_text() const {
  std::string s;
  for (const auto& [k, v] : values) s += k + " = " + v + "\n";
  return s;
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : resolved_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void RunConfig::write(const std::filesystem::path& dir) const {
  std::ofstream out(dir / "resolved_config.txt", std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / "resolved_config.txt").string());
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  out << "# config_hash = " << buf << "\n" << resolved_text();
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::map<std::string, std::string>& flags,
                         const char* env_seed) {
  RunConfig rc;
  for (const auto& k : config_schema()) {
    rc.values[k.name] = k.default_value;
    rc.origin[k.name] = "default";
  }
  if (file) {
    for (const auto& [k, v] : read_config_file(*file)) {
      rc.values[k] = v;
      rc.origin[k] = "file";
    }
  }
  if (env_seed && *env_seed && !flags.count("seed")) {
    rc.values["seed"] = env_seed;
    rc.origin["seed"] = "env";
  }
  for (const auto& [k, v] : flags) {
    if (!known(k)) throw ConfigError("unknown config key " + k);
    rc.values[k] = v;
    rc.origin[k] = "flag";
  }
  rc.seed();  // validates
  return rc;
}

OutputLock::OutputLock(const std::filesystem::path& dir) : path_(dir / ".moltailor.lock") {
  std::filesystem::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) throw Error("output directory is locked by another run: " + path_.string());
  const std::string pid = std::to_string(::getpid()) + "\n";
  (void)!::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace moltailor
