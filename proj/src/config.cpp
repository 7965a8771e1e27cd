#include "transmuse/config.hpp"

#include "transmuse/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>

namespace transmuse {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Drops a trailing `# comment` that sits outside quotes.
std::string strip_comment(const std::string& s) {
  char quote = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (quote) {
      if (s[i] == quote) quote = 0;
    } else if (s[i] == '"' || s[i] == '\'') {
      quote = s[i];
    } else if (s[i] == '#' && (i == 0 || s[i - 1] == ' ' || s[i - 1] == '\t')) {
      return s.substr(0, i);
    }
  }
  return s;
}

std::string unquote(std::string s) {
  s = trim(strip_comment(s));
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

/// Items of `a,b` or `["a", "b"]`.
std::vector<std::string> parse_list(std::string s) {
  s = trim(s);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw InvalidArgument("unterminated list");
    s = s.substr(1, s.size() - 2);
  }
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const std::string item = unquote(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw ValidationError(key + ": '" + text + "' is not a valid number");
  return value;
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;

}  // namespace

Settings parse_settings(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError(e.line(), e.message());
  }
  Settings out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ValidationError("key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) out[section + "." + key] = unquote(value.data());
  }
  return out;
}

void apply_override(Settings& settings, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const std::string key = trim(assignment.substr(0, eq));
  if (eq == std::string::npos || key.find('.') == std::string::npos)
    throw InvalidArgument("override '" + assignment + "' must look like section.key=value");
  settings[key] = unquote(assignment.substr(eq + 1));
}

ExperimentConfig build_config(const Settings& settings, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  ProfileTemplate tpl;
  bool gen_seed_set = false;

  auto integer = [](int& field) {
    return Setter([&field](const std::string& k, const std::string& v) { field = parse_number<int>(k, v); });
  };
  auto real = [](double& field) {
    return Setter([&field](const std::string& k, const std::string& v) { field = parse_number<double>(k, v); });
  };
  auto path = [&base_dir](std::filesystem::path& field) {
    return Setter([&field, &base_dir](const std::string&, const std::string& v) {
      field = v.empty() ? std::filesystem::path{} : std::filesystem::path(v);
      if (!field.empty() && field.is_relative()) field = base_dir / field;
    });
  };

  const std::map<std::string, Setter> setters = {
      {"data.csv", path(c.csv_path)},
      {"data.train_fraction", real(c.split.train)},
      {"data.val_fraction", real(c.split.val)},
      {"data.test_fraction", real(c.split.test)},

      {"gen.num_nodes", integer(c.gen.num_nodes)},
      {"gen.num_cohorts", integer(c.gen.num_cohorts)},
      {"gen.num_services", integer(c.gen.num_services)},
      {"gen.num_days", integer(c.gen.num_days)},
      {"gen.steps_per_day", integer(c.gen.steps_per_day)},
      {"gen.seed",
       [&](const std::string& k, const std::string& v) {
         c.gen.seed = parse_number<std::uint64_t>(k, v);
         gen_seed_set = true;
       }},
      {"gen.cohort_scale_jitter", real(c.gen.cohort_scale_jitter)},
      {"gen.cohort_volume_ratio", real(c.gen.cohort_volume_ratio)},
      {"gen.num_families", integer(tpl.num_families)},
      {"gen.base_volume", real(tpl.base_volume)},
      {"gen.family_volume_ratio", real(tpl.family_volume_ratio)},
      {"gen.diurnal_amplitude", real(tpl.diurnal_amplitude)},
      {"gen.weekly_dip", real(tpl.weekly_dip)},
      {"gen.noise_std", real(tpl.noise_std)},
      {"gen.family_phase_step", real(tpl.family_phase_step)},
      {"gen.service_phase_step", real(tpl.service_phase_step)},

      {"window.input_steps", integer(c.input_steps)},
      {"window.horizon", integer(c.horizon)},
      {"window.train_stride", integer(c.train_stride)},
      {"window.eval_stride", integer(c.eval_stride)},

      {"clustering.node_k_min", integer(c.node_k_min)},
      {"clustering.node_k_max", integer(c.node_k_max)},
      {"clustering.service_k_min", integer(c.service_k_min)},
      {"clustering.service_k_max", integer(c.service_k_max)},
      {"clustering.wk_iterations", integer(c.wk_iterations)},
      {"clustering.kmeans_restarts", integer(c.kmeans_restarts)},
      {"clustering.service_distance",
       [&](const std::string&, const std::string& v) { c.service_distance = DistanceKind::parse(v); }},

      {"model.d_model", integer(c.model.d_model)},
      {"model.num_heads", integer(c.model.num_heads)},
      {"model.enc_layers", integer(c.model.enc_layers)},
      {"model.dec_layers", integer(c.model.dec_layers)},
      {"model.d_ffn", integer(c.model.d_ffn)},
      {"model.dropout", real(c.model.dropout)},
      {"model.lr", real(c.model.lr)},
      {"model.batch_size", integer(c.model.batch_size)},
      {"model.max_epochs", integer(c.model.max_epochs)},
      {"model.patience", integer(c.model.patience)},
      {"model.clip_norm", real(c.model.clip_norm)},

      {"pipeline.seed", [&](const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"pipeline.out_dir", path(c.out_dir)},
      {"pipeline.schemes",
       [&](const std::string&, const std::string& v) {
         c.schemes.clear();
         for (const auto& name : parse_list(v)) c.schemes.push_back(parse_scheme(name));
       }},
  };

  for (const auto& [key, value] : settings) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ValidationError("unknown config key '" + key + "'");
    try {
      it->second(key, value);
    } catch (const InvalidArgument& e) {
      throw ValidationError(key + ": " + e.what());
    }
  }

  if (!gen_seed_set) c.gen.seed = c.seed;
  tpl.num_services = c.gen.num_services;
  try {
    c.gen.service_profiles = make_profiles(tpl);
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("invalid configuration: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  Settings settings = parse_settings(in);
  for (const auto& o : overrides) apply_override(settings, o);
  if (const char* env = std::getenv("TRANSMUSE_SEED"); env && *env) settings["pipeline.seed"] = env;
  return build_config(settings, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace transmuse
