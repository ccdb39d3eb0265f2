// Copyright 2026 The plastisim Authors
// SPDX-License-Identifier: Apache-2.0

#include "plasti/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace plasti {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config key '" + key + "': '" + value + "' is not " + expected);
}

template <class T>
T parse_uint(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty()) bad(key, value, "an unsigned integer");
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || value.empty() || !std::isfinite(out)) {
    bad(key, value, "a finite number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  bad(key, value, "a boolean");
}

template <class E>
E parse_enum(const std::string& key, const std::string& value, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [name, e] : names) {
    if (value == name) return e;
  }
  std::string expected = "one of";
  for (const auto& [name, e] : names) expected += std::string(" ") + name;
  bad(key, value, expected.c_str());
}

const char* name_of(plasticity::Algorithm a) { return a == plasticity::Algorithm::classic ? "classic" : "aware"; }
const char* name_of(spikes::Mode m) { return m == spikes::Mode::exact ? "exact" : "freq"; }
const char* name_of(spikes::Sampling s) { return s == spikes::Sampling::per_rank ? "per_rank" : "per_target"; }
const char* name_of(neuron::ModelKind m) { return m == neuron::ModelKind::poisson ? "poisson" : "izhikevich"; }
const char* name_of(neuron::GrowthRule g) { return g == neuron::GrowthRule::linear ? "linear" : "gaussian"; }
const char* name_of(Backend b) { return b == Backend::local ? "local" : "tcp"; }

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void SimConfig::validate() const {
  if (ranks == 0 || (ranks & (ranks - 1)) != 0) throw ConfigError("ranks must be a power of two");
  if (neurons_per_rank == 0) throw ConfigError("neurons_per_rank must be >= 1");
  if (epoch == 0) throw ConfigError("epoch must be >= 1");
  if (metrics_interval == 0) throw ConfigError("metrics_interval must be >= 1");
  if (calcium_interval == 0) throw ConfigError("calcium_interval must be >= 1");
  if (!(synaptic_strength >= 0.0)) throw ConfigError("synaptic_strength must be >= 0");
  if (!(inhibitory_fraction >= 0.0 && inhibitory_fraction <= 1.0)) {
    throw ConfigError("inhibitory_fraction must lie in [0, 1]");
  }
  if (!(initial_elements_min >= 0.0 && initial_elements_min <= initial_elements_max)) {
    throw ConfigError("initial element range must satisfy 0 <= min <= max");
  }
  if (timeout.count() <= 0) throw ConfigError("timeout_ms must be > 0");
  search.validate();
  neuron.validate();
  domain.validate();
}

void apply_setting(SimConfig& c, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  static const std::map<std::string, std::function<void(SimConfig&, const std::string&, const std::string&)>> table = {
      {"ranks", [](SimConfig& c, auto& k, auto& v) { c.ranks = parse_uint<std::uint32_t>(k, v); }},
      {"neurons_per_rank", [](SimConfig& c, auto& k, auto& v) { c.neurons_per_rank = parse_uint<std::uint64_t>(k, v); }},
      {"total_steps", [](SimConfig& c, auto& k, auto& v) { c.total_steps = parse_uint<std::uint64_t>(k, v); }},
      {"plasticity_interval",
       [](SimConfig& c, auto& k, auto& v) { c.plasticity_interval = parse_uint<std::uint32_t>(k, v); }},
      {"seed", [](SimConfig& c, auto& k, auto& v) { c.seed = parse_uint<std::uint64_t>(k, v); }},
      {"theta", [](SimConfig& c, auto& k, auto& v) { c.search.theta = parse_double(k, v); }},
      {"sigma", [](SimConfig& c, auto& k, auto& v) { c.search.sigma = parse_double(k, v); }},
      {"algorithm",
       [](SimConfig& c, auto& k, auto& v) {
         c.search.algorithm = parse_enum<plasticity::Algorithm>(
             k, v, {{"classic", plasticity::Algorithm::classic}, {"aware", plasticity::Algorithm::location_aware}});
       }},
      {"allow_autapses", [](SimConfig& c, auto& k, auto& v) { c.search.allow_autapses = parse_bool(k, v); }},
      {"fetch_cache", [](SimConfig& c, auto& k, auto& v) { c.fetch_cache = parse_bool(k, v); }},
      {"spikes",
       [](SimConfig& c, auto& k, auto& v) {
         c.spike_mode = parse_enum<spikes::Mode>(k, v, {{"exact", spikes::Mode::exact}, {"freq", spikes::Mode::frequency}});
       }},
      {"sampling",
       [](SimConfig& c, auto& k, auto& v) {
         c.sampling = parse_enum<spikes::Sampling>(
             k, v, {{"per_rank", spikes::Sampling::per_rank}, {"per_target", spikes::Sampling::per_target}});
       }},
      {"epoch", [](SimConfig& c, auto& k, auto& v) { c.epoch = parse_uint<std::uint32_t>(k, v); }},
      {"model",
       [](SimConfig& c, auto& k, auto& v) {
         c.neuron.model = parse_enum<neuron::ModelKind>(
             k, v, {{"poisson", neuron::ModelKind::poisson}, {"izhikevich", neuron::ModelKind::izhikevich}});
       }},
      {"izh_a", [](SimConfig& c, auto& k, auto& v) { c.neuron.a = parse_double(k, v); }},
      {"izh_b", [](SimConfig& c, auto& k, auto& v) { c.neuron.b = parse_double(k, v); }},
      {"izh_c", [](SimConfig& c, auto& k, auto& v) { c.neuron.c = parse_double(k, v); }},
      {"izh_d", [](SimConfig& c, auto& k, auto& v) { c.neuron.d = parse_double(k, v); }},
      {"input_scale", [](SimConfig& c, auto& k, auto& v) { c.neuron.input_scale = parse_double(k, v); }},
      {"calcium_alpha", [](SimConfig& c, auto& k, auto& v) { c.neuron.calcium_alpha = parse_double(k, v); }},
      {"target_calcium", [](SimConfig& c, auto& k, auto& v) { c.neuron.target_calcium = parse_double(k, v); }},
      {"growth_rate", [](SimConfig& c, auto& k, auto& v) { c.neuron.growth_rate = parse_double(k, v); }},
      {"growth_rule",
       [](SimConfig& c, auto& k, auto& v) {
         c.neuron.growth_rule = parse_enum<neuron::GrowthRule>(
             k, v, {{"linear", neuron::GrowthRule::linear}, {"gaussian", neuron::GrowthRule::gaussian}});
       }},
      {"growth_min_calcium", [](SimConfig& c, auto& k, auto& v) { c.neuron.growth_min_calcium = parse_double(k, v); }},
      {"background_mean", [](SimConfig& c, auto& k, auto& v) { c.neuron.background_mean = parse_double(k, v); }},
      {"background_std", [](SimConfig& c, auto& k, auto& v) { c.neuron.background_std = parse_double(k, v); }},
      {"synaptic_strength", [](SimConfig& c, auto& k, auto& v) { c.synaptic_strength = parse_double(k, v); }},
      {"inhibitory_fraction", [](SimConfig& c, auto& k, auto& v) { c.inhibitory_fraction = parse_double(k, v); }},
      {"initial_elements_min", [](SimConfig& c, auto& k, auto& v) { c.initial_elements_min = parse_double(k, v); }},
      {"initial_elements_max", [](SimConfig& c, auto& k, auto& v) { c.initial_elements_max = parse_double(k, v); }},
      {"domain_x", [](SimConfig& c, auto& k, auto& v) { c.domain.extent.x = parse_double(k, v); }},
      {"domain_y", [](SimConfig& c, auto& k, auto& v) { c.domain.extent.y = parse_double(k, v); }},
      {"domain_z", [](SimConfig& c, auto& k, auto& v) { c.domain.extent.z = parse_double(k, v); }},
      {"backend",
       [](SimConfig& c, auto& k, auto& v) {
         c.backend = parse_enum<Backend>(k, v, {{"local", Backend::local}, {"tcp", Backend::tcp}});
       }},
      {"out_dir",
       [](SimConfig& c, auto& k, auto& v) {
         if (v.empty()) bad(k, v, "a directory");
         c.out_dir = v;
       }},
      {"metrics_interval", [](SimConfig& c, auto& k, auto& v) { c.metrics_interval = parse_uint<std::uint64_t>(k, v); }},
      {"calcium_interval", [](SimConfig& c, auto& k, auto& v) { c.calcium_interval = parse_uint<std::uint64_t>(k, v); }},
      {"calcium_neurons", [](SimConfig& c, auto& k, auto& v) { c.calcium_neurons = parse_uint<std::uint64_t>(k, v); }},
      {"write_raster", [](SimConfig& c, auto& k, auto& v) { c.write_raster = parse_bool(k, v); }},
      {"timeout_ms",
       [](SimConfig& c, auto& k, auto& v) { c.timeout = std::chrono::milliseconds(parse_uint<std::uint64_t>(k, v)); }},
  };
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(c, key, v);
}

SimConfig parse_config(const std::string& text, SimConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    const auto key = trim(line.substr(0, eq));
    // Manifests append derived "run." facts; they are not settings.
    if (key.rfind("run.", 0) == 0) continue;
    apply_setting(base, key, line.substr(eq + 1));
  }
  return base;
}

SimConfig load_config(const std::string& path, SimConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::map<std::string, std::string> config_entries(const SimConfig& c) {
  auto d = [](double v) { return format_double(v); };
  auto u = [](std::uint64_t v) { return std::to_string(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"ranks", u(c.ranks)},
      {"neurons_per_rank", u(c.neurons_per_rank)},
      {"total_steps", u(c.total_steps)},
      {"plasticity_interval", u(c.plasticity_interval)},
      {"seed", u(c.seed)},
      {"theta", d(c.search.theta)},
      {"sigma", d(c.search.sigma)},
      {"algorithm", name_of(c.search.algorithm)},
      {"allow_autapses", b(c.search.allow_autapses)},
      {"fetch_cache", b(c.fetch_cache)},
      {"spikes", name_of(c.spike_mode)},
      {"sampling", name_of(c.sampling)},
      {"epoch", u(c.epoch)},
      {"model", name_of(c.neuron.model)},
      {"izh_a", d(c.neuron.a)},
      {"izh_b", d(c.neuron.b)},
      {"izh_c", d(c.neuron.c)},
      {"izh_d", d(c.neuron.d)},
      {"input_scale", d(c.neuron.input_scale)},
      {"calcium_alpha", d(c.neuron.calcium_alpha)},
      {"target_calcium", d(c.neuron.target_calcium)},
      {"growth_rate", d(c.neuron.growth_rate)},
      {"growth_rule", name_of(c.neuron.growth_rule)},
      {"growth_min_calcium", d(c.neuron.growth_min_calcium)},
      {"background_mean", d(c.neuron.background_mean)},
      {"background_std", d(c.neuron.background_std)},
      {"synaptic_strength", d(c.synaptic_strength)},
      {"inhibitory_fraction", d(c.inhibitory_fraction)},
      {"initial_elements_min", d(c.initial_elements_min)},
      {"initial_elements_max", d(c.initial_elements_max)},
      {"domain_x", d(c.domain.extent.x)},
      {"domain_y", d(c.domain.extent.y)},
      {"domain_z", d(c.domain.extent.z)},
      {"backend", name_of(c.backend)},
      {"out_dir", c.out_dir},
      {"metrics_interval", u(c.metrics_interval)},
      {"calcium_interval", u(c.calcium_interval)},
      {"calcium_neurons", u(c.calcium_neurons)},
      {"write_raster", b(c.write_raster)},
      {"timeout_ms", u(static_cast<std::uint64_t>(c.timeout.count()))},
  };
}

std::string render_config(const SimConfig& config) {
  std::string out;
  for (const auto& [k, v] : config_entries(config)) out += k + "=" + v + "\n";
  return out;
}

}  // namespace plasti
