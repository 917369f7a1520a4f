#include "skelrig/config.hpp"

#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "skelrig/io.hpp"

namespace skelrig {

namespace {

using Setter = std::function<void(PipelineConfig&, const std::string&)>;
using Getter = std::function<std::string(const PipelineConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::ConfigError, fmt::format("{}: expected a number, got '{}'", key, v));
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::ConfigError, fmt::format("{}: expected an integer, got '{}'", key, v));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorCode::ConfigError, fmt::format("{}: expected true/false, got '{}'", key, v));
}

#define DOUBLE_KEY(name, field) \
  {name, {[](PipelineConfig& c, const std::string& v) { c.field = to_double(name, v); }, \
          [](const PipelineConfig& c) { return fmt::format("{}", c.field); }}}
#define INT_KEY(name, field) \
  {name, {[](PipelineConfig& c, const std::string& v) { c.field = static_cast<decltype(c.field)>(to_int(name, v)); }, \
          [](const PipelineConfig& c) { return fmt::format("{}", c.field); }}}
#define BOOL_KEY(name, field) \
  {name, {[](PipelineConfig& c, const std::string& v) { c.field = to_bool(name, v); }, \
          [](const PipelineConfig& c) { return std::string(c.field ? "true" : "false"); }}}

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = {
      DOUBLE_KEY("envelope.resolution", envelope.resolution),
      INT_KEY("envelope.shape_dims", envelope.shape_dims),
      INT_KEY("envelope.bony_markers", envelope.bony_markers),
      INT_KEY("envelope.soft_markers", envelope.soft_markers),
      DOUBLE_KEY("envelope.bony_weight", envelope.bony_weight),
      DOUBLE_KEY("envelope.soft_weight", envelope.soft_weight),
      INT_KEY("dataset.subjects", dataset.subjects),
      INT_KEY("dataset.frames", dataset.frames),
      INT_KEY("dataset.seed", dataset.seed),
      DOUBLE_KEY("dataset.noise", dataset.marker_noise),
      DOUBLE_KEY("dataset.beta_sigma", dataset.beta_sigma),
      DOUBLE_KEY("dataset.frame_rate", dataset.frame_rate),
      DOUBLE_KEY("dataset.amplitude", dataset.amplitude),
      DOUBLE_KEY("fitting.prior_weight", fit.prior_weight),
      DOUBLE_KEY("fitting.prior_sigma", prior_sigma),
      DOUBLE_KEY("fitting.density", density),
      DOUBLE_KEY("fitting.residual_unit", fit.residual_unit),
      DOUBLE_KEY("fitting.relative_tolerance", fit.relative_tolerance),
      INT_KEY("fitting.max_rounds", fit.max_rounds),
      INT_KEY("fitting.scale_iterations", fit.scale_iterations),
      BOOL_KEY("fitting.coupled_step", fit.coupled_step),
      DOUBLE_KEY("fitting.scale_lo", fit.scale_lo),
      DOUBLE_KEY("fitting.scale_hi", fit.scale_hi),
      DOUBLE_KEY("fitting.offset_cap", fit.offset_cap),
      DOUBLE_KEY("fitting.offset_sigma", fit.offset_sigma),
      DOUBLE_KEY("ik.initial_damping", fit.ik.initial_damping),
      DOUBLE_KEY("ik.gradient_tolerance", fit.ik.gradient_tolerance),
      DOUBLE_KEY("ik.step_tolerance", fit.ik.step_tolerance),
      INT_KEY("ik.max_iterations", fit.ik.max_iterations),
      DOUBLE_KEY("ik.max_step", fit.ik.max_step),
      DOUBLE_KEY("regressor.candidate_fraction", regressor.candidate_fraction),
      DOUBLE_KEY("regressor.radius_fraction", regressor.radius_fraction),
      INT_KEY("regressor.holdout_every", holdout_every),
      DOUBLE_KEY("meshfit.initial_damping", mesh_fit.initial_damping),
      DOUBLE_KEY("meshfit.gradient_tolerance", mesh_fit.gradient_tolerance),
      DOUBLE_KEY("meshfit.step_tolerance", mesh_fit.step_tolerance),
      INT_KEY("meshfit.max_iterations", mesh_fit.max_iterations),
      DOUBLE_KEY("meshfit.max_step", mesh_fit.max_step),
      INT_KEY("meshfit.frames", mesh_frames),
      {"model.limit_policy",
       {[](PipelineConfig& c, const std::string& v) {
          if (v == "clamp") {
            c.limit_policy = AngleLimitPolicy::Clamp;
          } else if (v == "error") {
            c.limit_policy = AngleLimitPolicy::Error;
          } else {
            fail(ErrorCode::ConfigError, "model.limit_policy must be clamp or error");
          }
        },
        [](const PipelineConfig& c) { return std::string(c.limit_policy == AngleLimitPolicy::Clamp ? "clamp" : "error"); }}},
  };
  return table;
}

#undef DOUBLE_KEY
#undef INT_KEY
#undef BOOL_KEY

}  // namespace

void apply_config_text(PipelineConfig& config, const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::ConfigError, e.what());
  }
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) fail(ErrorCode::ConfigError, "key outside a section: " + section);
    for (const auto& [name, value] : body) {
      const std::string key = section + "." + name;
      const auto it = keys().find(key);
      if (it == keys().end()) fail(ErrorCode::ConfigError, "unknown config key " + key);
      it->second.set(config, value.get_value<std::string>());
    }
  }
}

PipelineConfig load_config(const std::string& path) {
  PipelineConfig c;
  try {
    apply_config_text(c, read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) fail(ErrorCode::ConfigError, e.what());
    throw;
  }
  return c;
}

std::string format_config(const PipelineConfig& config) {
  std::string out, section;
  for (const auto& [key, k] : keys()) {
    const std::string s = key.substr(0, key.find('.'));
    if (s != section) {
      out += (out.empty() ? "" : "\n") + fmt::format("[{}]\n", s);
      section = s;
    }
    out += fmt::format("{} = {}\n", key.substr(key.find('.') + 1), k.get(config));
  }
  return out;
}

}  // namespace skelrig
