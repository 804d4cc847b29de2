#pragma once

// Flat dotted-key configuration: "section.key = value" lines, '#' comments,
// strict schema (unknown keys are errors), typed accessors with defaults,
// and a canonical sorted echo of every effective value.

#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "geoflow/data.hpp"
#include "geoflow/error.hpp"
#include "geoflow/formulation.hpp"
#include "geoflow/net.hpp"
#include "geoflow/ode.hpp"
#include "geoflow/optim.hpp"
#include "geoflow/sched.hpp"
#include "geoflow/vmf.hpp"

namespace geoflow {

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

}  // namespace detail

// Raw key/value store with consumption tracking so unknown keys can be
// reported after the schema has pulled everything it understands.
class ConfigMap {
 public:
  void set(const std::string& key, const std::string& value) {
    kv_[key] = value;
  }

  // Parses "key = value" (or "key=value") from config text or a --set flag.
  void parse_line(const std::string& raw, const std::string& where) {
    std::string line = raw;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) return;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(where + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(where + ": empty key");
    kv_[key] = value;
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return it->second;
  }

  double f64(const std::string& key, double fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return parse_field(it->second, "config key '" + key + "'");
  }

  int64_t i64(const std::string& key, int64_t fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    const std::string& v = it->second;
    char* end = nullptr;
    const long long r = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') {
      throw ParseError("config key '" + key + "': bad integer '" + v + "'");
    }
    return r;
  }

  uint64_t u64(const std::string& key, uint64_t fallback) {
    const int64_t r = i64(key, static_cast<int64_t>(fallback));
    if (r < 0) throw ParseError("config key '" + key + "': must be >= 0");
    return static_cast<uint64_t>(r);
  }

  bool boolean(const std::string& key, bool fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    const std::string& v = it->second;
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError("config key '" + key + "': expected true/false, got '" +
                     v + "'");
  }

  // Keys matching a dynamic prefix pattern (used for synth class components).
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_) {
      if (k.compare(0, prefix.size(), prefix) == 0) out.push_back(k);
    }
    return out;
  }

  void mark_consumed(const std::string& key) { consumed_.insert(key); }

  void reject_unconsumed() const {
    for (const auto& [k, v] : kv_) {
      if (!consumed_.count(k)) {
        throw ParseError("unknown config key '" + k + "'");
      }
    }
  }

 private:
  static double parse_field(const std::string& v, const std::string& where) {
    char* end = nullptr;
    const double r = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') {
      throw ParseError(where + ": bad number '" + v + "'");
    }
    return r;
  }

  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
};

inline ConfigMap parse_config_text(const std::string& text,
                                   const std::string& name) {
  ConfigMap m;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    m.parse_line(line, name + ":" + std::to_string(line_no));
  }
  return m;
}

inline std::string head_to_string(HeadKind h) {
  switch (h) {
    case HeadKind::kField:
      return "field";
    case HeadKind::kVmf:
      return "vmf";
    case HeadKind::kVmfMixture:
      return "vmf_mix";
  }
  throw InputError("head_to_string: bad head");
}

inline HeadKind head_from_string(const std::string& s) {
  if (s == "field") return HeadKind::kField;
  if (s == "vmf") return HeadKind::kVmf;
  if (s == "vmf_mix") return HeadKind::kVmfMixture;
  throw ParseError("unknown head '" + s + "' (expected field, vmf, vmf_mix)");
}

inline std::string schedule_to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kSkewedSigmoid:
      return "skewed_sigmoid";
    case ScheduleKind::kSigmoid:
      return "sigmoid";
    case ScheduleKind::kLinear:
      return "linear";
  }
  throw InputError("schedule_to_string: bad kind");
}

inline ScheduleKind schedule_from_string(const std::string& s) {
  if (s == "skewed_sigmoid") return ScheduleKind::kSkewedSigmoid;
  if (s == "sigmoid") return ScheduleKind::kSigmoid;
  if (s == "linear") return ScheduleKind::kLinear;
  throw ParseError("unknown schedule '" + s +
                   "' (expected skewed_sigmoid, sigmoid, linear)");
}

// Every tunable the binary understands, with its resolved value.
struct FullConfig {
  // run
  uint64_t seed = 42;
  std::string out_dir = "out";
  // model
  Formulation formulation = Formulation::kRfmS2;
  HeadKind head = HeadKind::kField;
  int hidden_dim = 64;
  int blocks = 4;
  int cond_dim = 0;  // 0 means infer from the training data
  int mixture_comps = 4;
  std::string checkpoint;  // empty means <out_dir>/model.gfck
  bool use_ema = true;
  // sched
  ScheduleKind sched_kind = ScheduleKind::kSkewedSigmoid;
  double sched_alpha = -3.0;
  double sched_beta = 7.0;
  // train
  std::string train_data;
  uint64_t train_steps = 2000;
  // Stop this invocation early without shortening the schedule horizon, so a
  // long run can be split into chunks and resumed. 0 runs to train.steps.
  uint64_t stop_after = 0;
  int batch_size = 256;
  double lr = 8e-4;
  double weight_decay = 0.05;
  int64_t warmup_steps = 500;
  double ema_decay = 0.999;
  double drop_prob = 0.1;
  uint64_t checkpoint_every = 0;  // 0 means only at the end
  uint64_t log_every = 50;
  bool resume = false;
  // sample
  int64_t sample_n = 0;  // 0 means one per conditioning row
  int sample_steps = 16;
  double sample_guidance = 2.0;
  int ensemble = 1;
  std::string cond_data;
  std::string sample_output;  // empty means <out_dir>/samples.csv
  // eval
  std::string eval_data;
  std::string eval_samples;  // empty means <out_dir>/samples.csv
  bool eval_nll = true;
  double nll_guidance = 0.0;
  bool eval_prdc = true;
  int knn_k = 3;
  int64_t localizability_n = 0;
  bool uniform_baseline = false;
  std::string report_path;  // empty means <out_dir>/report
  // density
  SolverConfig solver;
  double fd_h = 1e-4;
  // grid
  int grid_width = 180;
  int grid_height = 90;
  double grid_guidance = 0.0;
  std::string grid_cond_data;
  int64_t grid_cond_row = -1;
  // synth
  SynthSpec synth;
  double synth_jitter = 0.02;
  bool synth_binary = false;

  std::string checkpoint_path() const {
    return checkpoint.empty() ? out_dir + "/model.gfck" : checkpoint;
  }
  std::string train_state_path() const { return out_dir + "/train_state.gfst"; }
  std::string samples_path() const {
    return sample_output.empty() ? out_dir + "/samples.csv" : sample_output;
  }
  std::string eval_samples_path() const {
    return eval_samples.empty() ? out_dir + "/samples.csv" : eval_samples;
  }
  std::string report_base() const {
    return report_path.empty() ? out_dir + "/report" : report_path;
  }

  Scheduler scheduler() const {
    return Scheduler{sched_kind, sched_alpha, sched_beta};
  }

  OptimConfig optim() const {
    OptimConfig o;
    o.lr = lr;
    o.weight_decay = weight_decay;
    o.warmup_steps = warmup_steps;
    o.total_steps = static_cast<int64_t>(train_steps);
    o.ema_decay = ema_decay;
    return o;
  }
};

namespace detail {

// "lat lon conc weight" -> one mixture component.
inline void parse_synth_component(const std::string& value,
                                  const std::string& key, VmfMixture& mix) {
  std::istringstream in(value);
  double lat, lon, conc, weight;
  if (!(in >> lat >> lon >> conc >> weight)) {
    throw ParseError("config key '" + key +
                     "': expected \"lat lon conc weight\", got '" + value + "'");
  }
  std::string rest;
  if (in >> rest) {
    throw ParseError("config key '" + key + "': trailing tokens in '" + value +
                     "'");
  }
  VmfParams p;
  p.mu = latlon_to_unit(LatLon{lat, lon});
  p.conc = conc;
  mix.comps.push_back(p);
  mix.weights.push_back(weight);
}

inline void load_synth_section(ConfigMap& m, FullConfig& c) {
  c.synth.n_per_class =
      static_cast<int>(m.i64("synth.n_per_class", 1000));
  c.synth.embed_dim = static_cast<int>(m.i64("synth.embed_dim", 0));
  c.synth_jitter = m.f64("synth.jitter", 0.02);
  c.synth.jitter = c.synth_jitter;
  c.synth_binary = m.boolean("synth.binary", false);

  for (int cls = 0;; ++cls) {
    const std::string prefix =
        "synth.class" + std::to_string(cls) + ".comp";
    VmfMixture mix;
    for (int comp = 0;; ++comp) {
      const std::string key = prefix + std::to_string(comp);
      if (!m.has(key)) break;
      parse_synth_component(m.str(key, ""), key, mix);
    }
    if (mix.comps.empty()) break;
    c.synth.classes.push_back(std::move(mix));
  }
  if (c.synth.embed_dim == 0) {
    c.synth.embed_dim = static_cast<int>(c.synth.classes.size());
  }
}

}  // namespace detail

// Pulls the full schema out of the raw map; any key that is left over
// afterwards is unknown and rejected.
inline FullConfig resolve_config(ConfigMap& m) {
  FullConfig c;
  c.seed = m.u64("run.seed", c.seed);
  c.out_dir = m.str("run.out_dir", c.out_dir);

  c.formulation =
      formulation_from_string(m.str("model.formulation", "rfm_s2"));
  c.head = head_from_string(m.str("model.head", "field"));
  c.hidden_dim = static_cast<int>(m.i64("model.hidden_dim", c.hidden_dim));
  c.blocks = static_cast<int>(m.i64("model.blocks", c.blocks));
  c.cond_dim = static_cast<int>(m.i64("model.cond_dim", c.cond_dim));
  c.mixture_comps =
      static_cast<int>(m.i64("model.mixture_comps", c.mixture_comps));
  c.checkpoint = m.str("model.checkpoint", c.checkpoint);
  c.use_ema = m.boolean("model.use_ema", c.use_ema);

  c.sched_kind = schedule_from_string(m.str("sched.kind", "skewed_sigmoid"));
  c.sched_alpha = m.f64("sched.alpha", c.sched_alpha);
  c.sched_beta = m.f64("sched.beta", c.sched_beta);

  c.train_data = m.str("train.data", c.train_data);
  c.train_steps = m.u64("train.steps", c.train_steps);
  c.stop_after = m.u64("train.stop_after", c.stop_after);
  c.batch_size = static_cast<int>(m.i64("train.batch_size", c.batch_size));
  c.lr = m.f64("train.lr", c.lr);
  c.weight_decay = m.f64("train.weight_decay", c.weight_decay);
  c.warmup_steps = m.i64("train.warmup_steps", c.warmup_steps);
  c.ema_decay = m.f64("train.ema_decay", c.ema_decay);
  c.drop_prob = m.f64("train.drop_prob", c.drop_prob);
  c.checkpoint_every = m.u64("train.checkpoint_every", c.checkpoint_every);
  c.log_every = m.u64("train.log_every", c.log_every);
  c.resume = m.boolean("train.resume", c.resume);

  c.sample_n = m.i64("sample.n", c.sample_n);
  c.sample_steps = static_cast<int>(m.i64("sample.n_steps", c.sample_steps));
  c.sample_guidance = m.f64("sample.guidance", c.sample_guidance);
  c.ensemble = static_cast<int>(m.i64("sample.ensemble", c.ensemble));
  c.cond_data = m.str("sample.cond_data", c.cond_data);
  c.sample_output = m.str("sample.output", c.sample_output);

  c.eval_data = m.str("eval.data", c.eval_data);
  c.eval_samples = m.str("eval.samples", c.eval_samples);
  c.eval_nll = m.boolean("eval.nll", c.eval_nll);
  c.nll_guidance = m.f64("eval.nll_guidance", c.nll_guidance);
  c.eval_prdc = m.boolean("eval.prdc", c.eval_prdc);
  c.knn_k = static_cast<int>(m.i64("eval.knn_k", c.knn_k));
  c.localizability_n = m.i64("eval.localizability_n", c.localizability_n);
  c.uniform_baseline = m.boolean("eval.uniform_baseline", c.uniform_baseline);
  c.report_path = m.str("eval.report", c.report_path);

  c.solver.rtol = m.f64("density.rtol", c.solver.rtol);
  c.solver.atol = m.f64("density.atol", c.solver.atol);
  c.solver.max_steps =
      static_cast<int>(m.i64("density.max_steps", c.solver.max_steps));
  c.fd_h = m.f64("density.fd_h", c.fd_h);

  c.grid_width = static_cast<int>(m.i64("grid.width", c.grid_width));
  c.grid_height = static_cast<int>(m.i64("grid.height", c.grid_height));
  c.grid_guidance = m.f64("grid.guidance", c.grid_guidance);
  c.grid_cond_data = m.str("grid.cond_data", c.grid_cond_data);
  c.grid_cond_row = m.i64("grid.cond_row", c.grid_cond_row);

  detail::load_synth_section(m, c);
  m.reject_unconsumed();
  return c;
}

namespace detail {

inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Canonical echo of every effective setting, one "key = value" per line,
// sorted by key. Feeding this text back in reproduces the run.
inline std::string resolved_config_text(const FullConfig& c) {
  std::map<std::string, std::string> kv;
  kv["run.seed"] = std::to_string(c.seed);
  kv["run.out_dir"] = c.out_dir;
  kv["model.formulation"] = to_string(c.formulation);
  kv["model.head"] = head_to_string(c.head);
  kv["model.hidden_dim"] = std::to_string(c.hidden_dim);
  kv["model.blocks"] = std::to_string(c.blocks);
  kv["model.cond_dim"] = std::to_string(c.cond_dim);
  kv["model.mixture_comps"] = std::to_string(c.mixture_comps);
  kv["model.checkpoint"] = c.checkpoint_path();
  kv["model.use_ema"] = c.use_ema ? "true" : "false";
  kv["sched.kind"] = schedule_to_string(c.sched_kind);
  kv["sched.alpha"] = detail::fmt_g17(c.sched_alpha);
  kv["sched.beta"] = detail::fmt_g17(c.sched_beta);
  kv["train.data"] = c.train_data;
  kv["train.steps"] = std::to_string(c.train_steps);
  kv["train.stop_after"] = std::to_string(c.stop_after);
  kv["train.batch_size"] = std::to_string(c.batch_size);
  kv["train.lr"] = detail::fmt_g17(c.lr);
  kv["train.weight_decay"] = detail::fmt_g17(c.weight_decay);
  kv["train.warmup_steps"] = std::to_string(c.warmup_steps);
  kv["train.ema_decay"] = detail::fmt_g17(c.ema_decay);
  kv["train.drop_prob"] = detail::fmt_g17(c.drop_prob);
  kv["train.checkpoint_every"] = std::to_string(c.checkpoint_every);
  kv["train.log_every"] = std::to_string(c.log_every);
  kv["train.resume"] = c.resume ? "true" : "false";
  kv["sample.n"] = std::to_string(c.sample_n);
  kv["sample.n_steps"] = std::to_string(c.sample_steps);
  kv["sample.guidance"] = detail::fmt_g17(c.sample_guidance);
  kv["sample.ensemble"] = std::to_string(c.ensemble);
  kv["sample.cond_data"] = c.cond_data;
  kv["sample.output"] = c.samples_path();
  kv["eval.data"] = c.eval_data;
  kv["eval.samples"] = c.eval_samples_path();
  kv["eval.nll"] = c.eval_nll ? "true" : "false";
  kv["eval.nll_guidance"] = detail::fmt_g17(c.nll_guidance);
  kv["eval.prdc"] = c.eval_prdc ? "true" : "false";
  kv["eval.knn_k"] = std::to_string(c.knn_k);
  kv["eval.localizability_n"] = std::to_string(c.localizability_n);
  kv["eval.uniform_baseline"] = c.uniform_baseline ? "true" : "false";
  kv["eval.report"] = c.report_base();
  kv["density.rtol"] = detail::fmt_g17(c.solver.rtol);
  kv["density.atol"] = detail::fmt_g17(c.solver.atol);
  kv["density.max_steps"] = std::to_string(c.solver.max_steps);
  kv["density.fd_h"] = detail::fmt_g17(c.fd_h);
  kv["grid.width"] = std::to_string(c.grid_width);
  kv["grid.height"] = std::to_string(c.grid_height);
  kv["grid.guidance"] = detail::fmt_g17(c.grid_guidance);
  kv["grid.cond_data"] = c.grid_cond_data;
  kv["grid.cond_row"] = std::to_string(c.grid_cond_row);
  kv["synth.n_per_class"] = std::to_string(c.synth.n_per_class);
  kv["synth.embed_dim"] = std::to_string(c.synth.embed_dim);
  kv["synth.jitter"] = detail::fmt_g17(c.synth_jitter);
  kv["synth.binary"] = c.synth_binary ? "true" : "false";
  for (size_t cls = 0; cls < c.synth.classes.size(); ++cls) {
    const VmfMixture& mix = c.synth.classes[cls];
    for (size_t k = 0; k < mix.comps.size(); ++k) {
      const LatLon ll = unit_to_latlon(mix.comps[k].mu);
      kv["synth.class" + std::to_string(cls) + ".comp" + std::to_string(k)] =
          detail::fmt_g17(ll.lat_deg) + " " + detail::fmt_g17(ll.lon_deg) +
          " " + detail::fmt_g17(mix.comps[k].conc) + " " +
          detail::fmt_g17(mix.weights[k]);
    }
  }

  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

}  // namespace geoflow
