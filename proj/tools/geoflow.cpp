// Command line front end: synthetic data generation, training, sampling,
// metric evaluation, and density rasterization, all driven by a flat
// dotted-key configuration with --set overrides.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "geoflow/checkpoint.hpp"
#include "geoflow/config.hpp"
#include "geoflow/data.hpp"
#include "geoflow/density.hpp"
#include "geoflow/error.hpp"
#include "geoflow/gen.hpp"
#include "geoflow/heads.hpp"
#include "geoflow/metrics.hpp"
#include "geoflow/net.hpp"
#include "geoflow/sampler.hpp"
#include "geoflow/vmf.hpp"

namespace gf = geoflow;

namespace {

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw gf::InputError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw gf::InputError("write failed for '" + path + "'");
}

gf::FullConfig build_config(const std::string& config_path,
                            const std::vector<std::string>& sets) {
  gf::ConfigMap m;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw gf::InputError("cannot open config '" + config_path + "'");
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      m.parse_line(line, config_path + ":" + std::to_string(line_no));
    }
  }
  // Precedence: --set beats the environment beats the file beats defaults.
  if (const char* env = std::getenv("GEOFLOW_SEED")) {
    m.parse_line(std::string("run.seed = ") + env, "GEOFLOW_SEED");
  }
  for (const std::string& s : sets) m.parse_line(s, "--set");
  return gf::resolve_config(m);
}

void prepare_out_dir(const gf::FullConfig& c) {
  std::filesystem::create_directories(c.out_dir);
  write_text_file(c.out_dir + "/run.resolved", gf::resolved_config_text(c));
}

void write_split(const std::string& path, const gf::Dataset& d, bool binary) {
  if (binary) {
    gf::write_gfds(path, d);
  } else {
    gf::write_csv(path, d);
  }
}

void cmd_synth(const gf::FullConfig& c) {
  gf::Rng rng(c.seed);
  const gf::SynthOutput out = gf::synth_generate(c.synth, rng);
  const std::string ext = c.synth_binary ? ".gfds" : ".csv";
  const std::string train_path = c.out_dir + "/train" + ext;
  const std::string eval_path = c.out_dir + "/eval" + ext;
  write_split(train_path, out.train, c.synth_binary);
  write_split(eval_path, out.eval, c.synth_binary);
  std::printf("synth: %zu train rows -> %s\n", out.train.size(),
              train_path.c_str());
  std::printf("synth: %zu eval rows -> %s\n", out.eval.size(),
              eval_path.c_str());
}

gf::NetConfig net_config_from(const gf::FullConfig& c, int cond_dim) {
  gf::NetConfig nc;
  nc.hidden_dim = c.hidden_dim;
  nc.n_blocks = c.blocks;
  nc.cond_dim = cond_dim;
  nc.head = c.head;
  nc.mixture_comps = c.mixture_comps;
  nc.validate();
  return nc;
}

void cmd_train(const gf::FullConfig& c) {
  if (c.train_data.empty()) throw gf::InputError("train.data is required");
  const gf::Dataset ds = gf::load_dataset(c.train_data);
  if (ds.size() == 0) throw gf::InputError("training dataset is empty");
  const int cond_dim = c.cond_dim > 0 ? c.cond_dim : ds.embed_dim;
  if (cond_dim != ds.embed_dim) {
    throw gf::InputError("model.cond_dim " + std::to_string(cond_dim) +
                         " does not match dataset embedding dim " +
                         std::to_string(ds.embed_dim));
  }
  const gf::NetConfig nc = net_config_from(c, cond_dim);

  gf::TrainerConfig tc;
  tc.form = c.formulation;
  tc.sched = c.scheduler();
  tc.optim = c.optim();
  tc.batch_size = c.batch_size;
  tc.drop_prob = c.drop_prob;

  std::vector<gf::TrainItem> items;
  items.reserve(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    items.push_back(gf::TrainItem{ds.point(i), ds.embed_row(i)});
  }

  std::unique_ptr<gf::Trainer> tr;
  bool resumed = false;
  if (c.resume) {
    const std::string sp = c.train_state_path();
    if (!std::filesystem::exists(sp)) {
      throw gf::InputError("train.resume is set but '" + sp + "' is missing");
    }
    gf::ResumeState rs = gf::load_train_state(sp);
    const gf::NetConfig& sc = rs.train.params.cfg;
    if (sc.hidden_dim != nc.hidden_dim || sc.n_blocks != nc.n_blocks ||
        sc.cond_dim != nc.cond_dim || sc.head != nc.head ||
        sc.mixture_comps != nc.mixture_comps) {
      throw gf::InputError(
          "saved training state architecture does not match the configured "
          "model");
    }
    tr = std::make_unique<gf::Trainer>(tc, std::move(items), std::move(rs));
    resumed = true;
  } else {
    tr = std::make_unique<gf::Trainer>(nc, tc, std::move(items), c.seed);
  }

  const std::string log_path = c.out_dir + "/train_log.csv";
  std::ofstream log(log_path, resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw gf::InputError("cannot open '" + log_path + "' for writing");
  if (!resumed) log << "step,loss,lr\n";

  long target = static_cast<long>(c.train_steps);
  if (c.stop_after > 0) {
    target = std::min(target, static_cast<long>(c.stop_after));
  }
  double last_loss = 0.0;
  char buf[96];
  while (tr->step_count() < target) {
    last_loss = tr->step();
    const long s = tr->step_count();
    if (c.log_every > 0 && s % static_cast<long>(c.log_every) == 0) {
      std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g\n", s, last_loss,
                    gf::lr_at(tc.optim, s));
      log << buf;
    }
    if (c.checkpoint_every > 0 && s < target &&
        s % static_cast<long>(c.checkpoint_every) == 0) {
      tr->save(c.checkpoint_path(), c.train_state_path());
    }
  }
  log.flush();
  tr->save(c.checkpoint_path(), c.train_state_path());
  std::printf("train: step %ld, last batch loss %.9g\n", tr->step_count(),
              last_loss);
  std::printf("train: checkpoint -> %s\n", c.checkpoint_path().c_str());
}

// Log-density (nats) of the loaded model at a surface point under the given
// conditioning. Parametric heads carry their own closed-form density, field
// models go through the change-of-variables solve; guidance only reshapes
// field models.
struct DensityHandle {
  const gf::Checkpoint& ck;
  const gf::ModelParams& params;
  gf::Formulation form;
  gf::Scheduler sched;
  gf::DensityConfig cfg;

  DensityHandle(const gf::Checkpoint& c, const gf::FullConfig& fc,
                double omega)
      : ck(c),
        params(fc.use_ema ? c.ema : c.raw),
        form(fc.formulation),
        sched(fc.scheduler()) {
    cfg.solver = fc.solver;
    cfg.fd_h = fc.fd_h;
    cfg.guidance = omega;
  }

  double logp(const gf::UnitVec3& y, const double* cond) const {
    if (ck.cfg.head == gf::HeadKind::kVmf) {
      thread_local gf::Workspace ws;
      std::vector<double> raw;
      gf::eval_head_raw(params, ws, cond, raw);
      return gf::vmf_log_density(gf::vmf_head(raw.data()), y);
    }
    if (ck.cfg.head == gf::HeadKind::kVmfMixture) {
      thread_local gf::Workspace ws;
      std::vector<double> raw;
      gf::eval_head_raw(params, ws, cond, raw);
      return gf::vmf_mixture_log_density(
          gf::vmf_mixture_head(raw.data(), ck.cfg.mixture_comps), y);
    }
    return gf::model_log_density(params, form, sched, y, cond, cfg);
  }
};

void check_cond_dim(const gf::Checkpoint& ck, const gf::Dataset& d,
                    const std::string& what) {
  if (d.embed_dim != ck.cfg.cond_dim) {
    throw gf::InputError(what + " embedding dim " +
                         std::to_string(d.embed_dim) +
                         " does not match model cond_dim " +
                         std::to_string(ck.cfg.cond_dim));
  }
}

void cmd_sample(const gf::FullConfig& c) {
  const gf::Checkpoint ck = gf::load_checkpoint(c.checkpoint_path());
  const gf::ModelParams& mp = c.use_ema ? ck.ema : ck.raw;
  const gf::Scheduler sched = c.scheduler();
  gf::Rng rng(c.seed);

  gf::Dataset cond;
  bool has_cond = false;
  if (!c.cond_data.empty()) {
    cond = gf::load_dataset(c.cond_data);
    check_cond_dim(ck, cond, "sample.cond_data");
    has_cond = cond.size() > 0;
  }
  long n = c.sample_n;
  if (n <= 0) {
    if (!has_cond) {
      throw gf::InputError(
          "sample.n must be set when sampling unconditionally");
    }
    n = static_cast<long>(cond.size());
  }

  const DensityHandle scorer(ck, c, 0.0);
  gf::Dataset out;
  out.embed_dim = 0;
  std::vector<double> row;
  thread_local gf::Workspace ws;
  std::vector<double> raw;
  const std::vector<double> none;
  for (long i = 0; i < n; ++i) {
    const double* cptr = nullptr;
    if (has_cond) {
      row = cond.embed_row(static_cast<size_t>(i) % cond.size());
      cptr = row.data();
    }
    gf::UnitVec3 y{};
    if (ck.cfg.head == gf::HeadKind::kVmf) {
      gf::eval_head_raw(mp, ws, cptr, raw);
      y = gf::vmf_sample(gf::vmf_head(raw.data()), rng);
    } else if (ck.cfg.head == gf::HeadKind::kVmfMixture) {
      gf::eval_head_raw(mp, ws, cptr, raw);
      y = gf::vmf_mixture_sample(
          gf::vmf_mixture_head(raw.data(), ck.cfg.mixture_comps), rng);
    } else if (c.ensemble > 1) {
      y = gf::sample_point_ensemble(
          mp, c.formulation, sched, cptr, c.sample_guidance, c.sample_steps,
          c.ensemble, rng,
          [&](const gf::UnitVec3& cand) { return scorer.logp(cand, cptr); });
    } else {
      y = gf::sample_point(mp, c.formulation, sched, cptr, c.sample_guidance,
                           c.sample_steps, rng);
    }
    const gf::LatLon ll = gf::unit_to_latlon(y);
    out.append(ll.lat_deg, ll.lon_deg, none);
  }
  gf::write_csv(c.samples_path(), out);
  std::printf("sample: %ld points -> %s\n", n, c.samples_path().c_str());
}

void cmd_eval(const gf::FullConfig& c) {
  if (c.eval_data.empty()) throw gf::InputError("eval.data is required");
  const gf::Dataset real = gf::load_dataset(c.eval_data);
  if (real.size() == 0) throw gf::InputError("eval dataset is empty");
  const gf::Dataset gen = gf::load_dataset(c.eval_samples_path());
  if (gen.size() != real.size()) {
    throw gf::InputError(
        "eval: " + std::to_string(gen.size()) + " generated samples vs " +
        std::to_string(real.size()) +
        " eval rows; generate with sample.cond_data = eval.data so rows pair "
        "up");
  }

  std::vector<double> errors(real.size());
  std::vector<gf::UnitVec3> X, Y;
  X.reserve(real.size());
  Y.reserve(gen.size());
  for (size_t i = 0; i < real.size(); ++i) {
    const gf::LatLon a{real.lat[i], real.lon[i]};
    const gf::LatLon b{gen.lat[i], gen.lon[i]};
    errors[i] = gf::haversine_km(a, b);
    X.push_back(gf::latlon_to_unit(a));
    Y.push_back(gf::latlon_to_unit(b));
  }
  gf::MetricsReport r;
  gf::fill_point_metrics(r, std::move(errors));
  r.n_generated = static_cast<int>(gen.size());

  if (c.eval_prdc) {
    if (static_cast<int>(real.size()) > c.knn_k) {
      r.prdc_result = gf::prdc(X, Y, c.knn_k);
      r.has_prdc = true;
    } else {
      std::fprintf(stderr,
                   "warning: skipping manifold metrics, need more than k=%d "
                   "points\n",
                   c.knn_k);
    }
  }

  // The checkpoint is only needed for model densities; the closed-form
  // uniform baseline must work without one.
  std::unique_ptr<gf::Checkpoint> ck;
  const auto ensure_model = [&]() -> const gf::Checkpoint& {
    if (!ck) {
      ck = std::make_unique<gf::Checkpoint>(
          gf::load_checkpoint(c.checkpoint_path()));
    }
    return *ck;
  };

  if (c.eval_nll) {
    if (c.uniform_baseline) {
      const gf::NllResult nll = gf::mean_nll_bits_per_dim(
          static_cast<int>(real.size()),
          [](int) { return gf::uniform_log_density(); });
      r.nll_bits_per_dim = nll.bits_per_dim;
      r.nll_failures = nll.n_failed;
    } else {
      const gf::Checkpoint& model = ensure_model();
      check_cond_dim(model, real, "eval.data");
      const DensityHandle handle(model, c, c.nll_guidance);
      const gf::NllResult nll = gf::mean_nll_bits_per_dim(
          static_cast<int>(real.size()), [&](int i) {
            const std::vector<double> cond = real.embed_row(i);
            return handle.logp(X[static_cast<size_t>(i)], cond.data());
          });
      r.nll_bits_per_dim = nll.bits_per_dim;
      r.nll_failures = nll.n_failed;
    }
    r.has_nll = true;
  }

  std::string extra;
  if (c.localizability_n > 0) {
    gf::Rng rng(c.seed);
    gf::LocalizabilityResult loc;
    if (c.uniform_baseline) {
      loc = gf::localizability(
          static_cast<int>(c.localizability_n),
          [&]() { return gf::sample_uniform_sphere(rng); },
          [](const gf::UnitVec3&) { return gf::uniform_log_density(); });
    } else {
      const gf::Checkpoint& model = ensure_model();
      const gf::ModelParams& mp = c.use_ema ? model.ema : model.raw;
      const gf::Scheduler sched = c.scheduler();
      const DensityHandle handle(model, c, 0.0);
      thread_local gf::Workspace ws;
      std::vector<double> raw;
      const auto draw = [&]() -> gf::UnitVec3 {
        if (model.cfg.head == gf::HeadKind::kVmf) {
          gf::eval_head_raw(mp, ws, nullptr, raw);
          return gf::vmf_sample(gf::vmf_head(raw.data()), rng);
        }
        if (model.cfg.head == gf::HeadKind::kVmfMixture) {
          gf::eval_head_raw(mp, ws, nullptr, raw);
          return gf::vmf_mixture_sample(
              gf::vmf_mixture_head(raw.data(), model.cfg.mixture_comps), rng);
        }
        return gf::sample_point(mp, c.formulation, sched, nullptr, 0.0,
                                c.sample_steps, rng);
      };
      loc = gf::localizability(static_cast<int>(c.localizability_n), draw,
                               [&](const gf::UnitVec3& y) {
                                 return handle.logp(y, nullptr);
                               });
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "localizability = %.9g\n",
                  loc.mean_log2_density);
    extra += buf;
    std::snprintf(buf, sizeof buf, "localizability_failures = %d\n",
                  loc.n_failed);
    extra += buf;
  }

  const std::string text = gf::report_text(r) + extra;
  write_text_file(c.report_base() + ".txt", text);
  write_text_file(c.report_base() + ".csv", gf::report_csv(r));
  std::fputs(text.c_str(), stdout);
}

void cmd_density_grid(const gf::FullConfig& c) {
  if (c.grid_width < 1 || c.grid_height < 1) {
    throw gf::InputError("grid.width and grid.height must be >= 1");
  }
  const gf::Checkpoint ck = gf::load_checkpoint(c.checkpoint_path());
  const DensityHandle handle(ck, c, c.grid_guidance);

  std::vector<double> cond_row;
  const double* cptr = nullptr;
  if (!c.grid_cond_data.empty() && c.grid_cond_row >= 0) {
    const gf::Dataset cond = gf::load_dataset(c.grid_cond_data);
    check_cond_dim(ck, cond, "grid.cond_data");
    if (static_cast<size_t>(c.grid_cond_row) >= cond.size()) {
      throw gf::InputError("grid.cond_row out of range");
    }
    cond_row = cond.embed_row(static_cast<size_t>(c.grid_cond_row));
    cptr = cond_row.data();
  }

  const int w = c.grid_width, h = c.grid_height;
  std::vector<double> grid(static_cast<size_t>(w) * h);
  int failures = 0;
  const double ln2 = std::log(2.0);

  const std::string csv_path = c.out_dir + "/density_grid.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw gf::InputError("cannot open '" + csv_path + "' for writing");
  csv << "lat,lon,log2_density\n";
  char buf[128];
  for (int i = 0; i < h; ++i) {
    const double lat = 90.0 - (i + 0.5) * 180.0 / h;
    for (int j = 0; j < w; ++j) {
      const double lon = -180.0 + (j + 0.5) * 360.0 / w;
      double l2;
      try {
        l2 = handle.logp(gf::latlon_to_unit({lat, lon}), cptr) / ln2;
      } catch (const gf::NumericError&) {
        l2 = std::numeric_limits<double>::quiet_NaN();
        ++failures;
      }
      grid[static_cast<size_t>(i) * w + j] = l2;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", lat, lon, l2);
      csv << buf;
    }
  }
  if (!csv) throw gf::InputError("write failed for '" + csv_path + "'");
  csv.close();

  // 8-bit grayscale render, min-max normalized over the finite cells.
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (double v : grid) {
    if (!std::isfinite(v)) continue;
    if (!any) {
      lo = hi = v;
      any = true;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::vector<unsigned char> pix(grid.size(), 0);
  for (size_t i = 0; i < grid.size(); ++i) {
    const double v = grid[i];
    if (!std::isfinite(v)) continue;
    if (hi > lo) {
      pix[i] = static_cast<unsigned char>(
          std::lround(255.0 * (v - lo) / (hi - lo)));
    } else {
      pix[i] = 128;
    }
  }
  const std::string pgm_path = c.out_dir + "/density_grid.pgm";
  std::ofstream pgm(pgm_path, std::ios::binary | std::ios::trunc);
  if (!pgm) throw gf::InputError("cannot open '" + pgm_path + "' for writing");
  pgm << "P5\n" << w << " " << h << "\n255\n";
  pgm.write(reinterpret_cast<const char*>(pix.data()),
            static_cast<std::streamsize>(pix.size()));
  if (!pgm) throw gf::InputError("write failed for '" + pgm_path + "'");

  std::printf("density-grid: %dx%d cells -> %s, %s (%d failed solves)\n", w, h,
              csv_path.c_str(), pgm_path.c_str(), failures);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generative geolocation: spherical flows, diffusion, and "
               "parametric baselines"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "configuration file");
  app.add_option("--set", sets, "override, 'key=value' (repeatable)");

  CLI::App* s_synth =
      app.add_subcommand("synth", "draw synthetic train/eval splits");
  CLI::App* s_train = app.add_subcommand("train", "fit a model");
  CLI::App* s_sample = app.add_subcommand("sample", "generate points");
  CLI::App* s_eval = app.add_subcommand("eval", "score samples and densities");
  CLI::App* s_grid =
      app.add_subcommand("density-grid", "rasterize the learned density");
  for (CLI::App* s : {s_synth, s_train, s_sample, s_eval, s_grid}) {
    s->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const gf::FullConfig c = build_config(config_path, sets);
    prepare_out_dir(c);
    if (s_synth->parsed()) {
      cmd_synth(c);
    } else if (s_train->parsed()) {
      cmd_train(c);
    } else if (s_sample->parsed()) {
      cmd_sample(c);
    } else if (s_eval->parsed()) {
      cmd_eval(c);
    } else if (s_grid->parsed()) {
      cmd_density_grid(c);
    }
  } catch (const gf::InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const gf::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
