#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "geoflow/gen.hpp"

using namespace geoflow;

namespace {

double vnorm(const Vec3& v) { return norm(v); }

std::vector<TrainItem> vmf_items(int n, const VmfParams& p, int cond_dim,
                                 Rng& rng) {
  std::vector<TrainItem> items;
  items.reserve(n);
  for (int i = 0; i < n; ++i) {
    TrainItem it;
    it.y = vmf_sample(p, rng);
    it.cond.assign(cond_dim, 0.0);
    it.cond[i % cond_dim] = 1.0;
    items.push_back(std::move(it));
  }
  return items;
}

std::string read_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST(Pairs, DiffusionInterpolatesInVariance) {
  const Vec3 x0{0.2, -0.4, 0.89};
  const Vec3 eps{1.3, 0.1, -0.7};
  TrainPair p = diffusion_pair(x0, eps, 0.0);
  EXPECT_DOUBLE_EQ(p.x.x, x0.x);
  EXPECT_DOUBLE_EQ(p.x.z, x0.z);
  p = diffusion_pair(x0, eps, 1.0);
  EXPECT_DOUBLE_EQ(p.x.x, eps.x);
  p = diffusion_pair(x0, eps, 0.37);
  const double a = std::sqrt(0.63), b = std::sqrt(0.37);
  EXPECT_DOUBLE_EQ(p.x.y, a * x0.y + b * eps.y);
  // The net always regresses the noise itself.
  EXPECT_DOUBLE_EQ(p.target.x, eps.x);
  EXPECT_DOUBLE_EQ(p.target.y, eps.y);
  EXPECT_DOUBLE_EQ(p.target.z, eps.z);
}

TEST(Pairs, FlowMatchingIsLinear) {
  const Vec3 x0{0.2, -0.4, 0.89};
  const Vec3 eps{1.3, 0.1, -0.7};
  const TrainPair p = fm_pair(x0, eps, 0.25, 1.7);
  EXPECT_DOUBLE_EQ(p.x.x, 0.75 * x0.x + 0.25 * eps.x);
  EXPECT_DOUBLE_EQ(p.target.x, 1.7 * (eps.x - x0.x));
  EXPECT_DOUBLE_EQ(p.target.y, 1.7 * (eps.y - x0.y));
}

TEST(Pairs, SphericalPairWalksTheGeodesic) {
  const UnitVec3 x0 = latlon_to_unit({0.0, 0.0});
  const UnitVec3 eps = latlon_to_unit({0.0, 90.0});
  const double kdot = 2.3;

  TrainPair p = rfm_pair(x0, eps, 0.0, kdot);
  EXPECT_NEAR(vnorm(p.x - x0.vec()), 0.0, 1e-15);
  // Tangent target of length kdot * d pointing along the path.
  EXPECT_NEAR(vnorm(p.target), kdot * kPi / 2.0, 1e-12);
  EXPECT_NEAR(dot(p.target, p.x), 0.0, 1e-12);

  p = rfm_pair(x0, eps, 0.5, kdot);
  const UnitVec3 mid = latlon_to_unit({0.0, 45.0});
  EXPECT_NEAR(vnorm(p.x - mid.vec()), 0.0, 1e-12);
  EXPECT_NEAR(vnorm(p.target), kdot * kPi / 2.0, 1e-9);
  EXPECT_NEAR(dot(p.target, p.x), 0.0, 1e-12);
  // Points toward eps: positive component along increasing longitude.
  EXPECT_GT(p.target.y, 0.0);
}

TEST(Pairs, SphericalPairDegenerateCases) {
  const UnitVec3 x0 = latlon_to_unit({12.0, 34.0});
  // Noise landing on the data point collapses the path.
  TrainPair p = rfm_pair(x0, x0, 0.6, 1.5);
  EXPECT_DOUBLE_EQ(vnorm(p.target), 0.0);
  EXPECT_NEAR(vnorm(p.x - x0.vec()), 0.0, 1e-15);

  // At kappa = 1 the point sits on eps; the direction "away from x0" is
  // still defined and the speed is unchanged.
  const UnitVec3 eps = latlon_to_unit({12.0, 124.0});
  p = rfm_pair(x0, eps, 1.0, 1.5);
  EXPECT_NEAR(vnorm(p.x - eps.vec()), 0.0, 1e-9);
  const double d = geodesic_distance(x0, eps);
  EXPECT_NEAR(vnorm(p.target), 1.5 * d, 1e-9);
  EXPECT_NEAR(dot(p.target, p.x), 0.0, 1e-9);
  // Moving along the target must increase distance from x0.
  const UnitVec3 nudged =
      UnitVec3::project(p.x + 1e-6 * p.target);
  EXPECT_GT(geodesic_distance(x0, nudged), d - 1e-12);
}

TEST(Pairs, NoiseDrawsMatchFormulation) {
  Rng rng(77);
  const UnitVec3 x0 = latlon_to_unit({55.0, -20.0});
  for (int i = 0; i < 2000; ++i) {
    const Vec3 e = draw_noise(Formulation::kRfmS2, x0, rng);
    EXPECT_NEAR(norm(e), 1.0, 1e-12);
    EXPECT_LT(geodesic_distance(x0, UnitVec3::assume_normalized(e)),
              kPi - 1e-6);
  }
  // Euclidean formulations use an isotropic gaussian.
  double m = 0.0, m2 = 0.0;
  const int n = 5000;
  for (int i = 0; i < n; ++i) {
    const Vec3 e = draw_noise(Formulation::kFlowR3, x0, rng);
    m += e.x + e.y + e.z;
    m2 += norm_squared(e);
  }
  EXPECT_NEAR(m / (3 * n), 0.0, 0.05);
  EXPECT_NEAR(m2 / n, 3.0, 0.15);
}

TEST(Trainer, FreshFieldNetSeesUnitNoiseLoss) {
  // Zero-initialized field output against the diffusion target (the noise
  // itself) gives E|eps|^2 = 3 on the first batch.
  NetConfig nc;
  nc.hidden_dim = 8;
  nc.n_blocks = 1;
  nc.cond_dim = 2;
  TrainerConfig tc;
  tc.form = Formulation::kDiffusionR3;
  tc.batch_size = 4096;
  Rng rng(3);
  Trainer tr(nc, tc, vmf_items(4096, {latlon_to_unit({40.0, 2.0}), 30.0}, 2, rng),
             11);
  const double loss = tr.step();
  EXPECT_NEAR(loss, 3.0, 0.2);
  EXPECT_EQ(tr.step_count(), 1);
}

TEST(Trainer, LossDropsOnASmallProblem) {
  NetConfig nc;
  nc.hidden_dim = 8;
  nc.n_blocks = 1;
  nc.cond_dim = 1;
  TrainerConfig tc;
  tc.form = Formulation::kRfmS2;
  tc.batch_size = 64;
  tc.optim.lr = 3e-3;
  tc.optim.warmup_steps = 20;
  tc.optim.total_steps = 400;
  Rng rng(5);
  Trainer tr(nc, tc, vmf_items(256, {latlon_to_unit({40.0, 2.0}), 50.0}, 1, rng),
             12);
  double early = 0.0, late = 0.0;
  for (int s = 0; s < 400; ++s) {
    const double l = tr.step();
    if (s < 10) early += l;
    if (s >= 390) late += l;
  }
  early /= 10.0;
  late /= 10.0;
  EXPECT_LT(late, 0.6 * early);
  EXPECT_TRUE(std::isfinite(late));
}

TEST(Trainer, ResumeReproducesTheUninterruptedRun) {
  NetConfig nc;
  nc.hidden_dim = 8;
  nc.n_blocks = 1;
  nc.cond_dim = 1;
  TrainerConfig tc;
  tc.form = Formulation::kRfmS2;
  tc.batch_size = 16;  // dataset of 40: saves land mid-epoch
  Rng rng(9);
  const std::vector<TrainItem> items =
      vmf_items(40, {latlon_to_unit({-10.0, 100.0}), 20.0}, 1, rng);

  const std::string dir =
      (std::filesystem::temp_directory_path() / "gf_resume_test").string();
  std::filesystem::create_directories(dir);
  const std::string ck_a = dir + "/a.gfck", st_a = dir + "/a.gfst";
  const std::string ck_b = dir + "/b.gfck", st_b = dir + "/b.gfst";
  const std::string ck_m = dir + "/mid.gfck", st_m = dir + "/mid.gfst";

  {
    Trainer tr(nc, tc, items, 31);
    for (int s = 0; s < 100; ++s) tr.step();
    tr.save(ck_a, st_a);
  }
  {
    Trainer tr(nc, tc, items, 31);
    for (int s = 0; s < 60; ++s) tr.step();
    tr.save(ck_m, st_m);
  }
  {
    Trainer tr(tc, items, load_train_state(st_m));
    EXPECT_EQ(tr.step_count(), 60);
    for (int s = 0; s < 40; ++s) tr.step();
    tr.save(ck_b, st_b);
  }
  EXPECT_EQ(read_bytes(ck_a), read_bytes(ck_b));
  EXPECT_EQ(read_bytes(st_a), read_bytes(st_b));

  // Resuming against a different dataset size is refused.
  std::vector<TrainItem> fewer(items.begin(), items.end() - 1);
  EXPECT_THROW(Trainer(tc, fewer, load_train_state(st_m)), ParseError);
  std::filesystem::remove_all(dir);
}

TEST(Trainer, EpochTouchesEveryItemOnce) {
  NetConfig nc;
  nc.hidden_dim = 8;
  nc.n_blocks = 1;
  nc.cond_dim = 1;
  TrainerConfig tc;
  tc.form = Formulation::kFlowR3;
  tc.batch_size = 4;
  Rng rng(21);
  Trainer tr(nc, tc, vmf_items(10, {latlon_to_unit({0.0, 0.0}), 5.0}, 1, rng),
             2);
  const double l1 = tr.epoch();
  EXPECT_TRUE(std::isfinite(l1));
  EXPECT_EQ(tr.step_count(), 3);  // 4 + 4 + 2
  tr.step();                      // partial progress into the next epoch
  const double l2 = tr.epoch();   // forces a fresh shuffle first
  EXPECT_TRUE(std::isfinite(l2));
  EXPECT_EQ(tr.step_count(), 7);
}

TEST(Trainer, RejectsBadInputs) {
  NetConfig nc;
  nc.hidden_dim = 8;
  nc.n_blocks = 1;
  nc.cond_dim = 2;
  TrainerConfig tc;
  EXPECT_THROW(Trainer(nc, tc, {}, 1), InputError);

  std::vector<TrainItem> bad{{latlon_to_unit({1.0, 2.0}), {1.0}}};  // dim 1
  EXPECT_THROW(Trainer(nc, tc, bad, 1), InputError);

  std::vector<TrainItem> ok{{latlon_to_unit({1.0, 2.0}), {1.0, 0.0}}};
  tc.batch_size = 0;
  EXPECT_THROW(Trainer(nc, tc, ok, 1), InputError);
  tc.batch_size = 4;
  tc.drop_prob = 1.5;
  EXPECT_THROW(Trainer(nc, tc, ok, 1), InputError);
}

TEST(Trainer, HeadRowsCarryCleanTargets) {
  NetConfig nc;
  nc.hidden_dim = 8;
  nc.n_blocks = 1;
  nc.cond_dim = 1;
  nc.head = HeadKind::kVmf;
  TrainerConfig tc;
  tc.batch_size = 8;
  tc.drop_prob = 0.0;
  Rng rng(4);
  Batch b;
  b.resize(1, 1);
  TrainItem it{latlon_to_unit({33.0, -7.0}), {1.0}};
  fill_batch_row(b, 0, it, tc, true, rng);
  EXPECT_DOUBLE_EQ(b.k[0], 0.0);
  EXPECT_DOUBLE_EQ(b.x[0], it.y.x());
  EXPECT_DOUBLE_EQ(b.target[0], it.y.x());
  EXPECT_DOUBLE_EQ(b.target[1], it.y.y());
  EXPECT_DOUBLE_EQ(b.target[2], it.y.z());
  EXPECT_EQ(b.use_null[0], 0);

  // Training a vmf head end to end drives the NLL down.
  Trainer tr(nc, tc, vmf_items(64, {latlon_to_unit({33.0, -7.0}), 30.0}, 1, rng),
             6);
  double first = tr.step(), last = 0.0;
  for (int s = 0; s < 300; ++s) last = tr.step();
  EXPECT_LT(last, first);
}
