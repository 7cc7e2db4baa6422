#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <span>
#include <utility>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "resotube/errors.hpp"
#include "resotube/losses.hpp"
#include "resotube/resonet.hpp"
#include "resotube/trainer.hpp"

using namespace resotube;
using loss::CollocationConfig;
using loss::CollocationSets;
using loss::LossEngine;
using loss::LossMode;
using loss::LossWeights;
using train::AdamState;
using train::TrainConfig;

namespace {

geometry::TubeProfile table_tube() { return geometry::TubeProfile::two_section(0.1, 0.01, 0.02); }

physics::LossConstants table_loss() { return {7.29e-5, 8.73e-2}; }

const excitation::PeriodicWaveform& table_excitation() {
  static const excitation::PeriodicWaveform w = excitation::make_rosenberg({});
  return w;
}

nn::ScalingSpec table_scaling() {
  return {.x_scale = 0.1, .t_scale = table_excitation().period(), .p_scale = 15.0,
          .U_scale = 2.4e-4};
}

excitation::PeriodicWaveform constant_wave(double value, std::size_t n = 64) {
  return {table_excitation().f0(), std::vector<double>(n, value)};
}

nn::ResoNetModel small_model(std::uint64_t seed = 11) {
  return {{.width = 8, .blocks = 2, .seed = seed}, table_scaling(), 1.5 * table_loss().G_c,
          0.5 * table_loss().R_c};
}

LossWeights table_weights() {
  return LossWeights::from_scales(table_scaling(), table_tube().area_at(0.0));
}

// engine over a small collocation budget with synthetic outlet data attached
LossEngine small_engine(std::uint64_t seed = 5) {
  CollocationConfig cc{.n_pde = 24, .n_bc = 12, .n_coupling = 12, .n_periodic = 12, .seed = seed};
  auto sets = CollocationSets::generate(cc, 0.1, table_excitation().period());
  sets.attach_inlet_velocity(table_excitation());
  sets.attach_pressure_data(constant_wave(1.0), 8);
  return {table_tube(), {}, sets, table_weights()};
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("first Adam step moves each slot by -lr times the gradient sign") {
  std::vector<double> p{0.0, 2.0, -1.0};
  const std::vector<double> g{1.0, -3.0, 0.0};
  AdamState st(3);
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;

  train::adam_step(p, g, st, lr, b1, b2, eps);
  CHECK(st.step == 1);
  // bias correction cancels the (1 - beta) factors on the first step, so
  // the update is exactly -lr * g / (|g| + eps)
  CHECK(p[0] == doctest::Approx(-lr * 1.0 / (1.0 + eps)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(2.0 + lr * 3.0 / (3.0 + eps)).epsilon(1e-12));
  CHECK(p[2] == -1.0);  // zero gradient: moments stay zero, slot untouched

  // a constant gradient keeps m-hat = g and v-hat = g^2, so every step has
  // the same size
  train::adam_step(p, g, st, lr, b1, b2, eps);
  CHECK(st.step == 2);
  CHECK(p[0] == doctest::Approx(-2.0 * lr * 1.0 / (1.0 + eps)).epsilon(1e-9));
  CHECK(p[2] == -1.0);
}

TEST_CASE("Adam rejects mismatched buffers and non-finite gradients") {
  std::vector<double> p{1.0, 2.0};
  AdamState st(2);

  std::vector<double> short_g{1.0};
  CHECK_THROWS_AS(train::adam_step(p, short_g, st, 1e-3, 0.9, 0.999, 1e-8),
                  std::invalid_argument);

  for (double bad : {std::nan(""), std::numeric_limits<double>::infinity()}) {
    std::vector<double> g{0.5, bad};
    CHECK_THROWS_AS(train::adam_step(p, g, st, 1e-3, 0.9, 0.999, 1e-8), NumericalError);
  }
  // the throw happens before any mutation
  CHECK(st.step == 0);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 2.0);
  CHECK(st.m[0] == 0.0);
  CHECK(st.v[1] == 0.0);
}

TEST_CASE("train config validation") {
  const TrainConfig good{.epochs = 10, .freeze_epochs = 5};
  CHECK_NOTHROW(good.validate());

  auto expect_throw = [](TrainConfig c) {
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  };
  expect_throw({.epochs = 0});
  expect_throw({.epochs = 10, .lr = 0.0});
  expect_throw({.epochs = 10, .lr = -1e-3});
  expect_throw({.epochs = 10, .lr = 1e-3, .lr_final = 2e-3});  // decay must not grow
  expect_throw({.epochs = 10, .lr_final = -1e-5});
  expect_throw({.epochs = 10, .beta1 = 1.0});
  expect_throw({.epochs = 10, .beta2 = 0.0});
  expect_throw({.epochs = 10, .eps = 0.0});
  expect_throw({.epochs = 10, .freeze_epochs = 10});
  expect_throw({.epochs = 10, .divergence_factor = 1.0});
  expect_throw({.epochs = 10, .checkpoint_interval = 5});  // no path given
}

TEST_CASE("forward training lowers the loss and never touches the loss constants") {
  auto model = small_model(11);
  const double gc0 = model.gc(), rc0 = model.rc();
  auto engine = small_engine();

  TrainConfig cfg{.epochs = 150, .lr = 2e-3, .seed = 42};
  const auto res = train::train_forward(model, engine, cfg);

  CHECK(res.epochs_run == 150);
  CHECK(res.history.size() == 150);
  CHECK_FALSE(res.diverged);
  CHECK(res.runtime_seconds > 0.0);
  for (std::size_t e = 0; e < res.history.size(); ++e)
    CHECK(res.history[e].epoch == e);

  CHECK(res.history.front().losses.total > 0.0);
  CHECK(res.final_losses.total < 0.5 * res.history.front().losses.total);
  CHECK(res.history.back().losses.total < res.history.front().losses.total);

  // forward problem: the constants are known inputs, bit-identical throughout
  CHECK(model.gc() == gc0);
  CHECK(model.rc() == rc0);
  for (const auto& rec : res.history) {
    CHECK(rec.gc == gc0);
    CHECK(rec.rc == rc0);
  }
}

TEST_CASE("learning rate decay shrinks the late steps and nothing else") {
  auto engine = small_engine();
  TrainConfig constant{.epochs = 60, .lr = 2e-3};
  TrainConfig decayed = constant;
  decayed.lr_final = 2e-5;

  // a single epoch never sees the decay: first step uses lr exactly
  TrainConfig one = constant;
  one.epochs = 1;
  TrainConfig one_decayed = decayed;
  one_decayed.epochs = 1;
  auto ma = small_model(7);
  auto mb = small_model(7);
  train::train_forward(ma, engine, one);
  train::train_forward(mb, engine, one_decayed);
  const auto pa = ma.params(), pb = mb.params();
  CHECK(std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(double)) == 0);

  // over a full run the trajectories separate
  auto mc = small_model(7);
  auto md = small_model(7);
  train::train_forward(mc, engine, constant);
  train::train_forward(md, engine, decayed);
  const auto pc = mc.params(), pd = md.params();
  CHECK(std::memcmp(pc.data(), pd.data(), pc.size() * sizeof(double)) != 0);

  // lr_final equal to lr is the constant schedule again
  TrainConfig same = constant;
  same.lr_final = constant.lr;
  auto me = small_model(7);
  train::train_forward(me, engine, same);
  const auto pe = me.params();
  CHECK(std::memcmp(pc.data(), pe.data(), pc.size() * sizeof(double)) == 0);
}

TEST_CASE("identical seeds give bit-identical trajectories") {
  TrainConfig cfg{.epochs = 40, .lr = 2e-3};
  auto engine = small_engine(9);

  auto run = [&](nn::ResoNetModel& m) { return train::train_forward(m, engine, cfg); };
  auto m1 = small_model(3);
  auto m2 = small_model(3);
  const auto r1 = run(m1);
  const auto r2 = run(m2);

  const auto p1 = m1.params(), p2 = m2.params();
  CHECK(std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(double)) == 0);
  for (std::size_t e = 0; e < 40; ++e)
    CHECK(r1.history[e].losses.total == r2.history[e].losses.total);
  CHECK(r1.final_losses.total == r2.final_losses.total);
}

TEST_CASE("identification freezes the constants for the configured window") {
  auto model = small_model(21);
  const double gc0 = model.gc(), rc0 = model.rc();
  auto engine = small_engine();

  TrainConfig cfg{.epochs = 12, .lr = 1e-3, .freeze_epochs = 6, .seed = 7};
  const auto res = train::identify(model, engine, cfg, table_loss());

  CHECK(res.history.size() == 12);
  CHECK(res.epochs_run == 12);
  CHECK_FALSE(res.diverged);
  CHECK(res.seed == 7);

  // records hold the state at the start of each epoch: the first unfrozen
  // update happens in epoch 6, so its effect shows from epoch 7 on
  for (std::size_t e = 0; e <= 6; ++e) {
    CHECK(res.history[e].gc == gc0);
    CHECK(res.history[e].rc == rc0);
  }
  CHECK(res.history[7].gc != gc0);
  CHECK(res.history[7].rc != rc0);

  CHECK(res.gc == model.gc());
  CHECK(res.rc == model.rc());
  CHECK(res.gc_error == (res.gc - table_loss().G_c) / table_loss().G_c);
  CHECK(res.rc_error == (res.rc - table_loss().R_c) / table_loss().R_c);
}

TEST_CASE("identify rejects a non-positive injected truth") {
  auto model = small_model();
  auto engine = small_engine();
  TrainConfig cfg{.epochs = 2};
  CHECK_THROWS_AS(train::identify(model, engine, cfg, {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(train::identify(model, engine, cfg, {1.0, -2.0}), std::invalid_argument);
}

TEST_CASE("runaway learning rate trips the divergence guard") {
  auto model = small_model(13);
  auto engine = small_engine();

  TrainConfig cfg{.epochs = 2000, .lr = 10.0};
  const auto res = train::train_forward(model, engine, cfg);

  CHECK(res.diverged);
  CHECK(res.epochs_run < 20);
  CHECK(res.history.size() == res.epochs_run);
  CHECK(res.history.back().losses.total >
        cfg.divergence_factor * res.history.front().losses.total);
}

TEST_CASE("measurements generated by the model itself produce no data signal") {
  auto model = small_model(17);
  const double T = table_excitation().period();
  const std::size_t n = 16;
  std::vector<double> samples(n);
  for (std::size_t i = 0; i < n; ++i)
    samples[i] = model.forward_pU(0.1, double(i) * T / double(n)).first;

  CollocationConfig cc{.n_pde = 8, .n_bc = 8, .n_coupling = 8, .n_periodic = 8, .seed = 2};
  auto sets = CollocationSets::generate(cc, 0.1, T);
  sets.attach_inlet_velocity(table_excitation());
  sets.attach_pressure_data({table_excitation().f0(), samples}, n);

  LossEngine engine(table_tube(), {}, sets, table_weights());
  CHECK(engine.data_loss(model) < 1e-24);

  // and the data term alone cannot move the loss constants
  LossWeights only_data{};
  only_data.pde_continuity = only_data.pde_momentum = only_data.bc = 0.0;
  only_data.coupling = 0.0;
  only_data.periodic0_U = only_data.periodic0_p = 0.0;
  only_data.periodic1_U = only_data.periodic1_p = 0.0;
  only_data.data = table_weights().data;
  LossEngine data_engine(table_tube(), {}, sets, only_data);
  std::vector<double> grad(model.params().size(), 1.0);
  data_engine.evaluate_with_grad(model, LossMode::inverse, grad);
  CHECK(grad[model.gc_index()] == 0.0);
  CHECK(grad[model.rc_index()] == 0.0);
}

TEST_CASE("periodic checkpoints round-trip the trained state") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "resotube_trainer_ck_test.bin";

  auto model = small_model(5);
  auto engine = small_engine();
  TrainConfig cfg{.epochs = 12, .lr = 2e-3, .checkpoint_interval = 5,
                  .checkpoint_path = path};
  const auto res = train::train_forward(model, engine, cfg);
  CHECK(res.epochs_run == 12);
  REQUIRE(fs::exists(path));

  const auto reloaded = nn::ResoNetModel::load_checkpoint(path);
  const std::span<const double> p1 = std::as_const(model).params();
  const std::span<const double> p2 = reloaded.params();
  REQUIRE(p1.size() == p2.size());
  CHECK(std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(double)) == 0);
  CHECK(engine.evaluate(reloaded, LossMode::forward_only).total ==
        engine.evaluate(model, LossMode::forward_only).total);
  fs::remove(path);
}

TEST_SUITE_END();
