#include <cmath>

#include "doctest.h"
#include "gapfill/direct_net.hpp"
#include "gapfill/sim.hpp"
#include "gapfill/train.hpp"

using namespace gapfill;

TEST_CASE("zero-initialized final layer gives zero output") {
  DirectNetConfig cfg;
  cfg.window = 3;
  cfg.hidden = 8;
  cfg.seed = 1;
  DirectNetParams net;
  net.init(cfg);
  Rng rng(2);
  Tensor input(6, 16, 16);
  for (auto& v : input.v) v = rng.normal();
  Tensor out = direct_forward(net, input);
  CHECK(out.c == 3);
  CHECK(out.h == 16);
  CHECK(out.w == 16);
  for (double v : out.v) CHECK(v == 0.0);
}

TEST_CASE("output shape equals input value shape for any even H, W") {
  DirectNetConfig cfg;
  cfg.window = 2;
  cfg.hidden = 4;
  DirectNetParams net;
  net.init(cfg);
  for (auto [h, w] : {std::pair{8, 12}, std::pair{20, 6}}) {
    Tensor input(4, h, w);
    Tensor out = direct_forward(net, input);
    CHECK(out.c == 2);
    CHECK(out.h == h);
    CHECK(out.w == w);
  }
}

TEST_CASE("odd dimensions are rejected") {
  DirectNetConfig cfg;
  cfg.window = 2;
  cfg.hidden = 4;
  DirectNetParams net;
  net.init(cfg);
  Tensor input(4, 9, 8);
  CHECK_THROWS_AS(direct_forward(net, input), OddDimensions);
}

TEST_CASE("hidden_dim=128 configuration has ~625k parameters") {
  DirectNetConfig cfg;
  cfg.window = 5;
  cfg.hidden = 128;
  DirectNetParams net;
  net.init(cfg);
  const double n = static_cast<double>(net.param_count());
  CHECK(n > 625000.0 * 0.95);
  CHECK(n < 625000.0 * 1.05);
}

TEST_CASE("forward gradient matches finite differences at toy size") {
  DirectNetConfig cfg;
  cfg.window = 2;
  cfg.hidden = 3;
  cfg.seed = 5;
  DirectNetParams net;
  net.init(cfg);
  Rng rng(6);
  // give the zero-initialized output layer some signal to differentiate
  net.out.fill_normal(rng, 0.3);

  Tensor input(4, 8, 8);
  for (auto& v : input.v) v = rng.normal();
  detail::Window target{Tensor(2, 8, 8), Tensor(2, 8, 8, 1.0)};
  for (auto& v : target.values.v) v = rng.normal();

  auto loss_value = [&]() {
    Tape tape;
    auto pn = make_direct_param_nodes(tape, net);
    int pred = build_direct_forward(tape, input, net, pn);
    return tape.scalar(detail::masked_mse(tape, pred, target));
  };
  Tape tape;
  auto pn = make_direct_param_nodes(tape, net);
  int pred = build_direct_forward(tape, input, net, pn);
  int loss = detail::masked_mse(tape, pred, target);
  tape.backward(loss);

  const double h = 1e-5;
  double worst = 0;
  Rng pick(7);
  Tensor* tensors[] = {&net.enc, &net.down, &net.bott_a, &net.bott_b1,
                       &net.bott_b2, &net.merge, &net.out};
  int nodes[] = {pn.enc, pn.down, pn.bott_a, pn.bott_b1, pn.bott_b2, pn.merge, pn.out};
  for (int p = 0; p < 7; ++p)
    for (int c = 0; c < 5; ++c) {
      size_t i = pick.next_u64() % tensors[p]->size();
      const double orig = tensors[p]->v[i];
      tensors[p]->v[i] = orig + h;
      double up = loss_value();
      tensors[p]->v[i] = orig - h;
      double dn = loss_value();
      tensors[p]->v[i] = orig;
      const double fd = (up - dn) / (2 * h);
      const double analytic = tape.grad(nodes[p]).v[i];
      worst = std::max(worst, std::abs(fd - analytic) /
                                  std::max(std::abs(analytic), 1e-8));
    }
  CHECK(worst < 1e-5);
}

TEST_CASE("interior translation consistency at the downsampling stride") {
  DirectNetConfig cfg;
  cfg.window = 2;
  cfg.hidden = 4;
  cfg.seed = 11;
  DirectNetParams net;
  net.init(cfg);
  Rng rng(12);
  net.out.fill_normal(rng, 0.3);

  // smooth periodic gap-free input
  const int h = 32, w = 32;
  Tensor input(4, h, w);
  for (int cc = 0; cc < 2; ++cc)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        input.at(cc, i, j) = std::sin(2 * 3.14159265 * (2 * i + 3 * j + cc * 5) / 32.0);
        input.at(2 + cc, i, j) = 1.0;  // mask channel: fully observed
      }
  Tensor shifted(4, h, w);
  for (int cc = 0; cc < 4; ++cc)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        shifted.at(cc, i, j) = input.at(cc, i, (j + 2) % w);

  Tensor a = direct_forward(net, input);
  Tensor b = direct_forward(net, shifted);
  const int margin = 12;
  for (int cc = 0; cc < 2; ++cc)
    for (int i = margin; i < h - margin; ++i)
      for (int j = margin; j < w - margin - 2; ++j)
        CHECK(b.at(cc, i, j) == doctest::Approx(a.at(cc, i, j + 2)).epsilon(1e-9));
}

TEST_CASE("direct training contract: masked blindness, epochs=0, loss decreases") {
  SyntheticTruthConfig tc;
  tc.t = 30; tc.h = 16; tc.w = 16;
  tc.seed = 21;
  auto truth = gen_truth(tc);
  auto stats = compute_stats(truth, Transform::physical);
  auto ds = normalize(truth, stats);
  CloudMaskConfig cloud;
  cloud.seed = 22;
  cloud.blob_radius_min = 1.5;
  cloud.blob_radius_max = 4;

  DirectNetConfig cfg;
  cfg.window = 5;
  cfg.hidden = 6;
  cfg.seed = 23;

  SUBCASE("epochs=0 leaves parameters unchanged") {
    DirectNetParams net;
    net.init(cfg);
    auto enc0 = net.enc.v;
    TrainConfig tcfg;
    tcfg.epochs = 0;
    auto hist = train_direct(ds, ds, cloud, net, tcfg);
    CHECK(hist.train_loss.empty());
    CHECK(net.enc.v == enc0);
  }

  SUBCASE("training reduces the training loss") {
    DirectNetParams net;
    net.init(cfg);
    TrainConfig tcfg;
    tcfg.epochs = 5;
    tcfg.windows_per_epoch = 10;
    tcfg.lr = 5e-3;
    tcfg.seed = 24;
    auto hist = train_direct(ds, ds, cloud, net, tcfg);
    REQUIRE(hist.train_loss.size() == 5);
    CHECK(hist.valid_loss.back() < hist.valid_loss.front());
  }
}
