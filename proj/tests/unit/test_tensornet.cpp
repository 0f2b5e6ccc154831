#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "fundascreen/error.hpp"
#include "fundascreen/tensornet/augment.hpp"
#include "fundascreen/tensornet/checkpoint.hpp"
#include "fundascreen/tensornet/loss.hpp"
#include "fundascreen/tensornet/network.hpp"
#include "fundascreen/tensornet/optim.hpp"
#include "oracles.hpp"

using namespace fundascreen;
using namespace fundascreen::nn;

namespace {

constexpr double kGradTolerance = 1e-6;

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

std::vector<double> random_side(int n, Rng& rng) {
  std::vector<double> s(static_cast<std::size_t>(n));
  for (double& v : s) v = rng.normal();
  return s;
}

RgbImage random_image(int side, Rng& rng) {
  RgbImage img(side);
  for (double& v : img.rgb) v = rng.uniform();
  return img;
}

}  // namespace

TEST_SUITE("tensornet") {
  TEST_CASE("identity dense and 1x1 conv examples") {
    Dense d(Shape{3, 1, 1}, 3, "d");
    std::fill(d.weight().value.begin(), d.weight().value.end(), 0.0);
    for (int i = 0; i < 3; ++i) d.weight().value[i * 3 + i] = 1.0;
    Tensor x(Shape{3, 1, 1});
    x.data = {0.3, -2.0, 5.0};
    Tensor y;
    d.forward(x, {}, y);
    CHECK(y.data == x.data);

    Conv2d c(Shape{1, 5, 5}, 1, 1, 1, "c");
    c.weight().value = {2.0};
    c.bias().value = {0.0};
    Tensor img(Shape{1, 5, 5}, 0.5);
    c.forward(img, {}, y);
    for (double v : y.data) CHECK(v == 1.0);
  }

  TEST_CASE("shape mismatches fail at construction") {
    CHECK_THROWS_AS(Conv2d(Shape{1, 2, 2}, 0, 3, 1, "c"), Error);
    CHECK_THROWS_AS(Conv2d(Shape{0, 2, 2}, 4, 3, 1, "c"), Error);
    CHECK_THROWS_AS(MaxPool2(Shape{1, 1, 1}), Error);
    Architecture a = default_architecture(32, 0, 2);
    a.layers.insert(a.layers.begin() + 8, LayerSpec{LayerSpec::Kind::dense, 4});  // dense before pooling
    CHECK_THROWS_AS(Network(a, 1), Error);
    Network net(default_architecture(32, 0, 2), 1);
    std::vector<Tensor> wrong = {Tensor(Shape{3, 16, 16})};
    CHECK_THROWS_AS(net.forward(wrong), Error);
    std::vector<Tensor> ok = {Tensor(Shape{3, 32, 32})};
    std::vector<std::vector<double>> side = {{1.0}};
    CHECK_THROWS_AS(net.forward(ok, side), Error);
  }

  TEST_CASE("conv gradients on randomized shapes") {
    Rng rng(101);
    for (int trial = 0; trial < 12; ++trial) {
      const int c = 1 + static_cast<int>(rng.below(3));
      const int h = 3 + static_cast<int>(rng.below(6));
      const int k = rng.bernoulli(0.5) ? 3 : 1 + 2 * static_cast<int>(rng.below(2));
      const int stride = 1 + static_cast<int>(rng.below(2));
      const int f = 1 + static_cast<int>(rng.below(4));
      Conv2d layer(Shape{c, h, h + 1}, f, k, stride, "conv");
      layer.initialize(rng);
      for (double& b : layer.bias().value) b = rng.normal();
      const auto gc = oracle::check_layer(layer, random_tensor(layer.input_shape(), rng), {}, rng);
      CAPTURE(trial);
      CHECK(gc.max_rel_error <= kGradTolerance);
    }
  }

  TEST_CASE("dense gradients on randomized shapes") {
    Rng rng(102);
    for (int trial = 0; trial < 10; ++trial) {
      Dense layer(Shape{1 + static_cast<int>(rng.below(12)), 1, 1}, 1 + static_cast<int>(rng.below(5)), "dense");
      layer.initialize(rng);
      const auto gc = oracle::check_layer(layer, random_tensor(layer.input_shape(), rng), {}, rng);
      CHECK(gc.max_rel_error <= kGradTolerance);
    }
  }

  TEST_CASE("relu, pooling and concat gradients") {
    Rng rng(103);
    for (int trial = 0; trial < 10; ++trial) {
      const Shape s{1 + static_cast<int>(rng.below(3)), 2 + static_cast<int>(rng.below(6)),
                    2 + static_cast<int>(rng.below(6))};
      Relu relu(s);
      CHECK(oracle::check_layer(relu, oracle::kink_free_input(s, rng), {}, rng).max_rel_error <= kGradTolerance);
      MaxPool2 pool(s);
      CHECK(oracle::check_layer(pool, oracle::kink_free_input(s, rng), {}, rng).max_rel_error <= kGradTolerance);
      GlobalAvgPool gap(s);
      CHECK(oracle::check_layer(gap, random_tensor(s, rng), {}, rng).max_rel_error <= kGradTolerance);
      const int side_dim = 1 + static_cast<int>(rng.below(4));
      ConcatSide cat(Shape{s.channels, 1, 1}, side_dim);
      const auto side = random_side(side_dim, rng);
      CHECK(oracle::check_layer(cat, random_tensor(cat.input_shape(), rng), side, rng).max_rel_error <= kGradTolerance);
    }
  }

  TEST_CASE("whole network gradients, both losses") {
    Rng rng(104);
    for (int side_dim : {0, 3}) {
      auto arch = default_architecture(8, side_dim, 2);
      Network net(arch, 5);
      for (auto* p : net.parameters()) {
        for (double& v : p->value) v += 0.05 * rng.normal();  // move biases off zero
      }
      std::vector<Tensor> inputs;
      std::vector<std::vector<double>> side;
      for (int b = 0; b < 3; ++b) {
        inputs.push_back(random_tensor(arch.input, rng));
        if (side_dim) side.push_back(random_side(side_dim, rng));
      }
      const std::vector<std::vector<double>> targets = {{0.5, -1.0}, {1.5, 0.0}, {-0.3, 0.7}};
      const auto mse = oracle::check_network(net, inputs, side, [&](const auto& out) { return loss_mse(out, targets); });
      CHECK(mse.max_rel_error <= kGradTolerance);
      const std::vector<int> classes = {0, 1, 1};
      const std::vector<double> weights = {0.7, 2.5};
      const auto ce = oracle::check_network(net, inputs, side,
                                            [&](const auto& out) { return loss_weighted_ce(out, classes, weights); });
      CHECK(ce.max_rel_error <= kGradTolerance);
    }
  }

  TEST_CASE("loss examples") {
    const std::vector<std::vector<double>> p = {{1.0, 2.0}};
    const auto m = loss_mse(p, p);
    CHECK(m.value == 0.0);
    CHECK(m.grad[0] == std::vector<double>{0.0, 0.0});

    const std::vector<std::vector<double>> zero = {{0.0, 0.0}};
    const std::vector<double> one = {1.0, 1.0};
    for (int c : {0, 1}) {
      const std::vector<int> cls = {c};
      CHECK(loss_weighted_ce(zero, cls, one).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    }
    const std::vector<std::vector<double>> l = {{2.0, 0.0}};
    const std::vector<int> c0 = {0};
    const std::vector<double> w = {3.0, 1.0};
    CHECK(loss_weighted_ce(l, c0, w).value == doctest::Approx(3.0 * std::log1p(std::exp(-2.0))).epsilon(1e-14));
    CHECK(loss_weighted_ce(l, c0, w).value == doctest::Approx(0.3808).epsilon(1e-4));

    const std::vector<std::vector<double>> huge = {{1000.0, -1000.0}};
    const auto h = loss_weighted_ce(huge, c0, w);
    CHECK(std::isfinite(h.value));
    CHECK(h.value == doctest::Approx(0.0));
  }

  TEST_CASE("class weights") {
    const std::vector<long long> a = {100, 10};
    const auto wa = class_weights(a);
    CHECK(std::abs(wa.weights[1] / wa.weights[0] - std::pow(10.0, 0.9)) <= 1e-9);
    CHECK((100 * wa.weights[0] + 10 * wa.weights[1]) / 110 == doctest::Approx(1.0).epsilon(1e-14));
    const std::vector<long long> b = {50, 50};
    CHECK(class_weights(b).weights == std::vector<double>{1.0, 1.0});
    const std::vector<long long> c = {1000};
    CHECK(class_weights(c).weights == std::vector<double>{1.0});
    const std::vector<long long> d = {20, 0};
    const auto wd = class_weights(d);
    CHECK(wd.excluded == std::vector<int>{1});
    CHECK(wd.weights[0] == 1.0);
  }

  TEST_CASE("lr schedule") {
    TrainSchedule s;
    CHECK(lr_at(0, s, 100) == 0.0001);
    CHECK(lr_at(300, s, 100) == 0.0008);
    CHECK(lr_at(150, s, 100) == doctest::Approx(0.00045).epsilon(1e-12));
    CHECK(lr_at(100000, s, 100) == 0.0008);
    s.warmup_start_lr = 0.01;
    CHECK_THROWS_AS(s.validate(), Error);
  }

  TEST_CASE("sgd step examples") {
    Parameter p("p", {2});
    p.value = {1.0, -1.0};
    std::vector<Parameter*> ps = {&p};
    SgdMomentum plain(0.0, 0.0);
    p.grad = {0.5, 2.0};
    plain.step(ps, 0.1);
    CHECK(p.value[0] == doctest::Approx(0.95));
    CHECK(p.value[1] == doctest::Approx(-1.2));

    SgdMomentum still(0.9, 0.0);
    p.grad = {0.0, 0.0};
    const auto before = p.value;
    still.step(ps, 0.1);
    CHECK(p.value == before);

    SgdMomentum heavy(0.9, 0.0);
    p.value = {0.0, 0.0};
    p.grad = {1.0, -2.0};
    heavy.step(ps, 0.01);
    heavy.step(ps, 0.01);
    CHECK(p.value[0] == doctest::Approx(-0.01 * 1.0 * 2.9).epsilon(1e-14));
    CHECK(p.value[1] == doctest::Approx(0.01 * 2.0 * 2.9).epsilon(1e-14));

    p.grad = {std::nan(""), 0.0};
    CHECK_THROWS_AS(heavy.step(ps, 0.01), Error);
  }

  TEST_CASE("ema examples") {
    std::vector<double> shadow = {0.0};
    const std::vector<double> one = {1.0};
    ema_update(shadow, one, 0.9);
    ema_update(shadow, one, 0.9);
    // 0.19 up to double rounding of the decay itself.
    CHECK(std::abs(shadow[0] - 0.19) <= 1e-15);
    ema_update(shadow, std::vector<double>{4.0}, 0.0);
    CHECK(shadow[0] == 4.0);
    for (int i = 0; i < 2000; ++i) ema_update(shadow, std::vector<double>{2.0}, 0.99);
    CHECK(shadow[0] == doctest::Approx(2.0).epsilon(1e-6));

    // The warm-up cap never raises the configured decay.
    TrainSchedule s;
    CHECK(ema_decay_at(0, s) == doctest::Approx(0.1));
    CHECK(ema_decay_at(1000000000, s) == s.ema_decay);
    s.ema_warmup = false;
    CHECK(ema_decay_at(0, s) == s.ema_decay);
  }

  TEST_CASE("ema shadow norm stays within trajectory norms") {
    Rng rng(5);
    Parameter p("p", {4});
    p.value = {0.1, 0.2, 0.3, 0.4};
    std::vector<Parameter*> ps = {&p};
    Ema ema(ps);
    auto norm = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x * x;
      return std::sqrt(s);
    };
    double lo = norm(p.value), hi = lo;
    for (int step = 0; step < 500; ++step) {
      for (double& v : p.value) v *= 1.0 + 0.01 * rng.uniform(0.0, 1.0) * (step < 250 ? 1 : -1);
      lo = std::min(lo, norm(p.value));
      hi = std::max(hi, norm(p.value));
      ema.update(ps, 0.95);
      const double n = norm(ema.shadow()[0]);
      CHECK(n >= lo - 1e-12);
      CHECK(n <= hi + 1e-12);
    }
    const auto raw = p.value;
    const auto averaged = ema.shadow()[0];
    ema.swap(ps);
    CHECK(p.value == averaged);
    ema.swap(ps);
    CHECK(p.value == raw);
  }

  TEST_CASE("early stopping rule") {
    const std::vector<double> improving = {0.9, 0.8, 0.7, 0.6};
    CHECK_FALSE(should_stop(improving, 3));
    const std::vector<double> flat = {0.9, 0.8, 0.8, 0.8};
    CHECK_FALSE(should_stop(flat, 3));
    const std::vector<double> flat3 = {0.9, 0.8, 0.8, 0.8, 0.8};
    CHECK(should_stop(flat3, 3));
    CHECK(best_index(flat3) == 1);
    const std::vector<double> worse = {0.9, 0.95};
    CHECK(should_stop(worse, 0));
    const std::vector<double> better = {0.9, 0.85};
    CHECK_FALSE(should_stop(better, 0));
    const std::vector<double> auc = {0.6, 0.7, 0.65};
    CHECK(should_stop(auc, 1, Direction::higher_is_better));
  }

  TEST_CASE("separable toy set: weighted CE reaches 0.1 within 200 steps") {
    Rng rng(9);
    Architecture arch;
    arch.input = Shape{2, 1, 1};
    arch.layers = {{LayerSpec::Kind::dense, 2}};
    Network net(arch, 3);
    std::vector<Tensor> x;
    std::vector<int> y;
    for (int i = 0; i < 64; ++i) {
      const int c = i % 4 == 0 ? 1 : 0;
      Tensor t(arch.input);
      t.data = {(c ? 3.0 : -3.0) + rng.normal(0, 0.5), rng.normal(0, 1.0)};
      x.push_back(t);
      y.push_back(c);
    }
    const std::vector<long long> counts = {48, 16};
    const auto w = class_weights(counts).weights;
    TrainSchedule s;
    const std::int64_t steps_per_epoch = 2;
    SgdMomentum opt(s.momentum, s.weight_decay);
    const auto params = net.parameters();
    double loss = 1e9;
    for (std::int64_t step = 0; step < 200; ++step) {
      const std::size_t b = static_cast<std::size_t>(step % steps_per_epoch) * 32;
      const std::span<const Tensor> xb(x.data() + b, 32);
      const std::span<const int> yb(y.data() + b, 32);
      const auto out = net.forward(xb);
      net.backward(loss_weighted_ce(out, yb, w).grad);
      opt.step(params, lr_at(step, s, steps_per_epoch));
    }
    loss = loss_weighted_ce(net.forward(x), y, w).value;
    CHECK(loss <= 0.1);
  }

  TEST_CASE("network determinism from seed") {
    Network a(default_architecture(16, 2, 3), 77), b(default_architecture(16, 2, 3), 77);
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value == pb[i]->value);
    Network c(default_architecture(16, 2, 3), 78);
    CHECK_FALSE(c.parameters()[0]->value == pa[0]->value);
  }

  TEST_CASE("checkpoint round trip and format") {
    Network net(default_architecture(16, 0, 2), 4);
    std::vector<std::vector<double>> shadow;
    for (auto* p : net.parameters()) {
      shadow.push_back(p->value);
      for (double& v : shadow.back()) v *= 0.5;
    }
    const auto ck = make_checkpoint(net, shadow);
    std::stringstream ss;
    write_checkpoint(ss, ck);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "FSCK");
    CHECK(read_checkpoint(ss, "mem") == ck);
    bool has_ema = false;
    for (const auto& a : ck.arrays) has_ema |= a.name.rfind(kEmaPrefix, 0) == 0;
    CHECK(has_ema);

    Network other(default_architecture(16, 0, 2), 9);
    load_parameters(other, ck, true);
    for (std::size_t i = 0; i < shadow.size(); ++i) CHECK(other.parameters()[i]->value == shadow[i]);
    load_parameters(other, ck, false);
    CHECK(other.parameters()[0]->value == net.parameters()[0]->value);

    std::istringstream bad("FSCX....");
    CHECK_THROWS_AS(read_checkpoint(bad, "bad"), Error);
    Network wrong(default_architecture(16, 0, 3), 1);
    CHECK_THROWS_AS(load_parameters(wrong, ck, true), Error);
  }

  TEST_CASE("augmentation identities") {
    Rng rng(21);
    const auto img = random_image(8, rng);
    Rng r1(3);
    CHECK(augment(img, AugmentRanges::identity(), r1) == img);
    CHECK(flip_horizontal(flip_horizontal(img)) == img);
    CHECK(flip_vertical(flip_vertical(img)) == img);
    CHECK(flip_horizontal(img).at(2, 0, 1) == img.at(2, 7, 1));

    RgbImage gray(6, 0.4);
    auto g = gray;
    adjust_saturation(g, 1.2);
    CHECK(g == gray);
    adjust_hue(g, 0.02);
    CHECK(g == gray);
    adjust_brightness(g, 0.1);
    CHECK(g.at(0, 0, 0) == doctest::Approx(0.5));
  }

  TEST_CASE("augmentation preserves shape, range and stream use") {
    Rng rng(22);
    const auto img = random_image(16, rng);
    Rng a(5), b(5);
    const auto out = augment(img, AugmentRanges{}, a);
    CHECK(out.side == img.side);
    CHECK(out.rgb.size() == img.rgb.size());
    for (double v : out.rgb) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    augment(img, AugmentRanges::identity(), b);
    CHECK(a.next_u64() == b.next_u64());
  }

  TEST_CASE("schedule json round trip") {
    TrainSchedule s;
    s.base_lr = 0.03;
    s.max_epochs = 7;
    nlohmann::json j = s;
    CHECK(j.get<TrainSchedule>() == s);
    AugmentRanges r = AugmentRanges::identity();
    nlohmann::json jr = r;
    CHECK(jr.get<AugmentRanges>() == r);
  }
}
