/*
 * Copyright 2026 The semifair Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "semifair/models.hpp"
#include "semifair/objectives.hpp"

using namespace semifair;
using namespace semifair::models;
using semifair::testing::random_tensor;

namespace {

ModelConfig small_config(BackboneKind kind, std::size_t d = 5) {
  ModelConfig c;
  c.backbone = kind;
  c.input_dim = d;
  c.hidden_dim = 7;
  c.latent_dim = 3;
  c.fm_factors = 4;
  c.fm_linear_dim = 3;
  return c;
}

Tensor random_x(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor({n, d}, rng);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a == b;
}

}  // namespace

TEST_CASE("backbone output has hidden width for every kind") {
  for (auto kind : {BackboneKind::kLR, BackboneKind::kDNN, BackboneKind::kFM}) {
    ModelConfig c = small_config(kind);
    c.hidden_dim = 256;
    ModelBundle b(c, 3);
    Session s(b);
    auto enc = encode(s, s.input(random_x(4, 5, 1)), false);
    CHECK(enc.r_f.shape() == Shape{4, 256});
    CHECK(enc.r_b.shape() == Shape{4, 256});
    CHECK(enc.r.shape() == Shape{4, 256});
  }
}

TEST_CASE("backbone rejects wrong input width") {
  ModelBundle b(small_config(BackboneKind::kDNN), 1);
  Session s(b);
  CHECK_THROWS_AS(backbone_forward(s, "bias_free", s.input(random_x(2, 4, 1))),
                  DimensionError);
}

TEST_CASE("DNN with zero weights gives zero output") {
  ModelBundle b(small_config(BackboneKind::kDNN), 1);
  b.zero_values("bias_free");
  Session s(b);
  Tensor r = backbone_forward(s, "bias_free", s.input(random_x(3, 5, 2))).value();
  for (double v : r.data()) CHECK(v == 0.0);
}

TEST_CASE("LR backbone is elementwise weights then the fixed projection") {
  ModelBundle b(small_config(BackboneKind::kLR), 4);
  Tensor x = random_x(3, 5, 7);
  Session s(b);
  Tensor r = backbone_forward(s, "bias_free", s.input(x)).value();
  const Tensor& w = b.param("bias_free.w").value;
  const Tensor& p = b.param("bias_free.proj").value;
  CHECK_FALSE(b.param("bias_free.proj").trainable);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 5; ++k) acc += w[k] * x.at(i, k) * p.at(k, j);
      CHECK(r.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("FM interaction hand example") {
  ad::Graph g;
  auto x = g.constant(Tensor::from_rows({{1, 1}}));
  auto v = g.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  Tensor inter = fm_interaction(x, v).value();
  CHECK(inter.at(0, 0) == 0.0);
  CHECK(inter.at(0, 1) == 0.0);
}

TEST_CASE("FM pairwise identity against brute force") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + rng() % 20;
    const std::size_t k = 1 + rng() % 8;
    Tensor x = random_tensor({1, d}, rng);
    Tensor v = random_tensor({d, k}, rng);
    ad::Graph g;
    Tensor inter = fm_interaction(g.constant(x), g.constant(v)).value();
    double fast = 0.0;
    for (std::size_t f = 0; f < k; ++f) fast += inter.at(0, f);
    double brute = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) {
        double dot = 0.0;
        for (std::size_t f = 0; f < k; ++f) dot += v.at(i, f) * v.at(j, f);
        brute += dot * x.at(0, i) * x.at(0, j);
      }
    }
    CHECK(std::abs(fast - brute) < 1e-10);
  }
}

TEST_CASE("encode sums the two representations") {
  for (auto kind : {BackboneKind::kLR, BackboneKind::kDNN, BackboneKind::kFM}) {
    ModelBundle b(small_config(kind), 9);
    Session s(b);
    auto enc = encode(s, s.input(random_x(6, 5, 3)), false);
    const Tensor& rf = enc.r_f.value();
    const Tensor& rb = enc.r_b.value();
    const Tensor& r = enc.r.value();
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] - (rf[i] + rb[i]) == 0.0);
  }
}

TEST_CASE("zeroed bias-aware encoder makes r equal r_f") {
  ModelBundle b(small_config(BackboneKind::kDNN), 9);
  b.zero_values("bias_aware");
  Session s(b);
  auto enc = encode(s, s.input(random_x(4, 5, 3)), false);
  CHECK(bit_equal(enc.r.value(), enc.r_f.value()));
}

TEST_CASE("training-mode encode needs an rng and applies dropout") {
  ModelBundle b(small_config(BackboneKind::kDNN), 9);
  Tensor x = random_x(4, 5, 3);
  {
    Session s(b);
    CHECK_THROWS_AS(encode(s, s.input(x), true), std::invalid_argument);
  }
  Rng rng = make_rng({1});
  Session s(b, &rng);
  auto train = encode(s, s.input(x), true);
  auto eval = encode(s, s.input(x), false);
  CHECK_FALSE(bit_equal(train.r_f.value(), eval.r_f.value()));
}

TEST_CASE("attribute head is uniform on zero input with zero bias") {
  ModelBundle b(small_config(BackboneKind::kDNN), 2);
  Session s(b);
  Tensor z_hat = attribute_head(s, s.input(Tensor({3, 7}))).value();
  for (double v : z_hat.data()) CHECK(v == 0.5);
}

TEST_CASE("head outputs are probability rows") {
  ModelBundle b(small_config(BackboneKind::kFM), 2);
  Session s(b);
  auto enc = encode(s, s.input(random_x(8, 5, 11)), false);
  auto h = predict_heads(s, enc);
  for (const ad::Var* v : {&h.z_hat, &h.z_tilde, &h.y_hat}) {
    const Tensor& p = v->value();
    for (std::size_t r = 0; r < p.rows(); ++r) {
      CHECK(std::abs(p.at(r, 0) + p.at(r, 1) - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("discriminator reversal flips the encoder gradient against a control run") {
  const double lambda = 0.4;
  ModelConfig c = small_config(BackboneKind::kDNN);
  c.lambda = lambda;
  Tensor x = random_x(6, 5, 5);
  Tensor z = objectives::one_hot({0, 1, 1, 0, 1, 0}, 2);

  ModelBundle with_grl(c, 17);
  {
    Session s(with_grl);
    auto r_f = encode_bias_free(s, s.input(x), false);
    auto loss = objectives::adversarial_loss(s.input(z), discriminator_head(s, r_f));
    s.backward(loss);
  }
  ModelBundle control(c, 17);
  {
    Session s(control);
    auto r_f = encode_bias_free(s, s.input(x), false);
    auto probs = ad::softmax(ad::dense(r_f, s.param("disc.w"), s.param("disc.b")));
    s.backward(objectives::adversarial_loss(s.input(z), probs));
  }
  for (const auto& [name, p] : with_grl.params()) {
    const Tensor& g = p.grad;
    const Tensor& gc = control.param(name).grad;
    const bool encoder = name.rfind("bias_free", 0) == 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double want = encoder ? -lambda * gc[i] : gc[i];
      CHECK(std::abs(g[i] - want) <= 1e-12 * std::max(1.0, std::abs(want)));
    }
  }
  double norm = 0.0;
  for (double v : control.param("bias_free.w1").grad.data()) norm += v * v;
  CHECK(norm > 0.0);
}

TEST_CASE("task head is affine in the representation") {
  ModelBundle b(small_config(BackboneKind::kLR), 8);
  Session s(b);
  auto enc = encode(s, s.input(random_x(5, 5, 8)), false);
  Tensor l_r = task_logits(s, enc.r).value();
  Tensor l_f = task_logits(s, enc.r_f).value();
  Tensor l_b = task_logits(s, enc.r_b).value();
  const Tensor& bias = b.param("task.b").value;
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(std::abs(l_r.at(i, j) - (l_f.at(i, j) + l_b.at(i, j) - bias[j])) < 1e-12);
    }
  }
}

TEST_CASE("predict_test uses the bias-free path") {
  ModelBundle b(small_config(BackboneKind::kDNN), 21);
  Tensor x = random_x(6, 5, 4);
  CHECK(bit_equal(predict_test(b, x), predict_test(b, x)));

  // A few plain gradient steps on the task loss through r.
  Tensor y = objectives::one_hot({0, 1, 1, 0, 0, 1}, 2);
  for (int step = 0; step < 20; ++step) {
    b.zero_grad();
    Session s(b);
    auto enc = encode(s, s.input(x), false);
    s.backward(objectives::task_loss(s.input(y), task_head(s, enc.r)));
    for (auto& [name, p] : b.params()) {
      if (!p.trainable) continue;
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= 0.1 * p.grad[i];
    }
  }
  Tensor train_time;
  {
    Session s(b);
    train_time = task_head(s, encode(s, s.input(x), false).r).value();
  }
  CHECK_FALSE(bit_equal(predict_test(b, x), train_time));

  b.zero_values("bias_aware");
  Session s(b);
  auto heads = predict_heads(s, encode(s, s.input(x), false));
  CHECK(bit_equal(predict_test(b, x), heads.y_hat.value()));
}

TEST_CASE("vae with zero decoder outputs the bias") {
  ModelBundle b(small_config(BackboneKind::kDNN), 3);
  b.param("dec.w").value.fill(0.0);
  b.param("dec.b").value = Tensor({5}, std::vector<double>{1, 2, 3, 4, 5});
  Session s(b);
  std::mt19937_64 rng(1);
  auto out = vae_forward(s, s.input(random_x(2, 5, 6)),
                         s.input(objectives::uniform_rows(2, 2)),
                         s.input(objectives::one_hot({0, 1}, 2)),
                         random_tensor({2, 3}, rng));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 5; ++j) CHECK(out.x_hat.value().at(i, j) == j + 1.0);
  }
}

TEST_CASE("vae with zero variance ignores epsilon") {
  ModelBundle b(small_config(BackboneKind::kDNN), 3);
  b.param("vae.sigma.w").value.fill(0.0);
  b.param("vae.sigma.b").value.fill(-800.0);
  Tensor x = random_x(3, 5, 6);
  std::mt19937_64 rng(2);
  auto run = [&](const Tensor& eps) {
    Session s(b);
    auto out = vae_forward(s, s.input(x), s.input(objectives::uniform_rows(3, 2)),
                           s.input(objectives::one_hot({0, 1, 0}, 2)), eps);
    for (double v : out.sigma.value().data()) CHECK(v == 0.0);
    return out.x_hat.value();
  };
  CHECK(bit_equal(run(random_tensor({3, 3}, rng)), run(random_tensor({3, 3}, rng))));
}

TEST_CASE("vae z_hat slot content changes the reconstruction") {
  ModelBundle b(small_config(BackboneKind::kDNN), 3);
  Tensor x = random_x(2, 5, 6);
  Tensor eps({2, 3}, 0.3);
  auto run = [&](const Tensor& slot) {
    Session s(b);
    return vae_forward(s, s.input(x), s.input(objectives::uniform_rows(2, 2)),
                       s.input(slot), eps)
        .x_hat.value();
  };
  CHECK_FALSE(bit_equal(run(objectives::one_hot({0, 0}, 2)),
                        run(objectives::uniform_rows(2, 2))));
}

TEST_CASE("vae rejects slot rows that are not distributions") {
  ModelBundle b(small_config(BackboneKind::kDNN), 3);
  Session s(b);
  Tensor bad = Tensor::from_rows({{0.5, 0.6}});
  Tensor ok = objectives::uniform_rows(1, 2);
  Tensor eps({1, 3});
  auto x = s.input(random_x(1, 5, 1));
  CHECK_THROWS_AS(vae_forward(s, x, s.input(bad), s.input(ok), eps), std::invalid_argument);
  CHECK_THROWS_AS(vae_forward(s, x, s.input(ok), s.input(bad), eps), std::invalid_argument);
  CHECK_NOTHROW(vae_forward(s, x, s.input(Tensor::from_rows({{0.5, 0.5 + 1e-7}})),
                            s.input(ok), eps));
}

TEST_CASE("parameter names are unique and prefixed") {
  ModelConfig c = small_config(BackboneKind::kFM);
  c.head_hidden = 4;
  ModelBundle b(c, 1);
  for (const auto& [name, p] : b.params()) {
    CHECK(name == p.name);
    const bool known = name.rfind("bias_free.", 0) == 0 || name.rfind("bias_aware.", 0) == 0 ||
                       name.rfind("attr.", 0) == 0 || name.rfind("disc.", 0) == 0 ||
                       name.rfind("task.", 0) == 0 || name.rfind("vae.", 0) == 0 ||
                       name.rfind("dec.", 0) == 0;
    CHECK(known);
  }
  CHECK(b.has_param("disc.h.w"));
  CHECK(b.param("dec.w").value.shape() == Shape{2 + 2 + 3, 5});
}

TEST_CASE("bundle initialization is deterministic in the seed") {
  ModelBundle a(small_config(BackboneKind::kDNN), 5);
  ModelBundle b(small_config(BackboneKind::kDNN), 5);
  ModelBundle c(small_config(BackboneKind::kDNN), 6);
  CHECK(bit_equal(a.param("bias_free.w1").value, b.param("bias_free.w1").value));
  CHECK_FALSE(bit_equal(a.param("bias_free.w1").value, c.param("bias_free.w1").value));
}

TEST_CASE("checkpoint round trip is bit-identical") {
  for (auto kind : {BackboneKind::kLR, BackboneKind::kDNN, BackboneKind::kFM}) {
    ModelConfig c = small_config(kind);
    c.lambda = 0.7;
    ModelBundle b(c, 31);
    b.set_trainable("attr", false);
    const auto path = std::filesystem::temp_directory_path() / "semifair_test_ckpt.bin";
    save_checkpoint(b, path, 0xabcdef, 31, {{"method", "test"}});
    auto [loaded, header] = load_checkpoint(path);
    CHECK(header.config_hash == 0xabcdef);
    CHECK(header.seed == 31);
    CHECK(header.metadata.at("method") == "test");
    CHECK(loaded.lambda() == 0.7);
    CHECK(loaded.config().backbone == kind);
    CHECK_FALSE(loaded.param("attr.w").trainable);
    for (const auto& [name, p] : b.params()) {
      CHECK(bit_equal(p.value, loaded.param(name).value));
    }
    Tensor x = random_x(4, 5, 12);
    CHECK(bit_equal(predict_test(b, x), predict_test(loaded, x)));
    std::filesystem::remove(path);
  }
}

TEST_CASE("checkpoint loader rejects foreign files") {
  const auto path = std::filesystem::temp_directory_path() / "semifair_test_notckpt.bin";
  {
    std::ofstream out(path);
    out << "hello world, not a checkpoint";
  }
  CHECK_THROWS(load_checkpoint(path));
  std::filesystem::remove(path);
}

TEST_CASE("lambda must be non-negative") {
  ModelConfig c = small_config(BackboneKind::kDNN);
  c.lambda = -0.1;
  CHECK_THROWS_AS(ModelBundle(c, 1), DomainError);
  ModelBundle b(small_config(BackboneKind::kDNN), 1);
  CHECK_THROWS_AS(b.set_lambda(-1.0), DomainError);
}
