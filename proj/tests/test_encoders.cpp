#include <cmath>
#include <filesystem>
#include <numeric>

#include "avloc/avic_io.hpp"
#include "avloc/encoders.hpp"
#include "avloc/error.hpp"
#include "avloc/gradcheck.hpp"
#include "doctest.h"

using namespace avloc;
using namespace avloc::enc;

namespace {

EncoderConfig small() {
  EncoderConfig c;
  c.image_width = 8;
  c.image_height = 6;
  c.channels = 2;
  c.grid_w = 4;
  c.grid_h = 3;
  c.mel_bins = 5;
  c.hidden = 4;
  c.embed_dim = 3;
  return c;
}

Tensor random_image(const EncoderConfig& c, Rng& r) {
  Tensor t({c.image_width, c.image_height, c.channels});
  for (auto& v : t.data()) v = r.draw_uniform();
  return t;
}

dsp::Spectrogram random_lms(std::size_t mel, std::size_t frames, Rng& r) {
  dsp::Spectrogram s;
  s.mel_bins = mel;
  s.values = Tensor({mel, frames});
  for (auto& v : s.values.data()) v = r.draw_uniform(-10, 5);
  return s;
}

ParamVector random_params(const EncoderConfig& c, Rng& r) {
  auto p = init_params(c, r);
  for (auto n : {"visual.b1", "visual.b2", "audio.b1", "audio.b2"}) {
    for (auto& v : p.at(n).data()) v = r.draw_uniform(-0.3, 0.3);
  }
  return p;
}

}  // namespace

TEST_CASE("init: shapes, ranges, zero biases, determinism") {
  EncoderConfig c;
  Rng a(1), b(1);
  auto p = init_params(c, a);
  CHECK(p == init_params(c, b));
  CHECK(p.at("visual.w1").shape() == Shape{32, 192});
  CHECK(p.at("visual.w2").shape() == Shape{16, 32});
  CHECK(p.at("audio.w1").shape() == Shape{32, 64});
  for (auto& [name, fan_in] : std::vector<std::pair<std::string, double>>{
           {"visual.w1", 192}, {"visual.w2", 32}, {"audio.w1", 64}, {"audio.w2", 32}}) {
    for (double v : p.at(name).data()) CHECK(std::abs(v) <= 1.0 / std::sqrt(fan_in));
  }
  for (auto n : {"visual.b1", "visual.b2", "audio.b1", "audio.b2"}) CHECK(p.at(n).max() == 0.0);
}

TEST_CASE("snapshot is isolated from later updates") {
  EncoderConfig c;
  Rng r(2);
  auto p = init_params(c, r);
  auto s = take_snapshot(p, 3);
  const double before = p.flat(0);
  p.flat(0) += 1.0;
  CHECK(s.params().flat(0) == before);
  CHECK(s.epoch() == 3);
}

TEST_CASE("visual map shape and patch layout") {
  EncoderConfig c;
  Rng r(3);
  auto p = init_params(c, r);
  Tensor img({64, 64, 3}, 0.2);
  // Make patch (i=1, j=2) and (i=5, j=6) identical but different from the rest.
  for (int dx = 0; dx < 8; ++dx) {
    for (int dy = 0; dy < 8; ++dy) {
      for (int ch = 0; ch < 3; ++ch) {
        const double v = 0.1 * ((dx * 3 + dy + ch) % 7);
        img[((8 + dx) * 64 + (16 + dy)) * 3 + ch] = v;
        img[((40 + dx) * 64 + (48 + dy)) * 3 + ch] = v;
      }
    }
  }
  auto v = visual_encode(p, c, img);
  CHECK(v.values.shape() == Shape{8, 8, 16});
  CHECK(v.values.all_finite());
  auto a = v.patch(1 * 8 + 2), b = v.patch(5 * 8 + 6), bg = v.patch(0);
  CHECK(std::equal(a.begin(), a.end(), b.begin()));
  CHECK_FALSE(std::equal(a.begin(), a.end(), bg.begin()));
  CHECK_THROWS_AS(visual_encode(p, c, Tensor({32, 32, 3})), ShapeError);
}

TEST_CASE("extract_patches pixel order") {
  auto c = small();
  Tensor img({8, 6, 2});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  c.image_shift = 0.0;
  auto P = extract_patches(c, img);
  CHECK(P.shape() == Shape{12, 8});
  // patch p = i*h + j covers x in [2i, 2i+2), y in [2j, 2j+2); row order dx, dy, c.
  const std::size_t i = 2, j = 1, p = i * 3 + j;
  std::size_t k = 0;
  for (std::size_t dx = 0; dx < 2; ++dx)
    for (std::size_t dy = 0; dy < 2; ++dy)
      for (std::size_t ch = 0; ch < 2; ++ch) CHECK(P(p, k++) == img[((2 * i + dx) * 6 + 2 * j + dy) * 2 + ch]);
}

TEST_CASE("audio embedding: unit norm, permutation invariance, sensitivity") {
  EncoderConfig c;
  Rng r(4);
  auto p = init_params(c, r);
  auto lms = random_lms(64, 49, r);
  auto a = audio_encode(p, c, lms);
  CHECK(a.unit_norm);
  CHECK(std::abs(l2_norm(a.values.data()) - 1.0) <= 1e-9);

  auto perm = lms;
  std::vector<std::size_t> order(49);
  std::iota(order.begin(), order.end(), 0);
  r.shuffle(order);
  for (std::size_t m = 0; m < 64; ++m)
    for (std::size_t t = 0; t < 49; ++t) perm.values(m, t) = lms.values(m, order[t]);
  auto b = audio_encode(p, c, perm);
  for (std::size_t i = 0; i < 16; ++i) CHECK(b.values[i] == doctest::Approx(a.values[i]).epsilon(1e-12));

  dsp::Spectrogram zero;
  zero.mel_bins = 64;
  zero.values = Tensor({64, 49}, 0.0);
  auto tone = zero;
  for (std::size_t t = 0; t < 49; ++t) tone.values(10, t) = 5.0;
  auto za = audio_encode(p, c, zero), ta = audio_encode(p, c, tone);
  CHECK(l2_norm((za.values - ta.values).data()) > 1e-3);
  CHECK_THROWS_AS(audio_encode(p, c, random_lms(32, 49, r)), ShapeError);
}

TEST_CASE("audio standardisation") {
  auto c = small();
  Rng r(9);
  auto a = random_lms(5, 7, r), b = random_lms(5, 3, r);
  for (std::size_t t = 0; t < 7; ++t) a.values(2, t) = 4.0;  // constant bin
  for (std::size_t t = 0; t < 3; ++t) b.values(2, t) = 4.0;
  fit_audio_standardization(c, {&a, &b});
  REQUIRE(c.audio_shift.size() == 5);
  REQUIRE(c.audio_gain.size() == 5);
  CHECK(c.audio_shift[2] == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(c.audio_gain[2] == 1.0);
  for (std::size_t m = 0; m < 5; ++m) {
    if (m == 2) continue;
    double mean = 0.0, var = 0.0;
    for (const auto* s : {&a, &b})
      for (std::size_t t = 0; t < s->values.extent(1); ++t) mean += s->values(m, t) / 10.0;
    for (const auto* s : {&a, &b})
      for (std::size_t t = 0; t < s->values.extent(1); ++t)
        var += (s->values(m, t) - mean) * (s->values(m, t) - mean) / 10.0;
    CHECK(c.audio_shift[m] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(c.audio_gain[m] == doctest::Approx(1.0 / std::sqrt(var)).epsilon(1e-12));
  }
  CHECK_NOTHROW(c.validate());
  auto j = nlohmann::json(c);
  CHECK(j.get<EncoderConfig>().audio_gain == c.audio_gain);

  // Standardised input: a shift of every frame by the fitted mean is undone.
  auto p = random_params(c, r);
  auto shifted = a;
  EncoderConfig moved = c;
  for (std::size_t m = 0; m < 5; ++m) {
    moved.audio_shift[m] += 1.5;
    for (std::size_t t = 0; t < 7; ++t) shifted.values(m, t) += 1.5;
  }
  auto e1 = audio_encode(p, c, a), e2 = audio_encode(p, moved, shifted);
  for (std::size_t i = 0; i < c.embed_dim; ++i) CHECK(e1.values[i] == doctest::Approx(e2.values[i]).epsilon(1e-12));

  auto bad = c;
  bad.audio_gain.pop_back();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.audio_gain[0] = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(fit_audio_standardization(c, {}), ShapeError);
  auto wrong = random_lms(4, 3, r);
  CHECK_THROWS_AS(fit_audio_standardization(c, {&wrong}), ShapeError);
}

TEST_CASE("phi cases") {
  VisualFeatureMap v;
  v.values = Tensor({2, 1, 2});
  v.values[0] = 3;
  v.values[1] = 4;
  v.values[2] = -3;
  v.values[3] = -4;
  std::vector<std::size_t> one{0};
  auto single = phi_subset(v, one);
  CHECK(single.value[0] == doctest::Approx(0.6));
  CHECK(single.value[1] == doctest::Approx(0.8));
  auto both = phi(v);
  CHECK(both.degenerate);
  CHECK(both.value == std::vector<double>{0.0, 0.0});
  std::vector<std::size_t> none;
  CHECK_THROWS(phi_subset(v, none));

  VisualFeatureMap same;
  same.values = Tensor({2, 2, 3});
  for (std::size_t p = 0; p < 4; ++p) {
    same.values[p * 3 + 0] = 1;
    same.values[p * 3 + 1] = 2;
    same.values[p * 3 + 2] = 2;
  }
  auto u = phi(same);
  CHECK(u.value[0] == doctest::Approx(1.0 / 3));
  CHECK(u.value[2] == doctest::Approx(2.0 / 3));
  std::vector<std::size_t> all{0, 1, 2, 3};
  CHECK(phi_subset(same, all).value == phi(same).value);
  auto raw = phi(same, false);
  CHECK(raw.value == u.value);
}

TEST_CASE("encoder gradients pass finite differences") {
  const auto c = small();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    const auto p = random_params(c, r);
    const auto img = random_image(c, r);
    const auto lms = random_lms(c.mel_bins, 4, r);
    Tensor wv({c.num_patches(), c.embed_dim});
    for (auto& x : wv.data()) x = r.draw_uniform(-1, 1);
    std::vector<double> wa(c.embed_dim);
    for (auto& x : wa) x = r.draw_uniform(-1, 1);
    std::vector<std::size_t> subset{0, 4, 7};

    // Scalar of V, of phi over a subset (both pooling modes), and of a.
    for (int mode = 0; mode < 4; ++mode) {
      Objective f = [&](const ParamVector& at, ParamVector* g) {
        if (mode == 3) {
          auto ac = audio_forward(at, c, lms);
          if (g) {
            *g = at.zeros_like();
            audio_backward(at, ac, wa, *g);
          }
          return dot(ac.pooled.unit, wa);
        }
        auto vc = visual_forward(at, c, img);
        Tensor gf({c.num_patches(), c.embed_dim}, 0.0);
        double val = 0.0;
        if (mode == 0) {
          auto rows = vc.map.rows();
          val = dot(rows.data(), wv.data());
          gf = wv;
        } else {
          auto pf = phi_subset(vc.map, subset, mode == 1);
          val = dot(pf.value, wa);
          phi_backward(pf, wa, gf);
        }
        if (g) {
          *g = at.zeros_like();
          visual_backward(at, vc, gf, *g);
        }
        return val;
      };
      auto rep = finite_diff_check(f, p, 1e-5, 1e-4);
      CHECK_MESSAGE(rep.passed, "seed " << seed << " mode " << mode << " max " << rep.max_rel_error);
    }
  }
}

TEST_CASE("checkpoint round trip is exact and validated") {
  auto c = small();
  Rng r(6);
  auto lms = random_lms(c.mel_bins, 4, r);
  fit_audio_standardization(c, {&lms});
  auto p = random_params(c, r);
  p.flat(3) = 0.1;  // not representable in float32
  Checkpoint ck{p, c, {{"note", "x"}}};
  auto dir = std::filesystem::temp_directory_path() / "avloc_test_ckpt";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, ck);
  auto back = load_checkpoint(dir);
  CHECK(back.params == p);
  CHECK(nlohmann::json(back.encoder) == nlohmann::json(c));
  CHECK(back.extra["note"] == "x");
  auto idx = nlohmann::json::parse(read_text(dir / "index.json"));
  CHECK(idx["segments"]["visual.w1"]["shape"] == std::vector<std::size_t>{c.hidden, c.patch_pixels()});
  // The float32 segment files must agree with the exact copy.
  Tensor t = read_avic(dir / idx["segments"]["audio.b2"]["file"].get<std::string>());
  t[0] += 1.0;
  write_avic(dir / idx["segments"]["audio.b2"]["file"].get<std::string>(), t);
  CHECK_THROWS(load_checkpoint(dir));
  std::filesystem::remove_all(dir);
}
