#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "avloc/avic_io.hpp"
#include "avloc/corpus.hpp"
#include "avloc/dsp.hpp"
#include "avloc/error.hpp"
#include "doctest.h"

using namespace avloc;
using namespace avloc::corpus;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("avloc_test_corpus_" + name);
  fs::remove_all(p);
  return p;
}

// Bins whose power is a local maximum well above the spectrum median.
std::set<std::size_t> peak_bins(const std::vector<double>& x, double rate) {
  dsp::Waveform w{x, rate};
  const std::size_t n = x.size();
  const std::size_t nfft = dsp::next_pow2(n);
  std::vector<std::complex<double>> buf(nfft);
  const auto win = dsp::hann_window(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = x[i] * win[i];
  dsp::fft(buf);
  std::vector<double> p(nfft / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::norm(buf[k]);
  const double top = *std::max_element(p.begin(), p.end());
  std::set<std::size_t> out;
  for (std::size_t k = 1; k + 1 < p.size(); ++k) {
    if (p[k] > 0.05 * top && p[k] >= p[k - 1] && p[k] >= p[k + 1]) out.insert(k);
  }
  return out;
}

std::size_t bin_of(double hz, std::size_t nfft, double rate) {
  return static_cast<std::size_t>(std::lround(hz * static_cast<double>(nfft) / rate));
}

}  // namespace

TEST_CASE("default config") {
  CorpusConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.width == 64);
  CHECK(c.num_classes == 8);
  CHECK(c.train_instances == 512);
  CHECK(c.test_instances == 64);
  CorpusConfig bad = c;
  bad.sounding_min = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.num_classes = 40;  // highest tone passes Nyquist at 8 kHz
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config JSON round trip rejects unknown keys") {
  CorpusConfig c;
  c.objects_max = 3;
  nlohmann::json j = c;
  CorpusConfig back = j.get<CorpusConfig>();
  CHECK(nlohmann::json(back) == j);
  j["bogus"] = 1;
  CHECK_THROWS_AS(j.get<CorpusConfig>(), ConfigError);
}

TEST_CASE("class tones are disjoint and below Nyquist") {
  CorpusConfig c;
  std::set<double> all;
  for (std::size_t k = 0; k < c.num_classes; ++k) {
    auto t = synth_class_tone(k, c);
    CHECK(t.frequencies.size() >= 2);
    CHECK(t.frequencies.size() <= 3);
    for (double f : t.frequencies) {
      CHECK(f < c.sample_rate / 2.0);
      CHECK(all.insert(f).second);
    }
  }
  CHECK(synth_class_tone(0, c).frequencies == std::vector<double>{300.0, 620.0});
  CHECK(synth_class_tone(1, c).frequencies == std::vector<double>{420.0, 740.0});
}

TEST_CASE("class 0 and class 1 spectra have disjoint peaks") {
  CorpusConfig c;
  const std::size_t n = 8000;
  auto p0 = peak_bins(render_tone(synth_class_tone(0, c), c.sample_rate, n), c.sample_rate);
  auto p1 = peak_bins(render_tone(synth_class_tone(1, c), c.sample_rate, n), c.sample_rate);
  CHECK_FALSE(p0.empty());
  for (auto b : p0) CHECK(p1.count(b) == 0);
}

TEST_CASE("textures are deterministic per seed") {
  CorpusConfig c;
  Rng a(5), b(5);
  auto ta = synth_class_texture(3, c, a);
  auto tb = synth_class_texture(3, c, b);
  CHECK(ta.period == tb.period);
  CHECK(ta.phase == tb.phase);
  CHECK(ta.base_color == tb.base_color);
}

TEST_CASE("instance invariants") {
  CorpusConfig c;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng r(s);
    auto inst = generate_instance(c, r, s);
    const auto& objs = inst.objects;
    REQUIRE(objs.size() >= c.objects_min);
    REQUIRE(objs.size() <= c.objects_max);
    CHECK(std::any_of(objs.begin(), objs.end(), [](auto& o) { return o.sounding; }));
    const auto snd = inst.sounding_classes().size();
    CHECK(snd >= std::min(c.sounding_min, objs.size()));
    CHECK(snd <= c.sounding_max);
    std::set<std::size_t> classes;
    for (std::size_t i = 0; i < objs.size(); ++i) {
      const auto& b = objs[i].box;
      CHECK(b.x0 >= 0);
      CHECK(b.x1 <= static_cast<int>(c.width));
      CHECK(b.y0 >= 0);
      CHECK(b.y1 <= static_cast<int>(c.height));
      const double frac = static_cast<double>(b.area()) / (c.width * c.height);
      CHECK(frac >= c.min_box_frac);
      CHECK(frac <= c.max_box_frac);
      CHECK(objs[i].class_id < c.num_classes);
      classes.insert(objs[i].class_id);
      for (std::size_t j = i + 1; j < objs.size(); ++j) CHECK_FALSE(b.overlaps(objs[j].box));
    }
    CHECK(classes.size() == objs.size());
    CHECK(inst.image.shape() == Shape{c.width, c.height, c.channels});
    CHECK(inst.image.min() >= 0.0);
    CHECK(inst.image.max() <= 1.0);
    CHECK(inst.waveform.samples.size() == 8000);
  }
}

TEST_CASE("explicit counts: four objects, two sounding") {
  CorpusConfig c;
  Rng r(1);
  auto inst = generate_instance(c, r, 0, 4, 2);
  CHECK(inst.objects.size() == 4);
  CHECK(inst.sounding_boxes().size() == 2);
  Rng r2(1);
  CHECK_THROWS_AS(generate_instance(c, r2, 0, 2, 3), ConfigError);
}

TEST_CASE("noise-free single source equals the class tone") {
  CorpusConfig c;
  c.audio_noise = 0.0;
  c.image_noise = 0.0;
  Rng r(9);
  auto inst = generate_instance(c, r, 0, 1, 1);
  auto ref = render_tone(synth_class_tone(inst.objects[0].class_id, c), c.sample_rate, 8000);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(inst.waveform.samples[i] == static_cast<double>(static_cast<float>(ref[i])));
  }
}

TEST_CASE("waveform peaks equal the union of sounding tones") {
  CorpusConfig c;
  c.audio_noise = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng r(s);
    auto inst = generate_instance(c, r, s);
    const std::size_t nfft = dsp::next_pow2(inst.waveform.samples.size());
    std::set<std::size_t> expected;
    for (auto k : inst.sounding_classes()) {
      for (double f : synth_class_tone(k, c).frequencies) expected.insert(bin_of(f, nfft, c.sample_rate));
    }
    CHECK(peak_bins(inst.waveform.samples, c.sample_rate) == expected);
  }
}

TEST_CASE("placement failure is reported") {
  CorpusConfig c;
  c.min_box_frac = 0.4;
  c.max_box_frac = 0.45;
  c.placement_retries = 5;
  Rng r(0);
  CHECK_THROWS_AS(generate_instance(c, r, 0, 4, 1), ConfigError);
}

TEST_CASE("generation is a pure function of config and seed") {
  CorpusConfig c;
  c.train_instances = 6;
  c.test_instances = 3;
  auto a = generate_corpus(c, 7), b = generate_corpus(c, 7), d = generate_corpus(c, 8);
  REQUIRE(a.train.size() == 6);
  REQUIRE(a.test.size() == 3);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.train[i].image == b.train[i].image);
    CHECK(a.train[i].waveform.samples == b.train[i].waveform.samples);
  }
  CHECK_FALSE(a.train[0].image == d.train[0].image);
  CHECK(a.test[0].instance_id == 6);
}

TEST_CASE("save and load round trip") {
  CorpusConfig c;
  c.train_instances = 4;
  c.test_instances = 2;
  auto dir = scratch("roundtrip");
  auto corpus = generate_corpus(c, 3);
  auto m = save_corpus(corpus, dir);
  CHECK(m.num_instances() == 6);
  auto manifest = nlohmann::json::parse(read_text(dir / "manifest.json"));
  CHECK(manifest["num_instances"] == 6);
  CHECK(manifest["W"] == 64);
  CHECK(manifest["seed"] == 3);

  auto back = load_corpus(dir);
  REQUIRE(back.train.size() == 4);
  REQUIRE(back.test.size() == 2);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.train[i].image == corpus.train[i].image);
    CHECK(back.train[i].waveform.samples == corpus.train[i].waveform.samples);
    CHECK(back.train[i].objects.size() == corpus.train[i].objects.size());
    CHECK(back.train[i].sounding_classes() == corpus.train[i].sounding_classes());
  }

  // Same seed, second directory: identical bytes.
  auto dir2 = scratch("roundtrip2");
  save_corpus(generate_corpus(c, 3), dir2);
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), dir);
    CHECK(read_bytes(e.path()) == read_bytes(dir2 / rel));
  }

  // A missing referenced file is an error.
  fs::remove(dir / m.splits[0].instances[0] / "image.avic");
  CHECK_THROWS(load_corpus(dir));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}
