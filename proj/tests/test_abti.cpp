#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "avseg/abti.hpp"
#include "avseg/gradcheck.hpp"
#include "oracles.hpp"

using namespace avseg;

namespace {

template <typename T>
std::vector<Tensor<T>> random_frames(int t, int hw, int c, Rng& rng) {
  std::vector<Tensor<T>> out;
  for (int i = 0; i < t; ++i) out.push_back(Tensor<T>::uniform(hw, c, T(-1), T(1), rng));
  return out;
}

template <typename T>
std::vector<Var> bind_frames(Tape<T>& tape, const std::vector<Tensor<T>>& frames) {
  std::vector<Var> vars;
  for (const auto& f : frames) vars.push_back(tape.constant(f));
  return vars;
}

}  // namespace

TEST_CASE("gathering: single pixel makes the attention trivially 1") {
  Rng rng(5);
  Abti<float> m(3, 4, 2, 1, rng);
  Tape<float> tape;
  auto frames = random_frames<float>(2, 1, 3, rng);  // H=W=1
  Tensor<float> audio = Tensor<float>::uniform(2, 4, -1.0f, 1.0f, rng);
  auto g = m.gather(tape, tape.constant(audio), bind_frames(tape, frames), false);
  for (const auto& attn : g.attention) {
    CHECK(tape.value(attn).numel() == 1);
    CHECK(tape.value(attn)[0] == doctest::Approx(1.0f));
  }
  // O_pq equals f_n(F_q) at the single pixel
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q) {
      const auto fn = oracle::linear(frames[q], m.pixel_value);
      for (int c = 0; c < 2; ++c)
        CHECK(tape.value(g.compact)(p * 2 + q, c) == doctest::Approx(fn(0, c)).epsilon(1e-5));
    }
}

TEST_CASE("gathering: zero audio projection gives uniform attention and mean pooling") {
  Rng rng(6);
  Abti<float> m(3, 4, 2, 1, rng);
  m.audio_proj.w.value.set_zero();
  m.audio_proj.b.value.set_zero();
  Tape<float> tape;
  const int hw = 6;
  auto frames = random_frames<float>(2, hw, 3, rng);
  Tensor<float> audio = Tensor<float>::uniform(2, 4, -1.0f, 1.0f, rng);
  auto g = m.gather(tape, tape.constant(audio), bind_frames(tape, frames), false);
  for (const auto& attn : g.attention)
    for (float v : tape.value(attn).storage())
      CHECK(v == doctest::Approx(1.0f / hw).epsilon(1e-5));
  for (int q = 0; q < 2; ++q) {
    const auto fn = oracle::linear(frames[q], m.pixel_value);
    for (int c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (int j = 0; j < hw; ++j) mean += fn(j, c);
      mean /= hw;
      CHECK(tape.value(g.compact)(0 * 2 + q, c) == doctest::Approx(mean).epsilon(1e-4));
    }
  }
}

TEST_CASE("gathering matches the brute-force reference") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Abti<float> m(3, 4, 2, 1, rng);
    Tape<float> tape;
    auto frames = random_frames<float>(2, 2, 3, rng);  // 1x2 spatial
    Tensor<float> audio = Tensor<float>::uniform(2, 4, -1.0f, 1.0f, rng);
    auto g = m.gather(tape, tape.constant(audio), bind_frames(tape, frames), false);
    auto ref = oracle::bridge_gather(audio, frames, m);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 2; ++j) {
        CHECK(tape.value(g.attention[i])(0, j) ==
              doctest::Approx(ref.attention[i](0, j)).epsilon(1e-5));
        CHECK(tape.value(g.compact)(i, j) == doctest::Approx(ref.compact[i](0, j)).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("interaction") {
  Rng rng(8);

  SUBCASE("identical tokens stay identical") {
    Abti<float> m(3, 4, 4, 2, rng);
    Tape<float> tape;
    Tensor<float> row = Tensor<float>::uniform(1, 4, -1.0f, 1.0f, rng);
    Tensor<float> tokens(4, 4);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) tokens(r, c) = row(0, c);
    Var out = m.interact(tape, tape.constant(tokens), false);
    for (int r = 1; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        CHECK(tape.value(out)(r, c) == doctest::Approx(tape.value(out)(0, c)));
  }

  SUBCASE("single token: attention weight 1, residual structure") {
    Abti<float> m(3, 4, 4, 1, rng);
    Tape<float> tape;
    Tensor<float> token = Tensor<float>::uniform(1, 4, -1.0f, 1.0f, rng);
    Var out = m.interact(tape, tape.constant(token), false);
    const auto ref = oracle::bridge_interact(token, m);
    for (int c = 0; c < 4; ++c)
      CHECK(tape.value(out)(0, c) == doctest::Approx(ref(0, c)).epsilon(1e-5));
  }

  SUBCASE("matches brute force on T=2, single head") {
    for (int trial = 0; trial < 20; ++trial) {
      Abti<float> m(3, 4, 2, 1, rng);
      Tape<float> tape;
      Tensor<float> tokens = Tensor<float>::uniform(4, 2, -1.0f, 1.0f, rng);
      Var out = m.interact(tape, tape.constant(tokens), false);
      const auto ref = oracle::bridge_interact(tokens, m);
      for (std::size_t i = 0; i < ref.numel(); ++i)
        CHECK(tape.value(out)[i] == doctest::Approx(ref[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("remapping") {
  Rng rng(9);

  SUBCASE("zero output projection is an exact identity") {
    Abti<float> m(3, 4, 2, 1, rng);  // out_proj zero-initialized by construction
    Tape<float> tape;
    auto frames = random_frames<float>(3, 4, 3, rng);
    Tensor<float> audio = Tensor<float>::uniform(3, 4, -1.0f, 1.0f, rng);
    auto out = m.forward(tape, tape.constant(audio), bind_frames(tape, frames), false);
    for (int q = 0; q < 3; ++q)
      for (std::size_t i = 0; i < frames[q].numel(); ++i)
        CHECK(tape.value(out[q])[i] == frames[q][i]);  // exact
  }

  SUBCASE("single pixel: enhanced = original + sum of projected tokens") {
    Abti<float> m(3, 4, 2, 1, rng);
    Rng wrng(10);
    m.out_proj.w.value = Tensor<float>::uniform(3, 2, -1.0f, 1.0f, wrng);
    m.out_proj.b.value = Tensor<float>::uniform(1, 3, -0.5f, 0.5f, wrng);
    Tape<float> tape;
    auto frames = random_frames<float>(2, 1, 3, rng);
    Tensor<float> audio = Tensor<float>::uniform(2, 4, -1.0f, 1.0f, rng);
    auto g = m.gather(tape, tape.constant(audio), bind_frames(tape, frames), false);
    Var updated = m.interact(tape, g.compact, false);
    auto out = m.remap_enhance(tape, g, updated, bind_frames(tape, frames), false);
    const auto fo = oracle::linear(tape.value(updated), m.out_proj);
    for (int q = 0; q < 2; ++q)
      for (int c = 0; c < 3; ++c) {
        const float expected = frames[q](0, c) + fo(0 * 2 + q, c) + fo(1 * 2 + q, c);
        CHECK(tape.value(out[q])(0, c) == doctest::Approx(expected).epsilon(1e-5));
      }
  }

  SUBCASE("residual decomposition holds exactly by construction") {
    Abti<float> m(2, 3, 2, 1, rng);
    Rng wrng(11);
    m.out_proj.w.value = Tensor<float>::uniform(2, 2, -1.0f, 1.0f, wrng);
    Tape<float> tape;
    auto frames = random_frames<float>(2, 3, 2, rng);
    Tensor<float> audio = Tensor<float>::uniform(2, 3, -1.0f, 1.0f, rng);
    auto frame_vars = bind_frames(tape, frames);
    auto g = m.gather(tape, tape.constant(audio), frame_vars, false);
    Var updated = m.interact(tape, g.compact, false);
    auto enhanced = m.remap_enhance(tape, g, updated, frame_vars, false);
    // recompute sum_p F~_pq independently and compare to F^_q - F_q
    const auto fo = oracle::linear(tape.value(updated), m.out_proj);
    for (int q = 0; q < 2; ++q) {
      for (int j = 0; j < 3; ++j)
        for (int c = 0; c < 2; ++c) {
          double acc = 0.0;
          for (int p = 0; p < 2; ++p)
            acc += double(tape.value(g.attention[p * 2 + q])(0, j)) * double(fo(p * 2 + q, c));
          const double delta = double(tape.value(enhanced[q])(j, c)) - double(frames[q](j, c));
          CHECK(delta == doctest::Approx(acc).epsilon(1e-4));
        }
    }
  }
}

TEST_CASE("full bridge matches a monolithic brute-force reference") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    Abti<float> m(3, 4, 2, 1, rng);
    Rng wrng(100 + trial);
    m.out_proj.w.value = Tensor<float>::uniform(3, 2, -0.5f, 0.5f, wrng);
    m.out_proj.b.value = Tensor<float>::uniform(1, 3, -0.2f, 0.2f, wrng);
    Tape<float> tape;
    auto frames = random_frames<float>(2, 2, 3, rng);
    Tensor<float> audio = Tensor<float>::uniform(2, 4, -1.0f, 1.0f, rng);
    auto out = m.forward(tape, tape.constant(audio), bind_frames(tape, frames), false);
    auto ref = oracle::bridge_full(audio, frames, m);
    for (int q = 0; q < 2; ++q)
      for (std::size_t i = 0; i < ref[q].numel(); ++i) {
        const double a = tape.value(out[q])[i], b = ref[q][i];
        CHECK(std::abs(a - b) <= 1e-5 * std::max({1.0, std::abs(a), std::abs(b)}));
      }
  }
}

TEST_CASE("attention rows always sum to 1") {
  Rng rng(13);
  Abti<float> m(3, 4, 4, 2, rng);
  Tape<float> tape;
  auto frames = random_frames<float>(3, 8, 3, rng);
  Tensor<float> audio = Tensor<float>::uniform(3, 4, -2.0f, 2.0f, rng);
  auto g = m.gather(tape, tape.constant(audio), bind_frames(tape, frames), false);
  for (const auto& attn : g.attention) {
    double s = 0.0;
    for (float v : tape.value(attn).storage()) s += v;
    CHECK(std::abs(s - 1.0) < 1e-5);
  }
}

TEST_CASE("bridge gradients match finite differences") {
  Rng rng(14);
  Abti<double> m(3, 4, 2, 1, rng);
  Rng wrng(15);
  m.out_proj.w.value = Tensor<double>::uniform(3, 2, -0.5, 0.5, wrng);
  auto frames = random_frames<double>(2, 2, 3, rng);
  Tensor<double> audio = Tensor<double>::uniform(2, 4, -1.0, 1.0, rng);
  Tensor<double> probe = Tensor<double>::uniform(2, 3, 0.5, 1.5, rng);

  auto build = [&](Tape<double>& tape, bool train) {
    auto out = m.forward(tape, tape.constant(audio), bind_frames(tape, frames), train);
    Var loss{};
    for (auto f : out) {
      Var l = tape.sum_all(tape.mul(f, tape.constant(probe)));
      loss = loss.valid() ? tape.add(loss, l) : l;
    }
    return loss;
  };
  auto forward = [&]() {
    Tape<double> tape;
    return tape.value(build(tape, false))[0];
  };
  auto analytic = [&]() {
    m.visit("", [](const std::string&, Param<double>& p) { p.grad.set_zero(); });
    Tape<double> tape;
    tape.backward(build(tape, true));
  };
  auto report = check_gradients("abti", collect_params("abti", m), forward, analytic);
  INFO(report.to_text());
  CHECK(report.pass);
}
