#include "doctest.h"

#include "eegd3/filterbank.hpp"
#include "eegd3/rng.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

using namespace eegd3;
using filterbank::GaussianFilterParams;

namespace {

Matrix sinusoid_window(double freq, double fs, long E, long T) {
  Matrix w(E, T);
  for (long e = 0; e < E; ++e)
    for (long t = 0; t < T; ++t)
      w(e, t) = std::sin(2.0 * std::numbers::pi * freq * t / fs);
  return w;
}

} // namespace

TEST_CASE("alpha reparameterization: beta=2, h=48 gives alpha near 28.827") {
  GaussianFilterParams p{24.0, 48.0, 2.0};
  CHECK(p.alpha() == doctest::Approx(24.0 / std::sqrt(std::log(2.0))).epsilon(1e-12));
  CHECK(p.alpha() == doctest::Approx(28.827).epsilon(1e-3));
}

TEST_CASE("FWHM identity holds for every beta") {
  SUBCASE("the canonical example") {
    GaussianFilterParams p{24.0, 48.0, 2.0};
    Array f(3);
    f << 24.0, 0.0, 48.0;
    const Array r = filterbank::magnitude_response(p, f);
    CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r[2] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("random parameters, 1000 draws") {
    Rng rng = make_rng(21);
    for (int i = 0; i < 1000; ++i) {
      GaussianFilterParams p;
      p.mu = uniform(rng, 0.0, 80.0);
      p.h = uniform(rng, 1.0, 120.0);
      p.beta = uniform(rng, 1.0, 16.0);
      Array f(3);
      f << p.mu, p.mu - p.h / 2, p.mu + p.h / 2;
      const Array r = filterbank::magnitude_response(p, f);
      CHECK(std::abs(r[0] - 1.0) < 1e-12);
      CHECK(std::abs(r[1] - 0.5) < 1e-12);
      CHECK(std::abs(r[2] - 0.5) < 1e-12);
    }
  }
  SUBCASE("large beta approaches a box filter inside the band") {
    GaussianFilterParams p{20.0, 10.0, 16.0};
    Array f(1);
    f << 20.0 + 0.4 * p.h;
    CHECK(filterbank::magnitude_response(p, f)[0] > 0.95);
  }
}

TEST_CASE("parameter clamps") {
  GaussianFilterParams p{-5.0, 0.2, 40.0};
  const auto c = filterbank::clamp_params(p, 160.0);
  CHECK(c.mu == 0.0);
  CHECK(c.h == 1.0);
  CHECK(c.beta == 16.0);
  GaussianFilterParams q{300.0, 999.0, 0.1};
  const auto cq = filterbank::clamp_params(q, 160.0);
  CHECK(cq.mu == 80.0);
  CHECK(cq.h == 160.0);
  CHECK(cq.beta == 1.0);
}

TEST_CASE("apply_filter acts on the spectrum as the response dictates") {
  const double fs = 160.0;
  const long T = 320; // 0.5 Hz bins
  GaussianFilterParams p{24.0, 48.0, 2.0};

  SUBCASE("sinusoid at the centre frequency passes unchanged") {
    const Matrix w = sinusoid_window(24.0, fs, 2, T);
    const auto out = filterbank::apply_filter(w, {p}, fs);
    CHECK((out[0] - w).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("sinusoid at mu + h/2 is halved") {
    const Matrix w = sinusoid_window(48.0, fs, 1, T);
    const auto out = filterbank::apply_filter(w, {p}, fs);
    CHECK((out[0] - 0.5 * w).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("identical parameter sets give identical slices") {
    Rng rng = make_rng(5);
    Matrix w(3, T);
    for (long i = 0; i < w.size(); ++i) w.data()[i] = gaussian(rng);
    const auto out = filterbank::apply_filter(w, {p, p}, fs);
    CHECK(out[0] == out[1]);
  }
  SUBCASE("linearity") {
    Rng rng = make_rng(6);
    Matrix x(2, T), y(2, T);
    for (long i = 0; i < x.size(); ++i) x.data()[i] = gaussian(rng);
    for (long i = 0; i < y.size(); ++i) y.data()[i] = gaussian(rng);
    const auto fx = filterbank::apply_filter(x, {p}, fs)[0];
    const auto fy = filterbank::apply_filter(y, {p}, fs)[0];
    const auto fmix = filterbank::apply_filter(2.0 * x - 3.0 * y, {p}, fs)[0];
    CHECK((fmix - (2.0 * fx - 3.0 * fy)).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("output energy never exceeds input energy") {
    Rng rng = make_rng(7);
    Matrix w(2, T);
    for (long i = 0; i < w.size(); ++i) w.data()[i] = gaussian(rng);
    const auto out = filterbank::apply_filter(w, {p}, fs);
    CHECK(out[0].squaredNorm() <= w.squaredNorm() * (1.0 + 1e-9));
  }
}

TEST_CASE("analytic response gradients match central finite differences") {
  Rng rng = make_rng(31);
  const double step = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    GaussianFilterParams p;
    p.mu = uniform(rng, 5.0, 70.0);
    p.h = uniform(rng, 5.0, 100.0);
    p.beta = uniform(rng, 1.1, 12.0);
    Array freqs(8);
    for (int i = 0; i < 8; ++i) freqs[i] = uniform(rng, 0.5, 79.5);

    Array dmu, dh, dbeta;
    filterbank::response_gradients(p, freqs, dmu, dh, dbeta);

    auto fd = [&](auto set, double v0) {
      GaussianFilterParams lo = p, hi = p;
      set(lo, v0 - step);
      set(hi, v0 + step);
      return Array((filterbank::magnitude_response(hi, freqs) -
                    filterbank::magnitude_response(lo, freqs)) /
                   (2 * step));
    };
    const Array fmu = fd([](GaussianFilterParams& q, double v) { q.mu = v; }, p.mu);
    const Array fh = fd([](GaussianFilterParams& q, double v) { q.h = v; }, p.h);
    const Array fbeta = fd([](GaussianFilterParams& q, double v) { q.beta = v; }, p.beta);

    for (int i = 0; i < 8; ++i) {
      const double scale_mu = std::max(std::abs(fmu[i]), 1e-6);
      const double scale_h = std::max(std::abs(fh[i]), 1e-6);
      const double scale_b = std::max(std::abs(fbeta[i]), 1e-6);
      CHECK(std::abs(dmu[i] - fmu[i]) / scale_mu < 1e-4);
      CHECK(std::abs(dh[i] - fh[i]) / scale_h < 1e-4);
      CHECK(std::abs(dbeta[i] - fbeta[i]) / scale_b < 1e-4);
    }
  }
}

TEST_CASE("filter application gradients match finite differences") {
  const double fs = 160.0;
  const long T = 64;
  Rng rng = make_rng(41);
  Matrix w(2, T);
  for (long i = 0; i < w.size(); ++i) w.data()[i] = gaussian(rng);
  GaussianFilterParams p{20.0, 30.0, 2.5};

  // Loss: sum of squares of the filtered slice.
  auto loss_of = [&](const GaussianFilterParams& q) {
    return 0.5 * filterbank::apply_filter(w, {q}, fs)[0].squaredNorm();
  };
  filterbank::ApplyCache cache;
  const auto out = filterbank::apply_filter(w, {p}, fs, &cache);
  Matrix grad_in;
  const auto g = filterbank::apply_filter_backward(cache, p, out[0], &grad_in);

  const double step = 1e-5;
  auto fd = [&](auto set, double v0) {
    GaussianFilterParams lo = p, hi = p;
    set(lo, v0 - step);
    set(hi, v0 + step);
    return (loss_of(hi) - loss_of(lo)) / (2 * step);
  };
  const double fmu = fd([](GaussianFilterParams& q, double v) { q.mu = v; }, p.mu);
  const double fh = fd([](GaussianFilterParams& q, double v) { q.h = v; }, p.h);
  const double fbeta = fd([](GaussianFilterParams& q, double v) { q.beta = v; }, p.beta);
  CHECK(g.mu == doctest::Approx(fmu).epsilon(1e-4));
  CHECK(g.h == doctest::Approx(fh).epsilon(1e-4));
  CHECK(g.beta == doctest::Approx(fbeta).epsilon(1e-4));

  // Input gradient: compare a few coordinates by finite differences.
  for (int probe = 0; probe < 5; ++probe) {
    const long idx = uniform_index(rng, w.size());
    Matrix lo = w, hi = w;
    lo.data()[idx] -= step;
    hi.data()[idx] += step;
    const double fdval = (0.5 * filterbank::apply_filter(hi, {p}, fs)[0].squaredNorm() -
                          0.5 * filterbank::apply_filter(lo, {p}, fs)[0].squaredNorm()) /
                         (2 * step);
    CHECK(grad_in.data()[idx] == doctest::Approx(fdval).epsilon(1e-4));
  }
}

TEST_CASE("identity checks stay fast") {
  Rng rng = make_rng(77);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 1000; ++i) {
    GaussianFilterParams p;
    p.mu = uniform(rng, 0.0, 80.0);
    p.h = uniform(rng, 1.0, 120.0);
    p.beta = uniform(rng, 1.0, 16.0);
    Array f(2);
    f << p.mu - p.h / 2, p.mu + p.h / 2;
    const Array r = filterbank::magnitude_response(p, f);
    REQUIRE(std::abs(r[0] - 0.5) < 1e-12);
    REQUIRE(std::abs(r[1] - 0.5) < 1e-12);
  }
  const auto dt = std::chrono::steady_clock::now() - t0;
  CHECK(std::chrono::duration_cast<std::chrono::milliseconds>(dt).count() < 1000);
}
