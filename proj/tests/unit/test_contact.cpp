#include <doctest.h>

#include "sms/contact.hpp"
#include "unit/helpers.hpp"

#include <cmath>

using namespace sms;
using namespace sms::testing;

namespace {
double scalar_barrier(double d, double dhat, double kappa) {
  return d >= dhat ? 0.0 : -kappa * (d - dhat) * (d - dhat) * std::log(d / dhat);
}
}  // namespace

TEST_CASE("collider validation") {
  CHECK_THROWS_AS(Collider::half_plane(Vec2(0, 1), 0, 0.0, 1.0), Error);
  CHECK_THROWS_AS(Collider::half_plane(Vec2(0, 1), 0, 0.1, -1.0), Error);
  CHECK_THROWS_AS(Collider::sphere(Vec2(0, 0), -1.0, 0.1, 1.0), Error);
  CHECK(Collider::half_plane(Vec2(0, 3), 0, 0.1, 1.0).normal.norm() == doctest::Approx(1.0));
}

TEST_CASE("barrier is inactive beyond dhat and C2 at dhat") {
  auto b = barrier(0.1, 0.1, 7.0);
  CHECK(b.value == 0.0);
  CHECK(b.first == 0.0);
  CHECK(b.second == 0.0);
  auto near = barrier(0.1 - 1e-9, 0.1, 7.0);
  CHECK(std::abs(near.value) < 1e-12);
  CHECK(std::abs(near.first) < 1e-6);
  CHECK(std::abs(near.second) < 1e-6);

  VecX x(2);
  x << 0.0, 0.5;
  VecX g;
  std::vector<Mat2> h;
  std::vector<Collider> cs{Collider::half_plane(Vec2(0, 1), 0.0, 0.1, 1.0)};
  CHECK(barrier_terms(x, cs, &g, &h) == 0.0);
  CHECK(g.norm() == 0.0);
}

TEST_CASE("barrier matches scalar oracle at half dhat") {
  const double dhat = 0.02, kappa = 3e4;
  std::vector<Collider> cs{Collider::half_plane(Vec2(0, 1), -1.0, dhat, kappa)};
  VecX x(2);
  x << 0.3, -1.0 + dhat / 2;
  CHECK(barrier_terms(x, cs, nullptr, nullptr) == doctest::Approx(scalar_barrier(dhat / 2, dhat, kappa)));
}

TEST_CASE("barrier derivatives match finite differences") {
  const double dhat = 0.1, kappa = 5.0, eps = 1e-7;
  for (double d : {0.01, 0.03, 0.07, 0.099}) {
    auto b = barrier(d, dhat, kappa);
    double fd1 = (scalar_barrier(d + eps, dhat, kappa) - scalar_barrier(d - eps, dhat, kappa)) / (2 * eps);
    double fd2 = (barrier(d + eps, dhat, kappa).first - barrier(d - eps, dhat, kappa).first) / (2 * eps);
    CHECK(b.first == doctest::Approx(fd1).epsilon(1e-6));
    CHECK(b.second == doctest::Approx(fd2).epsilon(1e-5));
  }
  VecX x(2);
  x << 0.4, 1.05;
  std::vector<Collider> cs{Collider::sphere(Vec2(0, 0), 1.0, dhat, kappa)};
  VecX g;
  barrier_terms(x, cs, &g, nullptr);
  for (int i = 0; i < 2; ++i) {
    VecX xp = x, xm = x;
    xp[i] += eps;
    xm[i] -= eps;
    double fd = (barrier_terms(xp, cs, nullptr, nullptr) - barrier_terms(xm, cs, nullptr, nullptr)) / (2 * eps);
    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("barrier is decreasing on (0, dhat) and infinite at contact") {
  double prev = barrier(1e-6, 1.0, 1.0).value;
  for (int i = 1; i < 1000; ++i) {
    double v = barrier(i / 1000.0, 1.0, 1.0).value;
    CHECK(v < prev);
    prev = v;
  }
  CHECK(std::isinf(barrier(0.0, 1.0, 1.0).value));
  CHECK(std::isinf(barrier(-0.5, 1.0, 1.0).value));
}

TEST_CASE("CCD filter examples") {
  std::vector<Collider> plane{Collider::half_plane(Vec2(0, 1), 0.0, 0.1, 1.0)};
  VecX x(2), d(2);
  x << 0.0, 1.0;
  d << 5.0, 0.0;
  CHECK(ccd_filter_step(x, d, plane) == 1.0);
  d << 0.0, -2.0;
  CHECK(ccd_filter_step(x, d, plane) == doctest::Approx(0.45));

  std::vector<Collider> ball{Collider::sphere(Vec2(0, 0), 1.0, 0.1, 1.0)};
  x << 0.0, 2.0;
  d << 3.0, 0.0;
  CHECK(ccd_filter_step(x, d, ball) == 1.0);
  d << 0.0, -4.0;
  CHECK(ccd_filter_step(x, d, ball) == doctest::Approx(0.9 * 0.25));
}

TEST_CASE("inversion filter examples") {
  auto [mesh, mats] = make_sim_mesh(unit_triangle(), uniform_material());
  VecX x = mesh.rest;
  VecX d = VecX::Zero(6);
  CHECK(inversion_filter_step(x, d, mesh) == 1.0);
  for (int v = 0; v < 3; ++v) vertex(d, v) = Vec2(4, -7);
  CHECK(inversion_filter_step(x, d, mesh) == 1.0);
  // apex moves toward the base; area hits zero at 0.8
  d.setZero();
  vertex(d, 2) = Vec2(0, -1.0 / 0.8);
  CHECK(inversion_filter_step(x, d, mesh) == doctest::Approx(0.72));
}

TEST_CASE("filtered steps stay intersection-free and non-inverted") {
  auto [mesh, mats] = unit_square(3);
  std::vector<Collider> cs{Collider::half_plane(Vec2(0, 1), -0.05, 0.1, 1.0),
                           Collider::sphere(Vec2(0.5, 1.3), 0.25, 0.1, 1.0)};
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 1000; ++trial) {
    VecX d = random_vector(rng, mesh.rest.size(), 2.0);
    double a = std::min(ccd_filter_step(mesh.rest, d, cs), inversion_filter_step(mesh.rest, d, mesh));
    VecX y = mesh.rest + a * d;
    CHECK(min_collider_distance(y, cs) > 0.0);
    CHECK(min_element_area(y, mesh) > 0.0);
  }
}
