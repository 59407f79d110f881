#pragma once

#include <functional>

#include "homsurf/types.hpp"

namespace homsurf {

// Adaptive composite Simpson. max_depth bounds the bisection depth, so the
// finest subinterval is (b-a)/2^max_depth.
struct QuadSpec {
  double abs_tol = 1e-10;
  int max_depth = 20;
};

double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadSpec& spec = {});

// (1/T) * int_0^T f, for a T-periodic sampler.
double periodic_mean(const std::function<double(double)>& f, double period,
                     const QuadSpec& spec = {});

}  // namespace homsurf
