#pragma once

#include "copularisk/copula.hpp"

namespace copularisk::detail {

/// Per-coordinate pieces of the log density; meaning depends on the family.
///   Clayton:  a = -theta ln t,          b = -(theta+1) ln t
///   Gumbel:   a = (-ln t)^theta,        b = (theta-1) ln(-ln t) - ln t
///   Frank:    a = ln(1 - e^-theta t),   b = -theta t - a
///   Gauss:    a = Phi^-1(t)
///   StudentT: a = t_nu^-1(t),           b = ln(1 + a^2/nu)
struct AxisTerm {
    double a = 0.0;
    double b = 0.0;
};

AxisTerm axis_term(const CopulaModel& m, double t);
double combine_log_density(const CopulaModel& m, const AxisTerm& u, const AxisTerm& v, const AxisTerm& w);

}  // namespace copularisk::detail
