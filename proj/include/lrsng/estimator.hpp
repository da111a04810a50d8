#pragma once

#include "lrsng/linalg.hpp"
#include "lrsng/model.hpp"

namespace lrsng {

// Remote estimate x̂_{k|k} = E[x_k | γ₀x₀, ..., γ_k x_k] and the local
// estimation error x̃_k = x_k - x̂_{k|k}. Both players can run this
// recursion: the local player sees γ_k over the perfect downlink.
struct EstimatorState {
  Vector xhat;
  Vector xtilde;
  int k = 0;
};

inline EstimatorState estimator_init(const GameSpec& s, const Vector& x0,
                                     bool gamma0) {
  EstimatorState st;
  if (gamma0) {
    st.xhat = x0;
    st.xtilde = Vector::Zero(x0.size());
  } else {
    st.xhat = s.mu;
    st.xtilde = x0 - s.mu;
  }
  st.k = 0;
  return st;
}

// Advances from stage k to k+1. U_prev = [û^L; u^R] is the common-information
// control of stage k, utilde_prev the private part of u^L, w_prev the noise
// of stage k and x_next the true state at k+1.
inline EstimatorState estimator_step(const GameSpec& s, const EstimatorState& st,
                                     const Vector& U_prev,
                                     const Vector& utilde_prev,
                                     const Vector& w_prev, const Vector& x_next,
                                     bool gamma_next) {
  EstimatorState out;
  out.k = st.k + 1;
  if (gamma_next) {
    out.xhat = x_next;
    out.xtilde = Vector::Zero(x_next.size());
  } else {
    out.xhat = s.A * st.xhat + s.BL * U_prev.head(s.m1) +
               s.BR * U_prev.tail(s.m2);
    out.xtilde = s.A * st.xtilde + s.BL * utilde_prev + w_prev;
  }
  return out;
}

}  // namespace lrsng
