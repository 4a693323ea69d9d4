#pragma once

#include <cmath>
#include <string>

#include "decompart/model.hpp"
#include "decompart/model_io.hpp"
#include "decompart/static_analysis.hpp"

namespace decompart::fixtures {

inline std::string models_dir() { return DECOMPART_MODELS_DIR; }

inline CompartmentalModel hippe() {
  return *load_model(models_dir() + "/hippe.json").model;
}

inline CompartmentalModel hippe_timedep() {
  return *load_model(models_dir() + "/hippe_timedep.json").model;
}

inline LoadedDocument sirs_doc() { return load_model(models_dir() + "/sirs.json"); }

inline CompartmentalModel sirs() { return *sirs_doc().model; }

inline StaticSystem cone_spring() {
  return *load_model(models_dir() + "/cone_spring.json").static_system;
}

// Hippe closed forms (constant input z = [1,1], x0 = [3,3])
inline MatrixXd hippe_X_exact(double t) {
  double e1 = std::exp(-t), e3 = std::exp(-3.0 * t);
  MatrixXd X(2, 2);
  X << 7.0 / 9 - e3 / 9 - 2 * e1 / 3, 2.0 / 9 + e3 / 9 - e1 / 3,
       4.0 / 9 + 2 * e3 / 9 - 2 * e1 / 3, 5.0 / 9 - 2 * e3 / 9 - e1 / 3;
  return X;
}

inline MatrixXd hippe_Xinit_exact(double t) {
  double e1 = std::exp(-t), e3 = std::exp(-3.0 * t);
  MatrixXd X(2, 2);
  X << 2 * e1 + e3, e1 - e3,
       2 * e1 - 2 * e3, e1 + 2 * e3;
  return X;
}

inline MatrixXd hippe_V_exact(double t) {
  double e1 = std::exp(-t), e3 = std::exp(-3.0 * t);
  MatrixXd V(2, 2);
  V << 2 * e1 / 3 + e3 / 3, e1 / 3 - e3 / 3,
       2 * e1 / 3 - 2 * e3 / 3, e1 / 3 + 2 * e3 / 3;
  return V;
}

// time-dependent input z = [3+sin t, 3+sin 2t]: substorage closed forms
inline MatrixXd hippe_timedep_X_exact(double t) {
  double e1 = std::exp(-t), e3 = std::exp(-3.0 * t);
  double s1 = std::sin(t), c1 = std::cos(t), s2 = std::sin(2 * t), c2 = std::cos(2 * t);
  MatrixXd X(2, 2);
  X(0, 0) = 7.0 / 3 - 11 * c1 / 30 + 13 * s1 / 30 - 5 * e1 / 3 - 3 * e3 / 10;
  X(0, 1) = 2.0 / 3 - 16 * c2 / 195 - 2 * s2 / 195 - 13 * e1 / 15 + 11 * e3 / 39;
  X(1, 0) = 4.0 / 3 - 4 * c1 / 15 + 2 * s1 / 15 - 5 * e1 / 3 + 3 * e3 / 5;
  X(1, 1) = 5.0 / 3 - 46 * c2 / 195 + 43 * s2 / 195 - 13 * e1 / 15 - 22 * e3 / 39;
  return X;
}

// inward subthroughflow closed forms for the time-dependent input
inline MatrixXd hippe_timedep_Tin_exact(double t) {
  double e1 = std::exp(-t), e3 = std::exp(-3.0 * t);
  double s1 = std::sin(t), c1 = std::cos(t), s2 = std::sin(2 * t);
  double cc = std::cos(t) * std::cos(t);
  MatrixXd T(2, 2);
  T(0, 0) = 35.0 / 9 - 8 * c1 / 45 + 49 * s1 / 45 - 10 * e1 / 9 + 2 * e3 / 5;
  T(0, 1) = 742.0 / 585 - 184 * cc / 585 + 86 * s2 / 585 - 26 * e1 / 45 - 44 * e3 / 117;
  T(1, 0) = 28.0 / 9 - 22 * c1 / 45 + 26 * s1 / 45 - 20 * e1 / 9 - 2 * e3 / 5;
  T(1, 1) = 2339.0 / 585 - 128 * cc / 585 + 577 * s2 / 585 - 52 * e1 / 45 + 44 * e3 / 117;
  return T;
}

inline VectorXd hippe_timedep_Tin_init_exact(double t) {
  VectorXd v(2);
  v << 2 * std::exp(-t), 4 * std::exp(-t);
  return v;
}

// SIRS parameters (birth, mortality, disease mortality, infection, recovery,
// immunity loss)
inline constexpr double kSirsAlpha = 0.33, kSirsMu = 0.006, kSirsSigma = 0.06,
                        kSirsBeta = 0.0056, kSirsGamma = 0.04, kSirsNu = 0.021;

}  // namespace decompart::fixtures
