#pragma once

// Reference hyperparameter settings for desk and extended runs. The grids are
// the documented search spaces; the triads are the tuned per-past-task
// strengths (tr / embtf / sal) for the three reference news streams, one table
// tuned for generalization (perplexity) and one for retrieval.

#include <array>
#include <cstddef>
#include <string_view>

namespace lntm::presets {

inline constexpr double kLearningRate = 0.001;
inline constexpr std::size_t kMaxEpochs = 100;
inline constexpr std::array<std::size_t, 2> kHiddenGrid = {50, 200};
inline constexpr double kRetrievalFraction = 0.02;

// generalization runs use sigmoid; retrieval runs use tanh
inline constexpr std::string_view kPplActivation = "sigmoid";
inline constexpr std::string_view kIrActivation = "tanh";

inline constexpr std::array<double, 3> kTrGrid = {0.1, 0.01, 0.001};
inline constexpr std::array<double, 3> kEmbTfGrid = {1.0, 0.5, 0.1};
inline constexpr std::array<double, 3> kSalGrid = {1.0, 0.5, 0.1};

struct LambdaTriad {
  std::string_view target;  // future task
  std::string_view past;    // source task
  double tr;
  double embtf;
  double sal;
};

// Tuned strengths per (future, past) pair over the reference stream
// agnews -> tmn -> r21578 -> 20ns -> <target>.
inline constexpr std::array<LambdaTriad, 12> kGeneralizationTriads = {{
    {"20nsshort", "agnews", 0.001, 0.1, 1.0},
    {"20nsshort", "tmn", 0.001, 0.1, 1.0},
    {"20nsshort", "r21578", 0.001, 0.1, 1.0},
    {"20nsshort", "20ns", 0.001, 1.0, 1.0},
    {"tmntitle", "agnews", 0.001, 0.1, 0.1},
    {"tmntitle", "tmn", 0.001, 1.0, 1.0},
    {"tmntitle", "r21578", 0.001, 0.1, 0.1},
    {"tmntitle", "20ns", 0.001, 0.1, 0.1},
    {"r21578title", "agnews", 0.001, 0.1, 0.1},
    {"r21578title", "tmn", 0.001, 0.1, 0.1},
    {"r21578title", "r21578", 0.001, 1.0, 0.1},
    {"r21578title", "20ns", 0.1, 0.1, 0.1},
}};

inline constexpr std::array<LambdaTriad, 12> kRetrievalTriads = {{
    {"20nsshort", "agnews", 0.001, 0.1, 1.0},
    {"20nsshort", "tmn", 0.001, 0.1, 1.0},
    {"20nsshort", "r21578", 0.001, 0.1, 1.0},
    {"20nsshort", "20ns", 0.001, 1.0, 1.0},
    {"tmntitle", "agnews", 0.001, 0.1, 0.1},
    {"tmntitle", "tmn", 0.01, 1.0, 1.0},
    {"tmntitle", "r21578", 0.001, 0.1, 0.1},
    {"tmntitle", "20ns", 0.001, 0.1, 0.1},
    {"r21578title", "agnews", 0.001, 0.1, 1.0},
    {"r21578title", "tmn", 0.001, 0.1, 1.0},
    {"r21578title", "r21578", 0.001, 1.0, 1.0},
    {"r21578title", "20ns", 0.1, 0.1, 1.0},
}};

}  // namespace lntm::presets
