#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lmd/backend.hpp"
#include "lmd/tensor.hpp"

namespace lmd {

using Rng = std::mt19937_64;

enum class ProblemKind { kl_simplex, lsq_simplex, lsq2d, svm, classifier, denoise, inpaint };
enum class Domain { all, simplex };

ProblemKind parse_problem_kind(std::string_view name);
std::string_view problem_kind_name(ProblemKind kind);

struct FeatureSet {
  Tensor features;  // n x d
  Tensor labels;    // length n; class index, or +-1 when classes == 2
};

struct FeatureModel {
  std::size_t dim = 50;
  std::size_t classes = 2;
  Tensor means;  // classes x dim
};

FeatureModel make_feature_model(std::size_t dim, std::size_t classes, std::uint64_t seed);
FeatureSet draw_features(const FeatureModel& model, std::size_t n, std::uint64_t seed);
/// Unit-variance Gaussian clusters around class means on a sphere of radius 4.
FeatureSet synth_features(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed);

/// One row per sample: the features followed by the label.
void write_features_csv(std::ostream& out, const FeatureSet& set);
FeatureSet read_features_csv(std::istream& in);
/// One flattened image per row.
void write_images_csv(std::ostream& out, const std::vector<Tensor>& images);
std::vector<Tensor> read_images_csv(std::istream& in);

/// Forward-difference operator on an s x s image, horizontal rows first,
/// no wrap-around; shape 2s(s-1) x s^2.
Tensor tv_operator(std::size_t side);

struct Problem {
  ProblemKind kind = ProblemKind::lsq2d;
  Domain domain = Domain::all;
  std::size_t dim = 0;

  Tensor target;    // simplex y, noisy image y, or lsq b
  Tensor matrix;    // lsq W; svm [features, 1]; classifier features
  Tensor labels;    // svm +-1 labels; classifier one-hot n x classes
  Tensor mask;      // inpainting Z; svm 0/1 selector of the weight block
  std::shared_ptr<const Tensor> tv;    // D
  std::shared_ptr<const Tensor> tv_t;  // D transposed
  double lambda = 0.3;
  double C = 1.0;
  std::size_t classes = 0;
  double strong_convexity = 0.0;  // extra 0.5*mu*|x|^2 added to f

  std::optional<Tensor> minimizer;
};

double objective(const Problem& p, const Tensor& x);
Tensor subgradient(const Problem& p, const Tensor& x);
std::optional<Tensor> true_minimizer(const Problem& p);

/// Copy of p with 0.5*mu*|x|^2 added to objective and subgradient.
Problem with_strong_convexity(Problem p, double mu);

/// Objective and subgradient as expressions on a backend. Problem data is
/// bound once as backend constants.
template <class B>
class ProblemExpr {
 public:
  using V = typename B::Value;

  ProblemExpr(const B& b, const Problem& p);

  V objective(V x) const;
  V gradient(V x) const;

 private:
  B b_;
  const Problem& p_;
  V target_{}, matrix_{}, matrix_t_{}, labels_{}, mask_{}, tv_{}, tv_t_{}, log_target_{};
};

struct FunctionClass {
  ProblemKind kind = ProblemKind::lsq2d;
  std::uint64_t seed = 0;
  std::size_t dim = 10;          // simplex dimension
  std::size_t image_side = 16;
  std::size_t samples = 0;       // feature pairs per instance; 0 picks the kind default
  double lambda = 0.3;
  double C = 1.0;
  double noise = 0.05;
  double mask_zero_fraction = 0.2;

  // Derived once from the seed.
  FeatureModel features;
  Tensor mask;
  std::shared_ptr<const Tensor> tv;
  std::shared_ptr<const Tensor> tv_t;
};

FunctionClass make_function_class(ProblemKind kind, std::uint64_t seed);
/// Completes derived fields after the public knobs are edited.
void finalize_function_class(FunctionClass& fc);

Tensor lsq2d_matrix();
Tensor clean_image(std::size_t side, Rng& rng);

Problem sample_instance(const FunctionClass& fc, std::uint64_t seed);
/// Initial point: noisy image for imaging, uniform simplex point for the
/// simplex kinds, standard normal otherwise.
Tensor sample_start(const Problem& p, Rng& rng);

/// Euclidean projection onto the probability simplex (sort-based).
Tensor project_simplex(const Tensor& y);

/// Long gradient descent run used where no closed-form minimizer exists.
Tensor reference_point(const Problem& p, const Tensor& x0, std::size_t iterations = 4000);

}  // namespace lmd
