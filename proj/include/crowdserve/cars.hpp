#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crowdserve/errors.hpp"
#include "crowdserve/model.hpp"

namespace crowdserve {

struct CarsHyperparams {
  int factors = 8;              // latent dimension f; 0 = bias-only model
  double learning_rate = 0.01;  // eta
  double regularization = 0.02; // gamma (L2 on biases and latents)
  int epochs = 60;
};

// Maps a skill token to its domain label; unknown tokens are their own domain.
struct SkillTaxonomy {
  std::map<std::string, std::string> domain_of;

  const std::string& domain(const std::string& token) const {
    auto it = domain_of.find(token);
    return it == domain_of.end() ? token : it->second;
  }
};

// Context of a query: time-of-day bucket (UTC hour), depth-8 quadtree cell,
// and the domain of the lexicographically first keyword.
ContextVector derive_context(const ServiceQuery& query, const SkillTaxonomy& taxonomy = {});

// Rating predictor: r = mu + b_u + b_v + sum of context biases + p_u . q_v,
// fit by SGD on squared error with L2 regularization. Immutable once trained.
class CarsModel {
 public:
  double mu() const { return mu_; }
  const CarsHyperparams& hyper() const { return hyper_; }

  // Clamped to [1,5]. Unknown ids/context values contribute nothing.
  double predict(const std::string& user_id, const std::string& turk_id,
                 const ContextVector& context) const;
  // The linear term before clamping; what training and the gradient check see.
  double predict_raw(const std::string& user_id, const std::string& turk_id,
                     const ContextVector& context) const;

  // Full-batch objective: sum of squared residuals plus gamma times the
  // squared norm of every trained parameter (mu is not trained).
  double loss(std::span<const RatingRecord> ratings) const;

  // Per-epoch training loss, recorded by train_cars.
  const std::vector<double>& training_curve() const { return training_curve_; }

  // Text round trip, bit-exact (hexfloat values).
  std::string dump() const;
  static Result<CarsModel> load(const std::string& text);

  // Parameter equality; the training curve is bookkeeping, not a parameter.
  bool operator==(const CarsModel& other) const {
    return mu_ == other.mu_ && hyper_.factors == other.hyper_.factors &&
           hyper_.learning_rate == other.hyper_.learning_rate &&
           hyper_.regularization == other.hyper_.regularization &&
           hyper_.epochs == other.hyper_.epochs && user_bias_ == other.user_bias_ &&
           turk_bias_ == other.turk_bias_ && context_bias_ == other.context_bias_ &&
           user_vec_ == other.user_vec_ && turk_vec_ == other.turk_vec_;
  }

 private:
  friend Result<CarsModel> train_cars(std::span<const RatingRecord> ratings,
                                      const CarsHyperparams& hyper, std::uint64_t seed);
  friend double loss_gradient_check(const CarsModel& model,
                                    std::span<const RatingRecord> ratings, double epsilon);

  std::vector<std::string> context_keys(const ContextVector& context) const;

  double mu_ = 0.0;
  CarsHyperparams hyper_;
  std::map<std::string, double> user_bias_;
  std::map<std::string, double> turk_bias_;
  std::map<std::string, double> context_bias_;  // keys "time:...", "cell:...", "domain:..."
  std::map<std::string, std::vector<double>> user_vec_;
  std::map<std::string, std::vector<double>> turk_vec_;
  std::vector<double> training_curve_;
};

// Deterministic for a given (ratings, hyper, seed).
Result<CarsModel> train_cars(std::span<const RatingRecord> ratings,
                             const CarsHyperparams& hyper, std::uint64_t seed);

// Compares the analytic gradient of loss() against central finite
// differences over every trained parameter; returns the max relative error.
double loss_gradient_check(const CarsModel& model, std::span<const RatingRecord> ratings,
                           double epsilon);

// Top-m of pool minus exclusions by predicted rating, ties by id ascending.
std::vector<std::pair<std::string, double>> recommend(
    const CarsModel& model, const std::string& user_id, const ServiceQuery& query,
    std::span<const std::string> candidate_pool, const std::set<std::string>& exclude, int m,
    const SkillTaxonomy& taxonomy = {});

}  // namespace crowdserve
