#include "crowdserve/cars.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "crowdserve/geo.hpp"
#include "crowdserve/rng.hpp"

namespace crowdserve {

namespace {

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

bool parse_hexfloat(const std::string& s, double* out) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  *out = std::strtod(begin, &end);
  return end == begin + s.size();
}

const char* time_bucket_of(std::int64_t issued_at) {
  const std::int64_t hour = (issued_at / 3600) % 24;
  if (hour < 6) return "night";
  if (hour < 12) return "morning";
  if (hour < 18) return "afternoon";
  return "evening";
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

constexpr int kContextCellDepth = 8;

}  // namespace

ContextVector derive_context(const ServiceQuery& query, const SkillTaxonomy& taxonomy) {
  ContextVector ctx;
  ctx.time_bucket = time_bucket_of(query.issued_at);
  ctx.location_cell = cell_path(query.location(), kContextCellDepth);
  if (query.keywords.empty()) {
    ctx.skill_domain = "";
  } else {
    const auto& lead = *std::min_element(query.keywords.begin(), query.keywords.end());
    ctx.skill_domain = taxonomy.domain(lead);
  }
  return ctx;
}

std::vector<std::string> CarsModel::context_keys(const ContextVector& context) const {
  return {"time:" + context.time_bucket, "cell:" + context.location_cell,
          "domain:" + context.skill_domain};
}

double CarsModel::predict_raw(const std::string& user_id, const std::string& turk_id,
                              const ContextVector& context) const {
  double r = mu_;
  if (auto it = user_bias_.find(user_id); it != user_bias_.end()) r += it->second;
  if (auto it = turk_bias_.find(turk_id); it != turk_bias_.end()) r += it->second;
  for (const auto& key : context_keys(context)) {
    if (auto it = context_bias_.find(key); it != context_bias_.end()) r += it->second;
  }
  auto u = user_vec_.find(user_id);
  auto v = turk_vec_.find(turk_id);
  if (u != user_vec_.end() && v != turk_vec_.end()) r += dot(u->second, v->second);
  return r;
}

double CarsModel::predict(const std::string& user_id, const std::string& turk_id,
                          const ContextVector& context) const {
  return std::clamp(predict_raw(user_id, turk_id, context), 1.0, 5.0);
}

double CarsModel::loss(std::span<const RatingRecord> ratings) const {
  double sum = 0.0;
  for (const auto& r : ratings) {
    const double e = predict_raw(r.user_id, r.turk_id, r.context) - r.rating;
    sum += e * e;
  }
  double reg = 0.0;
  for (const auto& [id, b] : user_bias_) reg += b * b;
  for (const auto& [id, b] : turk_bias_) reg += b * b;
  for (const auto& [key, b] : context_bias_) reg += b * b;
  for (const auto& [id, vec] : user_vec_) reg += dot(vec, vec);
  for (const auto& [id, vec] : turk_vec_) reg += dot(vec, vec);
  return sum + hyper_.regularization * reg;
}

Result<CarsModel> train_cars(std::span<const RatingRecord> ratings,
                             const CarsHyperparams& hyper, std::uint64_t seed) {
  using R = Result<CarsModel>;
  if (ratings.empty()) return R::fail(Errc::EmptyTrainingSet, "no ratings to train on");
  if (hyper.factors < 0) return R::fail(Errc::BadHyperparams, "factors must be >= 0");
  if (!(hyper.learning_rate > 0.0))
    return R::fail(Errc::BadHyperparams, "learning_rate must be > 0");
  if (!(hyper.regularization >= 0.0))
    return R::fail(Errc::BadHyperparams, "regularization must be >= 0");
  if (hyper.epochs < 1) return R::fail(Errc::BadHyperparams, "epochs must be >= 1");
  for (const auto& r : ratings) {
    if (r.user_id.empty() || r.turk_id.empty())
      return R::fail(Errc::BadRecord, "rating with an empty id");
    if (!(r.rating >= 1.0 && r.rating <= 5.0))
      return R::fail(Errc::BadRecord, "rating outside [1,5]");
  }

  CarsModel model;
  model.hyper_ = hyper;

  double total = 0.0;
  for (const auto& r : ratings) total += r.rating;
  model.mu_ = total / static_cast<double>(ratings.size());

  // Parameter sets; std::map keeps ids sorted so initialization order (and
  // therefore the seeded draw each latent entry gets) is deterministic.
  for (const auto& r : ratings) {
    model.user_bias_.emplace(r.user_id, 0.0);
    model.turk_bias_.emplace(r.turk_id, 0.0);
    for (const auto& key : model.context_keys(r.context)) model.context_bias_.emplace(key, 0.0);
  }

  SplitMix64 root(seed);
  SplitMix64 init = root.fork(1);
  SplitMix64 shuffle = root.fork(2);
  const std::size_t f = static_cast<std::size_t>(hyper.factors);
  for (const auto& [id, b] : model.user_bias_) {
    auto& vec = model.user_vec_[id];
    vec.resize(f);
    for (double& x : vec) x = init.next_double(-0.01, 0.01);
  }
  for (const auto& [id, b] : model.turk_bias_) {
    auto& vec = model.turk_vec_[id];
    vec.resize(f);
    for (double& x : vec) x = init.next_double(-0.01, 0.01);
  }

  const double eta = hyper.learning_rate;
  const double gamma = hyper.regularization;
  std::vector<std::size_t> order(ratings.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  model.training_curve_.reserve(static_cast<std::size_t>(hyper.epochs));
  std::vector<double> p_old(f);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.next_below(i)]);
    }
    for (const std::size_t idx : order) {
      const RatingRecord& r = ratings[idx];
      const double err = r.rating - model.predict_raw(r.user_id, r.turk_id, r.context);
      double& b_u = model.user_bias_.find(r.user_id)->second;
      double& b_v = model.turk_bias_.find(r.turk_id)->second;
      b_u += eta * (err - gamma * b_u);
      b_v += eta * (err - gamma * b_v);
      for (const auto& key : model.context_keys(r.context)) {
        double& b_c = model.context_bias_.find(key)->second;
        b_c += eta * (err - gamma * b_c);
      }
      if (f > 0) {
        std::vector<double>& p = model.user_vec_.find(r.user_id)->second;
        std::vector<double>& q = model.turk_vec_.find(r.turk_id)->second;
        p_old.assign(p.begin(), p.end());
        for (std::size_t j = 0; j < f; ++j) {
          p[j] += eta * (err * q[j] - gamma * p[j]);
          q[j] += eta * (err * p_old[j] - gamma * q[j]);
        }
      }
    }
    model.training_curve_.push_back(model.loss(ratings));
  }
  return model;
}

double loss_gradient_check(const CarsModel& model, std::span<const RatingRecord> ratings,
                           double epsilon) {
  CarsModel work = model;

  // Pointers into the working copy, in a fixed enumeration order.
  std::vector<double*> params;
  for (auto& [id, b] : work.user_bias_) params.push_back(&b);
  for (auto& [id, b] : work.turk_bias_) params.push_back(&b);
  for (auto& [key, b] : work.context_bias_) params.push_back(&b);
  for (auto& [id, vec] : work.user_vec_)
    for (double& x : vec) params.push_back(&x);
  for (auto& [id, vec] : work.turk_vec_)
    for (double& x : vec) params.push_back(&x);

  // Analytic gradient of loss() at the current point.
  std::map<const double*, double> grad;
  const double gamma = work.hyper_.regularization;
  for (double* p : params) grad[p] = 2.0 * gamma * *p;
  for (const auto& r : ratings) {
    const double e = work.predict_raw(r.user_id, r.turk_id, r.context) - r.rating;
    if (auto it = work.user_bias_.find(r.user_id); it != work.user_bias_.end())
      grad[&it->second] += 2.0 * e;
    if (auto it = work.turk_bias_.find(r.turk_id); it != work.turk_bias_.end())
      grad[&it->second] += 2.0 * e;
    for (const auto& key : work.context_keys(r.context)) {
      if (auto it = work.context_bias_.find(key); it != work.context_bias_.end())
        grad[&it->second] += 2.0 * e;
    }
    auto u = work.user_vec_.find(r.user_id);
    auto v = work.turk_vec_.find(r.turk_id);
    if (u != work.user_vec_.end() && v != work.turk_vec_.end()) {
      for (std::size_t j = 0; j < u->second.size(); ++j) {
        grad[&u->second[j]] += 2.0 * e * v->second[j];
        grad[&v->second[j]] += 2.0 * e * u->second[j];
      }
    }
  }

  double worst = 0.0;
  for (double* p : params) {
    const double saved = *p;
    *p = saved + epsilon;
    const double up = work.loss(ratings);
    *p = saved - epsilon;
    const double down = work.loss(ratings);
    *p = saved;
    const double fd = (up - down) / (2.0 * epsilon);
    const double analytic = grad[p];
    const double denom = std::max(std::abs(fd) + std::abs(analytic), 1e-6);
    worst = std::max(worst, std::abs(fd - analytic) / denom);
  }
  return worst;
}

std::vector<std::pair<std::string, double>> recommend(
    const CarsModel& model, const std::string& user_id, const ServiceQuery& query,
    std::span<const std::string> candidate_pool, const std::set<std::string>& exclude, int m,
    const SkillTaxonomy& taxonomy) {
  const ContextVector ctx = derive_context(query, taxonomy);
  std::vector<std::pair<std::string, double>> scored;
  scored.reserve(candidate_pool.size());
  for (const auto& turk_id : candidate_pool) {
    if (exclude.contains(turk_id)) continue;
    scored.emplace_back(turk_id, model.predict(user_id, turk_id, ctx));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (m >= 0 && scored.size() > static_cast<std::size_t>(m)) {
    scored.resize(static_cast<std::size_t>(m));
  }
  return scored;
}

std::string CarsModel::dump() const {
  std::ostringstream out;
  out << "cars-model v1\n";
  out << "mu " << hexfloat(mu_) << "\n";
  out << "factors " << hyper_.factors << "\n";
  out << "learning_rate " << hexfloat(hyper_.learning_rate) << "\n";
  out << "regularization " << hexfloat(hyper_.regularization) << "\n";
  out << "epochs " << hyper_.epochs << "\n";

  const auto bias_section = [&](const char* name, const std::map<std::string, double>& m) {
    out << name << " " << m.size() << "\n";
    for (const auto& [id, b] : m) {
      out << nlohmann::json::array({id, hexfloat(b)}).dump() << "\n";
    }
  };
  bias_section("user_bias", user_bias_);
  bias_section("turk_bias", turk_bias_);
  bias_section("context_bias", context_bias_);

  const auto vec_section = [&](const char* name,
                               const std::map<std::string, std::vector<double>>& m) {
    out << name << " " << m.size() << "\n";
    for (const auto& [id, vec] : m) {
      nlohmann::json row = nlohmann::json::array({id});
      for (double x : vec) row.push_back(hexfloat(x));
      out << row.dump() << "\n";
    }
  };
  vec_section("user_vec", user_vec_);
  vec_section("turk_vec", turk_vec_);
  return out.str();
}

Result<CarsModel> CarsModel::load(const std::string& text) {
  using R = Result<CarsModel>;
  std::istringstream in(text);
  std::string line;
  const auto next_line = [&](std::string* out_line) {
    while (std::getline(in, *out_line)) {
      if (!out_line->empty()) return true;
    }
    return false;
  };
  const auto bad = [](const std::string& why) {
    return R::fail(Errc::BadRecord, "model parse: " + why);
  };

  if (!next_line(&line) || line != "cars-model v1") return bad("missing header");

  CarsModel model;
  const auto scalar = [&](const char* name, auto parse) -> bool {
    if (!next_line(&line)) return false;
    std::istringstream row(line);
    std::string key, value;
    row >> key >> value;
    if (key != name || value.empty()) return false;
    return parse(value);
  };
  if (!scalar("mu", [&](const std::string& v) { return parse_hexfloat(v, &model.mu_); }))
    return bad("mu");
  if (!scalar("factors", [&](const std::string& v) {
        model.hyper_.factors = std::atoi(v.c_str());
        return true;
      }))
    return bad("factors");
  if (!scalar("learning_rate",
              [&](const std::string& v) { return parse_hexfloat(v, &model.hyper_.learning_rate); }))
    return bad("learning_rate");
  if (!scalar("regularization", [&](const std::string& v) {
        return parse_hexfloat(v, &model.hyper_.regularization);
      }))
    return bad("regularization");
  if (!scalar("epochs", [&](const std::string& v) {
        model.hyper_.epochs = std::atoi(v.c_str());
        return true;
      }))
    return bad("epochs");

  const auto read_header = [&](const char* name, std::size_t* count) -> bool {
    if (!next_line(&line)) return false;
    std::istringstream row(line);
    std::string key;
    long long n = -1;
    row >> key >> n;
    if (key != name || n < 0) return false;
    *count = static_cast<std::size_t>(n);
    return true;
  };

  const auto read_bias = [&](const char* name, std::map<std::string, double>* out) -> bool {
    std::size_t count = 0;
    if (!read_header(name, &count)) return false;
    for (std::size_t i = 0; i < count; ++i) {
      if (!next_line(&line)) return false;
      nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
      if (!row.is_array() || row.size() != 2 || !row[0].is_string() || !row[1].is_string())
        return false;
      double value = 0.0;
      if (!parse_hexfloat(row[1].get<std::string>(), &value)) return false;
      if (!out->emplace(row[0].get<std::string>(), value).second) return false;
    }
    return true;
  };
  if (!read_bias("user_bias", &model.user_bias_)) return bad("user_bias");
  if (!read_bias("turk_bias", &model.turk_bias_)) return bad("turk_bias");
  if (!read_bias("context_bias", &model.context_bias_)) return bad("context_bias");

  const std::size_t f = static_cast<std::size_t>(std::max(0, model.hyper_.factors));
  const auto read_vecs = [&](const char* name,
                             std::map<std::string, std::vector<double>>* out) -> bool {
    std::size_t count = 0;
    if (!read_header(name, &count)) return false;
    for (std::size_t i = 0; i < count; ++i) {
      if (!next_line(&line)) return false;
      nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
      if (!row.is_array() || row.size() != f + 1 || !row[0].is_string()) return false;
      std::vector<double> vec(f);
      for (std::size_t j = 0; j < f; ++j) {
        if (!row[j + 1].is_string() ||
            !parse_hexfloat(row[j + 1].get<std::string>(), &vec[j]))
          return false;
      }
      if (!out->emplace(row[0].get<std::string>(), std::move(vec)).second) return false;
    }
    return true;
  };
  if (!read_vecs("user_vec", &model.user_vec_)) return bad("user_vec");
  if (!read_vecs("turk_vec", &model.turk_vec_)) return bad("turk_vec");
  return model;
}

}  // namespace crowdserve
