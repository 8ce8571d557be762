#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <stdexcept>
#include <utility>

#include "crowdserve/big_tree.hpp"
#include "crowdserve/cars.hpp"
#include "crowdserve/event_log.hpp"
#include "crowdserve/geo.hpp"
#include "crowdserve/model.hpp"
#include "crowdserve/scoring.hpp"
#include "crowdserve/topk.hpp"

namespace py = pybind11;

namespace {

using namespace crowdserve;

[[noreturn]] void throw_error(const Error& error) {
  std::string msg = std::string(errc_name(error.code)) + ": " + error.message;
  switch (error.code) {
    case Errc::EmptySkills:
    case Errc::OutOfRangeCoord:
    case Errc::BadTimestamp:
    case Errc::BadRecord:
    case Errc::EmptyQuery:
    case Errc::BadQueryParams:
    case Errc::BadHyperparams:
    case Errc::BadSpec:
      throw std::invalid_argument(msg);
    case Errc::NotFound:
    case Errc::UnknownCandidate:
      throw py::key_error(msg);
    default:
      throw std::runtime_error(msg);
  }
}

void check(const Status& status) {
  if (!status.ok()) throw_error(status.error());
}

template <typename T>
T take(Result<T> result) {
  if (!result.ok()) throw_error(result.error());
  return std::move(result).value();
}

ServiceQuery make_query(const std::vector<std::string>& keywords, double lat, double lon,
                        std::int64_t at, int k, double alpha, double lambda_base,
                        double max_distance_m) {
  ServiceQuery query;
  query.keywords = canonicalize_tokens(keywords);
  query.lat = lat;
  query.lon = lon;
  query.issued_at = at;
  query.k = k;
  query.alpha = alpha;
  query.lambda_base = lambda_base;
  query.max_distance_m = max_distance_m;
  check(validate_query(query));
  return query;
}

py::dict breakdown_dict(const ScoreBreakdown& parts) {
  py::dict d;
  d["spatial"] = parts.spatial;
  d["textual"] = parts.textual;
  d["recency"] = parts.recency;
  d["total"] = parts.total;
  return d;
}

py::dict object_dict(const SpatialTextualObject& obj) {
  py::dict d;
  d["id"] = obj.id;
  d["skills"] = obj.skills;
  d["lat"] = obj.lat;
  d["lon"] = obj.lon;
  d["positioned_at"] = obj.positioned_at;
  return d;
}

py::list ranked_list(const std::vector<RankedCandidate>& ranked) {
  py::list rows;
  for (const auto& r : ranked) {
    py::dict row;
    row["rank"] = r.rank;
    row["id"] = r.object_id;
    row["score"] = r.score.total;
    row["spatial"] = r.score.spatial;
    row["textual"] = r.score.textual;
    row["recency"] = r.score.recency;
    rows.append(std::move(row));
  }
  return rows;
}

ContextVector context_from_dict(const py::dict& raw) {
  ContextVector ctx;
  if (raw.contains("time_bucket")) ctx.time_bucket = raw["time_bucket"].cast<std::string>();
  if (raw.contains("location_cell"))
    ctx.location_cell = raw["location_cell"].cast<std::string>();
  if (raw.contains("skill_domain")) ctx.skill_domain = raw["skill_domain"].cast<std::string>();
  return ctx;
}

RatingRecord rating_from_dict(const py::dict& raw) {
  RatingRecord rating;
  rating.user_id = raw["user_id"].cast<std::string>();
  rating.turk_id = raw["turk_id"].cast<std::string>();
  rating.rating = raw["rating"].cast<double>();
  if (raw.contains("at")) rating.at = raw["at"].cast<std::int64_t>();
  if (raw.contains("context")) rating.context = context_from_dict(raw["context"].cast<py::dict>());
  return rating;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "crowdserve core: spatial-keyword index, scoring, and rating model";

  m.def("haversine_m",
        [](double lat1, double lon1, double lat2, double lon2) {
          return haversine_m({lat1, lon1}, {lat2, lon2});
        },
        py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"),
        "Great-circle distance in meters.");

  m.def("score",
        [](const std::vector<std::string>& keywords, double lat, double lon, std::int64_t at,
           const std::vector<std::string>& skills, double obj_lat, double obj_lon,
           std::int64_t positioned_at, double alpha, double lambda_base, double dmax_m) {
          ServiceQuery query = make_query(keywords, lat, lon, at, 1, alpha, lambda_base, dmax_m);
          SpatialTextualObject obj;
          obj.id = "x";
          obj.skills = canonicalize_tokens(skills);
          obj.lat = obj_lat;
          obj.lon = obj_lon;
          obj.positioned_at = positioned_at;
          return breakdown_dict(combined_score(query, obj, ScoringParams::from_query(query)));
        },
        py::arg("keywords"), py::arg("lat"), py::arg("lon"), py::arg("at"), py::arg("skills"),
        py::arg("obj_lat"), py::arg("obj_lon"), py::arg("positioned_at"),
        py::arg("alpha") = 0.5, py::arg("lambda_base") = 2.0, py::arg("dmax_m") = 10000.0,
        "Score one object against one query; returns the component breakdown.");

  m.def("derive_context",
        [](const std::vector<std::string>& keywords, double lat, double lon, std::int64_t at) {
          ServiceQuery query = make_query(keywords, lat, lon, at, 1, 0.5, 2.0, 10000.0);
          ContextVector ctx = derive_context(query);
          py::dict d;
          d["time_bucket"] = ctx.time_bucket;
          d["location_cell"] = ctx.location_cell;
          d["skill_domain"] = ctx.skill_domain;
          return d;
        },
        py::arg("keywords"), py::arg("lat"), py::arg("lon"), py::arg("at"));

  py::class_<BigTree>(m, "Index")
      .def(py::init([](int leaf_capacity, int max_depth) {
             BigTreeConfig config;
             config.leaf_capacity = leaf_capacity;
             config.max_depth = max_depth;
             return std::make_unique<BigTree>(config);
           }),
           py::arg("leaf_capacity") = 64, py::arg("max_depth") = 16)
      .def("insert",
           [](BigTree& self, const std::string& id, const std::vector<std::string>& skills,
              double lat, double lon, std::int64_t positioned_at) {
             SpatialTextualObject obj;
             obj.id = id;
             obj.skills = skills;
             obj.lat = lat;
             obj.lon = lon;
             obj.positioned_at = positioned_at;
             check(self.insert(std::move(obj)));
           },
           py::arg("id"), py::arg("skills"), py::arg("lat"), py::arg("lon"),
           py::arg("positioned_at"))
      .def("remove", [](BigTree& self, const std::string& id) { check(self.remove(id)); },
           py::arg("id"))
      .def("update_location",
           [](BigTree& self, const std::string& id, double lat, double lon, std::int64_t at) {
             check(self.update_location(id, {lat, lon}, at));
           },
           py::arg("id"), py::arg("lat"), py::arg("lon"), py::arg("positioned_at"))
      .def("update_profile",
           [](BigTree& self, const std::string& id, const std::vector<std::string>& add,
              const std::vector<std::string>& remove) {
             check(self.update_profile(id, add, remove));
           },
           py::arg("id"), py::arg("add") = std::vector<std::string>{},
           py::arg("remove") = std::vector<std::string>{})
      .def("find",
           [](const BigTree& self, const std::string& id) -> py::object {
             const auto* obj = self.find(id);
             if (obj == nullptr) return py::none();
             return object_dict(*obj);
           },
           py::arg("id"))
      .def("query",
           [](const BigTree& self, const std::vector<std::string>& keywords, double lat,
              double lon, std::int64_t at, int k, double alpha, double lambda_base,
              double dmax_m) {
             ServiceQuery query =
                 make_query(keywords, lat, lon, at, k, alpha, lambda_base, dmax_m);
             return ranked_list(take(top_k(self, query, ScoringParams::from_query(query))));
           },
           py::arg("keywords"), py::arg("lat"), py::arg("lon"), py::arg("at"),
           py::arg("k") = 10, py::arg("alpha") = 0.5, py::arg("lambda_base") = 2.0,
           py::arg("dmax_m") = 10000.0)
      .def("audit", [](const BigTree& self) { check(self.audit()); })
      .def("__len__", [](const BigTree& self) { return self.size(); })
      .def("__contains__",
           [](const BigTree& self, const std::string& id) { return self.find(id) != nullptr; });

  py::class_<CarsModel>(m, "Model")
      .def("predict",
           [](const CarsModel& self, const std::string& user_id, const std::string& turk_id,
              const py::dict& context) {
             return self.predict(user_id, turk_id, context_from_dict(context));
           },
           py::arg("user_id"), py::arg("turk_id"), py::arg("context") = py::dict())
      .def("recommend",
           [](const CarsModel& self, const std::string& user_id,
              const std::vector<std::string>& keywords, double lat, double lon, std::int64_t at,
              const std::vector<std::string>& pool, const std::set<std::string>& exclude,
              int m_count) {
             ServiceQuery query = make_query(keywords, lat, lon, at, 1, 0.5, 2.0, 10000.0);
             return recommend(self, user_id, query, pool, exclude, m_count);
           },
           py::arg("user_id"), py::arg("keywords"), py::arg("lat"), py::arg("lon"),
           py::arg("at"), py::arg("pool"), py::arg("exclude") = std::set<std::string>{},
           py::arg("m") = 10)
      .def("dump", &CarsModel::dump)
      .def_property_readonly("mu", &CarsModel::mu)
      .def_property_readonly("training_curve",
                             [](const CarsModel& self) { return self.training_curve(); })
      .def("__eq__",
           [](const CarsModel& self, const CarsModel& other) { return self == other; });

  m.def("train",
        [](const std::vector<py::dict>& ratings, int factors, double learning_rate,
           double regularization, int epochs, std::uint64_t seed) {
          std::vector<RatingRecord> records;
          records.reserve(ratings.size());
          for (const auto& raw : ratings) records.push_back(rating_from_dict(raw));
          CarsHyperparams hyper{factors, learning_rate, regularization, epochs};
          return take(train_cars(records, hyper, seed));
        },
        py::arg("ratings"), py::arg("factors") = 8, py::arg("learning_rate") = 0.01,
        py::arg("regularization") = 0.02, py::arg("epochs") = 60, py::arg("seed") = 0,
        "Fit the context-aware rating model; deterministic in the seed.");

  m.def("load_model", [](const std::string& text) { return take(CarsModel::load(text)); },
        py::arg("text"));

  m.def("replay",
        [](const std::string& path) {
          ReplayOutcome outcome = take(replay_log(path));
          py::dict out;
          py::list ratings;
          for (const auto& r : outcome.state.ratings) {
            py::dict row;
            row["user_id"] = r.user_id;
            row["turk_id"] = r.turk_id;
            row["rating"] = r.rating;
            row["at"] = r.at;
            ratings.append(std::move(row));
          }
          py::list responses;
          for (const auto& [turk_id, payload] : outcome.state.responses) {
            py::dict row;
            row["turk_id"] = turk_id;
            row["session_id"] = payload.session_id;
            row["verdict"] = payload.verdict;
            responses.append(std::move(row));
          }
          out["index"] = py::cast(std::move(outcome.state.index));
          out["ratings"] = std::move(ratings);
          out["responses"] = std::move(responses);
          if (outcome.corruption) {
            py::dict c;
            c["byte_offset"] = outcome.corruption->byte_offset;
            c["reason"] = outcome.corruption->reason;
            out["corruption"] = std::move(c);
          } else {
            out["corruption"] = py::none();
          }
          return out;
        },
        py::arg("path"), "Rebuild state from an event log; reports tail corruption if any.");
}
