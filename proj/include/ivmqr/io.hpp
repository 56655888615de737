#pragma once

#include "ivmqr/assignment.hpp"
#include "ivmqr/densities.hpp"
#include "ivmqr/identification.hpp"
#include "ivmqr/linearization.hpp"
#include "ivmqr/model.hpp"
#include "ivmqr/potential.hpp"
#include "ivmqr/solver.hpp"
#include "ivmqr/transport.hpp"

#include "json.hpp"

#include <string>

namespace ivmqr::io {

using json = nlohmann::ordered_json;

// Non-finite values become null.
json number(double x);
json to_json(const Vec& v);
json to_json(const Mat& m);
Vec vec_from_json(const json& j);
Mat mat_from_json(const json& j);

json to_json(const ReferenceDomain& d);
ReferenceDomain domain_from_json(const json& j);

// {"type": "quadratic" | "smooth-max" | "sum", "domain": ..., payload}
json to_json(const ConvexPotential& phi);
ConvexPotential potential_from_json(const json& j);

json to_json(const StructuralModel& m);

json to_json(const ClassReport& r);
json to_json(const CycleReport& r);
json to_json(const BijectivityReport& r);
json to_json(const ConditionReport& r);
json to_json(const QuadraticFormResult& r);
json to_json(const SupportSet& s);
json to_json(const ProbeResult& r);
json to_json(const UniquenessTable& t);
json to_json(const FitResult& r);
json to_json(const RecoveryReport& r);
json to_json(const RankViolationReport& r);
json to_json(const TangentDirection& h);

void write_json(const std::string& path, const json& j);
json read_json(const std::string& path);

// iteration, residual per z, parameter hash
void write_iteration_log_csv(const std::string& path, const FitResult& r);

} // namespace ivmqr::io
