// Python bindings. Policies, rules and registries cross the boundary as
// text in their file formats; events and reports as plain tuples and dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <sstream>

#include "flowguard/compiler.h"
#include "flowguard/conflict.h"
#include "flowguard/engine.h"
#include "flowguard/error.h"
#include "flowguard/experiment.h"
#include "flowguard/policy.h"
#include "flowguard/registry.h"
#include "flowguard/rule.h"
#include "flowguard/trace.h"

namespace py = pybind11;
namespace fg = flowguard;

namespace {

fg::Value ToValue(const py::handle& obj) {
  if (py::isinstance<py::str>(obj)) return fg::Value(obj.cast<std::string>());
  if (py::isinstance<py::bool_>(obj)) throw fg::TypeMismatch("booleans are not values");
  if (py::isinstance<py::int_>(obj) || py::isinstance<py::float_>(obj)) {
    return fg::Value(obj.cast<double>());
  }
  throw fg::TypeMismatch("a value must be a str or a number");
}

py::object FromValue(const fg::Value& v) {
  if (v.is_number()) return py::float_(v.number());
  return py::str(v.label());
}

py::dict EnvelopeDict(const fg::ReportEnvelope& e) {
  py::dict d;
  d["source"] = e.source.ToString();
  d["value"] = FromValue(e.value);
  d["emit_at"] = e.emit_at;
  d["observed_at"] = e.observed_at;
  d["policy"] = e.policy_id;
  return d;
}

py::list EnvelopeList(const std::vector<fg::ReportEnvelope>& out) {
  py::list l;
  for (const auto& e : out) l.append(EnvelopeDict(e));
  return l;
}

using RegistryPtr = std::shared_ptr<fg::DeviceRegistry>;

// Owns its registry so Python callers need not keep one alive.
class PyEngine {
 public:
  PyEngine(RegistryPtr registry, const std::string& policies, const std::string& user_policies,
           const std::string& config)
      : registry_(std::move(registry)),
        engine_(*registry_, config.empty() ? fg::EngineConfig{} : fg::EngineConfig::FromJson(config)) {
    engine_.LoadPolicies(fg::ParsePolicies(policies), fg::ParsePolicies(user_policies));
  }

  py::list OnEvent(const std::string& source, const py::object& value, int64_t t) {
    fg::Source s = fg::Source::Parse(source);
    fg::Value v = ToValue(value);
    registry_->CheckValue(s, v);
    return EnvelopeList(engine_.OnEvent({s, v, t}));
  }

  py::list OnTick(int64_t now) { return EnvelopeList(engine_.OnTick(now)); }

  std::optional<py::object> DbStar(const std::string& source) const {
    auto v = engine_.stores().DbStar(fg::Source::Parse(source));
    if (!v) return std::nullopt;
    return FromValue(*v);
  }

  int64_t now() const { return engine_.now(); }
  uint64_t suppressed() const { return engine_.suppressed(); }

 private:
  RegistryPtr registry_;
  fg::Engine engine_;
};

std::vector<fg::DataItem> ToItems(const fg::DeviceRegistry& registry, const py::list& items) {
  std::vector<fg::DataItem> out;
  for (const py::handle& h : items) {
    auto t = h.cast<py::tuple>();
    if (t.size() != 3) throw fg::Error("trace items are (time_ms, source, value) tuples");
    fg::DataItem d{fg::Source::Parse(t[1].cast<std::string>()), ToValue(t[2]), t[0].cast<int64_t>()};
    registry.CheckValue(d.source, d.value);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_flowguard, m) {
  m.doc() = "Data-flow firewall for smart-home automation";

  auto error = py::register_exception<fg::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<fg::ParseError>(m, "ParseError", error.ptr());
  py::register_exception<fg::InvalidPolicy>(m, "InvalidPolicy", error.ptr());
  py::register_exception<fg::UnknownSource>(m, "UnknownSource", error.ptr());
  py::register_exception<fg::KindMismatch>(m, "KindMismatch", error.ptr());
  py::register_exception<fg::TypeMismatch>(m, "TypeMismatch", error.ptr());
  py::register_exception<fg::DuplicateId>(m, "DuplicateId", error.ptr());
  py::register_exception<fg::Unsupported>(m, "Unsupported", error.ptr());

  py::class_<fg::DeviceRegistry, RegistryPtr>(m, "Registry")
      .def_static("from_json", [](const std::string& text) {
        return std::make_shared<fg::DeviceRegistry>(fg::DeviceRegistry::FromJson(text));
      })
      .def_static("load", [](const std::string& path) {
        return std::make_shared<fg::DeviceRegistry>(fg::DeviceRegistry::LoadFile(path));
      })
      .def("sources", [](const fg::DeviceRegistry& r) {
        std::vector<std::string> out;
        for (const fg::Source& s : r.Sources()) {
          if (s.type == fg::SourceType::kDevice) out.push_back(s.ToString());
        }
        return out;
      })
      .def("to_json", &fg::DeviceRegistry::ToJson);

  m.def(
      "compile_rules",
      [](const RegistryPtr& registry, const std::string& rules, bool literal) {
        std::vector<fg::Rule> parsed = fg::ParseRules(rules, *registry);
        std::vector<fg::Policy> out;
        if (literal) {
          for (const fg::Rule& r : parsed) {
            for (fg::Policy& p : fg::CompileRule(r, *registry)) out.push_back(std::move(p));
          }
        } else {
          out = fg::CompileRuleSet(parsed, *registry).policies;
        }
        return fg::SerializePolicies(out);
      },
      py::arg("registry"), py::arg("rules"), py::arg("literal") = false,
      "Compiles rule text into policy text.");

  m.def(
      "normalize_policies",
      [](const std::string& text) { return fg::SerializePolicies(fg::ParsePolicies(text)); },
      py::arg("text"), "Parses policy text and prints it back in canonical form.");

  m.def(
      "validate_policies",
      [](const RegistryPtr& registry, const std::string& text) {
        for (const fg::Policy& p : fg::ParsePolicies(text)) fg::ValidatePolicy(p, *registry);
      },
      py::arg("registry"), py::arg("text"));

  m.def(
      "check_conflicts",
      [](const RegistryPtr& registry, const std::string& user_policies,
         const std::string& automation_policies) {
        std::vector<fg::Policy> aps = fg::ParsePolicies(automation_policies);
        std::vector<fg::ConflictReport> all;
        for (const fg::Policy& up : fg::ParsePolicies(user_policies)) {
          for (auto& r : fg::DetectConflicts(up, aps, *registry)) all.push_back(std::move(r));
        }
        return fg::ConflictsToJson(all);
      },
      py::arg("registry"), py::arg("user_policies"), py::arg("automation_policies"),
      "Returns the conflicts as a JSON string.");

  m.def(
      "generate_trace",
      [](const RegistryPtr& registry, const std::string& workload, const std::string& rules,
         uint64_t seed, std::optional<double> days) {
        fg::WorkloadParams params = fg::WorkloadParams::FromJson(workload, *registry);
        if (days) params.days = *days;
        fg::Trace t = fg::GenerateTrace(*registry, params, fg::ParseRules(rules, *registry), seed);
        py::list out;
        for (const fg::DataItem& d : t.items) {
          out.append(py::make_tuple(d.timestamp, d.source.ToString(), FromValue(d.value)));
        }
        return out;
      },
      py::arg("registry"), py::arg("workload"), py::arg("rules") = "", py::arg("seed") = 1,
      py::arg("days") = py::none(), "Items as (time_ms, source, value) tuples.");

  m.def(
      "run_experiment",
      [](const RegistryPtr& registry, const std::string& rules, const py::list& trace,
         const std::string& user_policies, bool pass_through, int64_t diff_keep_delay_ms) {
        fg::ExperimentConfig config;
        config.engine.pass_through = pass_through;
        config.engine.diff_keep_delay_ms = diff_keep_delay_ms;
        std::vector<fg::DataItem> items = ToItems(*registry, trace);
        std::vector<fg::Policy> ups = fg::ParsePolicies(user_policies);
        std::vector<fg::Rule> parsed = fg::ParseRules(rules, *registry);
        fg::ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = fg::RunExperiment(*registry, parsed, ups, items, config);
        }
        return fg::ReportToJson(r.metrics);
      },
      py::arg("registry"), py::arg("rules"), py::arg("trace"), py::arg("user_policies") = "",
      py::arg("pass_through") = false, py::arg("diff_keep_delay_ms") = fg::kDefaultDiffKeepDelayMs,
      "Replays the trace on both sides and returns the metrics as a JSON string.");

  py::class_<PyEngine>(m, "Engine")
      .def(py::init<RegistryPtr, std::string, std::string, std::string>(), py::arg("registry"),
           py::arg("policies"), py::arg("user_policies") = "", py::arg("config") = "")
      .def("on_event", &PyEngine::OnEvent, py::arg("source"), py::arg("value"), py::arg("t"))
      .def("on_tick", &PyEngine::OnTick, py::arg("now"))
      .def("db_star", &PyEngine::DbStar, py::arg("source"))
      .def_property_readonly("now", &PyEngine::now)
      .def_property_readonly("suppressed", &PyEngine::suppressed);
}
