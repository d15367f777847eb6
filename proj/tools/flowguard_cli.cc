// flowguard command line: compile, check-conflicts, run, generate, serve.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "flowguard/compiler.h"
#include "flowguard/conflict.h"
#include "flowguard/engine.h"
#include "flowguard/error.h"
#include "flowguard/experiment.h"
#include "flowguard/mediator.h"
#include "flowguard/mqtt.h"
#include "flowguard/policy.h"
#include "flowguard/registry.h"
#include "flowguard/rule.h"
#include "flowguard/trace.h"

namespace fg = flowguard;

namespace {

std::atomic<bool> g_stop{false};

void WriteOut(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw fg::Error("cannot write '" + path + "'");
  out << text;
}

std::vector<fg::Policy> LoadUps(const std::string& path) {
  if (path.empty()) return {};
  return fg::LoadPolicyFile(path);
}

int64_t NowMs() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data flow firewall for home automation"};
  app.require_subcommand(1);
  std::string registry_path = "data/testbed.registry.json";
  app.add_option("--registry", registry_path, "Device registry (JSON)");

  // compile
  auto* compile = app.add_subcommand("compile", "Compile rules into automation policies");
  std::string c_rules, c_out;
  bool c_literal = false;
  size_t c_max = 64;
  compile->add_option("--rules", c_rules, "Rule file")->required();
  compile->add_option("--out", c_out, "Output policy file (default stdout)");
  compile->add_flag("--literal", c_literal, "Compile each rule on its own");
  compile->add_option("--max-variants", c_max, "Variant cap per policy");

  // check-conflicts
  auto* check = app.add_subcommand("check-conflicts", "Check user policies against automation policies");
  std::string k_ups, k_rules, k_aps;
  bool k_json = false;
  check->add_option("--ups", k_ups, "User policy file")->required();
  auto* k_rules_opt = check->add_option("--rules", k_rules, "Rule file to compile");
  auto* k_aps_opt = check->add_option("--aps", k_aps, "Automation policy file");
  k_rules_opt->excludes(k_aps_opt);
  check->add_flag("--json", k_json, "Machine-readable output");

  // run
  auto* run = app.add_subcommand("run", "Replay a trace raw and filtered, report metrics");
  std::string r_rules, r_ups, r_trace, r_out, r_config, r_workload = "data/workload.json",
                                                     r_calls;
  bool r_gen = false, r_literal = false, r_pass = false, r_json = false;
  uint64_t r_seed = 1;
  int64_t r_delay = -1;
  double r_days = -1;
  run->add_option("--rules", r_rules, "Rule file")->required();
  run->add_option("--ups", r_ups, "User policy file");
  auto* trace_opt = run->add_option("--trace", r_trace, "Trace file (JSON lines)");
  auto* gen_opt = run->add_flag("--gen", r_gen, "Generate the trace");
  trace_opt->excludes(gen_opt);
  run->add_option("--seed", r_seed, "Seed for generation and the engine");
  run->add_option("--T", r_delay, "diffKeep delay in ms");
  run->add_option("--out", r_out, "Write the JSON report here");
  run->add_option("--config", r_config, "Engine config (JSON)");
  run->add_option("--workload", r_workload, "Generator parameters (JSON)");
  run->add_option("--days", r_days, "Generated trace length");
  run->add_option("--calls", r_calls, "Write both call logs (JSON lines) with this prefix");
  run->add_flag("--literal", r_literal, "Compile each rule on its own");
  run->add_flag("--pass-through", r_pass, "Forward every reading unchanged");
  run->add_flag("--json", r_json, "Print the JSON report instead of tables");

  // generate
  auto* generate = app.add_subcommand("generate", "Generate a synthetic trace");
  std::string g_rules, g_workload = "data/workload.json", g_out;
  uint64_t g_seed = 1;
  double g_days = -1;
  generate->add_option("--rules", g_rules, "Rules driving the actuators");
  generate->add_option("--workload", g_workload, "Generator parameters (JSON)");
  generate->add_option("--seed", g_seed, "Seed");
  generate->add_option("--days", g_days, "Trace length");
  generate->add_option("--out", g_out, "Output file (default stdout)");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the mediator against an MQTT broker");
  std::string s_broker = "127.0.0.1:1883", s_rules, s_ups, s_config, s_device_prefix = "device";
  double s_seconds = 0;
  serve->add_option("--broker", s_broker, "Broker host:port");
  serve->add_option("--rules", s_rules, "Rule file")->required();
  serve->add_option("--ups", s_ups, "User policy file");
  serve->add_option("--config", s_config, "Engine config (JSON)");
  serve->add_option("--device-prefix", s_device_prefix,
                    "Device-side topic root: readings on <root>/{device}/{attribute}");
  serve->add_option("--seconds", s_seconds, "Stop after this long (0: until interrupted)");

  CLI11_PARSE(app, argc, argv);

  try {
    fg::DeviceRegistry registry = fg::DeviceRegistry::LoadFile(registry_path);

    if (*compile) {
      std::vector<fg::Rule> rules = fg::LoadRuleFile(c_rules, registry);
      fg::ExperimentConfig cfg;
      cfg.literal = c_literal;
      cfg.compile.max_variants = c_max;
      std::vector<std::string> notes;
      std::vector<fg::Policy> policies = fg::CompileForExperiment(rules, registry, cfg, &notes);
      WriteOut(c_out, fg::SerializePolicies(policies));
      for (const std::string& n : notes) std::cerr << "note: " << n << "\n";
      return 0;
    }

    if (*check) {
      std::vector<fg::Policy> ups = LoadUps(k_ups);
      std::vector<fg::Policy> aps;
      if (!k_aps.empty()) {
        aps = fg::LoadPolicyFile(k_aps);
      } else if (!k_rules.empty()) {
        aps = fg::CompileForExperiment(fg::LoadRuleFile(k_rules, registry), registry, {});
      } else {
        throw fg::Error("check-conflicts needs --rules or --aps");
      }
      std::vector<fg::ConflictReport> all;
      for (const fg::Policy& up : ups) {
        fg::ValidatePolicy(up, registry);
        for (fg::ConflictReport& r : fg::DetectConflicts(up, aps, registry)) {
          all.push_back(std::move(r));
        }
      }
      std::cout << (k_json ? fg::ConflictsToJson(all) + "\n" : fg::FormatConflicts(all));
      return all.empty() ? 0 : 1;
    }

    if (*run) {
      std::vector<fg::Rule> rules = fg::LoadRuleFile(r_rules, registry);
      fg::ExperimentConfig cfg;
      if (!r_config.empty()) cfg.engine = fg::EngineConfig::LoadFile(r_config);
      if (r_delay > 0) cfg.engine.diff_keep_delay_ms = r_delay;
      cfg.engine.seed = r_seed;
      if (r_pass) cfg.engine.pass_through = true;
      cfg.literal = r_literal;
      std::vector<fg::DataItem> trace;
      if (!r_trace.empty()) {
        trace = fg::LoadTraceFile(r_trace, registry);
      } else {
        fg::WorkloadParams params = fg::WorkloadParams::LoadFile(r_workload, registry);
        if (r_days > 0) params.days = r_days;
        trace = fg::GenerateTrace(registry, params, rules, r_seed).items;
      }
      fg::ExperimentResult result =
          fg::RunExperiment(registry, rules, LoadUps(r_ups), trace, cfg);
      std::cout << (r_json ? fg::ReportToJson(result.metrics) + "\n"
                           : fg::FormatReport(result.metrics));
      if (!r_out.empty()) WriteOut(r_out, fg::ReportToJson(result.metrics) + "\n");
      if (!r_calls.empty()) {
        WriteOut(r_calls + ".raw.jsonl", fg::CallsToJsonl(result.raw_calls));
        WriteOut(r_calls + ".filtered.jsonl", fg::CallsToJsonl(result.filtered_calls));
      }
      return 0;
    }

    if (*generate) {
      std::vector<fg::Rule> rules;
      if (!g_rules.empty()) rules = fg::LoadRuleFile(g_rules, registry);
      fg::WorkloadParams params = fg::WorkloadParams::LoadFile(g_workload, registry);
      if (g_days > 0) params.days = g_days;
      fg::Trace trace = fg::GenerateTrace(registry, params, rules, g_seed);
      if (g_out.empty() || g_out == "-") {
        fg::WriteTrace(std::cout, trace.items);
      } else {
        std::ofstream out(g_out);
        if (!out) throw fg::Error("cannot write '" + g_out + "'");
        fg::WriteTrace(out, trace.items);
      }
      return 0;
    }

    if (*serve) {
      std::vector<fg::Rule> rules = fg::LoadRuleFile(s_rules, registry);
      fg::EngineConfig ecfg;
      if (!s_config.empty()) ecfg = fg::EngineConfig::LoadFile(s_config);
      fg::Engine engine(registry, ecfg);
      engine.LoadPolicies(fg::CompileForExperiment(rules, registry, {}), LoadUps(s_ups));
      fg::MqttOptions mo = fg::MqttOptions::FromAddress(s_broker);
      mo.client_id = "flowguard-mediator";
      fg::MqttClient client(mo);
      fg::Mediator mediator(registry, &engine, &client);
      mediator.RegisterAll();
      for (const auto& [id, vd] : mediator.devices()) {
        std::cerr << id << " -> " << vd.upstream_id << "\n";
      }
      mediator.SetCommandSink([&](const fg::DeviceCommand& c) {
        client.Publish({s_device_prefix + "/" + c.device + "/" + c.attribute + "/set", c.payload,
                        NowMs()});
      });
      mediator.SubscribeCommands();
      client.Subscribe(s_device_prefix + "/+/+", [&](const fg::WireMessage& m) {
        std::string rest = m.topic.substr(s_device_prefix.size() + 1);
        size_t slash = rest.find('/');
        fg::Source source = fg::Source::Device(rest.substr(0, slash), rest.substr(slash + 1));
        try {
          auto [value, stamp] = fg::DecodePayload(m.payload);
          registry.CheckValue(source, value);
          mediator.Ingest({source, value, std::max(NowMs(), engine.now())});
        } catch (const fg::Error& e) {
          std::cerr << "dropped reading on " << m.topic << ": " << e.what() << "\n";
        }
      });
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      auto until = std::chrono::steady_clock::now() +
                   std::chrono::milliseconds(static_cast<int64_t>(s_seconds * 1000));
      while (!g_stop && client.connected() &&
             (s_seconds <= 0 || std::chrono::steady_clock::now() < until)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(ecfg.tick_ms));
        mediator.Tick(NowMs());
      }
      client.Close();
      std::cerr << "dropped commands: " << mediator.dropped_commands() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
