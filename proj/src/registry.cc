// Copyright 2026 The flowguard authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flowguard/registry.h"

#include <fstream>
#include <sstream>

#include "flowguard/error.h"
#include "json.hpp"

namespace flowguard {

using nlohmann::json;

const AttributeSpec* DeviceDescriptor::Find(std::string_view attribute) const {
  for (const AttributeSpec& spec : attributes) {
    if (spec.name == attribute) return &spec;
  }
  return nullptr;
}

bool DeviceDescriptor::IsActuator() const {
  for (const AttributeSpec& spec : attributes) {
    if (spec.commandable) return true;
  }
  return false;
}

std::optional<std::pair<double, double>> StandardBounds(std::string_view attribute) {
  if (attribute == "temperature") return std::make_pair(-50.0, 150.0);
  if (attribute == "illuminance") return std::make_pair(0.0, 100000.0);
  if (attribute == "humidity") return std::make_pair(0.0, 100.0);
  if (attribute == "power") return std::make_pair(0.0, 1800.0);
  return std::nullopt;
}

const AttributeKind& TimeOfDayKind() {
  static const AttributeKind kind =
      AttributeKind::Numeric("minute-of-day", 0, kMinutesPerDay);
  return kind;
}

const AttributeKind& TimerKind() {
  static const AttributeKind kind = AttributeKind::Numeric("ms", 0, 1e15);
  return kind;
}

void DeviceRegistry::Add(DeviceDescriptor device) {
  if (device.id.empty()) throw Error("device without id");
  if (index_.count(device.id)) throw DuplicateId("duplicate device '" + device.id + "'");
  std::map<std::string, int> seen;
  for (const AttributeSpec& spec : device.attributes) {
    if (seen[spec.name]++) {
      throw DuplicateId("duplicate attribute '" + device.id + "." + spec.name + "'");
    }
    spec.kind.Validate();
    if (spec.initial) CheckValueOfKind(spec.kind, *spec.initial, device.id + "." + spec.name);
  }
  index_[device.id] = devices_.size();
  devices_.push_back(std::move(device));
}

const DeviceDescriptor* DeviceRegistry::Find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &devices_[it->second];
}

const DeviceDescriptor& DeviceRegistry::Get(std::string_view id) const {
  const DeviceDescriptor* device = Find(id);
  if (!device) throw UnknownSource("unknown device '" + std::string(id) + "'");
  return *device;
}

bool DeviceRegistry::Has(const Source& source) const {
  switch (source.type) {
    case SourceType::kTime: return source.IsTimeOfDay();
    case SourceType::kTimer: return source.subject == "timer";
    case SourceType::kDevice: {
      const DeviceDescriptor* device = Find(source.subject);
      return device && device->Find(source.attribute);
    }
  }
  return false;
}

const AttributeSpec& DeviceRegistry::Spec(const Source& source) const {
  if (source.type != SourceType::kDevice) {
    throw UnknownSource("'" + source.ToString() + "' is not a device attribute");
  }
  const DeviceDescriptor& device = Get(source.subject);
  const AttributeSpec* spec = device.Find(source.attribute);
  if (!spec) {
    throw UnknownSource("unknown attribute '" + source.subject + "." +
                        source.attribute + "'");
  }
  return *spec;
}

const AttributeKind& DeviceRegistry::Kind(const Source& source) const {
  switch (source.type) {
    case SourceType::kTime:
      if (!source.IsTimeOfDay()) {
        throw UnknownSource("unsupported time feature '" + source.ToString() + "'");
      }
      return TimeOfDayKind();
    case SourceType::kTimer:
      if (source.subject != "timer") {
        throw UnknownSource("malformed timer source '" + source.ToString() + "'");
      }
      return TimerKind();
    case SourceType::kDevice:
      break;
  }
  return Spec(source).kind;
}

std::optional<Value> DeviceRegistry::InitialValue(const Source& source) const {
  if (source.type != SourceType::kDevice) return std::nullopt;
  const AttributeSpec& spec = Spec(source);
  if (spec.initial) return spec.initial;
  if (spec.kind.kind == ValueKind::kBinary) return Value(spec.kind.labels[1]);
  return std::nullopt;
}

std::vector<Source> DeviceRegistry::Sources() const {
  std::vector<Source> out;
  for (const DeviceDescriptor& device : devices_) {
    for (const AttributeSpec& spec : device.attributes) {
      out.push_back(Source::Device(device.id, spec.name));
    }
  }
  return out;
}

void CheckValueOfKind(const AttributeKind& kind, const Value& value,
                      const std::string& where) {
  if (kind.IsLabelKind()) {
    if (!value.is_label() || !kind.HasLabel(value.label())) {
      throw KindMismatch("'" + value.ToString() + "' is not a value of " + where);
    }
    return;
  }
  if (!value.is_number()) {
    throw KindMismatch("'" + value.ToString() + "' is not numeric for " + where);
  }
}

void DeviceRegistry::CheckValue(const Source& source, const Value& value) const {
  CheckValueOfKind(Kind(source), value, source.ToString());
}

namespace {

Value ValueFromJson(const json& j) {
  if (j.is_number()) return Value(j.get<double>());
  if (j.is_string()) return Value(j.get<std::string>());
  throw Error("value must be a number or a string");
}

AttributeSpec SpecFromJson(const json& j) {
  AttributeSpec spec;
  spec.name = j.at("name").get<std::string>();
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "binary") {
    auto values = j.at("values").get<std::vector<std::string>>();
    if (values.size() != 2) throw KindMismatch(spec.name + ": binary kind needs two values");
    spec.kind = AttributeKind::Binary(values[0], values[1]);
  } else if (kind == "enumerated") {
    spec.kind = AttributeKind::Enumerated(j.at("values").get<std::vector<std::string>>());
  } else if (kind == "numeric") {
    auto bounds = StandardBounds(spec.name);
    double min = j.contains("min") ? j["min"].get<double>() : bounds ? bounds->first : 0;
    double max = j.contains("max") ? j["max"].get<double>() : bounds ? bounds->second : 0;
    if (!j.contains("min") && !j.contains("max") && !bounds) {
      throw KindMismatch(spec.name + ": numeric attribute needs min and max");
    }
    spec.kind = AttributeKind::Numeric(j.value("unit", ""), min, max);
  } else {
    throw KindMismatch(spec.name + ": unknown kind '" + kind + "'");
  }
  spec.commandable = j.value("commandable", false);
  if (j.contains("initial")) spec.initial = ValueFromJson(j["initial"]);
  return spec;
}

}  // namespace

DeviceRegistry DeviceRegistry::FromJson(std::string_view text) {
  DeviceRegistry registry;
  try {
    json doc = json::parse(text);
    for (const json& d : doc.at("devices")) {
      DeviceDescriptor device;
      device.id = d.at("id").get<std::string>();
      device.type = d.value("type", "");
      for (const json& a : d.at("attributes")) device.attributes.push_back(SpecFromJson(a));
      registry.Add(std::move(device));
    }
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("registry: ") + e.what(), 0);
  } catch (const json::exception& e) {
    throw Error(std::string("registry: ") + e.what());
  }
  return registry;
}

DeviceRegistry DeviceRegistry::LoadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open registry '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return FromJson(buf.str());
}

std::string DeviceRegistry::ToJson() const {
  json devices = json::array();
  for (const DeviceDescriptor& device : devices_) {
    json attrs = json::array();
    for (const AttributeSpec& spec : device.attributes) {
      json a = {{"name", spec.name}, {"kind", ValueKindName(spec.kind.kind)}};
      if (spec.kind.IsLabelKind()) {
        a["values"] = spec.kind.labels;
      } else {
        a["unit"] = spec.kind.unit;
        a["min"] = spec.kind.min;
        a["max"] = spec.kind.max;
      }
      if (spec.commandable) a["commandable"] = true;
      if (spec.initial) {
        if (spec.initial->is_number()) {
          a["initial"] = spec.initial->number();
        } else {
          a["initial"] = spec.initial->label();
        }
      }
      attrs.push_back(a);
    }
    devices.push_back({{"id", device.id}, {"type", device.type}, {"attributes", attrs}});
  }
  return json({{"devices", devices}}).dump(2);
}

}  // namespace flowguard
