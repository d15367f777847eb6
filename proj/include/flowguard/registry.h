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

#ifndef FLOWGUARD_REGISTRY_H_
#define FLOWGUARD_REGISTRY_H_

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flowguard/model.h"

namespace flowguard {

// Throws KindMismatch naming `where` when `value` is not a member of `kind`.
void CheckValueOfKind(const AttributeKind& kind, const Value& value,
                      const std::string& where);

struct AttributeSpec {
  std::string name;
  AttributeKind kind;
  bool commandable = false;
  // Value assumed before the first report. Unset means the default of the
  // kind: the second (inactive-like) member for binary kinds, nothing else.
  std::optional<Value> initial;
};

struct DeviceDescriptor {
  std::string id;
  std::string type;
  std::vector<AttributeSpec> attributes;

  const AttributeSpec* Find(std::string_view attribute) const;
  bool IsActuator() const;
};

// Randomization bounds for well-known numeric attributes (min, max).
std::optional<std::pair<double, double>> StandardBounds(std::string_view attribute);

class DeviceRegistry {
 public:
  // Throws DuplicateId or KindMismatch.
  void Add(DeviceDescriptor device);

  const DeviceDescriptor* Find(std::string_view id) const;
  const DeviceDescriptor& Get(std::string_view id) const;
  const std::vector<DeviceDescriptor>& devices() const { return devices_; }

  bool Has(const Source& source) const;
  // Kind of any source: device attributes from the registry, time of day as
  // minutes [0, 1440), timers as elapsed milliseconds. Throws UnknownSource.
  const AttributeKind& Kind(const Source& source) const;
  const AttributeSpec& Spec(const Source& source) const;
  std::optional<Value> InitialValue(const Source& source) const;
  // All device sources in registry order.
  std::vector<Source> Sources() const;
  // Throws KindMismatch when the value is not a member of the source's kind.
  void CheckValue(const Source& source, const Value& value) const;

  static DeviceRegistry FromJson(std::string_view text);
  static DeviceRegistry LoadFile(const std::string& path);
  std::string ToJson() const;

 private:
  std::vector<DeviceDescriptor> devices_;
  std::map<std::string, size_t, std::less<>> index_;
};

const AttributeKind& TimeOfDayKind();
const AttributeKind& TimerKind();

}  // namespace flowguard

#endif  // FLOWGUARD_REGISTRY_H_
