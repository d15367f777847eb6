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

#ifndef FLOWGUARD_STORES_H_
#define FLOWGUARD_STORES_H_

#include <cstdint>
#include <map>
#include <optional>

#include "flowguard/model.h"
#include "flowguard/registry.h"

namespace flowguard {

struct StoredValue {
  Value value;
  int64_t timestamp = 0;  // when the entry was written
  int64_t observed = 0;   // when the underlying reading was taken

  bool operator==(const StoredValue&) const = default;
};

// DB holds the latest value received from each device, DB* the latest value
// reported upstream.
class StateStores {
 public:
  explicit StateStores(const DeviceRegistry* registry = nullptr) : registry_(registry) {}

  void UpdateDb(const DataItem& item);
  void UpdateDbStar(const Source& source, const Value& value, int64_t emitted_at,
                    int64_t observed);

  // DB lookup. A source never written yields the registry's initial value
  // for it, which may be nothing.
  std::optional<Value> Db(const Source& source) const;
  std::optional<StoredValue> DbEntry(const Source& source) const;
  // DB* lookup; nothing until a report was emitted.
  std::optional<Value> DbStar(const Source& source) const;
  std::optional<StoredValue> DbStarEntry(const Source& source) const;

  const std::map<Source, StoredValue>& db() const { return db_; }
  const std::map<Source, StoredValue>& db_star() const { return db_star_; }
  const DeviceRegistry* registry() const { return registry_; }

 private:
  const DeviceRegistry* registry_;
  std::map<Source, StoredValue> db_;
  std::map<Source, StoredValue> db_star_;
};

// Functional form: returns `stores` with the item folded into DB.
StateStores UpdateDb(StateStores stores, const DataItem& item);

}  // namespace flowguard

#endif  // FLOWGUARD_STORES_H_
