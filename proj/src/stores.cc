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

#include "flowguard/stores.h"

namespace flowguard {

void StateStores::UpdateDb(const DataItem& item) {
  db_[item.source] = {item.value, item.timestamp, item.timestamp};
}

void StateStores::UpdateDbStar(const Source& source, const Value& value,
                               int64_t emitted_at, int64_t observed) {
  db_star_[source] = {value, emitted_at, observed};
}

std::optional<Value> StateStores::Db(const Source& source) const {
  auto it = db_.find(source);
  if (it != db_.end()) return it->second.value;
  if (registry_ && registry_->Has(source)) return registry_->InitialValue(source);
  return std::nullopt;
}

std::optional<StoredValue> StateStores::DbEntry(const Source& source) const {
  auto it = db_.find(source);
  if (it == db_.end()) return std::nullopt;
  return it->second;
}

std::optional<Value> StateStores::DbStar(const Source& source) const {
  auto it = db_star_.find(source);
  if (it == db_star_.end()) return std::nullopt;
  return it->second.value;
}

std::optional<StoredValue> StateStores::DbStarEntry(const Source& source) const {
  auto it = db_star_.find(source);
  if (it == db_star_.end()) return std::nullopt;
  return it->second;
}

StateStores UpdateDb(StateStores stores, const DataItem& item) {
  stores.UpdateDb(item);
  return stores;
}

}  // namespace flowguard
