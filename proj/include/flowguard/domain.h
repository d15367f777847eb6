// Sets of admissible values for one source, closed under intersection with
// constraints. Numeric attributes are unions of intervals inside the kind's
// bounds, labels are subsets of the kind's labels, and time of day is a set
// of whole minutes.

#ifndef FLOWGUARD_DOMAIN_H_
#define FLOWGUARD_DOMAIN_H_

#include <bitset>
#include <optional>
#include <string>
#include <vector>

#include "flowguard/model.h"

namespace flowguard {

struct Interval {
  double lo = 0;
  double hi = 0;
  bool lo_open = false;
  bool hi_open = false;

  bool Empty() const { return lo > hi || (lo == hi && (lo_open || hi_open)); }
  bool Contains(double x) const;
  bool operator==(const Interval&) const = default;
};

class Domain {
 public:
  // Every value of the kind.
  explicit Domain(const AttributeKind& kind);

  // Intersects with the values satisfying `constraint`. Throws TypeMismatch
  // when the constraint does not fit the kind.
  void Restrict(const Constraint& constraint);
  void Intersect(const Domain& other);
  Domain Complement() const;

  bool Empty() const;
  bool Contains(const Value& value) const;
  bool SubsetOf(const Domain& other) const;
  // Some member, if any.
  std::optional<Value> Witness() const;
  std::string ToString() const;

  const AttributeKind& kind() const { return kind_; }

 private:
  enum class Mode { kLabels, kMinutes, kReal };

  AttributeKind kind_;
  Mode mode_;
  std::vector<bool> labels_;
  std::bitset<kMinutesPerDay> minutes_;
  std::vector<Interval> real_;  // sorted, disjoint
};

// True when some value satisfies both constraints.
bool Overlaps(const Constraint& a, const Constraint& b, const AttributeKind& kind);
// True when every value satisfying `a` satisfies `b`.
bool Implies(const Constraint& a, const Constraint& b, const AttributeKind& kind);

}  // namespace flowguard

#endif  // FLOWGUARD_DOMAIN_H_
