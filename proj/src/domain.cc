#include "flowguard/domain.h"

#include <algorithm>

#include "flowguard/error.h"

namespace flowguard {

bool Interval::Contains(double x) const {
  if (x < lo || x > hi) return false;
  if (x == lo && lo_open) return false;
  if (x == hi && hi_open) return false;
  return true;
}

namespace {

Interval Intersection(const Interval& a, const Interval& b) {
  Interval out;
  if (a.lo > b.lo) {
    out.lo = a.lo;
    out.lo_open = a.lo_open;
  } else if (b.lo > a.lo) {
    out.lo = b.lo;
    out.lo_open = b.lo_open;
  } else {
    out.lo = a.lo;
    out.lo_open = a.lo_open || b.lo_open;
  }
  if (a.hi < b.hi) {
    out.hi = a.hi;
    out.hi_open = a.hi_open;
  } else if (b.hi < a.hi) {
    out.hi = b.hi;
    out.hi_open = b.hi_open;
  } else {
    out.hi = a.hi;
    out.hi_open = a.hi_open || b.hi_open;
  }
  return out;
}

std::vector<Interval> IntersectAll(const std::vector<Interval>& a,
                                   const std::vector<Interval>& b) {
  std::vector<Interval> out;
  for (const Interval& x : a) {
    for (const Interval& y : b) {
      Interval z = Intersection(x, y);
      if (!z.Empty()) out.push_back(z);
    }
  }
  std::sort(out.begin(), out.end(), [](const Interval& l, const Interval& r) {
    return l.lo < r.lo || (l.lo == r.lo && !l.lo_open && r.lo_open);
  });
  return out;
}

// [min, max] minus the given sorted disjoint intervals.
std::vector<Interval> ComplementWithin(const std::vector<Interval>& set, double min,
                                       double max) {
  std::vector<Interval> out;
  double lo = min;
  bool lo_open = false;
  for (const Interval& x : set) {
    Interval gap{lo, x.lo, lo_open, !x.lo_open};
    if (!gap.Empty()) out.push_back(gap);
    lo = x.hi;
    lo_open = !x.hi_open;
  }
  Interval tail{lo, max, lo_open, false};
  if (!tail.Empty()) out.push_back(tail);
  return out;
}

double Number(const Value& v) {
  if (!v.is_number()) throw TypeMismatch("'" + v.ToString() + "' is not a number");
  return v.number();
}

std::vector<Interval> ConstraintIntervals(const Constraint& c, double min, double max) {
  switch (c.op) {
    case Op::kEq: {
      double k = Number(c.value);
      return {{k, k, false, false}};
    }
    case Op::kNe: {
      double k = Number(c.value);
      return {{min, k, false, true}, {k, max, true, false}};
    }
    case Op::kLt: return {{min, Number(c.value), false, true}};
    case Op::kLe: return {{min, Number(c.value), false, false}};
    case Op::kGt: return {{Number(c.value), max, true, false}};
    case Op::kGe: return {{Number(c.value), max, false, false}};
    case Op::kIn:
    case Op::kNotIn: {
      std::vector<Interval> points;
      for (const Value& v : c.set) {
        double k = Number(v);
        points.push_back({k, k, false, false});
      }
      std::sort(points.begin(), points.end(),
                [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
      points.erase(std::unique(points.begin(), points.end()), points.end());
      if (c.op == Op::kIn) return points;
      return ComplementWithin(points, min, max);
    }
    case Op::kInWindow:
      break;
  }
  throw TypeMismatch("operator '" + std::string(OpSymbol(c.op)) + "' needs a time of day");
}

}  // namespace

Domain::Domain(const AttributeKind& kind) : kind_(kind) {
  if (kind.IsLabelKind()) {
    mode_ = Mode::kLabels;
    labels_.assign(kind.labels.size(), true);
  } else if (kind.unit == "minute-of-day") {
    mode_ = Mode::kMinutes;
    minutes_.set();
  } else {
    mode_ = Mode::kReal;
    real_.push_back({kind.min, kind.max, false, false});
  }
}

void Domain::Restrict(const Constraint& constraint) {
  if (!Compatible(constraint, kind_)) {
    throw TypeMismatch("constraint " + constraint.ToString() + " does not fit the kind");
  }
  switch (mode_) {
    case Mode::kLabels:
      for (size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i]) labels_[i] = Satisfy(Value(kind_.labels[i]), constraint);
      }
      break;
    case Mode::kMinutes:
      for (int m = 0; m < kMinutesPerDay; ++m) {
        if (minutes_[m]) minutes_[m] = Satisfy(Value(m), constraint);
      }
      break;
    case Mode::kReal:
      real_ = IntersectAll(real_, ConstraintIntervals(constraint, kind_.min, kind_.max));
      break;
  }
}

void Domain::Intersect(const Domain& other) {
  if (other.mode_ != mode_) throw TypeMismatch("domains of different kinds");
  switch (mode_) {
    case Mode::kLabels:
      for (size_t i = 0; i < labels_.size(); ++i) {
        labels_[i] = labels_[i] && other.labels_[i];
      }
      break;
    case Mode::kMinutes:
      minutes_ &= other.minutes_;
      break;
    case Mode::kReal:
      real_ = IntersectAll(real_, other.real_);
      break;
  }
}

Domain Domain::Complement() const {
  Domain out(*this);
  switch (mode_) {
    case Mode::kLabels:
      out.labels_.flip();
      break;
    case Mode::kMinutes:
      out.minutes_.flip();
      break;
    case Mode::kReal:
      out.real_ = ComplementWithin(real_, kind_.min, kind_.max);
      break;
  }
  return out;
}

bool Domain::Empty() const {
  switch (mode_) {
    case Mode::kLabels:
      return std::find(labels_.begin(), labels_.end(), true) == labels_.end();
    case Mode::kMinutes:
      return minutes_.none();
    case Mode::kReal:
      return real_.empty();
  }
  return true;
}

bool Domain::Contains(const Value& value) const {
  switch (mode_) {
    case Mode::kLabels:
      for (size_t i = 0; i < labels_.size(); ++i) {
        if (value.is_label() && kind_.labels[i] == value.label()) return labels_[i];
      }
      return false;
    case Mode::kMinutes: {
      if (!value.is_number()) return false;
      double m = value.number();
      if (m != static_cast<int>(m) || m < 0 || m >= kMinutesPerDay) return false;
      return minutes_[static_cast<int>(m)];
    }
    case Mode::kReal:
      if (!value.is_number()) return false;
      return std::any_of(real_.begin(), real_.end(),
                         [&](const Interval& x) { return x.Contains(value.number()); });
  }
  return false;
}

bool Domain::SubsetOf(const Domain& other) const {
  Domain rest = other.Complement();
  rest.Intersect(*this);
  return rest.Empty();
}

std::optional<Value> Domain::Witness() const {
  switch (mode_) {
    case Mode::kLabels:
      for (size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i]) return Value(kind_.labels[i]);
      }
      return std::nullopt;
    case Mode::kMinutes:
      for (int m = 0; m < kMinutesPerDay; ++m) {
        if (minutes_[m]) return Value(m);
      }
      return std::nullopt;
    case Mode::kReal: {
      if (real_.empty()) return std::nullopt;
      const Interval& x = real_.front();
      if (!x.lo_open) return Value(x.lo);
      if (!x.hi_open) return Value(x.hi);
      return Value((x.lo + x.hi) / 2);
    }
  }
  return std::nullopt;
}

std::string Domain::ToString() const {
  std::string out;
  switch (mode_) {
    case Mode::kLabels:
      out = "{";
      for (size_t i = 0; i < labels_.size(); ++i) {
        if (!labels_[i]) continue;
        if (out.size() > 1) out += ", ";
        out += kind_.labels[i];
      }
      return out + "}";
    case Mode::kMinutes: {
      int m = 0;
      while (m < kMinutesPerDay) {
        if (!minutes_[m]) {
          ++m;
          continue;
        }
        int start = m;
        while (m < kMinutesPerDay && minutes_[m]) ++m;
        if (!out.empty()) out += " U ";
        out += FormatClock(start) + "-" + (m == kMinutesPerDay ? "24:00" : FormatClock(m));
      }
      return out.empty() ? "{}" : out;
    }
    case Mode::kReal:
      for (const Interval& x : real_) {
        if (!out.empty()) out += " U ";
        out += (x.lo_open ? "(" : "[") + FormatNumber(x.lo) + ", " + FormatNumber(x.hi) +
               (x.hi_open ? ")" : "]");
      }
      return out.empty() ? "{}" : out;
  }
  return out;
}

bool Overlaps(const Constraint& a, const Constraint& b, const AttributeKind& kind) {
  Domain d(kind);
  d.Restrict(a);
  d.Restrict(b);
  return !d.Empty();
}

bool Implies(const Constraint& a, const Constraint& b, const AttributeKind& kind) {
  Domain da(kind);
  da.Restrict(a);
  Domain db(kind);
  db.Restrict(b);
  return da.SubsetOf(db);
}

}  // namespace flowguard
