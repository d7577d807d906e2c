#pragma once

// Lane-level semantics shared by the evaluator and constant folding.

#include <cmath>
#include <cstring>
#include <limits>
#include <span>

#include "dpp/kernel/ast.hpp"

namespace dpp::kernel::ops {

inline int bits(ScalarType t) { return static_cast<int>(scalar_size(t)) * 8; }

/// Wraps `v` to the width of `t`: sign-extends signed types, zero-extends unsigned.
inline std::int64_t normalize(std::uint64_t v, ScalarType t) {
  int b = bits(t);
  if (b == 64) return static_cast<std::int64_t>(v);
  if (is_signed(t)) {
    int shift = 64 - b;
    return static_cast<std::int64_t>(v << shift) >> shift;
  }
  return static_cast<std::int64_t>(v & ((std::uint64_t{1} << b) - 1));
}

template <class I>
I saturate(float f) {
  if (std::isnan(f)) return 0;
  constexpr auto lo = static_cast<float>(std::numeric_limits<I>::min());
  constexpr auto hi = static_cast<float>(std::numeric_limits<I>::max());
  if (f <= lo) return std::numeric_limits<I>::min();
  if (f >= hi) return std::numeric_limits<I>::max();
  return static_cast<I>(f);
}

inline Lane float_to_int(float f, ScalarType to) {
  Lane out{};
  switch (to) {
    case ScalarType::Char: out.i = saturate<std::int8_t>(f); break;
    case ScalarType::UChar: out.i = saturate<std::uint8_t>(f); break;
    case ScalarType::Short: out.i = saturate<std::int16_t>(f); break;
    case ScalarType::UShort: out.i = saturate<std::uint16_t>(f); break;
    case ScalarType::Int: out.i = saturate<std::int32_t>(f); break;
    case ScalarType::UInt: out.i = saturate<std::uint32_t>(f); break;
    case ScalarType::Long: out.i = saturate<std::int64_t>(f); break;
    case ScalarType::ULong: out.u = saturate<std::uint64_t>(f); break;
    case ScalarType::Float: out.f = f; break;
  }
  return out;
}

inline Lane convert_lane(Lane v, ScalarType from, ScalarType to) {
  Lane out{};
  if (from == ScalarType::Float) {
    if (to == ScalarType::Float) return v;
    return float_to_int(v.f, to);
  }
  if (to == ScalarType::Float) {
    out.f = is_signed(from) ? static_cast<float>(v.i) : static_cast<float>(v.u);
    return out;
  }
  out.i = normalize(v.u, to);
  return out;
}

/// Converts lane-wise; a scalar source is broadcast to every lane of `to`.
inline void convert(const Value& in, DataType from, Value& out, DataType to) {
  if (from.width == 1) {
    Lane l = convert_lane(in.lanes[0], from.base, to.base);
    for (int k = 0; k < to.width; ++k) out.lanes[k] = l;
    return;
  }
  for (int k = 0; k < to.width; ++k) out.lanes[k] = convert_lane(in.lanes[k], from.base, to.base);
}

inline bool truthy(const Value& v, DataType t) {
  return t.is_float() ? v.lanes[0].f != 0.0f : v.lanes[0].i != 0;
}

inline void unary(Op op, DataType t, const Value& a, Value& out) {
  if (op == Op::Not) {
    out.lanes[0].i = truthy(a, t) ? 0 : 1;
    return;
  }
  for (int k = 0; k < t.width; ++k) {
    const Lane& x = a.lanes[k];
    Lane& r = out.lanes[k];
    if (t.is_float()) {
      r.f = op == Op::Neg ? -x.f : x.f;
    } else if (op == Op::Neg) {
      r.i = normalize(std::uint64_t{0} - x.u, t.base);
    } else if (op == Op::BitNot) {
      r.i = normalize(~x.u, t.base);
    } else {
      r = x;
    }
  }
}

enum class Fault { None, DivideByZero, ModuloByZero };

/// Binary operator on operands that both have type `t`. Comparisons write an int
/// scalar; everything else writes a value of type `t`.
inline Fault binary(Op op, DataType t, const Value& a, const Value& b, Value& out) {
  const ScalarType base = t.base;
  switch (op) {
    case Op::LogAnd:
    case Op::LogOr: {
      bool x = truthy(a, t), y = truthy(b, t);
      out.lanes[0].i = (op == Op::LogAnd ? (x && y) : (x || y)) ? 1 : 0;
      return Fault::None;
    }
    case Op::Lt: case Op::Le: case Op::Gt: case Op::Ge: case Op::Eq: case Op::Ne: {
      const Lane& x = a.lanes[0];
      const Lane& y = b.lanes[0];
      int c;  // -1, 0, 1, or 2 for unordered
      if (base == ScalarType::Float) {
        c = x.f < y.f ? -1 : x.f > y.f ? 1 : x.f == y.f ? 0 : 2;
      } else if (is_signed(base)) {
        c = x.i < y.i ? -1 : x.i > y.i ? 1 : 0;
      } else {
        c = x.u < y.u ? -1 : x.u > y.u ? 1 : 0;
      }
      bool r = false;
      switch (op) {
        case Op::Lt: r = c == -1; break;
        case Op::Le: r = c == -1 || c == 0; break;
        case Op::Gt: r = c == 1; break;
        case Op::Ge: r = c == 1 || c == 0; break;
        case Op::Eq: r = c == 0; break;
        case Op::Ne: r = c != 0; break;
        default: break;
      }
      out.lanes[0].i = r ? 1 : 0;
      return Fault::None;
    }
    default:
      break;
  }

  if (base == ScalarType::Float) {
    for (int k = 0; k < t.width; ++k) {
      float x = a.lanes[k].f, y = b.lanes[k].f;
      float& r = out.lanes[k].f;
      switch (op) {
        case Op::Add: r = x + y; break;
        case Op::Sub: r = x - y; break;
        case Op::Mul: r = x * y; break;
        case Op::Div: r = x / y; break;
        default: r = 0.0f; break;
      }
    }
    return Fault::None;
  }

  const bool sgn = is_signed(base);
  const int nbits = bits(base);
  for (int k = 0; k < t.width; ++k) {
    const Lane& x = a.lanes[k];
    const Lane& y = b.lanes[k];
    std::uint64_t r = 0;
    switch (op) {
      case Op::Add: r = x.u + y.u; break;
      case Op::Sub: r = x.u - y.u; break;
      case Op::Mul: r = x.u * y.u; break;
      case Op::Div:
      case Op::Mod:
        if (y.u == 0) return op == Op::Div ? Fault::DivideByZero : Fault::ModuloByZero;
        if (sgn) {
          if (y.i == -1) {
            r = op == Op::Div ? std::uint64_t{0} - x.u : 0;  // wraps for the minimum value
          } else {
            r = static_cast<std::uint64_t>(op == Op::Div ? x.i / y.i : x.i % y.i);
          }
        } else {
          r = op == Op::Div ? x.u / y.u : x.u % y.u;
        }
        break;
      case Op::BitAnd: r = x.u & y.u; break;
      case Op::BitOr: r = x.u | y.u; break;
      case Op::BitXor: r = x.u ^ y.u; break;
      case Op::Shl: r = x.u << (y.u & static_cast<std::uint64_t>(nbits - 1)); break;
      case Op::Shr: {
        auto n = y.u & static_cast<std::uint64_t>(nbits - 1);
        r = sgn ? static_cast<std::uint64_t>(x.i >> n) : x.u >> n;
        break;
      }
      default: break;
    }
    out.lanes[k].i = normalize(r, base);
  }
  return Fault::None;
}

/// Builtin math on `arg_type` operands (all args already converted to it).
inline void call(Builtin fn, DataType arg_type, const Value* args, Value& out) {
  const int w = arg_type.width;
  if (fn == Builtin::Dot) {
    float sum = 0.0f;
    for (int k = 0; k < w; ++k) sum += args[0].lanes[k].f * args[1].lanes[k].f;
    out.lanes[0].f = sum;
    return;
  }
  const bool sgn = is_signed(arg_type.base);
  for (int k = 0; k < w; ++k) {
    const Lane& x = args[0].lanes[k];
    Lane& r = out.lanes[k];
    switch (fn) {
      case Builtin::Sin: r.f = std::sin(x.f); break;
      case Builtin::Cos: r.f = std::cos(x.f); break;
      case Builtin::Sqrt: r.f = std::sqrt(x.f); break;
      case Builtin::Fabs: r.f = std::fabs(x.f); break;
      case Builtin::Floor: r.f = std::floor(x.f); break;
      case Builtin::Exp: r.f = std::exp(x.f); break;
      case Builtin::Log: r.f = std::log(x.f); break;
      case Builtin::Pow: r.f = std::pow(x.f, args[1].lanes[k].f); break;
      case Builtin::Fmin: r.f = std::fmin(x.f, args[1].lanes[k].f); break;
      case Builtin::Fmax: r.f = std::fmax(x.f, args[1].lanes[k].f); break;
      case Builtin::Min: {
        const Lane& y = args[1].lanes[k];
        r = (sgn ? x.i <= y.i : x.u <= y.u) ? x : y;
        break;
      }
      case Builtin::Max: {
        const Lane& y = args[1].lanes[k];
        r = (sgn ? x.i >= y.i : x.u >= y.u) ? x : y;
        break;
      }
      case Builtin::Abs:
        r.i = (sgn && x.i < 0) ? normalize(std::uint64_t{0} - x.u, arg_type.base) : x.i;
        break;
      default: break;
    }
  }
}

inline Lane load_scalar(const std::byte* p, ScalarType t) {
  Lane l{};
  switch (t) {
    case ScalarType::Char: { std::int8_t v; std::memcpy(&v, p, 1); l.i = v; break; }
    case ScalarType::UChar: { std::uint8_t v; std::memcpy(&v, p, 1); l.i = v; break; }
    case ScalarType::Short: { std::int16_t v; std::memcpy(&v, p, 2); l.i = v; break; }
    case ScalarType::UShort: { std::uint16_t v; std::memcpy(&v, p, 2); l.i = v; break; }
    case ScalarType::Int: { std::int32_t v; std::memcpy(&v, p, 4); l.i = v; break; }
    case ScalarType::UInt: { std::uint32_t v; std::memcpy(&v, p, 4); l.i = v; break; }
    case ScalarType::Long: { std::int64_t v; std::memcpy(&v, p, 8); l.i = v; break; }
    case ScalarType::ULong: { std::uint64_t v; std::memcpy(&v, p, 8); l.u = v; break; }
    case ScalarType::Float: { float v; std::memcpy(&v, p, 4); l.f = v; break; }
  }
  return l;
}

inline void store_scalar(std::byte* p, ScalarType t, Lane l) {
  if (t == ScalarType::Float) {
    std::memcpy(p, &l.f, 4);
  } else {
    std::memcpy(p, &l.u, scalar_size(t));  // low bytes on a little-endian host
  }
}

}  // namespace dpp::kernel::ops
