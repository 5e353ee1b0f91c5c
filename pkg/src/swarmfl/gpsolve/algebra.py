"""Positive-variable monomial/posynomial algebra.

A monomial is ``d * prod_v v**a_v`` with d > 0 over strictly positive named
variables; a posynomial is a sum of monomials.  These are the currency of the
offload optimizer: objectives and constraints are assembled symbolically and
then lowered to a convex program in log-space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def _clean_exps(exps: dict[str, float]) -> dict[str, float]:
    return {v: float(e) for v, e in exps.items() if e != 0.0}


@dataclass(frozen=True)
class Monomial:
    """coef * prod(var ** exp); coef must be strictly positive."""

    coef: float
    exps: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.coef > 0.0) or not math.isfinite(self.coef):
            raise ValueError(f"monomial coefficient must be positive and finite, got {self.coef}")
        object.__setattr__(self, "exps", _clean_exps(self.exps))

    def variables(self) -> set[str]:
        return set(self.exps)

    def __mul__(self, other):
        if isinstance(other, Monomial):
            exps = dict(self.exps)
            for v, e in other.exps.items():
                exps[v] = exps.get(v, 0.0) + e
            return Monomial(self.coef * other.coef, exps)
        if isinstance(other, (int, float)):
            return Monomial(self.coef * other, dict(self.exps))
        if isinstance(other, Posynomial):
            return Posynomial([self * m for m in other.terms])
        return NotImplemented

    __rmul__ = __mul__

    def __pow__(self, p: float) -> "Monomial":
        return Monomial(self.coef ** p, {v: e * p for v, e in self.exps.items()})

    def __truediv__(self, other):
        if isinstance(other, Monomial):
            return self * other ** -1.0
        if isinstance(other, (int, float)):
            return Monomial(self.coef / other, dict(self.exps))
        return NotImplemented

    def __add__(self, other):
        return Posynomial([self]) + other

    __radd__ = __add__

    def evaluate(self, point: dict[str, float]) -> float:
        val = self.coef
        for v, e in self.exps.items():
            x = point[v]
            if x <= 0:
                raise ValueError(f"variable {v!r} must be positive, got {x}")
            val *= x ** e
        return val

    def substitute(self, values: dict[str, float]) -> "Monomial":
        """Pin some variables to constants, folding them into the coefficient."""
        coef = self.coef
        exps = {}
        for v, e in self.exps.items():
            if v in values:
                x = values[v]
                if x <= 0:
                    raise ValueError(f"substituted value for {v!r} must be positive")
                coef *= x ** e
            else:
                exps[v] = e
        return Monomial(coef, exps)

    def as_posynomial(self) -> "Posynomial":
        return Posynomial([self])

    def __repr__(self):
        parts = [f"{self.coef:.6g}"] + [f"{v}^{e:g}" for v, e in sorted(self.exps.items())]
        return "*".join(parts)


def variable(name: str) -> Monomial:
    return Monomial(1.0, {name: 1.0})


def const(value: float) -> Monomial:
    return Monomial(float(value))


class Posynomial:
    """Sum of monomials.  Nonempty; like-terms are merged on construction."""

    __slots__ = ("terms",)

    def __init__(self, terms):
        merged: dict[tuple, float] = {}
        order: list[tuple] = []
        for t in terms:
            if isinstance(t, (int, float)):
                t = const(t)
            if not isinstance(t, Monomial):
                raise TypeError(f"posynomial terms must be monomials, got {type(t)}")
            key = tuple(sorted(t.exps.items()))
            if key not in merged:
                merged[key] = 0.0
                order.append(key)
            merged[key] += t.coef
        if not merged:
            raise ValueError("posynomial must have at least one term")
        self.terms = tuple(Monomial(merged[k], dict(k)) for k in order)

    def variables(self) -> set[str]:
        out: set[str] = set()
        for t in self.terms:
            out |= t.variables()
        return out

    def __add__(self, other):
        if isinstance(other, Posynomial):
            return Posynomial(list(self.terms) + list(other.terms))
        if isinstance(other, Monomial):
            return Posynomial(list(self.terms) + [other])
        if isinstance(other, (int, float)):
            if other == 0:
                return self
            return Posynomial(list(self.terms) + [const(other)])
        return NotImplemented

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Posynomial([t * other for t in self.terms])
        if isinstance(other, Monomial):
            return Posynomial([t * other for t in self.terms])
        if isinstance(other, Posynomial):
            return Posynomial([a * b for a in self.terms for b in other.terms])
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Monomial):
            return self * other ** -1.0
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        return NotImplemented

    def evaluate(self, point: dict[str, float]) -> float:
        return sum(t.evaluate(point) for t in self.terms)

    def substitute(self, values: dict[str, float]) -> "Posynomial":
        return Posynomial([t.substitute(values) for t in self.terms])

    def is_monomial(self) -> bool:
        return len(self.terms) == 1

    def __len__(self):
        return len(self.terms)

    def __repr__(self):
        return " + ".join(repr(t) for t in self.terms)


def as_posynomial(x) -> Posynomial:
    if isinstance(x, Posynomial):
        return x
    if isinstance(x, Monomial):
        return x.as_posynomial()
    if isinstance(x, (int, float)):
        return const(x).as_posynomial()
    raise TypeError(f"cannot coerce {type(x)} to posynomial")


def condense(p, anchor: dict[str, float]) -> Monomial:
    """Best local monomial lower bound of a posynomial at a positive anchor.

    Arithmetic-geometric mean:  g(x) = sum_k u_k(x)  >=  prod_k (u_k(x)/a_k)**a_k
    with a_k = u_k(anchor)/g(anchor).  Equality (in value and gradient) holds
    at the anchor, which is what makes the successive approximation converge
    to a KKT point.
    """
    p = as_posynomial(p)
    for v in p.variables():
        if v not in anchor:
            raise ValueError(f"anchor missing variable {v!r}")
        if not (anchor[v] > 0.0):
            raise ValueError(f"anchor coordinate {v!r} must be positive, got {anchor[v]}")
    if p.is_monomial():
        return p.terms[0]
    u_vals = [t.evaluate(anchor) for t in p.terms]
    g_val = sum(u_vals)
    out = const(1.0)
    for t, u in zip(p.terms, u_vals):
        a = u / g_val
        out = out * (t / a) ** a
    return out
