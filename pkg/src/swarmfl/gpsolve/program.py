"""Standard-form geometric program container.

minimize    g0(y)            (posynomial)
subject to  g_i(y) <= 1      (posynomials)
            f_l(y)  = 1      (monomials)
            lo_v <= y_v <= hi_v

All variables are strictly positive.  Bounds are kept separately for
readability and compiled into monomial inequalities when the program is
lowered to convex form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .algebra import Monomial, Posynomial, as_posynomial


@dataclass
class GpProgram:
    objective: Posynomial
    inequalities: list[tuple[str, Posynomial]] = field(default_factory=list)
    equalities: list[tuple[str, Monomial]] = field(default_factory=list)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.objective = as_posynomial(self.objective)

    def add_inequality(self, name: str, posy) -> None:
        """Constraint posy <= 1."""
        self.inequalities.append((name, as_posynomial(posy)))

    def add_upper(self, name: str, posy, limit: float) -> None:
        """Constraint posy <= limit (limit > 0)."""
        if limit <= 0:
            raise ValueError(f"constraint {name!r}: upper limit must be positive, got {limit}")
        self.add_inequality(name, as_posynomial(posy) * (1.0 / limit))

    def add_equality(self, name: str, mono: Monomial) -> None:
        """Constraint mono == 1."""
        if not isinstance(mono, Monomial):
            raise TypeError(f"equality constraint {name!r} must be a monomial")
        self.equalities.append((name, mono))

    def set_bounds(self, var: str, lo: float, hi: float) -> None:
        if not (0 < lo <= hi):
            raise ValueError(f"bounds for {var!r} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        self.bounds[var] = (float(lo), float(hi))

    def variables(self) -> list[str]:
        names = set(self.objective.variables())
        for _, g in self.inequalities:
            names |= g.variables()
        for _, f in self.equalities:
            names |= f.variables()
        names |= set(self.bounds)
        return sorted(names)

    def validate(self) -> list[str]:
        """Return a list of structural problems (empty when well formed)."""
        problems = []
        declared = set(self.variables())
        for name, g in self.inequalities:
            if not isinstance(g, Posynomial):
                problems.append(f"inequality {name!r} is not a posynomial")
        for name, f in self.equalities:
            if not isinstance(f, Monomial):
                problems.append(f"equality {name!r} is not a monomial")
        for v, (lo, hi) in self.bounds.items():
            if v not in declared:
                problems.append(f"bounded variable {v!r} never appears in the program")
            if not (0 < lo <= hi):
                problems.append(f"bounds for {v!r} are not ordered positives: ({lo}, {hi})")
        return problems

    def feasibility_margins(self, point: dict[str, float]) -> dict[str, float]:
        """Slack of every constraint at a point: 1 - g(point) (>= 0 is feasible)."""
        out = {}
        for name, g in self.inequalities:
            out[name] = 1.0 - g.evaluate(point)
        for name, f in self.equalities:
            out[name] = -abs(f.evaluate(point) - 1.0)
        for v, (lo, hi) in self.bounds.items():
            out[f"{v}<=hi"] = 1.0 - point[v] / hi
            out[f"{v}>=lo"] = 1.0 - lo / point[v]
        return out

    def is_feasible(self, point: dict[str, float], tol: float = 1e-8) -> bool:
        return all(m >= -tol for m in self.feasibility_margins(point).values())
