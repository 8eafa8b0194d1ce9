"""Built-in synthetic rules and benchmark problems.

Rules are selected by identifier and parameters, never by expression strings:

=============  ===============================================  ==================
identifier     violation                                        satisfied set
=============  ===============================================  ==================
``quad``       ``scale * ||x - center||^2``                     ``{center}``
``halfspace``  ``scale * max(0, normal . x - offset)^2``        half-space
``ball``       ``scale * max(0, ||x - center|| - radius)^2``    closed ball
``box``        ``scale * sum_k max(0, |x_k - c_k| - w_k)^2``    axis-aligned box
=============  ===============================================  ==================

All of them are C1 and have zero gradient exactly where they are satisfied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Rule, Rulebook, RulebookError

RULE_KINDS = ("quad", "halfspace", "ball", "box")


def _vec(p, name):
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise RulebookError(f"{name} must be finite")
    return arr


def quad_rule(center, scale: float = 1.0, id: Optional[str] = None) -> Rule:
    c = _vec(center, "center")

    def f(x):
        return scale * np.sum((x - c) ** 2, axis=-1)

    def g(x):
        return 2.0 * scale * (x - c)

    return Rule(id or "quad", f, g, vectorized=True)


def halfspace_rule(normal, offset: float, scale: float = 1.0, id: Optional[str] = None) -> Rule:
    n = _vec(normal, "normal")

    def f(x):
        return scale * np.maximum(0.0, x @ n - offset) ** 2

    def g(x):
        return 2.0 * scale * max(0.0, float(x @ n) - offset) * n

    return Rule(id or "halfspace", f, g, vectorized=True)


def ball_rule(center, radius: float, scale: float = 1.0, id: Optional[str] = None) -> Rule:
    c = _vec(center, "center")
    if radius <= 0:
        raise RulebookError("ball radius must be positive")

    def f(x):
        dist = np.linalg.norm(x - c, axis=-1)
        return scale * np.maximum(0.0, dist - radius) ** 2

    def g(x):
        diff = x - c
        dist = float(np.linalg.norm(diff))
        excess = dist - radius
        if excess <= 0.0:
            return np.zeros_like(x)
        return 2.0 * scale * excess * diff / dist

    return Rule(id or "ball", f, g, vectorized=True)


def box_rule(center, half_widths, scale: float = 1.0, id: Optional[str] = None) -> Rule:
    c = _vec(center, "center")
    w = _vec(half_widths, "half_widths")
    if np.any(w < 0):
        raise RulebookError("box half widths must be non-negative")

    def f(x):
        return scale * np.sum(np.maximum(0.0, np.abs(x - c) - w) ** 2, axis=-1)

    def g(x):
        diff = x - c
        return 2.0 * scale * np.maximum(0.0, np.abs(diff) - w) * np.sign(diff)

    return Rule(id or "box", f, g, vectorized=True)


_BUILDERS = {"quad": quad_rule, "halfspace": halfspace_rule, "ball": ball_rule, "box": box_rule}


def make_rule(kind: str, **params) -> Rule:
    """Build a catalog rule from its identifier and parameters."""
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise RulebookError(f"unknown rule kind {kind!r}; expected one of {RULE_KINDS}") from None
    return builder(**params)


def rulebook_from_specs(specs, dim: int, bounds=None, name: str = "synthetic") -> Rulebook:
    """Rulebook from a list of ``{"kind": ..., **params}`` mappings."""
    rules = []
    for i, spec in enumerate(specs):
        spec = dict(spec)
        kind = spec.pop("kind")
        spec.setdefault("id", f"r{i}_{kind}")
        rules.append(make_rule(kind, **spec))
    return Rulebook(tuple(rules), dim=dim, bounds=bounds, name=name)


@dataclass(frozen=True)
class CatalogProblem:
    name: str
    specs: tuple
    dim: int
    bounds: tuple
    expected_min_rank: Optional[int] = None

    @property
    def points_per_dim(self) -> int:
        return {1: 601, 2: 241, 3: 61}.get(self.dim, 21)

    def rulebook(self) -> Rulebook:
        return rulebook_from_specs(self.specs, self.dim, np.array(self.bounds), name=self.name)


def line_problem() -> CatalogProblem:
    """``r0 = max(0, x)^2``, ``r1 = (x - 2)^2`` on ``[-1, 5]``; lex argmin at 0."""
    specs = (
        {"kind": "halfspace", "normal": [1.0], "offset": 0.0},
        {"kind": "quad", "center": [2.0]},
    )
    return CatalogProblem("line_1d", specs, 1, ((-1.0, 5.0),), expected_min_rank=1)


def _unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def _feasible_spec(kind, rng, p, margin):
    d = p.size
    if kind == "halfspace":
        n = _unit(rng, d)
        return {"kind": "halfspace", "normal": n.tolist(), "offset": float(n @ p + margin + rng.uniform(0, 1))}
    if kind == "ball":
        u = _unit(rng, d) * rng.uniform(0, 1)
        return {"kind": "ball", "center": (p + u).tolist(), "radius": float(np.linalg.norm(u) + margin + rng.uniform(0, 0.5))}
    c = p + rng.uniform(-0.5, 0.5, size=d)
    w = np.abs(p - c) + margin + rng.uniform(0, 0.5, size=d)
    return {"kind": "box", "center": c.tolist(), "half_widths": w.tolist()}


def _free_spec(rng, d, half):
    kind = str(rng.choice(RULE_KINDS))
    if kind == "quad":
        return {"kind": "quad", "center": rng.uniform(-half, half, size=d).tolist(), "scale": float(rng.uniform(0.5, 2))}
    return _feasible_spec(kind, rng, rng.uniform(-half / 2, half / 2, size=d), 0.3)


def generated_problem(index: int, seed: int = 2024) -> CatalogProblem:
    """Random convex rulebook whose minimum rank is fixed by construction.

    Rules before the target rank share a ball of radius 0.6 around a core
    point; the rule at the target rank is kept away from rule 0 (or from the
    whole box when the target rank is 0) by a margin of at least 0.5.
    """
    rng = np.random.default_rng([seed, index])
    d = int(rng.integers(1, 4))
    n_rules = int(rng.integers(2, 6))
    target = int(rng.integers(0, n_rules + 1))
    half = 3.0
    margin = 0.6
    p = rng.uniform(-1.5, 1.5, size=d)
    specs = []
    for i in range(target):
        kind = "halfspace" if i == 0 else str(rng.choice(["halfspace", "ball", "box"]))
        specs.append(_feasible_spec(kind, rng, p, margin))
    if target < n_rules:
        gap = float(rng.uniform(0.5, 1.5))
        if target == 0:
            n = _unit(rng, d)
            top = half * np.sum(np.abs(n))
            specs.append({"kind": "halfspace", "normal": (-n).tolist(), "offset": float(-(top + gap))})
        else:
            n = np.asarray(specs[0]["normal"])
            b0 = specs[0]["offset"]
            if rng.random() < 0.5:
                specs.append({"kind": "halfspace", "normal": (-n).tolist(), "offset": float(-(b0 + gap))})
            else:
                c = p + (b0 + gap - n @ p) * n
                specs.append({"kind": "quad", "center": c.tolist(), "scale": float(rng.uniform(0.5, 2))})
        for _ in range(target + 1, n_rules):
            specs.append(_free_spec(rng, d, half))
    bounds = tuple((-half, half) for _ in range(d))
    return CatalogProblem(f"gen_{index:02d}", tuple(specs), d, bounds, expected_min_rank=target)


def catalog_suite(count: int = 24, seed: int = 2024) -> list:
    """The fixed benchmark suite: the 1-D line problem plus generated ones."""
    return [line_problem()] + [generated_problem(i, seed) for i in range(count - 1)]


def get_problem(name: str) -> CatalogProblem:
    if name == "line_1d":
        return line_problem()
    if name.startswith("gen_"):
        try:
            return generated_problem(int(name[4:]))
        except ValueError:
            pass
    raise RulebookError(f"unknown catalog problem {name!r}; use 'line_1d' or 'gen_NN'")
