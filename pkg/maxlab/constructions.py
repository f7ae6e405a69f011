"""
Builders for the concrete spaces: the star graph, the Euclidean star, tori,
the doubling product example, the Ahlfors-David example and truncated
k-ary trees.

Every builder is deterministic. The two group constructions also return a
BallStructureTable comparing the predicted ball of every radius band with
the ball the generic oracle produces.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from maxlab.field import QuadraticLevelSpace, field_for
from maxlab.mms import ExponentScale, FiniteMetricSpace, GroupMetricSpace, LinearScale, SquaredScale
from maxlab.utils import TriangleInequalityError, check_budget
from maxlab.validation import SpaceValidator, regularity_check

logger = logging.getLogger(__name__)


# ============================================================================
# BALL STRUCTURE TABLES
# ============================================================================

@dataclass
class BallStructureTable:
    """Predicted versus observed ball per radius band [band_lo, band_hi)."""

    rows: List[Dict[str, Any]] = field(default_factory=list)

    def add(self, band_lo, band_hi, form: str, predicted: np.ndarray, observed: np.ndarray) -> None:
        same = bool(np.array_equal(predicted, observed))
        self.rows.append({
            "band_lo": band_lo,
            "band_hi": band_hi,
            "form": form,
            "predicted_measure": int(predicted.sum()),
            "observed_measure": int(observed.sum()),
            "pass": same,
        })
        if not same:
            logger.warning("Ball form %s fails on band [%s, %s)", form, band_lo, band_hi)

    @property
    def passed(self) -> bool:
        return all(row["pass"] for row in self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=["band_lo", "band_hi", "form", "predicted_measure",
                                                "observed_measure", "pass"])


# ============================================================================
# SMALL SPACES
# ============================================================================

def star_space(K: int) -> FiniteMetricSpace:
    """
    Hub joined to (K-1)² spokes: d(hub, spoke) = 1, d(spoke, spoke') = 2.

    The hub weighs K-1 and every spoke 1, so μ(X) = K(K-1). Point 0 is the hub.
    """
    if K < 2:
        raise ValueError(f"Star space needs K >= 2, got {K}")
    n = 1 + (K - 1) ** 2
    codes = np.full((n, n), 2, dtype=np.int64)
    codes[0, :] = codes[:, 0] = 1
    np.fill_diagonal(codes, 0)
    weights = np.ones(n, dtype=np.int64)
    weights[0] = K - 1
    return FiniteMetricSpace(codes, LinearScale(1), weights, name="star", params={"K": K})


def euclidean_star(n: int) -> FiniteMetricSpace:
    """{0, e_1, ..., e_n} in R^n with counting measure; distances stored squared."""
    if n < 1:
        raise ValueError(f"Euclidean star needs n >= 1, got {n}")
    codes = np.full((n + 1, n + 1), 2, dtype=np.int64)
    codes[0, :] = codes[:, 0] = 1
    np.fill_diagonal(codes, 0)
    return FiniteMetricSpace(codes, SquaredScale(), name="euclidean_star", params={"n": n})


def torus(size: int, budget: Optional[int] = None) -> GroupMetricSpace:
    """Cycle Z_size with the arc metric min(i, size - i) and counting measure."""
    if size < 1:
        raise ValueError(f"Torus needs size >= 1, got {size}")
    idx = np.arange(size)
    norm = np.minimum(idx, size - idx)
    return GroupMetricSpace((size,), norm, LinearScale(1), name="torus", params={"size": size}, budget=budget)


def single_point() -> FiniteMetricSpace:
    return FiniteMetricSpace(np.zeros((1, 1), dtype=np.int64), LinearScale(1), name="point")


def digit_count(values: np.ndarray, base: int, max_digits: int) -> np.ndarray:
    """Number of base-``base`` digits of each value (0 has none)."""
    values = np.asarray(values)
    count = np.zeros(values.shape, dtype=np.int64)
    for i in range(max_digits):
        count += values >= base**i
    return count


# ============================================================================
# DOUBLING PRODUCT EXAMPLE
# ============================================================================

class DoublingProductSpace(GroupMetricSpace):
    """
    X = X_q × F_q^t with

        d((u,v), (u',v')) = 4^{j(v-v')}·1[v≠v'] + 2^{-ℓ_{j(v-v')}(u-u')}·1[u≠u']

    where j(v) is the least j with v ∈ V_j = F_q^j and ℓ_j(u) the largest ℓ
    with u ∈ E_j + W_{-ℓ} (E_0 = {0}, E_j = Q^{-1}(j-1) for j >= 1).
    Distances are stored in units of 2^{-M}. Point (u, v) has index
    u·q^t + v.
    """

    def __init__(self, q: int, t: int, m: Optional[int] = None, budget: Optional[int] = None):
        if q not in (5, 7):
            raise ValueError(f"Doubling product example supports q in (5, 7), got {q}")
        if not 1 <= t <= q:
            raise ValueError(f"Depth t must satisfy 1 <= t <= q, got {t}")
        level_space = QuadraticLevelSpace(field_for(q), m, budget)
        check_budget(float(level_space.n_points) * q**t, f"doubling product q={q} t={t}", budget)
        self.level_space = level_space
        self.q, self.t, self.m = q, t, level_space.m
        self.M = level_space.depth
        self.fiber_size = q**t
        self.quantum = Fraction(1, 2**self.M)
        self.ell_table = self._ell_table()

        size = level_space.n_points * self.fiber_size
        idx = np.arange(size)
        u, v = idx // self.fiber_size, idx % self.fiber_size
        jv = digit_count(v, q, t)
        ell = self.ell_table[jv, u]
        norm = np.where(v > 0, 4**jv * 2**self.M, 0) + np.where(u > 0, 2 ** (self.M - ell), 0)
        super().__init__((q,) * (self.m + t), norm, LinearScale(2**self.M), name="doubling_product",
                         params={"q": q, "t": t, "m": self.m}, budget=budget)
        logger.info("Built doubling product q=%d t=%d: %d points", q, t, size)

    def level_of_index(self, j: int) -> int:
        return j - 1

    def level_set(self, j: int) -> np.ndarray:
        """E_j as indices of X_q."""
        if j == 0:
            return np.array([0])
        return self.level_space.level_set(self.level_of_index(j))

    def sumset(self, j: int, ell: int) -> np.ndarray:
        """Indicator over X_q of E_j + W_{-ℓ}."""
        block = self.level_space.field.p ** (self.M - ell)
        cosets = np.unique(self.level_set(j) // block)
        return np.isin(np.arange(self.level_space.n_points) // block, cosets)

    def _ell_table(self) -> np.ndarray:
        """ℓ_j(u) for j = 0..t and every u."""
        table = np.zeros((self.t + 1, self.level_space.n_points), dtype=np.int64)
        for j in range(self.t + 1):
            if self.level_set(j).size == 0:
                raise ValueError(f"Level set E_{j} is empty for q={self.q}, m={self.m}")
            for ell in range(1, self.M + 1):
                table[j, self.sumset(j, ell)] = ell
        return table

    def _mask(self, u_mask: np.ndarray, v_limit: int) -> np.ndarray:
        """u_mask × V_{v_limit}, as an indicator over X."""
        return np.kron(u_mask, np.arange(self.fiber_size) < self.q**v_limit)

    def _fiber_mask(self, u_mask: np.ndarray, j: int) -> np.ndarray:
        """u_mask × (V_j minus V_{j-1})."""
        v = np.arange(self.fiber_size)
        return np.kron(u_mask, (v < self.q**j) & (v >= self.q ** (j - 1)))

    def ball_structure(self) -> BallStructureTable:
        """Compare B(0, r) with its predicted form on every radius band."""
        table = BallStructureTable()
        unit = 2**self.M
        n_u = self.level_space.n_points
        u_idx = np.arange(n_u)
        everything = np.ones(n_u, dtype=bool)
        origin = u_idx == 0

        def observe(lo_code: int, hi_code: Optional[int]) -> np.ndarray:
            low = self.norm_codes <= lo_code
            if hi_code is not None and not np.array_equal(low, self.norm_codes <= hi_code - 1):
                return np.zeros_like(low)
            return low

        def value(code: int) -> Fraction:
            return Fraction(code, unit)

        # r in [2^-ℓ, 2^-ℓ+1): W_{-ℓ} × {0}
        for ell in range(self.M, 0, -1):
            lo, hi = 2 ** (self.M - ell), 2 ** (self.M - ell + 1)
            predicted = self._mask(u_idx < self.level_space.field.p ** (self.M - ell), 0)
            table.add(value(lo), value(hi), f"W_-{ell} x {{0}}", predicted, observe(lo, hi))

        # r in [1, 4): X_q × {0}
        table.add(value(unit), value(4 * unit), "X_q x {0}", self._mask(everything, 0), observe(unit, 4 * unit))

        for j in range(1, self.t + 1):
            base = 4**j * unit
            lower = self._mask(everything, j - 1)
            # r - 4^j in [0, 2^-M): only u = 0 joins at level j
            table.add(value(base), value(base + 1), f"({{0}} x V_{j}) + (X_q x V_{j - 1})",
                      lower | self._fiber_mask(origin, j), observe(base, base + 1))
            for ell in range(self.M, 0, -1):
                lo, hi = base + 2 ** (self.M - ell), base + 2 ** (self.M - ell + 1)
                u_mask = self.sumset(j, ell) | origin
                table.add(value(lo), value(hi), f"((E_{j} + W_-{ell}) + {{0}}) x V_{j} + X_q x V_{j - 1}",
                          lower | self._fiber_mask(u_mask, j), observe(lo, hi))
            top = 4 ** (j + 1) * unit if j < self.t else None
            table.add(value(base + unit), value(top) if top else None, f"X_q x V_{j}",
                      self._mask(everything, j), observe(base + unit, top))
        return table


def doubling_product_space(q: int, t: int, m: Optional[int] = None,
                           budget: Optional[int] = None) -> Tuple[DoublingProductSpace, BallStructureTable]:
    space = DoublingProductSpace(q, t, m, budget)
    table = space.ball_structure()
    logger.info("Doubling product ball structure: %s", "pass" if table.passed else "FAIL")
    return space, table


# ============================================================================
# AHLFORS-DAVID EXAMPLE
# ============================================================================

class ADRegularSpace(GroupMetricSpace):
    """
    X = X_q × F_3^t, q = 3^k, with d(x, y) = min{3^{j/n} : x - y ∈ B_j} where

        B_j = W_j × {0}                                         for -M <= j <= 0
        B_j = (X_q × V_j) ∪ ⋃_{ℓ=1}^{min(j+k, t)} (E_ℓ × V_ℓ)   for 1 <= j <= t

    and E_ℓ = Q^{-1}(ℓ - 1). Distance codes are j + M.
    """

    def __init__(self, k: int, t: int, n: int, m: Optional[int] = None, budget: Optional[int] = None):
        if k not in (1, 2, 3):
            raise ValueError(f"k must be 1, 2 or 3, got {k}")
        q = 3**k
        if not 1 <= t <= q:
            raise ValueError(f"Depth t must satisfy 1 <= t <= q, got {t}")
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        level_space = QuadraticLevelSpace(field_for(q), m, budget)
        check_budget(float(level_space.n_points) * 3**t, f"AD space k={k} t={t}", budget)
        self.level_space = level_space
        self.k, self.q, self.t, self.n = k, q, t, n
        self.m = level_space.m
        self.M = level_space.depth
        self.fiber_size = 3**t

        size = level_space.n_points * self.fiber_size
        idx = np.arange(size)
        u, v = idx // self.fiber_size, idx % self.fiber_size
        jv = digit_count(v, 3, t)
        level_index = level_space.levels[u] + 1
        shortcut = (jv >= 1) & (jv <= level_index) & (level_index <= t)
        j_top = np.where(shortcut, np.minimum(jv, np.maximum(1, level_index - k)), jv)
        norm = np.where(v == 0, digit_count(u, 3, self.M), j_top + self.M)
        super().__init__((3,) * (self.M + t), norm, ExponentScale(3, n, self.M), name="ad_regular",
                         params={"k": k, "t": t, "n": n, "m": self.m}, budget=budget)
        logger.info("Built AD space k=%d t=%d n=%d: %d points", k, t, n, size)

    @property
    def margin(self) -> float:
        """2 - (largest/smallest nonzero distance); >= 0 forces the triangle inequality."""
        return 2.0 - 3.0 ** ((self.t + self.M - 1) / self.n)

    def predicted_set(self, j: int) -> np.ndarray:
        """B_j as an indicator over X."""
        n_u = self.level_space.n_points
        v = np.arange(self.fiber_size)
        if j <= 0:
            return np.kron(np.arange(n_u) < 3 ** (self.M + j), v == 0)
        mask = np.kron(np.ones(n_u, dtype=bool), v < 3**j)
        for ell in range(1, min(j + self.k, self.t) + 1):
            mask |= np.kron(self.level_space.levels == ell - 1, v < 3**ell)
        return mask

    def ball_structure(self) -> Tuple[BallStructureTable, bool]:
        """Predicted B_j against B(0, 3^{j/n}) for every j, plus the nesting flag."""
        table = BallStructureTable()
        previous = None
        nested = True
        for j in range(-self.M, self.t + 1):
            predicted = self.predicted_set(j)
            if previous is not None and np.any(previous & ~predicted):
                nested = False
            previous = predicted
            code = j + self.M
            hi = self.scale.value(code + 1) if j < self.t else None
            table.add(self.scale.value(code), hi, f"B_{j}", predicted, self.norm_codes <= code)
        nested = nested and bool(self.predicted_set(-self.M).sum() == 1) and bool(previous.all())
        return table, nested

    def claim_check(self):
        """(1/3) r^n <= μ(B(0,r))/μ(X_q) <= 4 r^n for every radius in [3^{(1-M)/n}, 3^{t/n}]."""
        return regularity_check(self, "AD", {"n": self.n, "c": Fraction(1, 3), "unit": self.level_space.n_points,
                                             "radius_codes": (1, self.t + self.M)}, constant=4)


def ad_regular_space(k: int, t: int, n: int, m: Optional[int] = None, budget: Optional[int] = None,
                     validator: Optional[SpaceValidator] = None) -> Tuple[ADRegularSpace, BallStructureTable]:
    """
    Build the AD example, verify its ball structure and its metric.

    Raises:
    -------
    TriangleInequalityError
        When a sampled (or exhaustive) triple violates the triangle inequality.
    """
    space = ADRegularSpace(k, t, n, m, budget)
    if space.margin < 0:
        logger.warning("AD space k=%d t=%d n=%d: distance ratio exceeds 2 (margin %.4f); relying on sampled check",
                       k, t, n, space.margin)
    validator = validator or SpaceValidator()
    triangle = validator.triangle_inequality_check(space)
    if not triangle["passed"]:
        raise TriangleInequalityError(f"AD metric with k={k}, t={t}, n={n} is not a metric", triangle["witness"])
    table, nested = space.ball_structure()
    space.nested = nested
    if not nested:
        logger.warning("AD space k=%d t=%d: B_j are not nested", k, t)
    return space, table


# ============================================================================
# K-ARY TREES
# ============================================================================

class KaryTree:
    """
    Rooted k-ary tree truncated at depth D, vertices in BFS order.

    Children of v are k·v + 1 .. k·v + k. The descendants of v at relative
    depth h occupy the contiguous range starting at v·k^h + (k^h - 1)/(k - 1).
    """

    def __init__(self, k: int, D: int, budget: Optional[int] = None):
        if k < 2:
            raise ValueError(f"k must be >= 2, got {k}")
        if D < 0:
            raise ValueError(f"Depth must be >= 0, got {D}")
        self.k, self.D = k, D
        self.n_vertices = (k ** (D + 1) - 1) // (k - 1)
        check_budget(self.n_vertices, f"{k}-ary tree of depth {D}", budget)
        self.name = "kary_tree"

    @property
    def n_points(self) -> int:
        return self.n_vertices

    def descriptor(self) -> Dict[str, Any]:
        return {"type": self.name, "params": {"k": self.k, "D": self.D}}

    def level_start(self, d: int) -> int:
        return (self.k**d - 1) // (self.k - 1)

    @cached_property
    def depths(self) -> np.ndarray:
        out = np.empty(self.n_vertices, dtype=np.int64)
        for d in range(self.D + 1):
            out[self.level_start(d):self.level_start(d + 1)] = d
        return out

    def depth(self, v: int) -> int:
        return int(self.depths[v])

    def parent(self, v: int) -> Optional[int]:
        return None if v == 0 else (v - 1) // self.k

    def children(self, v: int) -> range:
        if self.depth(v) >= self.D:
            return range(0)
        return range(self.k * v + 1, self.k * v + self.k + 1)

    def ancestor(self, v: int, steps: int) -> int:
        for _ in range(steps):
            v = (v - 1) // self.k
        return v

    def descendant_range(self, v: int, h: int) -> Tuple[int, int]:
        """[start, stop) of the descendants of v at relative depth h."""
        width = self.k**h
        start = v * width + (width - 1) // (self.k - 1)
        return start, start + width

    def sphere_pieces(self, x: int, r: int) -> List[Tuple[int, int]]:
        """
        S(x, r) as disjoint index ranges, clipped at depth D.

        Piece a climbs a steps to the ancestor y and descends r - a levels,
        leaving out the subtree of the child of y towards x.
        """
        depth_x = self.depth(x)
        pieces: List[Tuple[int, int]] = []
        for a in range(0, min(r, depth_x) + 1):
            y = self.ancestor(x, a)
            down = r - a
            if self.depth(y) + down > self.D:
                continue
            if a == 0:
                pieces.append(self.descendant_range(x, r))
            elif down == 0:
                pieces.append((y, y + 1))
            else:
                child = self.ancestor(x, a - 1)
                start, stop = self.descendant_range(y, down)
                skip_start, skip_stop = self.descendant_range(child, down - 1)
                if start < skip_start:
                    pieces.append((start, skip_start))
                if skip_stop < stop:
                    pieces.append((skip_stop, stop))
        return pieces

    def sphere(self, x: int, r: int) -> np.ndarray:
        pieces = self.sphere_pieces(x, r)
        if not pieces:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([np.arange(a, b) for a, b in pieces])

    def sphere_size(self, x: int, r: int) -> int:
        return sum(b - a for a, b in self.sphere_pieces(x, r))

    def infinite_sphere_size(self, x: int, r: int) -> int:
        """|S(x, r)| in the untruncated tree."""
        total = 0
        for a in range(0, min(r, self.depth(x)) + 1):
            down = r - a
            if a == 0:
                total += self.k**down
            elif down == 0:
                total += 1
            else:
                total += self.k**down - self.k ** (down - 1)
        return total

    def distance(self, x: int, y: int) -> int:
        dx, dy = self.depth(x), self.depth(y)
        steps = 0
        while dx > dy:
            x, dx, steps = (x - 1) // self.k, dx - 1, steps + 1
        while dy > dx:
            y, dy, steps = (y - 1) // self.k, dy - 1, steps + 1
        while x != y:
            x, y, steps = (x - 1) // self.k, (y - 1) // self.k, steps + 2
        return steps

    def as_space(self, budget: Optional[int] = None) -> FiniteMetricSpace:
        """Graph metric with counting measure as an explicit space."""
        n = self.n_vertices
        check_budget(float(n) ** 2, f"distance matrix of {self.k}-ary tree", budget)
        codes = np.zeros((n, n), dtype=np.int64)
        for x in range(n):
            for r in range(1, 2 * self.D + 1):
                members = self.sphere(x, r)
                codes[x, members] = r
        return FiniteMetricSpace(codes, LinearScale(1), name=self.name, params={"k": self.k, "D": self.D})


def kary_tree(k: int, D: int, budget: Optional[int] = None) -> KaryTree:
    return KaryTree(k, D, budget)


# ============================================================================
# CONSTRUCTION REGISTRY
# ============================================================================

CONSTRUCTIONS: Dict[str, Dict[str, Any]] = {
    "star": {
        "params": ("K",),
        "description": "Hub with (K-1)^2 spokes; weak (1,1) witness K-1",
    },
    "euclidean_star": {
        "params": ("n",),
        "description": "Origin and standard basis of R^n",
    },
    "torus": {
        "params": ("size",),
        "description": "Cycle Z_size with arc metric",
    },
    "doubling_product": {
        "params": ("q", "t"),
        "description": "X_q x F_q^t with the 4^j + 2^-l metric",
    },
    "ad_regular": {
        "params": ("k", "t", "n"),
        "description": "X_q x F_3^t, q = 3^k, Ahlfors-David regular of dimension n",
    },
    "kary_tree": {
        "params": ("k", "D"),
        "description": "Rooted k-ary tree truncated at depth D",
    },
}


@dataclass(frozen=True)
class ConstructionSpec:
    """Kind plus parameters; fully determines a space."""

    kind: str
    params: Dict[str, Any]

    def __post_init__(self):
        if self.kind not in CONSTRUCTIONS:
            raise ValueError(f"Unknown construction {self.kind!r}; expected one of {sorted(CONSTRUCTIONS)}")
        required = CONSTRUCTIONS[self.kind]["params"]
        missing = [p for p in required if p not in self.params]
        if missing:
            raise ValueError(f"Construction {self.kind} is missing parameters {missing}")

    def point_count(self) -> int:
        p = self.params
        if self.kind == "star":
            return 1 + (p["K"] - 1) ** 2
        if self.kind == "euclidean_star":
            return p["n"] + 1
        if self.kind == "torus":
            return p["size"]
        if self.kind == "doubling_product":
            q = p["q"]
            return q ** (p.get("m") or math.isqrt(q)) * q ** p["t"]
        if self.kind == "ad_regular":
            q = 3 ** p["k"]
            return q ** (p.get("m") or math.isqrt(q)) * 3 ** p["t"]
        k, D = p["k"], p["D"]
        return (k ** (D + 1) - 1) // (k - 1)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass
class Construction:
    spec: ConstructionSpec
    space: Any
    table: Optional[BallStructureTable] = None

    def descriptor(self) -> Dict[str, Any]:
        return self.space.descriptor()


def build_space(spec: ConstructionSpec, budget: Optional[int] = None) -> Construction:
    """Build the space described by a construction entry, after checking its point count against the budget."""
    check_budget(spec.point_count(), f"construction {spec.kind}", budget)
    p = spec.params
    logger.info("Building %s with %s", spec.kind, p)
    if spec.kind == "star":
        return Construction(spec, star_space(p["K"]))
    if spec.kind == "euclidean_star":
        return Construction(spec, euclidean_star(p["n"]))
    if spec.kind == "torus":
        return Construction(spec, torus(p["size"], budget))
    if spec.kind == "doubling_product":
        space, table = doubling_product_space(p["q"], p["t"], p.get("m"), budget)
        return Construction(spec, space, table)
    if spec.kind == "ad_regular":
        space, table = ad_regular_space(p["k"], p["t"], p["n"], p.get("m"), budget)
        return Construction(spec, space, table)
    return Construction(spec, kary_tree(p["k"], p["D"], budget))
