"""
Finite metric measure spaces with exact distance oracles.

Every space stores distances as non-negative integer *codes*. A code is a
monotone encoding of the true distance (code 0 means distance 0) and the
space's :class:`DistanceScale` translates codes to values and back. Ball
membership is therefore a pure integer comparison, so ball boundaries are
never subject to floating-point ties.

Three scales cover the constructions:

- :class:`LinearScale` -- value = code / denominator (graph metrics, the
  doubling example in fixed point).
- :class:`SquaredScale` -- value = sqrt(code) (Euclidean distances stored as
  squared integers).
- :class:`ExponentScale` -- value = base ** ((code - offset) / n) for code >= 1
  (the Ahlfors-David example, distances 3^{j/n}).
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from maxlab.utils import Number, check_budget, to_fraction

logger = logging.getLogger(__name__)

LOG_TOLERANCE = 1e-9
FFT_EXACT_LIMIT = 2.0**50


# ============================================================================
# DISTANCE SCALES
# ============================================================================

class DistanceScale(ABC):
    """Translation between integer distance codes and distance values."""

    kind = "abstract"

    @abstractmethod
    def value(self, code: int) -> Number:
        """Exact value where possible (Fraction), float otherwise."""

    @abstractmethod
    def to_float(self, codes: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def code_floor(self, radius: Number) -> int:
        """Largest code whose value is <= radius."""

    @abstractmethod
    def dilate(self, code: int, factor: Number, strict: bool = False) -> int:
        """Largest code whose value is <= factor * value(code) (< when strict).

        Returns -1 when no code qualifies (strict dilation of code 0).
        """

    @abstractmethod
    def add(self, a: int, b: int) -> int:
        """Largest code whose value is <= value(a) + value(b)."""

    @abstractmethod
    def add_array(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def power(self, code: int, exponent: int) -> Number:
        """value(code) ** exponent, exact when the scale allows it."""

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        ...

    def format(self, code: int) -> str:
        value = self.value(code)
        if isinstance(value, Fraction):
            return str(value)
        return format(float(value), ".12g")


@dataclass(frozen=True)
class LinearScale(DistanceScale):
    denominator: int = 1
    kind = "linear"

    def __post_init__(self):
        if self.denominator < 1:
            raise ValueError(f"Scale denominator must be >= 1, got {self.denominator}")

    def value(self, code: int) -> Fraction:
        return Fraction(int(code), self.denominator)

    def to_float(self, codes: np.ndarray) -> np.ndarray:
        return np.asarray(codes, dtype=np.float64) / self.denominator

    def code_floor(self, radius: Number) -> int:
        radius = to_fraction(radius)
        if radius < 0:
            raise ValueError(f"Radius must be non-negative, got {radius}")
        return math.floor(radius * self.denominator)

    def dilate(self, code: int, factor: Number, strict: bool = False) -> int:
        target = to_fraction(factor) * int(code)
        if strict:
            return math.ceil(target) - 1
        return math.floor(target)

    def add(self, a: int, b: int) -> int:
        return int(a) + int(b)

    def add_array(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.asarray(a, dtype=np.int64) + np.asarray(b, dtype=np.int64)

    def power(self, code: int, exponent: int) -> Fraction:
        return self.value(code) ** int(exponent)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "denominator": self.denominator}


@dataclass(frozen=True)
class SquaredScale(DistanceScale):
    kind = "squared"

    def value(self, code: int) -> Number:
        code = int(code)
        root = math.isqrt(code)
        if root * root == code:
            return Fraction(root)
        return math.sqrt(code)

    def to_float(self, codes: np.ndarray) -> np.ndarray:
        return np.sqrt(np.asarray(codes, dtype=np.float64))

    def code_floor(self, radius: Number) -> int:
        if isinstance(radius, float):
            if radius < 0:
                raise ValueError(f"Radius must be non-negative, got {radius}")
            return math.floor(radius * radius + LOG_TOLERANCE)
        radius = to_fraction(radius)
        if radius < 0:
            raise ValueError(f"Radius must be non-negative, got {radius}")
        return math.floor(radius * radius)

    def dilate(self, code: int, factor: Number, strict: bool = False) -> int:
        target = to_fraction(factor) ** 2 * int(code)
        if strict:
            return math.ceil(target) - 1
        return math.floor(target)

    def add(self, a: int, b: int) -> int:
        a, b = int(a), int(b)
        return a + b + math.isqrt(4 * a * b)

    def add_array(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        product = 4 * a * b
        root = np.floor(np.sqrt(product.astype(np.float64))).astype(np.int64)
        root = np.where(root * root > product, root - 1, root)
        root = np.where((root + 1) * (root + 1) <= product, root + 1, root)
        return a + b + root

    def power(self, code: int, exponent: int) -> Number:
        exponent = int(exponent)
        if exponent % 2 == 0:
            return Fraction(int(code)) ** (exponent // 2)
        return math.sqrt(int(code)) ** exponent

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind}


@dataclass(frozen=True)
class ExponentScale(DistanceScale):
    """Codes c >= 1 stand for base ** ((c - offset) / n); code 0 is distance 0."""

    base: int = 3
    n: int = 1
    offset: int = 0
    kind = "exponent"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Exponent scale needs n >= 1, got {self.n}")
        if self.base < 2:
            raise ValueError(f"Exponent scale needs base >= 2, got {self.base}")

    def _log(self, x: float) -> float:
        return self.n * math.log(x) / math.log(self.base)

    def value(self, code: int) -> Number:
        code = int(code)
        if code == 0:
            return Fraction(0)
        exponent = code - self.offset
        if exponent % self.n == 0:
            return Fraction(self.base) ** (exponent // self.n)
        return float(self.base) ** (exponent / self.n)

    def to_float(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.float64)
        values = np.power(float(self.base), (codes - self.offset) / self.n)
        return np.where(codes == 0, 0.0, values)

    def code_floor(self, radius: Number) -> int:
        radius = float(radius)
        if radius < 0:
            raise ValueError(f"Radius must be non-negative, got {radius}")
        if radius == 0:
            return 0
        code = self.offset + math.floor(self._log(radius) + LOG_TOLERANCE)
        return max(code, 0)

    def dilate(self, code: int, factor: Number, strict: bool = False) -> int:
        code = int(code)
        if code == 0:
            return -1 if strict else 0
        shift = self._log(float(factor))
        if strict:
            result = code + math.ceil(shift - LOG_TOLERANCE) - 1
        else:
            result = code + math.floor(shift + LOG_TOLERANCE)
        return max(result, 0)

    def add(self, a: int, b: int) -> int:
        a, b = int(a), int(b)
        if a == 0 or b == 0:
            return max(a, b)
        return self.code_floor(float(self.value(a)) + float(self.value(b)))

    def add_array(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        total = self.to_float(a) + self.to_float(b)
        with np.errstate(divide="ignore"):
            codes = self.offset + np.floor(self.n * np.log(total) / math.log(self.base) + LOG_TOLERANCE)
        codes = np.where(total > 0, codes, 0)
        return np.maximum(codes, 0).astype(np.int64)

    def power(self, code: int, exponent: int) -> Number:
        code = int(code)
        if code == 0:
            return Fraction(0)
        numerator = (code - self.offset) * int(exponent)
        if numerator % self.n == 0:
            return Fraction(self.base) ** (numerator // self.n)
        return float(self.base) ** (numerator / self.n)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "base": self.base, "n": self.n, "offset": self.offset}


# ============================================================================
# RADII
# ============================================================================

@dataclass(frozen=True)
class RadiiSet:
    """Finite strictly increasing set of radii, stored as codes of a scale."""

    codes: Tuple[int, ...]
    scale: DistanceScale
    truncated: bool = False

    def __post_init__(self):
        codes = tuple(int(c) for c in self.codes)
        object.__setattr__(self, "codes", codes)
        if not codes:
            raise ValueError("RadiiSet must be nonempty")
        if codes[0] < 0:
            raise ValueError(f"Radius codes must be non-negative, got {codes[0]}")
        if any(b <= a for a, b in zip(codes, codes[1:])):
            raise ValueError(f"Radii must be strictly increasing, got codes {codes}")

    @classmethod
    def from_values(cls, scale: DistanceScale, values: Iterable[Number], truncated: bool = False) -> "RadiiSet":
        """Floor each positive radius to its code; radii with equal codes collapse."""
        codes = []
        for v in values:
            if to_fraction(v) <= 0:
                raise ValueError(f"Radii must be positive, got {v}")
            codes.append(scale.code_floor(v))
        return cls(tuple(sorted(set(codes))), scale, truncated)

    @classmethod
    def realized(cls, space: "MetricMeasureSpace") -> "RadiiSet":
        """All positive realized distances of the space."""
        codes = [c for c in space.realized_codes() if c > 0]
        if not codes:
            codes = [0]
        return cls(tuple(codes), space.scale)

    def values(self) -> List[Number]:
        return [self.scale.value(c) for c in self.codes]

    def restrict(self, lo: Number, hi: Number) -> Optional["RadiiSet"]:
        """Radii with lo <= value <= hi, or None when empty."""
        lo_f, hi_f = float(lo), float(hi)
        kept = [c for c in self.codes if _in_closed(self.scale.value(c), lo, hi, lo_f, hi_f)]
        if not kept:
            return None
        return RadiiSet(tuple(kept), self.scale)

    def subset(self, codes: Iterable[int]) -> "RadiiSet":
        return RadiiSet(tuple(sorted(set(codes))), self.scale)

    def describe(self) -> Dict[str, Any]:
        return {"codes": list(self.codes), "values": [self.scale.format(c) for c in self.codes],
                "scale": self.scale.describe(), "truncated": self.truncated}

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self):
        return iter(self.codes)


def _in_closed(value: Number, lo: Number, hi: Number, lo_f: float, hi_f: float) -> bool:
    if isinstance(value, Fraction) and isinstance(lo, (Fraction, int)) and isinstance(hi, (Fraction, int)):
        return lo <= value <= hi
    v = float(value)
    tol = LOG_TOLERANCE * max(1.0, abs(v))
    return lo_f - tol <= v <= hi_f + tol


# ============================================================================
# SPACES
# ============================================================================

class MetricMeasureSpace(ABC):
    """
    Finite metric measure space.

    Parameters:
    -----------
    name : str
        Construction name (used in descriptors).
    scale : DistanceScale
        Code/value translation.
    weights : array of positive ints
        Point masses in units of ``measure_unit``.
    measure_unit : Fraction
        Common factor of all weights (rational measures are scaled to integers).
    params : dict
        Construction parameters, for the JSON descriptor.
    """

    is_invariant = False

    def __init__(self, name: str, scale: DistanceScale, weights: np.ndarray,
                 measure_unit: Fraction = Fraction(1), params: Optional[Dict[str, Any]] = None):
        weights = np.asarray(weights)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a nonempty 1-d array")
        if np.any(weights <= 0):
            raise ValueError("All point weights must be positive")
        self.name = name
        self.scale = scale
        self.weights = weights.astype(np.int64)
        self.measure_unit = to_fraction(measure_unit)
        self.params = dict(params or {})

    # -- oracle -------------------------------------------------------------

    @property
    def n_points(self) -> int:
        return int(self.weights.size)

    @abstractmethod
    def distances_from(self, x: int) -> np.ndarray:
        """Distance codes from x to every point."""

    def distance(self, x: int, y: int) -> int:
        return int(self.distances_from(x)[y])

    def representatives(self) -> List[int]:
        """Points whose balls cover every ball shape (all points unless invariant)."""
        if self.is_invariant:
            return [0]
        return list(range(self.n_points))

    @property
    def total_measure(self) -> int:
        return int(self.weights.sum())

    def descriptor(self) -> Dict[str, Any]:
        return {"type": self.name, "params": dict(self.params), "scale": self.scale.describe()}

    @cached_property
    def _realized(self) -> np.ndarray:
        codes = [np.unique(self.distances_from(x)) for x in self.representatives()]
        return np.unique(np.concatenate(codes))

    def realized_codes(self) -> np.ndarray:
        return self._realized

    @property
    def diameter_code(self) -> int:
        return int(self._realized[-1])

    @property
    def min_positive_code(self) -> Optional[int]:
        positive = self._realized[self._realized > 0]
        return int(positive[0]) if positive.size else None

    # -- balls --------------------------------------------------------------

    def ball_mask(self, x: int, code: int) -> np.ndarray:
        return self.distances_from(x) <= code

    def ball_indices(self, x: int, code: int) -> np.ndarray:
        return np.flatnonzero(self.ball_mask(x, code))

    def ball_measure(self, x: int, code: int) -> int:
        return int(self.weights[self.ball_mask(x, code)].sum())

    def ball_profile(self, x: int) -> Tuple[np.ndarray, np.ndarray]:
        """(distinct codes from x, cumulative ball measure at each code)."""
        dists = self.distances_from(x)
        order = np.argsort(dists, kind="stable")
        sorted_codes = dists[order]
        cumulative = np.cumsum(self.weights[order])
        codes, last = np.unique(sorted_codes, return_index=False, return_counts=True)
        ends = np.cumsum(last) - 1
        return codes, cumulative[ends]

    def ball_measures_at(self, x: int, codes: Sequence[int]) -> np.ndarray:
        """Ball measures at arbitrary codes (codes below 0 give 0)."""
        distinct, cumulative = self.ball_profile(x)
        idx = np.searchsorted(distinct, np.asarray(codes, dtype=np.int64), side="right") - 1
        return np.where(idx >= 0, cumulative[np.maximum(idx, 0)], 0)

    @abstractmethod
    def ball_sums(self, values: np.ndarray, code: int) -> np.ndarray:
        """For every x, the sum of ``values[y]`` over y in B(x, code)."""

    def all_ball_measures(self, code: int) -> np.ndarray:
        return self.ball_sums(self.weights, code)

    @abstractmethod
    def enlarged_mask(self, x: int, code: int, code2: int) -> np.ndarray:
        """Indicator of B(x, r, r') for codes (r, r')."""

    @abstractmethod
    def all_enlarged_measures(self, code: int, code2: int) -> np.ndarray:
        """mu(B(x, r, r')) for every x."""

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r}, n_points={self.n_points})"


class FiniteMetricSpace(MetricMeasureSpace):
    """Space given by an explicit symmetric matrix of distance codes."""

    def __init__(self, codes: np.ndarray, scale: DistanceScale, weights: Optional[np.ndarray] = None,
                 name: str = "finite", params: Optional[Dict[str, Any]] = None,
                 measure_unit: Fraction = Fraction(1), budget: Optional[int] = None):
        codes = np.asarray(codes, dtype=np.int64)
        if codes.ndim != 2 or codes.shape[0] != codes.shape[1]:
            raise ValueError(f"Distance code matrix must be square, got shape {codes.shape}")
        check_budget(codes.size, f"explicit distance matrix for {name}", budget)
        if weights is None:
            weights = np.ones(codes.shape[0], dtype=np.int64)
        if np.any(np.diag(codes) != 0):
            raise ValueError("Distance from a point to itself must be 0")
        if np.any(codes < 0):
            raise ValueError("Distance codes must be non-negative")
        off_diagonal = codes + np.eye(codes.shape[0], dtype=np.int64)
        if np.any(off_diagonal == 0):
            raise ValueError("Distinct points must be at positive distance")
        if not np.array_equal(codes, codes.T):
            raise ValueError("Distance matrix must be symmetric")
        super().__init__(name, scale, weights, measure_unit, params)
        self.codes = codes

    def distances_from(self, x: int) -> np.ndarray:
        return self.codes[int(x)]

    def ball_sums(self, values: np.ndarray, code: int) -> np.ndarray:
        values = np.asarray(values)
        return (self.codes <= code) @ values

    def enlarged_mask(self, x: int, code: int, code2: int) -> np.ndarray:
        inner = self.codes[int(x)] <= code
        return (self.codes[inner] <= code2).any(axis=0)

    def enlarged_matrix(self, code: int, code2: int) -> np.ndarray:
        check_budget(float(self.n_points) ** 3, f"enlarged balls on {self.name}")
        inner = (self.codes <= code).astype(np.float32)
        outer = (self.codes <= code2).astype(np.float32)
        return (inner @ outer) > 0.5

    def all_enlarged_measures(self, code: int, code2: int) -> np.ndarray:
        return self.enlarged_matrix(code, code2) @ self.weights


class GroupMetricSpace(MetricMeasureSpace):
    """
    Finite abelian group Z_{n_1} x ... x Z_{n_d} with an invariant metric
    d(x, y) = N(x - y) and counting measure.

    Points are flat C-order indices into ``moduli``. ``norm_codes[i]`` is the
    distance code of element i from 0.
    """

    is_invariant = True

    def __init__(self, moduli: Sequence[int], norm_codes: np.ndarray, scale: DistanceScale,
                 name: str = "group", params: Optional[Dict[str, Any]] = None,
                 budget: Optional[int] = None):
        moduli = tuple(int(m) for m in moduli)
        size = int(np.prod(moduli, dtype=np.int64))
        check_budget(size, f"group space {name}", budget)
        norm_codes = np.asarray(norm_codes, dtype=np.int64).ravel()
        if norm_codes.size != size:
            raise ValueError(f"norm table has {norm_codes.size} entries, group has {size}")
        if norm_codes[0] != 0 or np.any(norm_codes[1:] <= 0):
            raise ValueError("Norm must vanish exactly at the identity")
        super().__init__(name, scale, np.ones(size, dtype=np.int64), Fraction(1), params)
        self.moduli = moduli
        self.norm_codes = norm_codes
        if not np.array_equal(norm_codes, norm_codes[self.negate(np.arange(size))]):
            raise ValueError("Norm must be symmetric: N(-x) = N(x)")

    @cached_property
    def coords(self) -> np.ndarray:
        return np.stack(np.unravel_index(np.arange(self.n_points), self.moduli), axis=1).astype(np.int64)

    def _ravel(self, coords: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.moveaxis(coords, -1, 0)), self.moduli)

    def add(self, x, y) -> np.ndarray:
        mod = np.asarray(self.moduli)
        return self._ravel((self.coords[x] + self.coords[y]) % mod)

    def subtract(self, x, y) -> np.ndarray:
        mod = np.asarray(self.moduli)
        return self._ravel((self.coords[x] - self.coords[y]) % mod)

    def negate(self, x) -> np.ndarray:
        mod = np.asarray(self.moduli)
        coords = np.stack(np.unravel_index(np.asarray(x), self.moduli), axis=-1)
        return self._ravel((-coords) % mod)

    def distances_from(self, x: int) -> np.ndarray:
        return self.norm_codes[self.subtract(np.arange(self.n_points), int(x))]

    def distance(self, x: int, y: int) -> int:
        return int(self.norm_codes[self.subtract(int(x), int(y))])

    def offsets(self, code: int) -> np.ndarray:
        """Elements of B(0, code)."""
        return np.flatnonzero(self.norm_codes <= code)

    def ball_profile(self, x: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        codes, counts = np.unique(self.norm_codes, return_counts=True)
        return codes, np.cumsum(counts)

    def ball_measure(self, x: int, code: int) -> int:
        return int(np.count_nonzero(self.norm_codes <= code))

    def ball_mask(self, x: int, code: int) -> np.ndarray:
        return self.distances_from(x) <= code

    def convolve(self, values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
        """Circular group convolution (values * kernel)(x) = sum_o values[x - o] kernel[o]."""
        a = np.asarray(values, dtype=np.float64).reshape(self.moduli)
        b = np.asarray(kernel, dtype=np.float64).reshape(self.moduli)
        out = np.fft.ifftn(np.fft.fftn(a) * np.fft.fftn(b)).real
        return out.ravel()

    def ball_sums(self, values: np.ndarray, code: int) -> np.ndarray:
        """Σ_{y ∈ B(x, code)} values[y]; exact for integer and object input."""
        values = np.asarray(values)
        mask = (self.norm_codes <= code)
        if values.dtype.kind in "iub":
            bound = int(np.abs(values.astype(np.int64)).max(initial=0)) * int(mask.sum())
            if bound < FFT_EXACT_LIMIT:
                return np.rint(self.convolve(values, mask)).astype(np.int64)
        if values.dtype.kind in "iubO":
            return self.shift_sums(values.astype(object), np.flatnonzero(mask))
        return self.convolve(values, mask)

    def shift_sums(self, values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        """Σ_o values[x - o] over ``offsets`` in Python integers."""
        logger.debug("Exact shift sums over %d offsets on %s", offsets.size, self.name)
        points = np.arange(self.n_points)
        out = np.zeros(self.n_points, dtype=object)
        for o in offsets.tolist():
            out = out + values[self.subtract(points, o)]
        return out

    def sumset_mask(self, code: int, code2: int) -> np.ndarray:
        """Indicator of B(0, code) + B(0, code2)."""
        a = (self.norm_codes <= code)
        b = (self.norm_codes <= code2)
        return self.convolve(a, b) > 0.5

    def enlarged_mask(self, x: int, code: int, code2: int) -> np.ndarray:
        offsets = self.sumset_mask(code, code2)
        return offsets[self.subtract(np.arange(self.n_points), int(x))]

    def all_enlarged_measures(self, code: int, code2: int) -> np.ndarray:
        return np.full(self.n_points, int(self.sumset_mask(code, code2).sum()), dtype=np.int64)


# ============================================================================
# OPERATIONS
# ============================================================================

def ball(space: MetricMeasureSpace, x: int, r: Number) -> np.ndarray:
    """
    Closed ball B(x, r) = {y : d(x, y) <= r}.

    Parameters:
    -----------
    space : MetricMeasureSpace
    x : int
        Center.
    r : number
        Radius value (not a code), r >= 0.

    Returns:
    --------
    np.ndarray
        Sorted point indices.
    """
    return space.ball_indices(x, space.scale.code_floor(r))


def enlarged_ball(space: MetricMeasureSpace, x: int, r: Number, r2: Number) -> np.ndarray:
    """B(x, r, r') = union of B(y, r') over y in B(x, r), as sorted indices."""
    mask = space.enlarged_mask(x, space.scale.code_floor(r), space.scale.code_floor(r2))
    return np.flatnonzero(mask)


def measure_of(space: MetricMeasureSpace, points: np.ndarray) -> int:
    points = np.asarray(points)
    if points.dtype == bool:
        return int(space.weights[points].sum())
    return int(space.weights[points].sum())
