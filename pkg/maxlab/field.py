"""
Finite-field arithmetic for the quadratic level-set constructions.

Field elements are indexed 0..q-1 by their coefficients in the polynomial
basis, index = c_0 + c_1 p + ... + c_{e-1} p^{e-1}. Arithmetic goes through
precomputed q x q tables, which is all that is needed for q <= 27.

Points of X_q = F_q^m are indexed by idx = x_1 + x_2 q + ... + x_m q^{m-1}.
Read in base p this is a vector of M = m·e prime-field digits, little endian,
so X_q is the group (Z_p)^M and the flag W_{-j} = {idx < p^{M-j}} is the
span of the first M-j digits.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from sympy import isprime

from maxlab.maximal import MaximalProfile, integer_abs_density, ratio_max
from maxlab.mms import FFT_EXACT_LIMIT
from maxlab.utils import check_budget, status_icon

logger = logging.getLogger(__name__)

GAUSS_TOLERANCE = 1e-9
MAX_FIELD_ORDER = 27

# Fixed irreducible moduli over F_3, lowest coefficient first.
EXTENSION_MODULI = {
    2: (1, 0, 1),     # x^2 + 1
    3: (1, 2, 0, 1),  # x^3 + 2x + 1
}


@dataclass(frozen=True)
class FieldSpec:
    """
    The field F_q, q = p^e, as F_p[x] / (modulus).

    Parameters:
    -----------
    p : int
        Odd prime.
    e : int
        Extension degree.
    modulus : tuple of int
        Monic degree-e polynomial, coefficients lowest first. Ignored for e = 1.
    """

    p: int
    e: int = 1
    modulus: Tuple[int, ...] = (0, 1)

    def __post_init__(self):
        if not isprime(self.p) or self.p == 2:
            raise ValueError(f"p must be an odd prime, got {self.p}")
        if self.e < 1 or self.e > 3:
            raise ValueError(f"Extension degree must be 1..3, got {self.e}")
        if self.p ** self.e > MAX_FIELD_ORDER and self.e > 1:
            raise ValueError(f"Extension fields are limited to order {MAX_FIELD_ORDER}, got {self.p ** self.e}")
        if self.e == 1:
            object.__setattr__(self, "modulus", (0, 1))
            return
        modulus = tuple(int(c) % self.p for c in self.modulus)
        object.__setattr__(self, "modulus", modulus)
        if len(modulus) != self.e + 1 or modulus[-1] != 1:
            raise ValueError(f"Modulus must be monic of degree {self.e}, got {modulus}")
        # degree <= 3: irreducible iff no root in F_p
        for a in range(self.p):
            if sum(c * a**i for i, c in enumerate(modulus)) % self.p == 0:
                raise ValueError(f"Modulus {modulus} has root {a} over F_{self.p}; not irreducible")

    @property
    def q(self) -> int:
        return self.p ** self.e

    def descriptor(self) -> Dict[str, Any]:
        return {"p": self.p, "e": self.e, "modulus": list(self.modulus)}

    # -- tables -------------------------------------------------------------

    @cached_property
    def digits(self) -> np.ndarray:
        """(q, e) coefficient vectors of every element."""
        idx = np.arange(self.q)
        return np.stack([(idx // self.p**i) % self.p for i in range(self.e)], axis=1)

    def _index(self, coeffs: np.ndarray) -> np.ndarray:
        weights = self.p ** np.arange(self.e)
        return (np.asarray(coeffs) % self.p) @ weights

    @cached_property
    def add_table(self) -> np.ndarray:
        d = self.digits
        return self._index(d[:, None, :] + d[None, :, :])

    @cached_property
    def neg_table(self) -> np.ndarray:
        return self._index(-self.digits)

    @cached_property
    def mul_table(self) -> np.ndarray:
        table = np.zeros((self.q, self.q), dtype=np.int64)
        for a in range(self.q):
            for b in range(a, self.q):
                table[a, b] = table[b, a] = self._multiply(a, b)
        return table

    def _multiply(self, a: int, b: int) -> int:
        if self.e == 1:
            return (a * b) % self.p
        da, db = self.digits[a], self.digits[b]
        product = [0] * (2 * self.e - 1)
        for i in range(self.e):
            for j in range(self.e):
                product[i + j] += int(da[i]) * int(db[j])
        for degree in range(2 * self.e - 2, self.e - 1, -1):
            c = product[degree] % self.p
            if c:
                for i, mc in enumerate(self.modulus):
                    product[degree - self.e + i] -= c * mc
        return int(self._index(np.array(product[: self.e])))

    @cached_property
    def square_table(self) -> np.ndarray:
        return np.diagonal(self.mul_table).copy()

    @cached_property
    def trace_table(self) -> np.ndarray:
        """Absolute trace Tr(a) = a + a^p + ... + a^{p^{e-1}} as an element of F_p."""
        traces = np.zeros(self.q, dtype=np.int64)
        for a in range(self.q):
            total, power = 0, a
            for _ in range(self.e):
                total = int(self.add_table[total, power])
                power = self._pow(power, self.p)
            traces[a] = total
        if np.any(traces >= self.p):
            raise ArithmeticError("Trace left the prime field; modulus table is inconsistent")
        return traces

    def _pow(self, a: int, k: int) -> int:
        result = 1
        for _ in range(k):
            result = int(self.mul_table[result, a])
        return result

    def character(self, a) -> np.ndarray:
        """χ(a) = exp(2πi Tr(a) / p)."""
        return np.exp(2j * np.pi * self.trace_table[np.asarray(a)] / self.p)


def field_for(q: int) -> FieldSpec:
    """The field of order q used by the constructions (prime q, or 9 and 27)."""
    if isprime(q):
        if q > 13:
            raise ValueError(f"Prime fields are supported up to 13, got {q}")
        return FieldSpec(q)
    for e, modulus in EXTENSION_MODULI.items():
        if q == 3**e:
            return FieldSpec(3, e, modulus)
    raise ValueError(f"Unsupported field order {q}; use a prime <= 13, 9 or 27")


@dataclass(frozen=True)
class GaussSum:
    y: int
    value: complex

    @property
    def magnitude(self) -> float:
        return abs(self.value)


def gauss_sum(field: FieldSpec, y: int) -> GaussSum:
    """Σ_{x ∈ F_q} χ(y·x²); magnitude √q when y ≠ 0."""
    if not 0 <= y < field.q:
        raise ValueError(f"y must index an element of F_{field.q}, got {y}")
    arguments = field.mul_table[y, field.square_table]
    return GaussSum(int(y), complex(field.character(arguments).sum()))


def gauss_sum_report(field: FieldSpec) -> pd.DataFrame:
    """|G(y)| against √q for every y ≠ 0."""
    root = math.sqrt(field.q)
    rows = []
    for y in range(1, field.q):
        magnitude = gauss_sum(field, y).magnitude
        error = abs(magnitude - root) / root
        rows.append({"q": field.q, "y": y, "magnitude": magnitude, "relative_error": error,
                     "pass": error <= GAUSS_TOLERANCE})
    return pd.DataFrame(rows)


# ============================================================================
# X_q = F_q^m AND ITS LEVEL SETS
# ============================================================================

class QuadraticLevelSpace:
    """
    X_q = F_q^m with counting measure, Q(x) = x_1² + ... + x_m² and its
    level sets E_z = Q^{-1}(z).

    Parameters:
    -----------
    field : FieldSpec
    m : int, optional
        Dimension; defaults to ⌊√q⌋.
    """

    def __init__(self, field: FieldSpec, m: Optional[int] = None, budget: Optional[int] = None):
        if m is None:
            m = math.isqrt(field.q)
        if m < 1:
            raise ValueError(f"Dimension m must be >= 1, got {m}")
        self.field = field
        self.m = int(m)
        self.q = field.q
        self.n_points = self.q ** self.m
        check_budget(self.n_points, f"X_q with q={self.q}, m={self.m}", budget)
        self.depth = self.m * field.e
        logger.debug("Built X_q: q=%d m=%d (%d points, flag depth %d)", self.q, self.m, self.n_points, self.depth)

    @property
    def name(self) -> str:
        return "quadratic_level"

    def descriptor(self) -> Dict[str, Any]:
        return {**self.field.descriptor(), "m": self.m}

    @cached_property
    def coords(self) -> np.ndarray:
        """(q^m, m) coordinates in F_q."""
        idx = np.arange(self.n_points)
        return np.stack([(idx // self.q**i) % self.q for i in range(self.m)], axis=1)

    @cached_property
    def prime_digits(self) -> np.ndarray:
        """(q^m, M) base-p digits of each index."""
        idx = np.arange(self.n_points)
        p = self.field.p
        return np.stack([(idx // p**i) % p for i in range(self.depth)], axis=1)

    def _from_coords(self, coords: np.ndarray) -> np.ndarray:
        return coords @ (self.q ** np.arange(self.m))

    @cached_property
    def levels(self) -> np.ndarray:
        """Q(x) for every point."""
        squares = self.field.square_table[self.coords]
        total = np.zeros(self.n_points, dtype=np.int64)
        for i in range(self.m):
            total = self.field.add_table[total, squares[:, i]]
        return total

    def level_set(self, z: int) -> np.ndarray:
        return np.flatnonzero(self.levels == z)

    def level_size(self, z: int) -> int:
        return int(np.count_nonzero(self.levels == z))

    def negate(self, idx) -> np.ndarray:
        return self._from_coords(self.field.neg_table[self.coords[np.asarray(idx)]])

    def add(self, a, b) -> np.ndarray:
        digits = (self.prime_digits[np.asarray(a)] + self.prime_digits[np.asarray(b)]) % self.field.p
        return digits @ (self.field.p ** np.arange(self.depth))

    def flag_subspace(self, j: int) -> np.ndarray:
        """W_{-j}: indices below p^{M-j}, a subgroup of index p^j."""
        if not 0 <= j <= self.depth:
            raise ValueError(f"Flag index j must lie in 0..{self.depth}, got {j}")
        return np.arange(self.field.p ** (self.depth - j))

    @property
    def line_index(self) -> int:
        """j with W_{-j} = span(e_1) over F_q."""
        return self.depth - self.field.e

    def level_window(self) -> Dict[int, bool]:
        """Whether μ(X_q)/(2q) < μ(E_z) < 2μ(X_q)/q for each z."""
        sizes = np.bincount(self.levels, minlength=self.q)
        return {z: bool(2 * self.q * sizes[z] > self.n_points and self.q * sizes[z] < 2 * self.n_points)
                for z in range(self.q)}

    # -- convolutions -------------------------------------------------------

    @property
    def group_shape(self) -> Tuple[int, ...]:
        # C-order reshape puts the most significant digit first
        return (self.field.p,) * self.depth

    def convolve(self, values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
        """(values * kernel)(x) = Σ_o values[x - o] kernel[o] over (Z_p)^M."""
        a = np.asarray(values, dtype=np.float64).reshape(self.group_shape)
        b = np.asarray(kernel, dtype=np.float64).reshape(self.group_shape)
        return np.fft.ifftn(np.fft.fftn(a) * np.fft.fftn(b)).real.ravel()

    def level_sums(self, f_abs: np.ndarray, z: int) -> np.ndarray:
        """Σ_{y ∈ E_z} f(x + y) for every x, exact for integer and object f."""
        f_abs = np.asarray(f_abs)
        members = self.level_set(z)
        if f_abs.dtype.kind in "iub":
            bound = int(np.abs(f_abs.astype(np.int64)).max(initial=0)) * int(members.size)
            if bound < FFT_EXACT_LIMIT:
                kernel = (self.levels[self.negate(np.arange(self.n_points))] == z)
                return np.rint(self.convolve(f_abs, kernel)).astype(np.int64)
        values = f_abs.astype(object)
        points = np.arange(self.n_points)
        out = np.zeros(self.n_points, dtype=object)
        for y in members.tolist():
            out = out + values[self.add(points, y)]
        return out


def quadratic_level_space(q: int, m: Optional[int] = None, budget: Optional[int] = None) -> QuadraticLevelSpace:
    return QuadraticLevelSpace(field_for(q), m, budget)


# ============================================================================
# OPERATIONS
# ============================================================================

def level_set_sizes(space: QuadraticLevelSpace) -> Dict[str, Any]:
    """
    Exact μ(E_z) for every z with the size-window flags.

    Returns:
    --------
    dict
        'sizes' (z -> count), 'window' (z -> bool), 'passed' (all z),
        'total' and 'symmetric' (every E_z closed under negation).
    """
    sizes = np.bincount(space.levels, minlength=space.q)
    window = space.level_window()
    negated = space.levels[space.negate(np.arange(space.n_points))]
    symmetric = bool(np.array_equal(negated, space.levels))
    passed = all(window.values())
    if not passed:
        failing = [z for z, ok in window.items() if not ok]
        logger.info("Level-set window fails for q=%d m=%d at z=%s", space.q, space.m, failing)
    return {
        "test": "level_set_window",
        "sizes": {z: int(sizes[z]) for z in range(space.q)},
        "window": window,
        "total": int(sizes.sum()),
        "symmetric": symmetric,
        "passed": passed,
        "message": f"{status_icon(passed)} μ(X_q)/(2q) < μ(E_z) < 2μ(X_q)/q for all z (q={space.q}, m={space.m})",
    }


def fourier_coefficient(space: QuadraticLevelSpace, z: int, eta: int) -> complex:
    """1̂_{E_z}(η) = μ(X_q)^{-1} Σ_{x ∈ E_z} χ(<η, x>)."""
    members = space.level_set(z)
    pairing = _pairing(space, np.array([eta]), members)
    return complex(space.field.character(pairing).sum() / space.n_points)


def _pairing(space: QuadraticLevelSpace, etas: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """<η, x> = Σ_i η_i x_i in F_q, shape (len(etas), len(xs))."""
    field = space.field
    a = space.coords[etas]
    b = space.coords[xs]
    total = np.zeros((etas.size, xs.size), dtype=np.int64)
    for i in range(space.m):
        total = field.add_table[total, field.mul_table[a[:, i][:, None], b[:, i][None, :]]]
    return total


def indicator_fourier_max(space: QuadraticLevelSpace, z: int, method: str = "auto",
                          budget: Optional[int] = None, chunk: int = 4096) -> Dict[str, Any]:
    """
    max over η ≠ 0 of |1̂_{E_z}(η)|, against the bound q^{-m/2}.

    'direct' sums the characters over E_z for every η. 'fft' uses that
    x ↦ Tr<η, x> runs over all nonzero F_p-linear functionals, so the same
    maximum is the largest nonzero-frequency DFT coefficient of 1_{E_z}
    on (Z_p)^M.
    """
    members = space.level_set(z)
    n = space.n_points
    if method == "auto":
        method = "direct" if float(n) * max(1, members.size) <= 2_000_000 else "fft"
    bound = space.q ** (-space.m / 2)

    if method == "direct":
        check_budget(float(n) * max(1, members.size), f"direct Fourier sums on q={space.q} m={space.m}", budget,
                     hint="use method='fft'")
        best, witness = 0.0, None
        etas = np.arange(1, n)
        for start in range(0, etas.size, chunk):
            block = etas[start:start + chunk]
            sums = np.abs(space.field.character(_pairing(space, block, members)).sum(axis=1)) / n
            k = int(np.argmax(sums)) if sums.size else 0
            if sums.size and sums[k] > best:
                best, witness = float(sums[k]), int(block[k])
    elif method == "fft":
        check_budget(n * max(1.0, math.log2(n)), f"Fourier transform on q={space.q} m={space.m}", budget)
        indicator = (space.levels == z).astype(np.float64).reshape(space.group_shape)
        spectrum = np.abs(np.fft.fftn(indicator)).ravel() / n
        spectrum[0] = 0.0
        witness = int(np.argmax(spectrum))
        best = float(spectrum[witness])
    else:
        raise ValueError(f"Unknown method {method!r}")

    passed = best <= bound + GAUSS_TOLERANCE
    return {
        "test": "fourier_bound",
        "z": z,
        "max_fourier": best,
        "bound": bound,
        "zero_frequency": Fraction(members.size, n),
        "method": method,
        "witness": witness,
        "passed": passed,
        "message": f"{status_icon(passed)} max |1̂_E{z}| = {best:.6g} <= q^(-m/2) = {bound:.6g}",
    }


def minkowski_sum_measure(space: QuadraticLevelSpace, j: int, z: int) -> int:
    """μ(W_{-j} + E_z); cosets of W_{-j} are the classes of idx // p^{M-j}."""
    members = space.level_set(z)
    if members.size == 0:
        return 0
    block = space.flag_subspace(j).size
    return block * int(np.unique(members // block).size)


def minkowski_report(space: QuadraticLevelSpace, j: Optional[int] = None) -> pd.DataFrame:
    """μ(W + E_z) per z with the flag μ(W + E_z) >= μ(X_q)/4 (W = span(e_1) by default)."""
    if j is None:
        j = space.line_index
    rows = []
    for z in range(space.q):
        measure = minkowski_sum_measure(space, j, z)
        rows.append({"z": z, "j": j, "measure": measure, "bound": Fraction(space.n_points, 4),
                     "pass": 4 * measure >= space.n_points})
    return pd.DataFrame(rows)


def mq_operator(space: QuadraticLevelSpace, f, f_descriptor: Optional[Dict[str, Any]] = None) -> MaximalProfile:
    """
    M_q f(x) = max over nonempty E_z of μ(E_z)^{-1} Σ_{y ∈ E_z} |f(x + y)|.

    Returns:
    --------
    MaximalProfile
        Variant 'mq', exact ratios.
    """
    f_abs, unit = integer_abs_density(space, f)
    num = np.zeros(space.n_points, dtype=np.int64)
    den = np.ones(space.n_points, dtype=np.int64)
    sizes = np.bincount(space.levels, minlength=space.q)
    nonempty = [z for z in range(space.q) if sizes[z] > 0]
    if not nonempty:
        raise ValueError("Every level set is empty")
    for z in nonempty:
        sums = space.level_sums(f_abs, z)
        num, den = ratio_max(num, den, sums, np.full(space.n_points, int(sizes[z]), dtype=np.int64))
    return MaximalProfile(
        num=num, den=den, unit=unit, f_abs=f_abs, weights=np.ones(space.n_points, dtype=np.int64),
        variant="mq", radii={"levels": nonempty}, f_descriptor=f_descriptor or {"kind": "array"},
    )


def mq_operator_naive(space: QuadraticLevelSpace, f) -> List[Fraction]:
    """Direct double loop over x and E_z; the oracle for :func:`mq_operator`."""
    f_abs, unit = integer_abs_density(space, f)
    values = []
    level_sets = [space.level_set(z) for z in range(space.q)]
    for x in range(space.n_points):
        best = Fraction(0)
        for members in level_sets:
            if members.size == 0:
                continue
            shifted = space.add(np.full(members.size, x), members)
            best = max(best, Fraction(int(f_abs[shifted].sum()), members.size))
        values.append(unit * best)
    return values
