"""Well sets, the T3 hull, the h_{i,j} polynomials and an exact rigidity oracle.

The T3 wells are diagonal, so all exact algebra is done on diagonal triples of
:class:`fractions.Fraction`. Float inputs are accepted and handled with a small
absolute tolerance instead.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EnumerationGuardError,
    InvalidInputError,
    MembershipError,
    ValidationError,
)
from .symbol_core import OperatorSpec, divergence, symbol_eval, wave_cone_contains

Q = Fraction
Triple = tuple[Fraction, Fraction, Fraction]

A_DIAG: dict[int, Triple] = {
    1: (Q(0), Q(0), Q(0)),
    2: (Q(-1, 2), Q(2, 3), Q(3)),
    3: (Q(1), Q(1), Q(1)),
}
S_DIAG: dict[int, Triple] = {
    1: (Q(0), Q(2, 3), Q(2)),
    2: (Q(1, 2), Q(2, 3), Q(1)),
    3: (Q(0), Q(1, 3), Q(1)),
}


def nxt(i: int) -> int:
    """Cyclic successor on {1, 2, 3}."""
    return i % 3 + 1


def diag_matrix(t: Sequence) -> np.ndarray:
    return np.diag(np.array([float(x) for x in t]))


@dataclass(frozen=True)
class WellSet:
    """Target set of matrices with optional boundary datum and fraction.

    ``wells`` are float arrays of a common shape; ``exact`` optionally keeps the
    diagonal rational triples they came from.
    """

    wells: tuple[np.ndarray, ...]
    names: tuple[str, ...] = ()
    F: np.ndarray | None = None
    lam: float | None = None
    exact: tuple[Triple, ...] | None = None

    def __post_init__(self) -> None:
        if not self.wells:
            raise InvalidInputError("a well set needs at least one well")
        shape = np.shape(self.wells[0])
        arrs = tuple(np.array(w, dtype=float) for w in self.wells)
        if any(a.shape != shape for a in arrs):
            raise InvalidInputError("all wells must share one shape")
        object.__setattr__(self, "wells", arrs)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"W{i + 1}" for i in range(len(arrs))))

    @property
    def array(self) -> np.ndarray:
        return np.stack(self.wells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.wells[0].shape

    def __len__(self) -> int:
        return len(self.wells)

    def nearest(self, values: np.ndarray) -> np.ndarray:
        """Index of the Frobenius-nearest well, ties to the smallest index."""
        w = self.array.reshape(len(self), -1)
        v = np.asarray(values, dtype=float).reshape(-1, w.shape[1])
        dist = ((v[:, None, :] - w[None]) ** 2).sum(-1)
        return np.argmin(dist, axis=1)


def t3_wells(F: np.ndarray | None = None) -> WellSet:
    """The three T3 wells ``A_1, A_2, A_3`` (boundary datum defaults to ``S_3``)."""
    if F is None:
        F = diag_matrix(S_DIAG[3])
    return WellSet(tuple(diag_matrix(A_DIAG[i]) for i in (1, 2, 3)), ("A1", "A2", "A3"),
                   F=np.asarray(F, dtype=float), exact=tuple(A_DIAG[i] for i in (1, 2, 3)))


def named_matrix(name: str) -> np.ndarray:
    """``A1..A3``, ``S1..S3`` or ``Id`` as float ``3 x 3`` arrays."""
    return diag_matrix(named_triple(name))


def named_triple(name: str) -> Triple:
    key = name.strip()
    if key in ("Id", "I"):
        return A_DIAG[3]
    if len(key) == 2 and key[0] in "AS" and key[1] in "123":
        table = A_DIAG if key[0] == "A" else S_DIAG
        return table[int(key[1])]
    raise InvalidInputError(f"unknown well name {name!r}")


def well_set_from_names(names: Iterable[str]) -> WellSet:
    names = tuple(names)
    return WellSet(tuple(named_matrix(n) for n in names), names,
                   exact=tuple(named_triple(n) for n in names))


def s_identities() -> dict[str, bool]:
    """Check the S-matrix relations exactly.

    ``S_i = (A_{i+1} + S_{i+1}) / 2`` and ``(S_i - A_i) e_i = 0``.
    """
    out = {}
    for i in (1, 2, 3):
        j = nxt(i)
        mid = tuple((a + s) / 2 for a, s in zip(A_DIAG[j], S_DIAG[j]))
        out[f"S{i}=(A{j}+S{j})/2"] = mid == S_DIAG[i]
        out[f"(S{i}-A{i})e{i}=0"] = S_DIAG[i][i - 1] - A_DIAG[i][i - 1] == 0
    return out


def pairwise_ranks() -> dict[tuple[int, int], int]:
    """Rank of ``A_i - A_j`` for ``i < j`` (diagonal, so count nonzero entries)."""
    return {
        (i, j): sum(1 for a, b in zip(A_DIAG[i], A_DIAG[j]) if a != b)
        for i, j in itertools.combinations((1, 2, 3), 2)
    }


# --------------------------------------------------------------------------- hull


def _to_numbers(F) -> tuple[list, bool]:
    """Flatten a 3x3 matrix, reporting whether all entries are exact rationals."""
    if isinstance(F, np.ndarray):
        rows = F.tolist()
    else:
        rows = [list(r) for r in F]
    if len(rows) != 3 or any(len(r) != 3 for r in rows):
        raise InvalidInputError("T3 hull membership expects a 3x3 matrix")
    flat = [x for r in rows for x in r]
    exact = all(isinstance(x, (int, Fraction)) and not isinstance(x, bool) for x in flat)
    if exact:
        flat = [Fraction(x) for x in flat]
    else:
        flat = [float(x) for x in flat]
    return flat, exact


@dataclass(frozen=True)
class HullMembership:
    inside: bool
    kind: str | None
    barycentric: tuple | None = None
    legs: tuple[tuple[int, object], ...] = ()

    def __bool__(self) -> bool:
        return self.inside


class _Arith:
    def __init__(self, exact: bool, tol: float = 1e-12):
        self.exact = exact
        self.tol = 0 if exact else tol

    def zero(self, x) -> bool:
        return x == 0 if self.exact else abs(x) <= self.tol

    def ge0(self, x) -> bool:
        return x >= 0 if self.exact else x >= -self.tol

    def conv(self, x):
        return Fraction(x) if self.exact else float(x)


def _leg_param(f: Sequence, j: int, ar: _Arith):
    a = [ar.conv(x) for x in A_DIAG[j]]
    s = [ar.conv(x) for x in S_DIAG[j]]
    diff = [si - ai for si, ai in zip(s, a)]
    k = max(range(3), key=lambda i: abs(diff[i]))
    t = (f[k] - a[k]) / diff[k]
    if not all(ar.zero(f[i] - a[i] - t * diff[i]) for i in range(3)):
        return None
    if ar.ge0(t) and ar.ge0(1 - t):
        return t
    return None


def _triangle_coords(f: Sequence, ar: _Arith):
    s1, s2, s3 = ([ar.conv(x) for x in S_DIAG[i]] for i in (1, 2, 3))
    u = [a - c for a, c in zip(s1, s3)]
    v = [b - c for b, c in zip(s2, s3)]
    w = [x - c for x, c in zip(f, s3)]
    pairs = list(itertools.combinations(range(3), 2))
    p, q = max(pairs, key=lambda pq: abs(u[pq[0]] * v[pq[1]] - u[pq[1]] * v[pq[0]]))
    det = u[p] * v[q] - u[q] * v[p]
    a = (w[p] * v[q] - w[q] * v[p]) / det
    b = (u[p] * w[q] - u[q] * w[p]) / det
    if not all(ar.zero(w[i] - a * u[i] - b * v[i]) for i in range(3)):
        return None
    c = 1 - a - b
    if ar.ge0(a) and ar.ge0(b) and ar.ge0(c):
        return (a, b, c)
    return None


def t3_qc_hull_contains(F) -> HullMembership:
    """Membership in the T3 hull: triangle ``S1 S2 S3`` plus legs ``[A_j, S_j]``.

    Rational inputs are decided exactly; float inputs use a 1e-12 tolerance.
    Off-diagonal matrices are outside.
    """
    flat, exact = _to_numbers(F)
    ar = _Arith(exact)
    if not all(ar.zero(flat[r * 3 + c]) for r in range(3) for c in range(3) if r != c):
        return HullMembership(False, None)
    f = [flat[0], flat[4], flat[8]]
    bary = _triangle_coords(f, ar)
    legs = tuple((j, t) for j in (1, 2, 3) if (t := _leg_param(f, j, ar)) is not None)
    if bary is None and not legs:
        return HullMembership(False, None)
    if bary is not None and any(ar.zero(1 - x) for x in bary):
        kind = "vertex"
    elif legs:
        kind = "leg"
    else:
        kind = "triangle"
    return HullMembership(True, kind, bary, legs)


@dataclass(frozen=True)
class HullDecomposition:
    """Two-level lamination recipe reaching ``F`` from the T3 hull.

    ``F = lam * (nu1 A_j + (1 - nu1) S_j) + (1 - lam) * (nu2 A_k + (1 - nu2) S_k)``.
    For a vertex ``F = S_j`` only ``j`` is meaningful (``lam = 1, nu1 = 0``);
    for a leg point ``k`` is ``None`` and ``t = 1 - nu1`` is the leg parameter.
    ``direction`` is the lamination axis (1-based) of the outer split.
    """

    kind: str
    lam: object
    nu1: object
    j: int
    nu2: object = None
    k: int | None = None
    direction: int | None = None

    @property
    def t(self):
        return 1 - self.nu1

    def recompose(self) -> np.ndarray:
        def leg(nu, idx):
            return float(nu) * diag_matrix(A_DIAG[idx]) + (1 - float(nu)) * diag_matrix(S_DIAG[idx])

        first = leg(self.nu1, self.j)
        if self.k is None:
            return first
        return float(self.lam) * first + (1 - float(self.lam)) * leg(self.nu2, self.k)


def in_wells(F) -> bool:
    flat, exact = _to_numbers(F)
    ar = _Arith(exact)
    for t in A_DIAG.values():
        full = [t[0], 0, 0, 0, t[1], 0, 0, 0, t[2]]
        if all(ar.zero(x - ar.conv(y)) for x, y in zip(flat, full)):
            return True
    return False


def hull_decompose(F) -> HullDecomposition:
    """Write ``F`` in the T3 hull as a lamination of leg points.

    Vertices and leg points are returned directly. An interior triangle point
    ``a S1 + b S2 + c S3`` is split along ``S1 - S2`` (normal ``e_2``) into a
    point of leg 1 and a point of leg 3, using ``S3 = (A1 + S1)/2`` and
    ``S2 = (A3 + S3)/2``.
    """
    if in_wells(F):
        raise ValidationError("F lies in the well set; nothing to decompose")
    mem = t3_qc_hull_contains(F)
    if not mem.inside:
        raise MembershipError("F is outside the T3 hull")
    zero = Fraction(0) if _to_numbers(F)[1] else 0.0
    one = zero + 1
    if mem.kind == "vertex":
        gaps = [abs(x - 1) for x in mem.barycentric]
        return HullDecomposition("vertex", one, zero, 1 + gaps.index(min(gaps)))
    if mem.kind == "leg":
        j, t = mem.legs[0]
        return HullDecomposition("leg", one, 1 - t, j, direction=j)
    a, b, c = mem.barycentric
    lam = a / (a + b)
    return HullDecomposition("triangle", lam, c / 2, 1, (a + b) / 2, 3, direction=2)


# ------------------------------------------------------------------ h polynomials

H_POLYS: dict[tuple[int, int], tuple[Fraction, Fraction]] = {
    (1, 2): (Q(14, 9), Q(-5, 9)),
    (1, 3): (Q(14, 3), Q(-11, 3)),
    (2, 1): (Q(21, 4), Q(-17, 4)),
    (2, 3): (Q(-21, 2), Q(23, 2)),
    (3, 1): (Q(-7, 12), Q(19, 12)),
    (3, 2): (Q(-7, 18), Q(25, 18)),
}


def hij_polynomials() -> dict[tuple[int, int], tuple[Fraction, Fraction]]:
    """Coefficients ``(a, b)`` of ``h_{i,j}(x) = a x^2 + b x`` with ``h_{i,j}(f_i) = f_j``."""
    return dict(H_POLYS)


def h_eval(i: int, j: int, x):
    a, b = H_POLYS[(i, j)]
    return a * x * x + b * x


def verify_hij() -> dict[tuple[int, int], bool]:
    """Exact check of ``h_{i,j}(A[i,i]) = A[j,j]`` over the three wells."""
    return {
        (i, j): all(h_eval(i, j, t[i - 1]) == t[j - 1] for t in A_DIAG.values())
        and h_eval(i, j, Q(0)) == 0
        for (i, j) in H_POLYS
    }


# --------------------------------------------------------------- laminar hull


def laminar_hull_step(op: OperatorSpec, points: np.ndarray, n_lambda: int = 17,
                      threshold: float = 1e-9) -> tuple[np.ndarray, bool]:
    """Add segment samples between every compatible pair of ``points``.

    Returns the enlarged cloud and whether anything new was added (a step that
    adds nothing means the sampled hull has stabilised).
    """
    pts = np.asarray(points, dtype=float).reshape(len(points), -1)
    lams = np.linspace(0.0, 1.0, n_lambda)[1:-1]
    new = []
    for a, b in itertools.combinations(range(len(pts)), 2):
        diff = pts[b] - pts[a]
        if not np.any(np.abs(diff) > threshold):
            continue
        if wave_cone_contains(op, diff).member:
            new.extend(pts[a] + t * diff for t in lams)
    out = list(pts)
    added = False
    for p in new:
        if min(np.linalg.norm(q - p) for q in out) > threshold:
            out.append(p)
            added = True
    return np.array(out), added


# --------------------------------------------------------------- rigidity oracle


def _compat_table(op: OperatorSpec, wells: WellSet, d: int, tol: float) -> np.ndarray:
    """``ok[a, b, axis]``: may wells ``a`` and ``b`` meet across a face normal to ``axis``."""
    k = len(wells)
    flat = wells.array.reshape(k, -1)
    scale = max(1.0, float(np.abs(flat).max()))
    ok = np.ones((k, k, d), dtype=bool)
    for axis in range(d):
        sym = symbol_eval(op, np.eye(d)[axis])
        for a in range(k):
            for b in range(k):
                ok[a, b, axis] = np.linalg.norm(sym @ (flat[a] - flat[b])) <= tol * scale
    return ok


def exact_rigidity_search(n: int, d: int, wells: WellSet, op: OperatorSpec | None = None,
                          max_nodes: int = 10**8, tol: float = 1e-12) -> list[np.ndarray]:
    """All periodic label fields on an ``n^d`` grid satisfying every jump condition.

    The search is exhaustive depth-first enumeration with pruning: a partial
    assignment is abandoned as soon as a face between two assigned cells
    violates ``symbol(e_axis)[[u]] = 0``. Every complete assignment is checked
    against all faces, so the result is exactly the brute-force answer.
    ``max_nodes`` bounds the number of search nodes visited.
    """
    if n < 1 or n > 3 or d < 1 or d > 3:
        raise InvalidInputError("rigidity search supports grids with 1..3 cells per axis, d <= 3")
    if op is None:
        op = divergence(*wells.shape) if len(wells.shape) == 2 else None
        if op is None:
            raise InvalidInputError("an operator is required for non-matrix wells")
    if int(np.prod(wells.shape)) != op.n or op.d != d:
        raise InvalidInputError("well shape or dimension does not match the operator")
    ok = _compat_table(op, wells, d, tol)
    k = len(wells)
    cells = list(itertools.product(range(n), repeat=d))
    index = {c: i for i, c in enumerate(cells)}
    # neighbours of each cell that come earlier in the ordering, with the axis
    back = []
    for c in cells:
        nb = []
        for axis in range(d):
            for step in (-1, 1):
                other = list(c)
                other[axis] = (other[axis] + step) % n
                j = index[tuple(other)]
                if j < index[c] and (j, axis) not in nb:
                    nb.append((j, axis))
        back.append(nb)
    labels = [0] * len(cells)
    found: list[np.ndarray] = []
    nodes = 0

    def rec(pos: int) -> None:
        nonlocal nodes
        if pos == len(cells):
            found.append(np.array(labels, dtype=np.int64).reshape((n,) * d))
            return
        for lab in range(k):
            nodes += 1
            if nodes > max_nodes:
                raise EnumerationGuardError(f"rigidity search exceeded {max_nodes} nodes")
            if all(ok[lab, labels[j], axis] for j, axis in back[pos]):
                labels[pos] = lab
                rec(pos + 1)

    rec(0)
    return found
