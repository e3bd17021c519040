"""Upper-bound constructions emitted as exact region complexes.

* :func:`simple_laminate` - two compatible values alternating in slabs.
* :func:`branching_unit_cell` / :func:`build_two_well_branching` - the
  self-similar branching construction for two wells of the divergence with
  ``(B - A) e_1 = 0``.
* :func:`build_t3_laminate` (from :mod:`microlam.t3_construction`) - the
  infinite-order laminate for the T3 wells.

Every builder returns values ``u`` that are piecewise affine on convex
polytopes, so divergence-freeness reduces to jump conditions that
:func:`interface_check` verifies exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .energy import EnergyReport
from .errors import CompatibilityError, DegenerateParametersError, InvalidInputError
from .regions import Region, RegionComplex, interface_check, make_region
from .symbol_core import OperatorSpec, divergence, wave_cone_contains

__all__ = [
    "CutoffProfiles",
    "potential_matrix",
    "row_cross",
    "simple_laminate",
    "UnitCellResult",
    "branching_unit_cell",
    "BranchingParams",
    "BranchingResult",
    "build_two_well_branching",
    "branching_complex",
    "branching_labels",
    "default_branching_wells",
    "interface_check",
]


# ------------------------------------------------------------------ profiles


class CutoffProfiles:
    """Cut-off and sawtooth profiles used by the constructions (vectorised)."""

    @staticmethod
    def phi(t):
        """T3 cut-off: 0 below 1/8, ``4t - 1/2`` up to 3/8, then 1."""
        return np.clip(4.0 * np.asarray(t, dtype=float) - 0.5, 0.0, 1.0)

    @staticmethod
    def phi_prime(t):
        t = np.asarray(t, dtype=float)
        return np.where((t > 0.125) & (t < 0.375), 4.0, 0.0)

    @staticmethod
    def tent(t, theta: float = 0.5):
        """One-periodic tent with slopes ``1 - theta`` then ``-theta``.

        ``theta = 1/2`` gives the sawtooth ``t/2``, ``(1 - t)/2``.
        """
        s = np.mod(np.asarray(t, dtype=float), 1.0)
        return np.where(s < theta, (1 - theta) * s, theta * (1 - s))

    @staticmethod
    def tent_prime(t, theta: float = 0.5):
        s = np.mod(np.asarray(t, dtype=float), 1.0)
        return np.where(s < theta, 1 - theta, -theta)

    @staticmethod
    def phi_branch(t):
        """Branching cut-off: 1 on ``[0, 1/2]``, ``3 - 4t`` up to 3/4, then 0."""
        return np.clip(3.0 - 4.0 * np.asarray(t, dtype=float), 0.0, 1.0)

    @staticmethod
    def phi_branch_prime(t):
        t = np.asarray(t, dtype=float)
        return np.where((t > 0.5) & (t < 0.75), -4.0, 0.0)


def row_cross(g: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Row-wise ``g x M``: row ``i`` of the result is ``g x M_i``."""
    return np.cross(np.broadcast_to(np.asarray(g, float), M.shape), M)


def potential_matrix(D: np.ndarray, axis: int) -> np.ndarray:
    """``M`` with ``e_axis x M = D`` for a 3x3 ``D`` whose rows are orthogonal to ``e_axis``."""
    D = np.asarray(D, dtype=float)
    if D.shape != (3, 3):
        raise InvalidInputError("potentials are defined for 3 x 3 matrices")
    e = np.eye(3)[axis]
    if np.max(np.abs(D @ e)) > 1e-12 * max(1.0, np.abs(D).max()):
        raise CompatibilityError(f"D e_{axis} != 0: no row-wise curl potential along this axis")
    M = row_cross(D, np.broadcast_to(e, (3, 3)).copy())
    return M


# ------------------------------------------------------------------ laminates


def simple_laminate(A, B, xi=None, lam: float = 0.5, p: int = 1, op: OperatorSpec | None = None,
                    d: int | None = None) -> RegionComplex:
    """``p`` periods of ``A`` (fraction ``lam``) and ``B`` in slabs normal to ``xi``.

    Raises :class:`CompatibilityError` when ``B - A`` is outside the wave cone
    or ``xi`` is not an admissible normal.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise InvalidInputError("wells must have the same shape")
    if not (isinstance(p, (int, np.integer)) and p >= 1):
        raise InvalidInputError("number of periods must be a positive integer")
    if not 0 < lam < 1:
        raise InvalidInputError("lam must lie in (0, 1)")
    if op is None:
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InvalidInputError("default operator needs square matrices")
        op = divergence(A.shape[0], A.shape[1])
    d = op.d if d is None else d
    wells = np.stack([A, B])
    lo, hi = np.zeros(d), np.ones(d)
    box = [(row, c) for row, c in zip(np.vstack([np.eye(d), -np.eye(d)]), np.r_[hi, -lo])]
    if np.array_equal(A, B):
        reg = make_region(box, A, 0, tag="single")
        return RegionComplex([reg], wells[:1], name="laminate", meta={"periods": p, "periodic_interfaces": 0})
    diff = (B - A).reshape(-1)
    cert = wave_cone_contains(op, diff)
    if not cert.member:
        raise CompatibilityError("B - A is not in the wave cone", cert)
    if xi is None:
        xi = cert.direction
    xi = np.asarray(xi, dtype=float)
    xi = xi / np.linalg.norm(xi)
    from .symbol_core import symbol_eval

    if np.linalg.norm(symbol_eval(op, xi) @ diff) > 1e-10 * max(1.0, np.linalg.norm(diff)):
        raise CompatibilityError(f"normal {xi.tolist()} does not annihilate B - A", cert)
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
    proj = corners @ xi
    kmin, kmax = math.floor(proj.min() * p) - 1, math.ceil(proj.max() * p) + 1
    regions = []
    for k in range(kmin, kmax):
        a0, a1, b1 = k / p, (k + lam) / p, (k + 1) / p
        regions.append(make_region(box + [(xi, a1), (-xi, -a0)], A, 0, tag=f"A{k}"))
        regions.append(make_region(box + [(xi, b1), (-xi, -a1)], B, 1, tag=f"B{k}"))
    meta = {"periods": p, "lam": lam, "normal": xi.tolist(), "periodic_interfaces": 2 * p}
    return RegionComplex(regions, wells, name="laminate", meta=meta)


# ------------------------------------------------------------------ branching


def _well_pair(A, B, d: int) -> tuple[np.ndarray, np.ndarray]:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != (d, d) or B.shape != (d, d):
        raise InvalidInputError(f"branching wells must be {d} x {d}")
    if np.max(np.abs((B - A)[:, 0])) > 1e-12 * max(1.0, np.abs(B - A).max()):
        raise CompatibilityError("branching needs (B - A) e_1 = 0")
    return A, B


def default_branching_wells(d: int) -> tuple[np.ndarray, np.ndarray]:
    """``A = 0`` and ``B = e_1 (x) (e_2 + ... + e_d)``: rank one, ``(B - A) e_1 = 0``."""
    A = np.zeros((d, d))
    B = np.zeros((d, d))
    B[0, 1:] = 1.0
    return A, B


@dataclass(frozen=True)
class _Piece:
    """Polygon in local ``(x_1, y)`` coordinates with an affine value.

    ``cons`` rows ``(a1, ay, c)`` mean ``a1 x_1 + ay y <= c``;
    ``u = V0 + x_1 g1 + y gy``.
    """

    cons: tuple
    V0: np.ndarray
    g1: np.ndarray | None
    gy: np.ndarray | None
    label: int
    tag: str


def _cell_pieces(x0, y0, l, h, lam, A, B, At, tag) -> list[_Piece]:
    """Four pieces of a branching unit cell with lower-left corner ``(x0, y0)``."""
    c = (1 - lam) * l / (2 * h)
    # constraint helpers in cell coordinates shifted to (x0, y0)
    def sh(a1, ay, cc):
        return (a1, ay, cc + a1 * x0 + ay * y0)

    band = [sh(0, -1, 0), sh(0, 1, h)]
    return [
        _Piece(tuple([sh(-1, 0, 0), sh(1, 0, lam * l / 2)] + band), A, None, None, 0, tag + "w1"),
        _Piece(tuple([sh(-1, 0, -lam * l / 2), sh(1, -c, lam * l / 2)] + band), B, None, None, 1, tag + "w2"),
        _Piece(tuple([sh(-1, c, -lam * l / 2), sh(1, -c, lam * l)] + band), At, None, None, 0, tag + "w3"),
        _Piece(tuple([sh(-1, c, -lam * l), sh(1, 0, l)] + band), B, None, None, 1, tag + "w4"),
    ]


def _cutoff_pieces(x0, y0, lp, H, lam, A, B, F, K, tag) -> list[_Piece]:
    """Three bands of one period (width ``lp``) of the cut-off layer."""
    out = []
    pieces = [
        (x0, x0 + lam * lp, 1 - lam, 0),
        (x0 + lam * lp, x0 + lp, -lam, 1),
    ]
    D = A - B
    for i, (a, b, hp, lab) in enumerate(pieces):
        side = [(-1, 0, -a), (1, 0, b)]
        chi = A if lab == 0 else B
        out.append(_Piece(tuple(side + [(0, -1, -y0), (0, 1, y0 + H / 2)]), chi, None, None, lab,
                          f"{tag}p{i}b0"))
        # h(s) = (1-lam) s on the first piece and lam (1 - s) on the second, s = (x1 - x0)/lp
        if lab == 0:
            h1, h0 = (1 - lam) / lp, -(1 - lam) * x0 / lp
        else:
            h1, h0 = -lam / lp, lam * (1 + x0 / lp)
        V0 = K * h0 + (3 + 4 * y0 / H) * hp * D + F
        g1 = K * h1
        gy = -(4 / H) * hp * D
        out.append(_Piece(tuple(side + [(0, -1, -(y0 + H / 2)), (0, 1, y0 + 3 * H / 4)]), V0, g1, gy,
                          lab, f"{tag}p{i}b1"))
        out.append(_Piece(tuple(side + [(0, -1, -(y0 + 3 * H / 4)), (0, 1, y0 + H)]), F, None, None,
                          lab, f"{tag}p{i}b2"))
    return out


@dataclass(frozen=True)
class BranchingParams:
    """Parameters of the branching construction.

    ``variant`` is ``"upper"`` (boundary datum on the ``x_1``/``x_2`` faces) or
    ``"d_dim"`` (wedge splitting, datum on every face).
    """

    N: int
    theta: float = 0.3
    lam: float = 0.5
    d: int = 3
    A: np.ndarray | None = field(default=None, compare=False)
    B: np.ndarray | None = field(default=None, compare=False)
    variant: str = "upper"

    def __post_init__(self) -> None:
        if not (isinstance(self.N, (int, np.integer)) and self.N >= 1):
            raise InvalidInputError("N must be a positive integer")
        if not 0.25 < self.theta < 0.5:
            raise InvalidInputError("theta must lie in (1/4, 1/2)")
        if not 0 < self.lam < 1:
            raise InvalidInputError("lam must lie in (0, 1)")
        if self.d not in (2, 3):
            raise InvalidInputError("branching is implemented for d = 2, 3")
        if self.variant not in ("upper", "d_dim"):
            raise InvalidInputError(f"unknown variant {self.variant!r}")
        A, B = default_branching_wells(self.d) if self.A is None else (self.A, self.B)
        A, B = _well_pair(A, B, self.d)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        self.j0  # validates

    @property
    def F(self) -> np.ndarray:
        return self.lam * self.A + (1 - self.lam) * self.B

    def l(self, j: int) -> float:
        return 1.0 / (2**j * self.N)

    def h(self, j: int) -> float:
        return self.theta**j * (1 - self.theta) / 2

    def y(self, j: int) -> float:
        return 1 - self.theta**j / 2

    @property
    def branch_axes(self) -> list[int]:
        return [1] if self.variant == "upper" or self.d == 2 else list(range(1, self.d))

    @property
    def flexible(self) -> bool:
        """``(B - A) nu = 0`` for every branching direction: plain laminates are stress free."""
        D = self.B - self.A
        return bool(np.all(np.abs(D[:, self.branch_axes]) <= 1e-12 * max(1.0, np.abs(D).max())))

    @property
    def j0(self) -> int:
        """Largest ``j`` with ``l_j < h_j``; at least 1."""
        if not self.l(0) < self.h(0):
            raise DegenerateParametersError(f"l_0 >= h_0 for N={self.N}, theta={self.theta}")
        j = 0
        while self.l(j + 1) < self.h(j + 1):
            j += 1
        if j < 1:
            raise DegenerateParametersError(f"j0 = {j} < 1 for N={self.N}, theta={self.theta}")
        return j

    def to_dict(self) -> dict:
        return {"N": int(self.N), "theta": self.theta, "lam": self.lam, "d": self.d,
                "variant": self.variant, "A": self.A.tolist(), "B": self.B.tolist(), "j0": self.j0}


def _perturbation(A, B, nu, lam, l, h) -> np.ndarray:
    gamma = -(1 - lam) * l / (2 * h)
    return gamma * np.outer((B - A) @ nu, np.eye(len(nu))[0])


def _half_pieces(p: BranchingParams, nu: np.ndarray, periods: int | None = None) -> list[_Piece]:
    """Pieces of one half (``y in [1/2, 1]``) with branching vector ``nu``.

    ``periods`` limits the output to the first ``periods`` top-level cells
    (the construction is ``1/N``-periodic in ``x_1``).
    """
    A, B, lam = p.A, p.B, p.lam
    periods = p.N if periods is None else periods
    out: list[_Piece] = []
    for j in range(p.j0 + 1):
        l, h, y0 = p.l(j), p.h(j), p.y(j)
        At = A + _perturbation(A, B, nu, lam, l, h)
        for k in range(periods * 2**j):
            out += _cell_pieces(k * l, y0, l, h, lam, A, B, At, f"L{j}c{k}")
    out += _cutoff_layer(p, nu, periods * 2 ** (p.j0 + 1))
    return out


def _cutoff_layer(p: BranchingParams, nu: np.ndarray, count: int | None = None) -> list[_Piece]:
    j1 = p.j0 + 1
    lp = p.l(j1)
    H = p.theta**j1 / 2
    K = (4 * lp / H) * np.outer((p.A - p.B) @ nu, np.eye(p.d)[0])
    periods = p.N * 2**j1 if count is None else count
    out = []
    for q in range(periods):
        out += _cutoff_pieces(q * lp, p.y(j1), lp, H, p.lam, p.A, p.B, p.F, K, f"C{q}")
    return out


def _embed(piece: _Piece, d: int, axis: int, sign: int, extra) -> Region:
    """Map a local piece to physical coordinates with ``y = 1/2 + sign (x_axis - 1/2)``."""
    shift = (1 - sign) / 2
    cons = []
    for a1, ay, c in piece.cons:
        n = np.zeros(d)
        n[0] = a1
        n[axis] = ay * sign
        cons.append((n, c - ay * shift))
    cons += extra
    value = piece.V0
    slope = None
    if piece.g1 is not None:
        slope = np.zeros((d,) + piece.V0.shape)
        slope[0] = piece.g1
        slope[axis] = sign * piece.gy
        value = piece.V0 + shift * piece.gy
    return make_region(cons, value, piece.label, slope, piece.tag)


def _slab_constraints(d: int, skip: Sequence[int]) -> list:
    out = []
    for k in range(d):
        if k in skip:
            continue
        e = np.eye(d)[k]
        out += [(e, 1.0), (-e, 0.0)]
    return out


def _wedge_constraints(d: int, axis: int, sign: int) -> list:
    """``sign (x_axis - 1/2) >= |x_k - 1/2|`` for the other branching axes ``k``."""
    out = []
    for k in range(1, d):
        if k == axis:
            continue
        for s in (1, -1):
            n = np.zeros(d)
            n[axis] = -sign
            n[k] = s
            out.append((n, s * 0.5 - sign * 0.5))
    return out


@dataclass
class UnitCellResult:
    complex: RegionComplex
    E: np.ndarray
    normal: np.ndarray
    analytic_elastic: float
    analytic_surface_length: float

    @property
    def analytic_surface(self) -> float:
        """Surface energy including the jump ``|B - A|``."""
        W = self.complex.wells
        return float(np.linalg.norm(W[1] - W[0])) * self.analytic_surface_length


def branching_unit_cell(A, B, lam: float, l: float, h: float, d: int = 2) -> UnitCellResult:
    """Four-region branching cell on ``[0, l] x [0, h] x [0, 1]^{d-2}``."""
    if not 0 < l < h <= 1:
        raise InvalidInputError("unit cell needs 0 < l < h <= 1")
    if not 0 < lam < 1:
        raise InvalidInputError("lam must lie in (0, 1)")
    A, B = _well_pair(A, B, d)
    nu = np.eye(d)[1]
    E = _perturbation(A, B, nu, lam, l, h)
    F = lam * A + (1 - lam) * B
    extra = _slab_constraints(d, (0, 1))
    regions = []
    for pc in _cell_pieces(0.0, 0.0, l, h, lam, A, B, A + E, ""):
        cons = [(np.r_[a1, ay, np.zeros(d - 2)], c) for a1, ay, c in pc.cons] + extra
        regions.append(make_region(cons, pc.V0, pc.label, None, pc.tag))
    hi = np.ones(d)
    hi[0], hi[1] = l, h
    rc = RegionComplex(regions, np.stack([A, B]), hi=hi, exterior=F, exterior_axes=(0,),
                       name="branching-cell", meta={"lam": lam, "l": l, "h": h})
    n = np.eye(d)[0] - (1 - lam) * l / (2 * h) * np.eye(d)[1]
    el = float(np.sum(((B - A) @ nu) ** 2)) * (1 - lam) ** 2 * lam * l**3 / (8 * h)
    surf = h + 2 * math.sqrt((1 - lam) ** 2 * l**2 / 4 + h**2)
    return UnitCellResult(rc, E, n, el, surf)


@dataclass
class BranchingResult:
    params: BranchingParams
    eps: float
    energy: EnergyReport
    E_surf_anisotropic: float
    layers: list[dict]
    analytic: dict
    _complex: RegionComplex | None = field(default=None, repr=False)

    @property
    def bound_shape(self) -> float:
        """``1/N^2 + eps N``; the proven bound is a constant multiple of this."""
        N = self.params.N
        return 1.0 / N**2 + self.eps * N

    def region_complex(self) -> RegionComplex:
        if self._complex is None:
            self._complex = branching_complex(self.params)
        return self._complex


def branching_complex(p: BranchingParams, periods: int | None = None) -> RegionComplex:
    """Explicit region complex on ``[0, 1]^d``, or on ``[0, periods/N] x [0, 1]^{d-1}``.

    A window of two or more periods contains a translate of every region and
    every interface of the full construction.
    """
    if periods is not None and not 1 <= periods <= p.N:
        raise InvalidInputError("periods must lie in 1..N")
    d = p.d
    regions: list[Region] = []
    axes = p.branch_axes
    if p.flexible:
        regions = _flexible_regions(p)
        axes = []
    for axis in axes:
        for sign in (1, -1):
            nu = sign * np.eye(d)[axis]
            extra = _slab_constraints(d, (0, axis))
            if len(axes) > 1:
                extra = _wedge_constraints(d, axis, sign) + extra
            for pc in _half_pieces(p, nu, periods):
                regions.append(_embed(pc, d, axis, sign, extra))
    ext_axes = tuple(range(d)) if p.variant == "d_dim" else (0, 1)
    hi = np.ones(d)
    if periods is not None:
        hi[0] = periods / p.N
        regions = [_clip_x1(r, hi[0]) for r in regions]
    return RegionComplex(regions, np.stack([p.A, p.B]), hi=hi, exterior=p.F, exterior_axes=ext_axes,
                         name=f"branching-{p.variant}", meta=p.to_dict())


def _flexible_regions(p: BranchingParams) -> list[Region]:
    """Slabs of period ``1/N`` in ``x_1``; no branching is needed when the jump is flexible."""
    d = p.d
    e = np.eye(d)[0]
    extra = _slab_constraints(d, (0,))
    out = []
    for k in range(p.N):
        a0, a1, b1 = k / p.N, (k + p.lam) / p.N, (k + 1) / p.N
        out.append(make_region([(e, a1), (-e, -a0)] + extra, p.A, 0, tag=f"A{k}"))
        out.append(make_region([(e, b1), (-e, -a1)] + extra, p.B, 1, tag=f"B{k}"))
    return out


def _clip_x1(reg: Region, x1max: float) -> Region:
    n = np.zeros(reg.A.shape[1])
    n[0] = 1.0
    return Region(np.vstack([reg.A, n]), np.append(reg.b, x1max), reg.value, reg.label, reg.slope,
                  reg.tag)


def _local_complex(pieces: list[_Piece], d: int, wells, hi) -> RegionComplex:
    regions = []
    for pc in pieces:
        cons = [(np.array([a1, ay]), c) for a1, ay, c in pc.cons]
        slope = None
        if pc.g1 is not None:
            slope = np.stack([pc.g1, pc.gy])
        regions.append(make_region(cons, pc.V0, pc.label, slope, pc.tag))
    return RegionComplex(regions, wells, lo=np.array([0.0, hi[2]]), hi=np.array([hi[0], hi[1]]))


def _layer_bookkeeping(p: BranchingParams, nu: np.ndarray) -> list[dict]:
    """Exact energies of one half, layer by layer, from one representative cell each."""
    wells = np.stack([p.A, p.B])
    jump = float(np.linalg.norm(p.B - p.A))
    rows = []
    for j in range(p.j0 + 1):
        l, h, y0 = p.l(j), p.h(j), p.y(j)
        At = p.A + _perturbation(p.A, p.B, nu, p.lam, l, h)
        cell = _local_complex(_cell_pieces(0.0, y0, l, h, p.lam, p.A, p.B, At, ""), 2, wells,
                              (l, y0 + h, y0))
        count = p.N * 2**j
        rows.append({
            "layer": j, "cells": count, "l": l, "h": h,
            "elastic": count * cell.elastic_energy(),
            "surface": count * cell.surface_energy() + (count - 1) * h * jump,
            "surface_aniso": count * cell.surface_energy(True) + (count - 1) * h * jump,
        })
    j1 = p.j0 + 1
    lp, H = p.l(j1), p.theta**j1 / 2
    K = (4 * lp / H) * np.outer((p.A - p.B) @ nu, np.eye(p.d)[0])
    y0 = p.y(j1)
    period = _local_complex(_cutoff_pieces(0.0, y0, lp, H, p.lam, p.A, p.B, p.F, K, ""), 2, wells,
                            (lp, y0 + H, y0))
    count = p.N * 2**j1
    rows.append({
        "layer": j1, "cells": count, "l": lp, "h": H, "cutoff": True,
        "elastic": count * period.elastic_energy(),
        "surface": count * period.surface_energy() + (count - 1) * H * jump,
        "surface_aniso": count * period.surface_energy(True) + (count - 1) * H * jump,
    })
    return rows


def build_two_well_branching(p: BranchingParams, eps: float) -> BranchingResult:
    """Branching construction with exact energies.

    Energies of the ``upper`` variant come from one representative cell per
    layer (all cells of a layer are translates); the ``d_dim`` variant is
    integrated over its explicit complex.
    """
    if eps < 0:
        raise InvalidInputError("eps must be non-negative")
    if p.flexible:
        rc = branching_complex(p)
        el = rc.elastic_energy()
        surf = rc.surface_energy()
        aniso = rc.surface_energy(anisotropic=True)
        layers = []
    elif p.variant == "upper" or p.d == 2:
        nu = np.eye(p.d)[1]
        layers = _layer_bookkeeping(p, nu)
        el = 2 * sum(r["elastic"] for r in layers)
        surf = 2 * sum(r["surface"] for r in layers)
        aniso = 2 * sum(r["surface_aniso"] for r in layers)
        rc = None
    else:
        rc = branching_complex(p)
        el = rc.elastic_energy()
        surf = rc.surface_energy()
        aniso = rc.surface_energy(anisotropic=True)
        layers = []
    analytic = _branching_analytic(p)
    report = EnergyReport(eps, el, None, surf)
    return BranchingResult(p, eps, report, aniso, layers, analytic, rc)


def _branching_analytic(p: BranchingParams) -> dict:
    """Closed-form layer sums (unit-cell formulas, both halves, no cut-off layer)."""
    b2 = float(np.sum((p.B - p.A)[:, 1] ** 2))
    jump = float(np.linalg.norm(p.B - p.A))
    lam = p.lam
    el = surf = 0.0
    for j in range(p.j0 + 1):
        l, h = p.l(j), p.h(j)
        n = p.N * 2**j
        el += n * b2 * (1 - lam) ** 2 * lam * l**3 / (8 * h)
        surf += jump * (n * (h + 2 * math.sqrt((1 - lam) ** 2 * l**2 / 4 + h**2)) + (n - 1) * h)
    return {"elastic_layers": 2 * el, "surface_layers": 2 * surf}


def branching_labels(p: BranchingParams, x: np.ndarray) -> np.ndarray:
    """Phase labels (0 for ``A``, 1 for ``B``) of the construction at points ``x`` of shape ``(N, d)``.

    Vectorised point location used for rasterising; agrees with the labels of
    :func:`branching_complex` away from interfaces.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.d:
        raise InvalidInputError(f"points must have {p.d} coordinates")
    if p.flexible:
        return (np.mod(x[:, 0], 1.0 / p.N) >= p.lam / p.N).astype(np.int64)
    if p.variant == "upper" or p.d == 2:
        t = x[:, 1]
    else:
        # wedge with the largest |x_k - 1/2| among the branching axes
        t = x[np.arange(len(x)), 1 + np.argmax(np.abs(x[:, 1:] - 0.5), axis=1)]
    y = 0.5 + np.abs(t - 0.5)
    x1 = x[:, 0]
    lam = p.lam
    labels = np.zeros(len(x), dtype=np.int64)
    j1 = p.j0 + 1
    y_cut = p.y(j1)
    for j in range(p.j0 + 1):
        sel = (y >= p.y(j)) & (y < p.y(j + 1))
        if not sel.any():
            continue
        l, h = p.l(j), p.h(j)
        c = (1 - lam) * l / (2 * h)
        xi = np.mod(x1[sel], l)
        eta = y[sel] - p.y(j)
        in_b = ((xi >= lam * l / 2) & (xi <= lam * l / 2 + c * eta)) | (xi >= lam * l + c * eta)
        labels[sel] = in_b
    sel = y >= y_cut
    lp = p.l(j1)
    labels[sel] = np.mod(x1[sel], lp) >= lam * lp
    return labels


_T3_EXPORTS = ("T3Params", "T3Result", "build_t3_laminate", "evaluate_t3", "paper_schedule",
                "rasterize_t3", "round_schedule", "t3_energy_bound", "t3_region_complex")
__all__ += list(_T3_EXPORTS)


def __getattr__(name: str):
    # the T3 laminate lives in its own module, which imports this one
    if name in _T3_EXPORTS:
        from . import t3_construction

        return getattr(t3_construction, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
