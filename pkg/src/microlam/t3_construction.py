"""Infinite-order laminate for the T3 wells of the divergence.

Starting from a box on which ``u`` equals a hull point ``D0 = theta X + (1 - theta) Y``,
the potential ``v = phi(d / r) r h(x_a / r) M + (affine part)`` with
``e_a x M = X - Y`` produces a laminate of ``X`` and ``Y`` normal to ``e_a``,
cut off in a collar of width ``3r/8`` along the boundary. The ``S_j`` pieces
of each laminate are boxes on which the same step is repeated one level
deeper with the next period ``r_{k+1}``.

``d`` is the exact l-infinity distance to the box boundary, so ``u`` is affine
on every (face sector) x (collar band) x (sawtooth piece) and the complex is
exact. ``chi`` is the pointwise nearest well.

Energies are computed by a memoised recursion over cells: cells of equal
extents, rule and level are translates of each other, and interior periods of
a laminate are translates too, so a cell with many periods is evaluated from
builds with three and four periods and extrapolated linearly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .constructions import CutoffProfiles, potential_matrix, row_cross
from .energy import EnergyReport
from .errors import InvalidInputError, SequencingError, ValidationError
from .field_grid import Grid, PhaseField, TensorField
from .hulls_and_wells import A_DIAG, S_DIAG, diag_matrix, hull_decompose, in_wells, nxt
from .regions import Region, RegionComplex, interface_check, make_region, split_by_nearest_well
from .symbol_core import divergence

__all__ = [
    "T3Params",
    "paper_schedule",
    "round_schedule",
    "T3Rule",
    "t3_rules",
    "T3Result",
    "build_t3_laminate",
    "t3_energy_bound",
    "t3_region_complex",
    "evaluate_t3",
    "rasterize_t3",
]

WELLS = np.stack([diag_matrix(A_DIAG[i]) for i in (1, 2, 3)])
S_MATS = {i: diag_matrix(S_DIAG[i]) for i in (1, 2, 3)}
A_MATS = {i: diag_matrix(A_DIAG[i]) for i in (1, 2, 3)}
COMPRESS_FROM = 3


# ------------------------------------------------------------------ schedule


def _check_schedule(r: Sequence[Fraction]) -> None:
    ext = [Fraction(1)] * 3 + list(r)  # r_{-2} = r_{-1} = r_0 = 1
    for k in range(1, len(r) + 1):
        rk, prev = ext[k + 2], ext[k + 1]
        if not 0 < rk < Fraction(1, 2):
            raise SequencingError(f"r_{k} = {rk} is not in (0, 1/2)")
        if k >= 2 and not rk / prev < Fraction(1, 2):
            raise SequencingError(f"r_{k}/r_{k - 1} = {rk / prev} is not below 1/2")
        q = ext[k - 1] / (2 * rk)
        if q.denominator != 1:
            raise SequencingError(f"r_{k - 3}/(2 r_{k}) = {q} is not an integer")


def round_schedule(targets: Sequence[float]) -> tuple[Fraction, ...]:
    """Round target periods down to the nearest admissible sequence.

    ``r_k = r_{k-3} / (2 ceil(r_{k-3} / (2 t_k)))`` with ``r_{-2} = r_{-1} = r_0 = 1``.
    """
    ext = [Fraction(1)] * 3
    for t in targets:
        if not 0 < t < 0.5:
            raise SequencingError(f"target period {t} is not in (0, 1/2)")
        base = ext[-3]
        n = math.ceil(float(base) / (2 * t) - 1e-12)
        ext.append(base / (2 * n))
    out = tuple(ext[3:])
    _check_schedule(out)
    return out


def paper_depth(eps: float) -> int:
    """Rounded positive root of ``m (m + 1) = |log eps| / log 2``."""
    q = abs(math.log(eps)) / math.log(2)
    return max(1, round((-1 + math.sqrt(1 + 4 * q)) / 2))


def paper_schedule(eps: float, extra: int = 0) -> "T3Params":
    """Depth ``m ~ |log eps|^{1/2}`` and ``r_k ~ r^k`` with ``r = eps^{1/(m+1)}``."""
    if not 0 < eps < 1:
        raise InvalidInputError("eps must lie in (0, 1)")
    m = paper_depth(eps)
    r = eps ** (1.0 / (m + 1))
    r = min(r, 0.49)
    return T3Params(m + extra, round_schedule([r**k for k in range(1, m + extra + 1)]), eps)


@dataclass(frozen=True)
class T3Params:
    """Lamination depth ``m`` with periods ``r_1 > ... > r_m`` (exact rationals)."""

    m: int
    r: tuple
    eps: float = 0.0

    def __post_init__(self) -> None:
        r = tuple(Fraction(x).limit_denominator(10**12) if isinstance(x, float) else Fraction(x)
                  for x in self.r)
        object.__setattr__(self, "r", r)
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 0):
            raise InvalidInputError("m must be a non-negative integer")
        if len(r) < self.m:
            raise SequencingError(f"{len(r)} periods given for depth {self.m}")
        object.__setattr__(self, "r", r[: self.m])
        _check_schedule(self.r)
        if self.eps < 0:
            raise InvalidInputError("eps must be non-negative")

    @property
    def r_float(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self.r)

    def truncated(self, m: int) -> "T3Params":
        return T3Params(m, self.r[:m], self.eps)

    def to_dict(self) -> dict:
        return {"m": self.m, "r": [str(x) for x in self.r], "eps": self.eps}


def t3_energy_bound(p: T3Params) -> dict:
    """Terms of ``2^{-m} + sum_k 2^{-k} r_k / r_{k-1} + r_1 + eps / r_m`` (unit constant)."""
    r = p.r_float
    m = p.m
    el = 2.0**-m + (r[0] if m else 0.0) + sum(2.0**-k * r[k - 1] / r[k - 2] for k in range(2, m + 1))
    surf = 1.0 / r[-1] if m else 0.0
    return {"elastic": el, "surface": surf, "total": el + p.eps * surf}


# ------------------------------------------------------------------ rules


@dataclass(frozen=True)
class T3Rule:
    """How a box with constant value ``D0`` is laminated into ``X`` and ``Y``."""

    name: str
    D0: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    theta: float
    axis: int
    M: np.ndarray
    x_child: str | None
    y_child: str | None


def _s_rule(j: int) -> T3Rule:
    k = nxt(j)
    X, Y = S_MATS[k], A_MATS[k]
    return T3Rule(f"S{j}", S_MATS[j], X, Y, 0.5, k - 1, potential_matrix(X - Y, k - 1), f"S{k}", None)


def _leg_rule(name: str, j: int, nu: float) -> T3Rule:
    X, Y = S_MATS[j], A_MATS[j]
    D0 = nu * Y + (1 - nu) * X
    return T3Rule(name, D0, X, Y, 1 - nu, j - 1, potential_matrix(X - Y, j - 1), f"S{j}", None)


def t3_rules(F) -> tuple[str, dict[str, T3Rule], int]:
    """Rules reachable from ``F``; returns ``(root, rules, extra_depth)``."""
    F = np.asarray(F, dtype=float)
    if in_wells(F):
        raise ValidationError("F is a well; no lamination is needed")
    dec = hull_decompose(F)
    rules = {f"S{j}": _s_rule(j) for j in (1, 2, 3)}

    def leg_state(name, j, nu):
        nu = float(nu)
        if nu == 0:
            return f"S{j}", 0
        if nu == 1:
            return None, 0
        rules[name] = _leg_rule(name, j, nu)
        return name, 1

    if dec.kind == "vertex":
        return f"S{dec.j}", rules, 0
    if dec.kind == "leg":
        root, extra = leg_state("F", dec.j, dec.nu1)
        return root, rules, extra
    p_name, ep = leg_state("P", dec.j, dec.nu1)
    q_name, eq = leg_state("Q", dec.k, dec.nu2)
    P = float(dec.nu1) * A_MATS[dec.j] + (1 - float(dec.nu1)) * S_MATS[dec.j]
    Qm = float(dec.nu2) * A_MATS[dec.k] + (1 - float(dec.nu2)) * S_MATS[dec.k]
    axis = dec.direction - 1
    lam = float(dec.lam)
    rules["F"] = T3Rule("F", lam * P + (1 - lam) * Qm, P, Qm, lam, axis,
                        potential_matrix(P - Qm, axis), p_name, q_name)
    return "F", rules, 1 + max(ep, eq)


# ------------------------------------------------------------------ one cell


@dataclass
class _CellBuild:
    regions: list[Region]
    child_mask: list[bool]
    children: list[tuple[np.ndarray, np.ndarray, str]]
    cutoff: list[bool]


def _faces(L: np.ndarray):
    """``(axis, sigma, c)`` with distance ``sigma x_axis + c`` for the six faces."""
    return [(b, s, 0.0 if s > 0 else float(L[b])) for b in range(3) for s in (1, -1)]


def _pieces(rule: T3Rule, r: float, lo: float, hi: float):
    """Sawtooth pieces ``(a0, a1, is_x, h0, h1)`` meeting ``[lo, hi]``; ``h = h0 + h1 x``."""
    th = rule.theta
    out = []
    k = math.floor(lo / r + 1e-9) - 1
    while k * r < hi:
        for is_x, a0, a1 in ((True, k * r, (k + th) * r), (False, (k + th) * r, (k + 1) * r)):
            b0, b1 = max(a0, lo), min(a1, hi)
            if b1 - b0 > 1e-13 * r:
                if is_x:
                    out.append((b0, b1, True, -(1 - th) * k, (1 - th) / r))
                else:
                    out.append((b0, b1, False, th * (k + 1), -th / r))
        k += 1
    return out


def _build_cell(L: np.ndarray, rule: T3Rule, r: float, refine: bool) -> _CellBuild:
    """Regions of one cell ``[0, L]`` (local coordinates) before well splitting."""
    a = rule.axis
    eye = np.eye(3)
    box = [(eye[i], float(L[i])) for i in range(3)] + [(-eye[i], 0.0) for i in range(3)]
    faces = _faces(L)
    regs: list[Region] = []
    child_mask: list[bool] = []
    cutoff: list[bool] = []
    children = []
    lo_b, mid_b = r / 8, 3 * r / 8
    XmY = rule.X - rule.Y
    for fi, (b, s, c) in enumerate(faces):
        sector = []
        for gi, (b2, s2, c2) in enumerate(faces):
            if gi != fi:
                sector.append((s * eye[b] - s2 * eye[b2], c2 - c))
        near = box + sector
        shell = near + [(s * eye[b], lo_b - c)]
        regs.append(make_region(shell, rule.D0, 0, tag=f"shell{fi}"))
        child_mask.append(False)
        cutoff.append(True)
        band = near + [(-s * eye[b], c - lo_b), (s * eye[b], mid_b - c)]
        if b == a:
            rng = (0.0, mid_b) if s > 0 else (L[a] - mid_b, L[a])
        else:
            rng = (lo_b, L[a] - lo_b)
        G = row_cross(s * eye[b], rule.M)
        for a0, a1, is_x, h0, h1 in _pieces(rule, r, max(rng[0], 0.0), min(rng[1], L[a])):
            hp = 1 - rule.theta if is_x else -rule.theta
            value = rule.D0 + 4 * h0 * G + (4 * c / r - 0.5) * hp * XmY
            slope = np.zeros((3, 3, 3))
            slope[a] += 4 * h1 * G
            slope[b] += 4 * s / r * hp * XmY
            cons = band + [(eye[a], a1), (-eye[a], -a0)]
            regs.append(make_region(cons, value, 0, slope, f"band{fi}"))
            child_mask.append(False)
            cutoff.append(True)
    core_lo = np.full(3, mid_b)
    core_hi = L - mid_b
    if np.all(core_hi - core_lo > 1e-13 * r):
        for a0, a1, is_x, _, _ in _pieces(rule, r, core_lo[a], core_hi[a]):
            lo, hi = core_lo.copy(), core_hi.copy()
            lo[a], hi[a] = a0, a1
            value = rule.X if is_x else rule.Y
            child = rule.x_child if is_x else rule.y_child
            cons = [(eye[i], hi[i]) for i in range(3)] + [(-eye[i], -lo[i]) for i in range(3)]
            regs.append(make_region(cons, value, 0, tag="X" if is_x else "Y"))
            is_child = refine and child is not None
            child_mask.append(is_child)
            cutoff.append(False)
            if is_child:
                children.append((lo, hi, child))
    return _CellBuild(regs, child_mask, children, cutoff)


def _label_regions(regions: Sequence[Region]) -> list[tuple[Region, int]]:
    """Split affine regions by nearest well; returns (region, source index)."""
    out = []
    flat = WELLS.reshape(3, -1)
    for i, reg in enumerate(regions):
        if reg.slope is None:
            lab = int(np.argmin(((flat - reg.value.reshape(-1)) ** 2).sum(1)))
            out.append((Region(reg.A, reg.b, reg.value, lab, None, reg.tag), i))
        else:
            out += [(piece, i) for piece in split_by_nearest_well(reg, WELLS)]
    return out


# ------------------------------------------------------------------ energies

_N_SCALAR = 6  # el, surf, surf_aniso, off_K volume, cut-off volume, leaf S volume
_DIV = divergence(3, 3)


class _Ledger:
    """Memoised energy vectors ``(scalars..., cells per level...)``."""

    def __init__(self, rules: dict[str, T3Rule], r: Sequence[float], depth: int,
                 check: bool = False):
        self.rules = rules
        self.check = check
        self.residual = 0.0
        self.passed = True
        self.r = list(r)
        self.depth = depth
        self.memo: dict[tuple, np.ndarray] = {}
        self.builds = 0

    def size(self) -> int:
        return _N_SCALAR + self.depth + 1

    def leaf(self, L: np.ndarray, D0: np.ndarray, level: int) -> np.ndarray:
        out = np.zeros(self.size())
        vol = float(np.prod(L))
        dist = ((WELLS - D0) ** 2).sum(axis=(1, 2))
        out[0] = dist.min() * vol
        if dist.min() > 0:
            out[3] = vol
            out[5] = vol
        out[_N_SCALAR + level] = 1
        return out

    def cell(self, L: np.ndarray, name: str, level: int) -> np.ndarray:
        L = np.asarray(L, dtype=float)
        key = (tuple(float(f"{x:.12g}") for x in L), name, level)
        if key in self.memo:
            return self.memo[key]
        rule = self.rules[name]
        if level >= self.depth:
            val = self.leaf(L, rule.D0, level)
        else:
            r = self.r[level]
            a = rule.axis
            n = math.floor(L[a] / r + 1e-9)
            if n > COMPRESS_FROM + 1:
                rho = L[a] - n * r
                L0 = L.copy()
                L0[a] = COMPRESS_FROM * r + rho
                L1 = L.copy()
                L1[a] = (COMPRESS_FROM + 1) * r + rho
                e0 = self.direct(L0, rule, level)
                e1 = self.direct(L1, rule, level)
                val = e0 + (n - COMPRESS_FROM) * (e1 - e0)
            else:
                val = self.direct(L, rule, level)
        self.memo[key] = val
        return val

    def direct(self, L: np.ndarray, rule: T3Rule, level: int) -> np.ndarray:
        self.builds += 1
        r = self.r[level]
        cb = _build_cell(L, rule, r, refine=True)
        labelled = _label_regions(cb.regions)
        # child boxes carry the constant X or Y, which is the child's own face value
        rc = RegionComplex([p for p, _ in labelled], WELLS, hi=L, exterior=rule.D0,
                           exterior_axes=(0, 1, 2))
        if self.check:
            rep = interface_check(rc, _DIV)
            self.residual = max(self.residual, rep.max_residual / rep.scale)
            self.passed = self.passed and rep.passed
        out = np.zeros(self.size())
        out[1] = rc.surface_energy()
        out[2] = rc.surface_energy(anisotropic=True)
        out[_N_SCALAR + level] = 1
        for piece, src in labelled:
            g = piece.geometry
            if g.empty or cb.child_mask[src]:
                continue
            a = (piece.value - WELLS[piece.label]).reshape(-1)
            G = piece.gradient_matrix()
            out[0] += a @ a * g.volume + 2 * a @ G @ g.first + np.trace(G.T @ G @ g.second)
            if piece.slope is not None or np.any(a != 0):
                out[3] += g.volume
            if cb.cutoff[src]:
                out[4] += g.volume
        for lo, hi, child in cb.children:
            out += self.cell(hi - lo, child, level + 1)
        return out


# ------------------------------------------------------------------ results


@dataclass
class T3Result:
    params: T3Params
    F: np.ndarray
    root: str
    depth: int
    energy: EnergyReport
    E_surf_anisotropic: float
    off_well_volume: float
    cutoff_volume: float
    leaf_volume: float
    cells_per_level: list[int]
    increments: list[dict]
    bound: dict
    builds: int
    rules: dict = field(repr=False, default_factory=dict)
    interface_passed: bool | None = None
    interface_residual: float | None = None

    def region_complex(self) -> RegionComplex:
        return t3_region_complex(self.params, self.F)

    def potential(self, x: np.ndarray) -> np.ndarray:
        return evaluate_t3(self.params, x, self.F)[2]


def _ledger_vector(rules, root, r, depth, check: bool = False) -> tuple[np.ndarray, _Ledger]:
    led = _Ledger(rules, r, depth, check)
    vec = led.cell(np.ones(3), root, 0)
    return vec, led


def build_t3_laminate(p: T3Params, F=None, eps: float | None = None,
                      increments: bool = True, check: bool = False) -> T3Result:
    """Exact energies of the depth-``p.m`` laminate with boundary datum ``F`` (default ``S_3``).

    ``p.m`` counts all laminations, including the one or two extra steps that
    reduce a leg or triangle point to the ``S_j`` chain. With ``check`` every
    distinct cell is verified to be divergence-compatible across its interfaces
    and against its face value.
    """
    F = S_MATS[3] if F is None else np.asarray(F, dtype=float)
    eps = p.eps if eps is None else eps
    root, rules, extra = t3_rules(F)
    depth = p.m
    if depth < extra:
        raise SequencingError(f"datum needs at least {extra} laminations, got m = {depth}")
    r = p.r_float
    vec, led = _ledger_vector(rules, root, r, depth, check)
    incs = []
    if increments:
        prev = None
        for k in range(0, depth + 1):
            v = vec if k == depth else _ledger_vector(rules, root, r, k)[0]
            row = {"m": k, "elastic": float(v[0]), "surface": float(v[1])}
            if prev is not None:
                row["d_elastic"] = row["elastic"] - prev["elastic"]
                row["d_surface"] = row["surface"] - prev["surface"]
            incs.append(row)
            prev = row
    report = EnergyReport(eps, float(vec[0]), None, float(vec[1]))
    bound = t3_energy_bound(T3Params(p.m, p.r, eps))
    return T3Result(p, F, root, depth, report, float(vec[2]), float(vec[3]), float(vec[4]),
                    float(vec[5]), [int(round(x)) for x in vec[_N_SCALAR:]], incs, bound, led.builds,
                    rules, led.passed if check else None, led.residual if check else None)


# ------------------------------------------------------------------ explicit complex


def _translate(reg: Region, lo: np.ndarray) -> Region:
    b = reg.b + reg.A @ lo
    value = reg.value
    if reg.slope is not None:
        value = value - np.tensordot(lo, reg.slope, axes=([0], [0]))
    return Region(reg.A, b, value, reg.label, reg.slope, reg.tag)


def t3_region_complex(p: T3Params, F=None, max_regions: int = 200_000) -> RegionComplex:
    """Full explicit complex (for small depths; every region is materialised)."""
    F = S_MATS[3] if F is None else np.asarray(F, dtype=float)
    root, rules, _ = t3_rules(F)
    r = p.r_float
    out: list[Region] = []

    def rec(lo, L, name, level):
        rule = rules[name]
        if level >= p.m:
            lab = int(np.argmin(((WELLS - rule.D0) ** 2).sum(axis=(1, 2))))
            cons = [(np.eye(3)[i], L[i]) for i in range(3)] + [(-np.eye(3)[i], 0.0) for i in range(3)]
            out.append(_translate(make_region(cons, rule.D0, lab, tag=f"leaf{level}"), lo))
            return
        cb = _build_cell(L, rule, r[level], refine=True)
        for piece, src in _label_regions(cb.regions):
            if not cb.child_mask[src]:
                out.append(_translate(piece, lo))
        if len(out) > max_regions:
            raise ValidationError("explicit T3 complex exceeds the region budget")
        for clo, chi, child in cb.children:
            rec(lo + clo, chi - clo, child, level + 1)

    rec(np.zeros(3), np.ones(3), root, 0)
    return RegionComplex(out, WELLS, exterior=F, exterior_axes=(0, 1, 2), name="t3",
                         meta={"params": p.to_dict(), "F": F.tolist()})


# ------------------------------------------------------------------ point evaluation


def evaluate_t3(p: T3Params, x: np.ndarray, F=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``u``, nearest-well labels and potential ``v`` at points ``x`` of shape ``(N, 3)``.

    ``v = S_F(x) + sum_cells phi(d/r) r h(.) M`` where row ``i`` of ``S_F(x)``
    is ``F_i x x / 2``; ``curl v = u`` row-wise.
    """
    F = S_MATS[3] if F is None else np.asarray(F, dtype=float)
    root, rules, _ = t3_rules(F)
    names = list(rules)
    x = np.asarray(x, dtype=float)
    N = len(x)
    u = np.broadcast_to(F, (N, 3, 3)).copy()
    v = 0.5 * np.cross(F[None, :, :], x[:, None, :])
    inside = np.all((x > 0) & (x < 1), axis=1)
    lo = np.zeros((N, 3))
    L = np.ones((N, 3))
    state = np.full(N, names.index(root))
    active = inside.copy()
    r = p.r_float
    faces_axis = np.array([0, 0, 1, 1, 2, 2])
    faces_sign = np.array([1, -1, 1, -1, 1, -1])
    for level in range(p.m + 1):
        if not active.any():
            break
        for si, name in enumerate(names):
            sel = np.flatnonzero(active & (state == si))
            if sel.size == 0:
                continue
            rule = rules[name]
            if level >= p.m:
                u[sel] = rule.D0
                active[sel] = False
                continue
            rr = r[level]
            y = x[sel] - lo[sel]
            Ls = L[sel]
            dist = np.concatenate([y, Ls - y], axis=1)[:, [0, 3, 1, 4, 2, 5]]
            f = np.argmin(dist, axis=1)
            dd = dist[np.arange(sel.size), f]
            t = dd / rr
            ph = CutoffProfiles.phi(t)
            php = CutoffProfiles.phi_prime(t)
            s = y[:, rule.axis] / rr
            h = CutoffProfiles.tent(s, rule.theta)
            hp = CutoffProfiles.tent_prime(s, rule.theta)
            grad = np.zeros((sel.size, 3))
            grad[np.arange(sel.size), faces_axis[f]] = faces_sign[f]
            Gd = np.cross(grad[:, None, :], rule.M[None])
            u[sel] = rule.D0 + (php * h)[:, None, None] * Gd + (ph * hp)[:, None, None] * (rule.X - rule.Y)
            v[sel] += (ph * rr * h)[:, None, None] * rule.M
            core = t >= 0.375
            is_x = np.mod(s, 1.0) < rule.theta
            child = np.full(sel.size, -1)
            if rule.x_child is not None:
                child[core & is_x] = names.index(rule.x_child)
            if rule.y_child is not None:
                child[core & ~is_x] = names.index(rule.y_child)
            go = child >= 0
            done = sel[~go]
            active[done] = False
            if go.any():
                g = sel[go]
                a = rule.axis
                k = np.floor(s[go])
                a0 = np.where(is_x[go], k, k + rule.theta) * rr
                a1 = np.where(is_x[go], k + rule.theta, k + 1) * rr
                clo = np.full((g.size, 3), 3 * rr / 8)
                chi = Ls[go] - 3 * rr / 8
                clo[:, a] = np.maximum(a0, 3 * rr / 8)
                chi[:, a] = np.minimum(a1, Ls[go, a] - 3 * rr / 8)
                lo[g] = lo[g] + clo
                L[g] = chi - clo
                state[g] = child[go]
    labels = np.argmin(((u[:, None] - WELLS[None]) ** 2).sum(axis=(2, 3)), axis=1)
    return u, labels, v


@dataclass
class T3Raster:
    grid: Grid
    u: np.ndarray
    labels: np.ndarray

    def phase_field(self) -> PhaseField:
        return PhaseField(self.grid, self.labels, WELLS)

    def tensor_field(self) -> TensorField:
        return TensorField(self.grid, self.u)

    def pair_energy(self) -> float:
        diff = self.u - WELLS[self.labels]
        return float(np.sum(diff * diff)) * self.grid.cell_volume


def rasterize_t3(p: T3Params, n: int, F=None, slab: int = 8) -> T3Raster:
    """Cell-centre samples of ``u`` and ``chi`` on an ``n^3`` grid."""
    grid = Grid(3, n)
    c = grid.centers_1d()
    u = np.empty((n, n, n, 3, 3))
    labels = np.empty((n, n, n), dtype=np.int64)
    for s in range(0, n, slab):
        e = min(s + slab, n)
        pts = np.stack(np.meshgrid(c[s:e], c, c, indexing="ij"), axis=-1).reshape(-1, 3)
        uu, ll, _ = evaluate_t3(p, pts, F)
        u[s:e] = uu.reshape(e - s, n, n, 3, 3)
        labels[s:e] = ll.reshape(e - s, n, n)
    return T3Raster(grid, u, labels)
