"""Exact polyhedral region complexes in two and three dimensions.

A region is a convex polytope ``{x : A x <= b}`` carrying an affine matrix
value ``u(x) = value + sum_i x_i slope[i]`` and a phase label indexing a well
set. Geometry (vertices, facets, moments) is computed from the half-space
description; interfaces between regions are discovered by matching coplanar,
oppositely oriented facets, so builders only have to emit regions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon

from .errors import InvalidInputError, TilingError

GEOM_TOL = 1e-10
AREA_TOL = 1e-13


# ----------------------------------------------------------------- polytopes


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    if len(points) == 0:
        return points
    keys = np.round(points / tol).astype(np.int64)
    _, idx = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(idx)]


def _plane_basis(n: np.ndarray) -> np.ndarray:
    """Orthonormal rows spanning the hyperplane orthogonal to unit ``n``."""
    if n.size == 2:
        return np.array([[-n[1], n[0]]])
    x, y, z = float(n[0]), float(n[1]), float(n[2])
    ax = min(range(3), key=lambda i: abs((x, y, z)[i]))
    # t1 = n x e_ax, t2 = n x t1
    if ax == 0:
        t1 = (0.0, z, -y)
    elif ax == 1:
        t1 = (-z, 0.0, x)
    else:
        t1 = (y, -x, 0.0)
    s = (t1[0] ** 2 + t1[1] ** 2 + t1[2] ** 2) ** 0.5
    t1 = (t1[0] / s, t1[1] / s, t1[2] / s)
    t2 = (y * t1[2] - z * t1[1], z * t1[0] - x * t1[2], x * t1[1] - y * t1[0])
    return np.array([t1, t2])


@dataclass
class Facet:
    row: int
    normal: np.ndarray
    offset: float
    polygon: np.ndarray
    area: float


@dataclass
class PolytopeGeometry:
    vertices: np.ndarray
    facets: list[Facet]
    volume: float
    first: np.ndarray
    second: np.ndarray

    @property
    def empty(self) -> bool:
        return self.volume <= 0.0

    @property
    def centroid(self) -> np.ndarray:
        return self.first / self.volume


_EMPTY_CACHE: dict[int, PolytopeGeometry] = {}


def _empty_geometry(d: int) -> PolytopeGeometry:
    if d not in _EMPTY_CACHE:
        _EMPTY_CACHE[d] = PolytopeGeometry(np.zeros((0, d)), [], 0.0, np.zeros(d), np.zeros((d, d)))
    return _EMPTY_CACHE[d]


def polytope_geometry(A: np.ndarray, b: np.ndarray, tol: float = GEOM_TOL) -> PolytopeGeometry:
    """Vertices, facets and integral moments of ``{x : A x <= b}``.

    ``A`` must have unit rows. Returns an empty geometry for lower-dimensional
    or empty sets. ``first = int x`` and ``second = int x x^T``.
    """
    h, d = A.shape
    if d not in (2, 3):
        raise InvalidInputError("polytope geometry is implemented for d = 2 and d = 3")
    combos = np.array(list(itertools.combinations(range(h), d)))
    if combos.size == 0:
        return _empty_geometry(d)
    mats = A[combos]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        det = np.linalg.det(mats)
    good = np.abs(det) > 1e-12
    if not np.any(good):
        return _empty_geometry(d)
    sol = np.linalg.solve(mats[good], b[combos[good]][..., None])[..., 0]
    feas = np.all(sol @ A.T <= b + tol, axis=1)
    verts = _dedupe(sol[feas], 1e-9)
    if len(verts) < d + 1:
        return _empty_geometry(d)
    apex = verts.mean(axis=0)
    facets: list[Facet] = []
    tris: list[np.ndarray] = []
    seen: set[tuple] = set()
    resid = np.abs(verts @ A.T - b) <= 1e-9
    counts = resid.sum(axis=0)
    for r in np.flatnonzero(counts >= d):
        n = A[r]
        key = (tuple(np.round(n, 12)), round(float(b[r]), 12))
        if key in seen:
            continue
        pts = verts[resid[:, r]]
        basis = _plane_basis(n)
        loc = (pts - apex) @ basis.T
        if d == 2:
            lo, hi = int(np.argmin(loc[:, 0])), int(np.argmax(loc[:, 0]))
            area = float(loc[hi, 0] - loc[lo, 0])
            if area <= AREA_TOL:
                continue
            poly = pts[[lo, hi]]
            tris.append(poly[None])
        else:
            c = loc.mean(axis=0)
            order = np.argsort(np.arctan2(loc[:, 1] - c[1], loc[:, 0] - c[0]))
            poly = pts[order]
            l2 = loc[order]
            area = 0.5 * abs(float(np.dot(l2[:, 0], np.roll(l2[:, 1], -1))
                                   - np.dot(np.roll(l2[:, 0], -1), l2[:, 1])))
            if area <= AREA_TOL:
                continue
            k = len(poly)
            idx = np.arange(1, k - 1)
            tris.append(np.stack([np.broadcast_to(poly[0], (k - 2, 3)), poly[idx], poly[idx + 1]], axis=1))
        seen.add(key)
        facets.append(Facet(int(r), n.copy(), float(b[r]), poly, area))
    if not tris:
        return _empty_geometry(d)
    simp = np.concatenate(tris)
    w = np.concatenate([simp, np.broadcast_to(apex, (len(simp), 1, d))], axis=1)
    vols = np.abs(np.linalg.det(w[:, 1:] - w[:, :1])) / (2.0 if d == 2 else 6.0)
    tot = w.sum(axis=1)
    vol = float(vols.sum())
    first = (vols[:, None] * tot).sum(axis=0) / (d + 1)
    second = (np.einsum("t,tki,tkj->ij", vols, w, w) + np.einsum("t,ti,tj->ij", vols, tot, tot)) / (
        (d + 1) * (d + 2))
    if vol <= 1e-15:
        return _empty_geometry(d)
    return PolytopeGeometry(verts, facets, vol, first, second)


def box_halfspaces(lo: Sequence[float], hi: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    d = len(lo)
    eye = np.eye(d)
    return np.vstack([eye, -eye]), np.concatenate([np.asarray(hi, float), -np.asarray(lo, float)])


def halfspace(normal: Sequence[float], offset: float) -> tuple[np.ndarray, float]:
    """Unit-normalised constraint ``normal . x <= offset``."""
    n = np.asarray(normal, dtype=float)
    s = np.linalg.norm(n)
    return n / s, offset / s


# ------------------------------------------------------------------ regions


@dataclass
class Region:
    """Convex polytope with an affine value and a phase label."""

    A: np.ndarray
    b: np.ndarray
    value: np.ndarray
    label: int
    slope: np.ndarray | None = None
    tag: str = ""
    _geom: PolytopeGeometry | None = field(default=None, repr=False)

    @property
    def geometry(self) -> PolytopeGeometry:
        if self._geom is None:
            self._geom = polytope_geometry(self.A, self.b)
        return self._geom

    def u_at(self, x: np.ndarray) -> np.ndarray:
        """Value at points ``x`` of shape ``(..., d)``; result ``(..., m, d')``."""
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(self.value, x.shape[:-1] + self.value.shape).copy()
        if self.slope is not None:
            out = out + np.tensordot(x, self.slope, axes=([-1], [0]))
        return out

    def gradient_matrix(self) -> np.ndarray:
        """``G`` with ``vec(u(x)) = vec(value) + G x``."""
        d = self.A.shape[1]
        if self.slope is None:
            return np.zeros((self.value.size, d))
        return self.slope.reshape(d, -1).T

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        return np.all(x @ self.A.T <= self.b + tol, axis=-1)


def make_region(constraints: Iterable[tuple[Sequence[float], float]], value, label: int,
                slope=None, tag: str = "") -> Region:
    rows, offs = [], []
    for n, c in constraints:
        n2, c2 = halfspace(n, c)
        rows.append(n2)
        offs.append(c2)
    return Region(np.array(rows), np.array(offs), np.asarray(value, dtype=float), int(label),
                  None if slope is None else np.asarray(slope, dtype=float), tag)


def box_constraints(lo: Sequence[float], hi: Sequence[float]) -> list[tuple[np.ndarray, float]]:
    A, b = box_halfspaces(lo, hi)
    return list(zip(A, b))


@dataclass
class Interface:
    """Shared facet between region ``i`` and region ``j`` (``j = -1``: exterior).

    ``normal`` points from ``i`` into ``j``; ``polygon`` holds the vertices of
    the shared piece.
    """

    i: int
    j: int
    normal: np.ndarray
    area: float
    polygon: np.ndarray


@dataclass
class InterfaceReport:
    max_residual: float
    scale: float
    passed: bool
    offending: list[tuple[int, int, float]]
    n_interfaces: int


class RegionComplex:
    """Collection of regions tiling a box, with wells for the phase labels.

    Args:
        regions: Regions; empty ones are dropped.
        wells: Array ``(K,) + value_shape`` of phase values.
        lo, hi: Domain box (default the unit cube).
        exterior: Value of ``u`` outside the box, or ``None``.
        exterior_axes: Axes whose two faces must match ``exterior``.
    """

    def __init__(self, regions: Sequence[Region], wells: np.ndarray, lo=None, hi=None,
                 exterior: np.ndarray | None = None, exterior_axes: Sequence[int] = (),
                 name: str = "", meta: dict | None = None):
        regions = [r for r in regions if not r.geometry.empty]
        if not regions:
            raise TilingError("region complex has no region of positive volume")
        self.d = regions[0].A.shape[1]
        self.regions = regions
        self.wells = np.asarray(wells, dtype=float)
        self.lo = np.zeros(self.d) if lo is None else np.asarray(lo, dtype=float)
        self.hi = np.ones(self.d) if hi is None else np.asarray(hi, dtype=float)
        self.exterior = None if exterior is None else np.asarray(exterior, dtype=float)
        self.exterior_axes = tuple(exterior_axes)
        self.name = name
        self.meta = dict(meta or {})
        self._interfaces: list[Interface] | None = None
        self._uncovered: float = 0.0

    def __len__(self) -> int:
        return len(self.regions)

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.regions[0].value.shape

    @property
    def domain_volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def total_volume(self) -> float:
        return float(sum(r.geometry.volume for r in self.regions))

    # -- interfaces -------------------------------------------------------

    @property
    def interfaces(self) -> list[Interface]:
        if self._interfaces is None:
            self._interfaces, self._uncovered = _find_interfaces(self)
        return self._interfaces

    def validate(self, rel_tol: float = 1e-9) -> None:
        """Raise :class:`TilingError` unless the regions tile the box."""
        vol = self.total_volume()
        if abs(vol - self.domain_volume) > rel_tol * self.domain_volume:
            raise TilingError(f"region volumes sum to {vol}, box volume is {self.domain_volume}")
        self.interfaces
        if self._uncovered > 1e-9:
            raise TilingError(f"facet area {self._uncovered} is neither shared nor on the boundary")

    # -- energies ---------------------------------------------------------

    def elastic_energy(self) -> float:
        """Exact ``int |u - chi|^2`` with ``chi`` the labelled well."""
        total = 0.0
        for r in self.regions:
            g = r.geometry
            a = (r.value - self.wells[r.label]).reshape(-1)
            G = r.gradient_matrix()
            total += a @ a * g.volume + 2 * a @ G @ g.first + np.trace(G.T @ G @ g.second)
        return float(total)

    def surface_energy(self, anisotropic: bool = False) -> float:
        """Exact ``int |D chi|`` over the interior interfaces.

        ``anisotropic=True`` weights each interface by ``|n|_1``, the continuum
        limit of the face-jump discrete total variation.
        """
        total = 0.0
        for it in self.interfaces:
            if it.j < 0:
                continue
            li, lj = self.regions[it.i].label, self.regions[it.j].label
            if li == lj:
                continue
            jump = float(np.linalg.norm(self.wells[li] - self.wells[lj]))
            w = float(np.abs(it.normal).sum()) if anisotropic else 1.0
            total += jump * it.area * w
        return total

    def volume_by_label(self) -> np.ndarray:
        out = np.zeros(len(self.wells))
        for r in self.regions:
            out[r.label] += r.geometry.volume
        return out

    def off_well_volume(self, tol: float = 1e-12) -> float:
        """Volume where ``u`` is not equal to its labelled well."""
        vol = 0.0
        for r in self.regions:
            if r.slope is not None and np.any(np.abs(r.slope) > tol):
                vol += r.geometry.volume
            elif np.max(np.abs(r.value - self.wells[r.label])) > tol:
                vol += r.geometry.volume
        return vol

    def mean_value(self) -> np.ndarray:
        acc = np.zeros(self.value_shape)
        for r in self.regions:
            g = r.geometry
            acc += r.value * g.volume
            if r.slope is not None:
                acc += np.tensordot(g.first, r.slope, axes=([0], [0]))
        return acc / self.domain_volume

    # -- serialisation ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "d": self.d,
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "wells": self.wells.tolist(),
            "exterior": None if self.exterior is None else self.exterior.tolist(),
            "exterior_axes": list(self.exterior_axes),
            "meta": self.meta,
            "regions": [
                {
                    "A": r.A.tolist(),
                    "b": r.b.tolist(),
                    "value": r.value.tolist(),
                    "slope": None if r.slope is None else r.slope.tolist(),
                    "label": r.label,
                    "tag": r.tag,
                }
                for r in self.regions
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegionComplex":
        regions = [
            Region(np.array(r["A"]), np.array(r["b"]), np.array(r["value"]), int(r["label"]),
                   None if r.get("slope") is None else np.array(r["slope"]), r.get("tag", ""))
            for r in data["regions"]
        ]
        return cls(regions, np.array(data["wells"]), data.get("lo"), data.get("hi"),
                   None if data.get("exterior") is None else np.array(data["exterior"]),
                   data.get("exterior_axes", ()), data.get("name", ""), data.get("meta"))


def _plane_key(n: np.ndarray, c: float) -> tuple[tuple, int]:
    idx = np.flatnonzero(np.abs(n) > 1e-9)[0]
    sign = 1 if n[idx] > 0 else -1
    key = tuple(np.round(sign * np.append(n, c) * 1e8).astype(np.int64).tolist())
    return key, sign


def _find_interfaces(rc: RegionComplex) -> tuple[list[Interface], float]:
    d = rc.d
    groups: dict[tuple, list[tuple[int, int, Facet]]] = {}
    for ri, reg in enumerate(rc.regions):
        for f in reg.geometry.facets:
            key, sign = _plane_key(f.normal, f.offset)
            groups.setdefault(key, []).append((ri, sign, f))
    out: list[Interface] = []
    uncovered = 0.0
    for key, members in groups.items():
        plus = [m for m in members if m[1] > 0]
        minus = [m for m in members if m[1] < 0]
        ref = plus[0][2] if plus else minus[0][2]
        n = ref.normal * (1 if plus else -1)
        basis = _plane_basis(n)
        on_boundary = _boundary_axis(rc, n, ref.offset * (1 if plus else -1))
        covered = {id(m[2]): 0.0 for m in members}
        pairs = _overlaps(d, basis, plus, minus)
        for (ri, fi), (rj, fj), area, poly in pairs:
            out.append(Interface(ri, rj, n.copy(), area, poly))
            covered[id(fi)] += area
            covered[id(fj)] += area
        if on_boundary is not None:
            for ri, sign, f in members:
                out.append(Interface(ri, -1, f.normal.copy(), f.area, f.polygon))
                covered[id(f)] = f.area
        for _, _, f in members:
            uncovered += max(0.0, f.area - covered[id(f)])
    return out, uncovered


def _boundary_axis(rc: RegionComplex, n: np.ndarray, c: float):
    axis = int(np.argmax(np.abs(n)))
    if abs(abs(n[axis]) - 1) > 1e-12:
        return None
    x = c * n[axis]
    if abs(x - rc.lo[axis]) < 1e-12 or abs(x - rc.hi[axis]) < 1e-12:
        return axis
    return None


def _overlaps(d, basis, plus, minus):
    """Positive-measure overlaps between oppositely oriented coplanar facets."""
    if not plus or not minus:
        return []
    res = []
    if d == 2:
        # facets on one side of a line are disjoint, so a merge of the two
        # sorted interval lists finds every overlap
        t = basis[0]

        def intervals(side):
            out = []
            for r, _, f in side:
                s = f.polygon @ t
                out.append((float(s.min()), float(s.max()), r, f, f.polygon[np.argmin(s)]))
            return sorted(out, key=lambda z: z[0])

        ia, ib = intervals(plus), intervals(minus)
        p = q = 0
        while p < len(ia) and q < len(ib):
            a0, a1, ri, fi, p0 = ia[p]
            b0, b1, rj, fj, _ = ib[q]
            lo, hi = max(a0, b0), min(a1, b1)
            if hi - lo > 1e-12:
                poly = np.stack([p0 + (lo - a0) * t, p0 + (hi - a0) * t])
                res.append(((ri, fi), (rj, fj), hi - lo, poly))
            if a1 < b1:
                p += 1
            else:
                q += 1
        return res
    origin = plus[0][2].polygon[0]
    n = np.cross(basis[0], basis[1])

    def to2(poly):
        return (poly - origin) @ basis.T

    polys_minus = [Polygon(to2(fj.polygon)) for _, _, fj in minus]
    tree = shapely.STRtree(polys_minus)
    offset = origin @ n
    for ri, _, fi in plus:
        pa = Polygon(to2(fi.polygon))
        for k in tree.query(pa):
            inter = pa.intersection(polys_minus[k])
            if inter.area <= 1e-12:
                continue
            rj, _, fj = minus[k]
            geoms = getattr(inter, "geoms", [inter])
            for g in geoms:
                if g.geom_type != "Polygon" or g.area <= 1e-12:
                    continue
                xy = np.asarray(g.exterior.coords)[:-1]
                poly = origin + xy @ basis
                poly += (offset - poly @ n)[:, None] * n
                res.append(((ri, fi), (rj, fj), float(g.area), poly))
    return res


def interface_check(rc: RegionComplex, op, rel_tol: float = 1e-12) -> InterfaceReport:
    """Evaluate ``|symbol(n) [[u]]|`` at every vertex of every interface piece.

    Boundary facets are compared with ``rc.exterior`` on the axes listed in
    ``rc.exterior_axes``. Values are affine on each region, so checking the
    vertices of each (convex) shared piece covers the whole piece.
    """
    from .symbol_core import symbol_eval

    if op.order != 1:
        raise InvalidInputError("interface_check needs a first-order operator")
    scale = 1.0
    for r in rc.regions:
        scale = max(scale, float(np.abs(r.value).max()))
        if r.slope is not None:
            scale = max(scale, float(np.abs(r.slope).max()))
    worst = 0.0
    bad: list[tuple[int, int, float]] = []
    count = 0
    for it in rc.interfaces:
        ui = rc.regions[it.i].u_at(it.polygon)
        if it.j < 0:
            axis = int(np.argmax(np.abs(it.normal)))
            if rc.exterior is None or axis not in rc.exterior_axes:
                continue
            uj = np.broadcast_to(rc.exterior, ui.shape)
        else:
            uj = rc.regions[it.j].u_at(it.polygon)
        sym = symbol_eval(op, it.normal)
        jump = (uj - ui).reshape(len(it.polygon), -1)
        res = float(np.max(np.linalg.norm(jump @ sym.T, axis=1)))
        count += 1
        if res > worst:
            worst = res
        if res > rel_tol * scale:
            bad.append((it.i, it.j, res))
    return InterfaceReport(worst, scale, worst <= rel_tol * scale, bad, count)


def split_by_nearest_well(region: Region, wells: np.ndarray) -> list[Region]:
    """Split an affine region into convex pieces labelled by the nearest well.

    For ``u(x) = c + G x`` the set where well ``k`` is nearest is cut out by
    the affine inequalities ``|u - W_k|^2 <= |u - W_l|^2``; ties go to the
    smaller index.
    """
    W = wells.reshape(len(wells), -1)
    c = region.value.reshape(-1)
    G = region.gradient_matrix()
    out = []
    for k in range(len(W)):
        rows = [region.A]
        offs = [region.b]
        feasible = True
        for l in range(len(W)):
            if l == k:
                continue
            diff = W[k] - W[l]
            a = -2.0 * G.T @ diff
            rhs = 2.0 * c @ diff - W[k] @ W[k] + W[l] @ W[l]
            norm = np.linalg.norm(a)
            if norm < 1e-14:
                if rhs < 0 or (rhs == 0 and l < k):
                    feasible = False
                    break
                continue
            rows.append((a / norm)[None])
            offs.append(np.array([rhs / norm]))
        if not feasible:
            continue
        piece = Region(np.vstack(rows), np.concatenate(offs), region.value, k, region.slope,
                       region.tag)
        if not piece.geometry.empty:
            out.append(piece)
    return out
