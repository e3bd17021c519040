"""Periodic grids, phase and tensor fields, Fourier transforms and rasterization.

Fields live on the torus ``[0, 1)^d`` sampled at cell centres. The transform
is normalised so that ``f_hat(k) = N^{-d} sum_x f(x) exp(-2 pi i k.x)``: the
zero mode is the cell mean and ``sum_k |f_hat(k)|^2`` equals the ``L^2`` norm
squared of the piecewise-constant field.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionError, InvalidInputError, TilingError


@dataclass(frozen=True)
class Grid:
    d: int
    n: int

    def __post_init__(self) -> None:
        if self.d not in (2, 3):
            raise InvalidInputError(f"grid dimension must be 2 or 3, got {self.d}")
        if self.n < 4 or self.n % 2:
            raise InvalidInputError(f"cells per axis must be even and >= 4, got {self.n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return float(self.n) ** -self.d

    def centers_1d(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) / self.n

    def frequencies_1d(self) -> np.ndarray:
        """Integer wave numbers in FFT order."""
        return np.fft.fftfreq(self.n, 1.0 / self.n)

    def wavevectors(self) -> np.ndarray:
        """Integer wave vectors, shape ``shape + (d,)``."""
        k = self.frequencies_1d()
        return np.stack(np.meshgrid(*([k] * self.d), indexing="ij"), axis=-1)


def _spatial_axes(d: int) -> tuple[int, ...]:
    return tuple(range(d))


def dft(values: np.ndarray, d: int) -> np.ndarray:
    """Forward transform over the first ``d`` axes (mean-normalised)."""
    return np.fft.fftn(values, axes=_spatial_axes(d), norm="forward")


def idft(coeffs: np.ndarray, d: int, real: bool = True) -> np.ndarray:
    out = np.fft.ifftn(coeffs, axes=_spatial_axes(d), norm="forward")
    return out.real if real else out


@dataclass(frozen=True, eq=False)
class TensorField:
    """Per-cell values of shape ``grid.shape + value_shape``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape[: self.grid.d] != self.grid.shape:
            raise DimensionError(f"values of shape {v.shape} do not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("tensor field has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.values.shape[self.grid.d:]


@dataclass(frozen=True, eq=False)
class PhaseField:
    """Labels indexing ``wells`` (array ``(K,) + value_shape``)."""

    grid: Grid
    labels: np.ndarray
    wells: np.ndarray

    def __post_init__(self) -> None:
        lab = np.asarray(self.labels)
        if lab.shape != self.grid.shape:
            raise DimensionError(f"labels of shape {lab.shape} do not match grid {self.grid.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise InvalidInputError("labels must be integers")
        w = np.asarray(self.wells, dtype=float)
        if lab.size and (lab.min() < 0 or lab.max() >= len(w)):
            raise InvalidInputError("label out of range of the well set")
        object.__setattr__(self, "labels", lab.astype(np.int64))
        object.__setattr__(self, "wells", w)

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.wells.shape[1:]

    @cached_property
    def chi(self) -> np.ndarray:
        return self.wells[self.labels]

    def diagonal(self, i: int) -> np.ndarray:
        """``f_i = chi_{i,i}`` as a scalar field."""
        return self.wells[:, i, i][self.labels]

    def tensor(self) -> TensorField:
        return TensorField(self.grid, self.chi)


def field_values(field) -> tuple[Grid, np.ndarray]:
    if isinstance(field, PhaseField):
        return field.grid, field.chi
    if isinstance(field, TensorField):
        return field.grid, field.values
    raise InvalidInputError("expected a PhaseField or TensorField")


def mean(field) -> np.ndarray:
    grid, v = field_values(field)
    return v.mean(axis=_spatial_axes(grid.d))


def l2_norm_sq(field) -> float:
    grid, v = field_values(field)
    return float(np.sum(v**2) * grid.cell_volume)


@dataclass(frozen=True)
class ConeSpec:
    """Frequency cone ``{k : |k_axis| <= mu |k|, |k| <= radius}`` (``axis`` 0-based)."""

    axis: int
    mu: float
    radius: float

    def __post_init__(self) -> None:
        if not 0 < self.mu <= 1:
            raise InvalidInputError("cone aperture mu must lie in (0, 1]")
        if self.radius <= 0:
            raise InvalidInputError("cone radius must be positive")
        if self.axis < 0:
            raise InvalidInputError("cone axis must be non-negative")


def smoothstep(t: np.ndarray) -> np.ndarray:
    """Quintic step: 1 for ``t <= 1``, 0 for ``t >= 2``, C^2 in between."""
    s = np.clip(2.0 - t, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s * s)


def cone_symbol(grid: Grid, cone: ConeSpec, smooth: bool = False) -> np.ndarray:
    if cone.axis >= grid.d:
        raise InvalidInputError(f"cone axis {cone.axis} out of range for d = {grid.d}")
    k = grid.wavevectors()
    norm = np.linalg.norm(k, axis=-1)
    ratio = np.divide(np.abs(k[..., cone.axis]), norm, out=np.zeros_like(norm), where=norm > 0)
    if not smooth:
        # tiny slack so that exact lattice ties (|k_j| = mu |k|) count as inside
        return ((ratio <= cone.mu * (1 + 1e-12)) & (norm <= cone.radius * (1 + 1e-12))).astype(float)
    return smoothstep(norm / cone.radius) * smoothstep(ratio / cone.mu)


def cone_multiplier(values: np.ndarray, grid: Grid, cone: ConeSpec, smooth: bool = False) -> np.ndarray:
    """Apply the cone Fourier multiplier to a field sampled on ``grid``."""
    v = np.asarray(values, dtype=float)
    sym = cone_symbol(grid, cone, smooth)
    sym = sym.reshape(sym.shape + (1,) * (v.ndim - grid.d))
    return idft(dft(v, grid.d) * sym, grid.d)


# ------------------------------------------------------------ rasterization


class Raster:
    """Cell-centre sampling of a region complex.

    ``region_index[c]`` is the smallest index of a region containing the centre
    of cell ``c``. Values are evaluated lazily and in slabs so that large 3-d
    grids do not need a full tensor array.
    """

    def __init__(self, rc, grid: Grid, region_index: np.ndarray):
        self.rc = rc
        self.grid = grid
        self.region_index = region_index
        self._labels = np.array([r.label for r in rc.regions], dtype=np.int64)
        self._const = np.stack([r.value.reshape(-1) for r in rc.regions])
        d = grid.d
        self._slope = np.stack([
            np.zeros((d, r.value.size)) if r.slope is None else r.slope.reshape(d, -1)
            for r in rc.regions
        ])
        self._affine = np.array([r.slope is not None for r in rc.regions])

    @property
    def labels(self) -> np.ndarray:
        return self._labels[self.region_index]

    def phase_field(self) -> PhaseField:
        return PhaseField(self.grid, self.labels, self.rc.wells)

    def _slab_values(self, start: int, stop: int) -> np.ndarray:
        idx = self.region_index[start:stop]
        out = self._const[idx]
        if np.any(self._affine):
            c = self.grid.centers_1d()
            coords = np.meshgrid(c[start:stop], *([c] * (self.grid.d - 1)), indexing="ij")
            for i, x in enumerate(coords):
                out += x[..., None] * self._slope[idx, i]
        return out

    def values(self) -> np.ndarray:
        vals = self._slab_values(0, self.grid.n)
        return vals.reshape(self.grid.shape + self.rc.value_shape)

    def tensor_field(self) -> TensorField:
        return TensorField(self.grid, self.values())

    def pair_energy(self, slab: int = 16) -> float:
        """Midpoint rule for ``int |u - chi|^2`` without storing the full field."""
        wells = self.rc.wells.reshape(len(self.rc.wells), -1)
        total = 0.0
        for s in range(0, self.grid.n, slab):
            e = min(s + slab, self.grid.n)
            diff = self._slab_values(s, e) - wells[self._labels[self.region_index[s:e]]]
            total += float(np.sum(diff * diff))
        return total * self.grid.cell_volume


def rasterize(rc, grid: Grid, tol: float = 1e-12) -> Raster:
    """Assign each cell centre to the first region (in index order) containing it."""
    if grid.d != rc.d:
        raise DimensionError(f"grid dimension {grid.d} differs from complex dimension {rc.d}")
    n = grid.n
    c = grid.centers_1d()
    idx = np.full(grid.shape, -1, dtype=np.int32)
    for ri, reg in enumerate(rc.regions):
        v = reg.geometry.vertices
        lo = np.clip(np.ceil(v.min(axis=0) * n - 0.5 - 1e-9).astype(int), 0, n - 1)
        hi = np.clip(np.floor(v.max(axis=0) * n - 0.5 + 1e-9).astype(int), 0, n - 1)
        if np.any(hi < lo):
            continue
        sl = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
        pts = np.stack(np.meshgrid(*[c[s] for s in sl], indexing="ij"), axis=-1)
        inside = reg.contains(pts, tol)
        block = idx[sl]
        block[inside & (block < 0)] = ri
    if np.any(idx < 0):
        raise TilingError(f"{int(np.sum(idx < 0))} cell centres are not covered by any region")
    return Raster(rc, grid, idx)


# ------------------------------------------------------------------- file IO


def save_field(path: str, field, meta: dict | None = None) -> None:
    """Write ``path`` (little-endian float64 payload) and ``path + '.json'``."""
    if isinstance(field, PhaseField):
        payload = field.labels.astype("<f8")
        side = {"kind": "phase", "wells": field.wells.tolist(), "value_shape": []}
    elif isinstance(field, TensorField):
        payload = field.values.astype("<f8")
        side = {"kind": "tensor", "value_shape": list(field.value_shape)}
    else:
        raise InvalidInputError("expected a PhaseField or TensorField")
    side.update({"d": field.grid.d, "N_g": field.grid.n})
    if meta:
        side["meta"] = meta
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(payload).tobytes(order="C"))
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(side, fh, indent=1, sort_keys=True)


def load_field(path: str):
    side_path = path + ".json"
    if not os.path.exists(side_path):
        raise InvalidInputError(f"missing sidecar {side_path}")
    with open(side_path, encoding="utf-8") as fh:
        side = json.load(fh)
    grid = Grid(int(side["d"]), int(side["N_g"]))
    vshape = tuple(side.get("value_shape", []))
    raw = np.fromfile(path, dtype="<f8")
    expected = grid.size * int(np.prod(vshape, dtype=int))
    if raw.size != expected:
        raise InvalidInputError(f"payload holds {raw.size} numbers, sidecar implies {expected}")
    data = raw.reshape(grid.shape + vshape)
    if side.get("kind") == "phase":
        return PhaseField(grid, data.astype(np.int64), np.array(side["wells"])), side
    return TensorField(grid, data), side


def block_phase_field(grid: Grid, wells: np.ndarray, rng: np.random.Generator,
                      block: int | None = None, probs: Sequence[float] | None = None) -> PhaseField:
    """Random piecewise-constant labels on blocks of ``block`` cells per axis."""
    if block is None:
        choices = [b for b in (1, 2, 4, 8) if grid.n % b == 0]
        block = int(rng.choice(choices))
    coarse = (grid.n // block,) * grid.d
    lab = rng.choice(len(wells), size=coarse, p=probs)
    for ax in range(grid.d):
        lab = np.repeat(lab, block, axis=ax)
    return PhaseField(grid, lab, wells)
