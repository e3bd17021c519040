"""Elastic and surface energies of phase fields on periodic grids.

Two elastic energies are kept apart:

* the *pair* energy ``sum_cells |u - chi|^2`` of an explicit field ``u``;
* the *relaxed* energy, the per-mode projection of ``chi_hat(k)`` onto the
  range of the adjoint symbol plus the mean mismatch ``|chi_hat(0) - F|^2``.
  It ignores boundary data and is therefore a lower bound for the pair energy
  of any periodic ``u`` with mean ``F``.

Surface energy is the anisotropic discrete total variation: the Frobenius
norm of each face jump times the face area.

The low/high frequency controls compare Fourier masses of a scalar field
``f`` supported in the unit cube with its elastic and surface energies. They
are evaluated on a zero-padded torus so that ``f`` really vanishes outside the
cube; the constants are calibrated once and then frozen.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CalibrationError, DimensionError, InvalidInputError
from .field_grid import Grid, PhaseField, TensorField, dft, field_values
from .symbol_core import RANK_TOL, OperatorSpec, constant_rank_check, divergence, symbol_eval

CHUNK = 4096


# ---------------------------------------------------------------- reports


@dataclass
class EnergyReport:
    eps: float
    E_el_pair: float | None
    E_el_relaxed: float | None
    E_surf: float
    skipped_modes: int = 0
    spectrum: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.eps < 0:
            raise InvalidInputError("eps must be non-negative")
        for name in ("E_el_pair", "E_el_relaxed", "E_surf"):
            v = getattr(self, name)
            if v is not None and not v >= 0:
                raise InvalidInputError(f"{name} must be non-negative, got {v}")

    @property
    def E_el(self) -> float:
        """Pair energy when an explicit ``u`` exists, otherwise the relaxed one."""
        if self.E_el_pair is not None:
            return self.E_el_pair
        if self.E_el_relaxed is None:
            raise InvalidInputError("report carries no elastic energy")
        return self.E_el_relaxed

    @property
    def E_total(self) -> float:
        return self.E_el + self.eps * self.E_surf

    COLUMNS = ("eps", "E_el_pair", "E_el_relaxed", "E_surf", "E_total")

    def row(self) -> tuple:
        return (self.eps, self.E_el_pair, self.E_el_relaxed, self.E_surf, self.E_total)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "spectrum"}
        out["E_total"] = self.E_total
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "EnergyReport":
        keys = ("eps", "E_el_pair", "E_el_relaxed", "E_surf", "skipped_modes")
        return cls(**{k: data[k] for k in keys if k in data})


@dataclass(frozen=True)
class RelaxedEnergy:
    value: float
    mean_term: float
    skipped_modes: int
    spectrum: np.ndarray | None = field(default=None, repr=False, compare=False)


# ---------------------------------------------------------------- helpers


def _flat_values(chi) -> tuple[Grid, np.ndarray]:
    grid, v = field_values(chi)
    return grid, v.reshape(grid.shape + (-1,))


def _nonzero_unit_modes(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    k = grid.wavevectors().reshape(-1, grid.d)
    norm = np.linalg.norm(k, axis=1)
    return k, norm


def _is_divergence(op: OperatorSpec, n: int) -> bool:
    if op.order != 1 or op.n != op.m * op.d or op.n != n:
        return False
    ref = divergence(op.m, op.d)
    return set(op.coeffs) == set(ref.coeffs) and all(
        np.array_equal(np.asarray(op.coeffs[a], float), np.asarray(ref.coeffs[a], float))
        for a in ref.coeffs)


_RANK_CACHE: dict[str, int] = {}


def _generic_rank(op: OperatorSpec) -> int:
    key = op.to_json()
    if key not in _RANK_CACHE:
        _RANK_CACHE[key] = constant_rank_check(op).max_rank
    return _RANK_CACHE[key]


def _mean_term(mean: np.ndarray, F) -> float:
    F = np.asarray(F, dtype=float).reshape(-1)
    if F.shape != mean.shape:
        raise DimensionError(f"datum with {F.size} entries does not match field with {mean.size}")
    return float(np.sum((mean - F) ** 2))


# ---------------------------------------------------------------- elastic


def elastic_energy_relaxed(chi, F, op: OperatorSpec | None = None,
                           keep_spectrum: bool = False) -> RelaxedEnergy:
    """Fourier-projection lower bound for the elastic energy of ``chi``.

    ``op`` defaults to the row-wise divergence of matrix fields; it must act on
    the flattened (row-major) values of ``chi``.
    """
    grid, v = _flat_values(chi)
    n = v.shape[-1]
    if op is None:
        m = int(round(n / grid.d))
        if m * grid.d != n:
            raise DimensionError("default divergence needs matrix-valued fields with d columns")
        op = divergence(m, grid.d)
    if op.d != grid.d or op.n != n:
        raise DimensionError(f"operator acts on R^{op.n} over R^{op.d}, field is R^{n} over R^{grid.d}")
    mean = v.reshape(-1, n).mean(axis=0)
    mean_term = _mean_term(mean, F)
    k, norm = _nonzero_unit_modes(grid)
    nz = norm > 0
    if _is_divergence(op, n):
        spec, skipped = _relaxed_divergence(grid, v, op.m, k, norm, nz), 0
    else:
        spec, skipped = _relaxed_generic(grid, v, op, k, norm, nz)
    value = float(spec.sum()) + mean_term
    return RelaxedEnergy(value, mean_term, skipped, spec.reshape(grid.shape) if keep_spectrum else None)


def _relaxed_divergence(grid, v, m, k, norm, nz) -> np.ndarray:
    d = grid.d
    unit = np.zeros_like(k, dtype=float)
    unit[nz] = k[nz] / norm[nz, None]
    spec = np.zeros(k.shape[0])
    for i in range(m):
        acc = np.zeros(k.shape[0], dtype=complex)
        for j in range(d):
            acc += dft(v[..., i * d + j], d).reshape(-1) * unit[:, j]
        spec += np.abs(acc) ** 2
    return spec


def _relaxed_generic(grid, v, op, k, norm, nz) -> tuple[np.ndarray, int]:
    n = v.shape[-1]
    coeffs = np.stack([dft(v[..., c], grid.d).reshape(-1) for c in range(n)], axis=-1)
    rank = _generic_rank(op)
    spec = np.zeros(k.shape[0])
    skipped = 0
    idx = np.flatnonzero(nz)
    for start in range(0, idx.size, CHUNK):
        sel = idx[start:start + CHUNK]
        sym = symbol_eval(op, k[sel] / norm[sel, None])
        _, s, vh = np.linalg.svd(sym, full_matrices=True)
        scale = s[:, :1]
        r = np.sum(s > RANK_TOL * np.maximum(scale, 1e-300), axis=1)
        ok = r == rank
        skipped += int(np.sum(~ok))
        rows = vh[:, :rank, :]
        proj = np.einsum("brn,bn->br", rows, coeffs[sel])
        e = np.sum(np.abs(proj) ** 2, axis=1)
        spec[sel] = np.where(ok, e, 0.0)
    return spec, skipped


def diagonal_relaxed_energy(chi: PhaseField | TensorField, F) -> float:
    """Divergence energy for diagonal matrix fields, ``sum_k sum_i k_i^2/|k|^2 |chi_ii_hat|^2``."""
    grid, v = field_values(chi)
    d = grid.d
    if v.shape[d:] != (d, d):
        raise DimensionError("diagonal formula needs d x d matrix fields")
    mean = v.reshape((-1, d * d)).mean(axis=0)
    k = grid.wavevectors()
    k2 = np.sum(k**2, axis=-1)
    safe = np.where(k2 > 0, k2, 1.0)
    total = 0.0
    for i in range(d):
        c = dft(v[..., i, i], d)
        total += float(np.sum(np.where(k2 > 0, k[..., i] ** 2 / safe, 0.0) * np.abs(c) ** 2))
    return total + _mean_term(mean, F)


def two_well_relaxed_energy(indicator: np.ndarray, A, B, F) -> float:
    """Divergence energy of ``chi = A + (B - A) f`` for a 0/1 indicator ``f``.

    ``sum_{k != 0} |(B - A) k|^2 / |k|^2 |f_hat(k)|^2 + |<chi> - F|^2``. The
    matrices may have more columns than the grid has axes; missing wavevector
    components are zero, which is exact for fields constant along those axes.
    """
    f = np.asarray(indicator, dtype=float)
    dg = f.ndim
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2 or A.shape[1] < dg:
        raise DimensionError("wells must be matrices with at least one column per grid axis")
    D = (B - A)[:, :dg]
    n = f.shape[0]
    c = np.fft.rfftn(f) / f.size
    half = np.fft.rfftfreq(n, 1.0 / n)
    half[-1] = -n // 2  # Nyquist as -n/2, the convention of Grid.wavevectors
    freqs = [np.fft.fftfreq(n, 1.0 / n)] * (dg - 1) + [half]
    k = np.stack(np.meshgrid(*freqs, indexing="ij"), axis=-1)

    def weight(kk):
        k2 = np.sum(kk**2, axis=-1)
        Dk = np.einsum("ij,...j->...i", D, kk)
        return np.where(k2 > 0, np.sum(Dk**2, axis=-1) / np.where(k2 > 0, k2, 1.0), 0.0)

    # columns 1 .. n/2 - 1 also stand for the conjugate modes -k, whose
    # Nyquist components stay at -n/2
    mirror = np.where(k == -(n // 2), k, -k)
    w = weight(k)
    inner = slice(1, n // 2)
    w[..., inner] += weight(mirror[..., inner, :])
    total = float(np.sum(w * np.abs(c) ** 2))
    mean = A + (B - A) * f.mean()
    return total + _mean_term(mean.reshape(-1), F)


def spectral_partial(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Fourier coefficients of ``d/dx_axis`` of a periodic scalar field."""
    k = grid.wavevectors()[..., axis]
    return 2j * np.pi * k * dft(values, grid.d)


def hminus1_norm_sq(coeffs: np.ndarray, grid: Grid) -> float:
    """``sum_{k != 0} |g_hat(k)|^2 / |2 pi k|^2`` for Fourier coefficients ``g_hat``."""
    k = grid.wavevectors()
    w = (2 * np.pi) ** 2 * np.sum(k**2, axis=-1)
    safe = np.where(w > 0, w, 1.0)
    return float(np.sum(np.where(w > 0, np.abs(coeffs) ** 2 / safe, 0.0)))


def delta_quantity(chi: PhaseField | TensorField) -> float:
    """``sum_i ||d_i chi_ii||^2`` in the homogeneous ``H^-1`` norm."""
    grid, v = field_values(chi)
    return sum(hminus1_norm_sq(spectral_partial(v[..., i, i], grid, i), grid) for i in range(grid.d))


def elastic_energy_pair(u: TensorField, chi) -> float:
    """Midpoint quadrature of ``|u - chi|^2`` over the unit cell."""
    grid_c, vc = field_values(chi)
    if not isinstance(u, TensorField):
        raise InvalidInputError("u must be a TensorField")
    if u.grid != grid_c:
        raise DimensionError(f"grid mismatch: {u.grid} vs {grid_c}")
    if u.values.shape != vc.shape:
        raise DimensionError(f"value shapes differ: {u.values.shape} vs {vc.shape}")
    return float(np.sum((u.values - vc) ** 2) * grid_c.cell_volume)


# ---------------------------------------------------------------- surface


def _jump_norms(values: np.ndarray, d: int, axis: int, periodic: bool) -> np.ndarray:
    if periodic:
        diff = np.roll(values, -1, axis=axis) - values
    else:
        diff = np.diff(values, axis=axis)
    extra = tuple(range(d, values.ndim))
    return np.sqrt(np.sum(diff**2, axis=extra)) if extra else np.abs(diff)


def surface_energy(chi, periodic: bool = True) -> float:
    """Anisotropic discrete total variation of a phase, tensor or scalar field.

    With ``periodic=False`` only faces interior to the unit cube count.
    """
    if isinstance(chi, PhaseField):
        return _phase_surface(chi, periodic)
    if isinstance(chi, TensorField):
        grid, v = chi.grid, chi.values
    else:
        v = np.asarray(chi, dtype=float)
        d = v.ndim
        grid = Grid(d, v.shape[0])
        if v.shape != grid.shape:
            raise DimensionError("scalar fields must be cubic arrays")
    area = float(grid.n) ** -(grid.d - 1)
    return float(sum(_jump_norms(v, grid.d, a, periodic).sum() for a in range(grid.d)) * area)


def _phase_surface(chi: PhaseField, periodic: bool) -> float:
    w = chi.wells.reshape(len(chi.wells), -1)
    dist = np.linalg.norm(w[:, None, :] - w[None, :, :], axis=-1)
    lab = chi.labels
    area = float(chi.grid.n) ** -(chi.grid.d - 1)
    total = 0.0
    for a in range(chi.grid.d):
        if periodic:
            other = np.roll(lab, -1, axis=a)
            total += dist[lab, other].sum()
        else:
            sl_lo = [slice(None)] * lab.ndim
            sl_hi = [slice(None)] * lab.ndim
            sl_lo[a] = slice(0, -1)
            sl_hi[a] = slice(1, None)
            total += dist[lab[tuple(sl_lo)], lab[tuple(sl_hi)]].sum()
    return float(total * area)


def energy_report(chi, eps: float, F=None, op: OperatorSpec | None = None,
                  u: TensorField | None = None, periodic: bool = True,
                  keep_spectrum: bool = False) -> EnergyReport:
    """Evaluate every available energy of ``chi`` (and ``u`` when given)."""
    pair = elastic_energy_pair(u, chi) if u is not None else None
    relaxed, skipped, spec = None, 0, None
    if F is not None:
        r = elastic_energy_relaxed(chi, F, op, keep_spectrum)
        relaxed, skipped, spec = r.value, r.skipped_modes, r.spectrum
    return EnergyReport(eps, pair, relaxed, surface_energy(chi, periodic), skipped, spec)


# ------------------------------------------------- low / high frequency controls


@dataclass(frozen=True)
class ControlResult:
    lhs: float
    rhs: float
    passed: bool


@dataclass(frozen=True)
class PaddedSpectrum:
    """Fourier data of a field on the unit cube, extended by zero to ``[0, pad)^d``.

    ``xi`` are physical frequencies ``k / pad`` and ``mass`` the weights
    ``|f_hat(xi)|^2 dxi`` whose sum equals ``||f||^2``.
    """

    xi: np.ndarray
    mass: np.ndarray
    pad: int


def padded_spectrum(f: np.ndarray, pad: int = 2) -> PaddedSpectrum:
    f = np.asarray(f, dtype=float)
    d, n = f.ndim, f.shape[0]
    if f.shape != (n,) * d:
        raise DimensionError("expected a cubic scalar array")
    if pad < 1:
        raise InvalidInputError("pad factor must be >= 1")
    big = np.zeros((pad * n,) * d)
    big[(slice(0, n),) * d] = f
    c = dft(big, d)
    k = np.fft.fftfreq(pad * n, 1.0 / (pad * n))
    xi = np.stack(np.meshgrid(*([k / pad] * d), indexing="ij"), axis=-1).reshape(-1, d)
    mass = (pad**d) * np.abs(c.reshape(-1)) ** 2
    return PaddedSpectrum(xi, mass, pad)


def _kernel_basis(m: np.ndarray) -> np.ndarray:
    _, s, vh = np.linalg.svd(m)
    r = int(np.sum(s > RANK_TOL * max(s[0], 1e-300))) if s.size else 0
    return vh[r:]


def _check_subspace(m: np.ndarray, V) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if V is None:
        return _kernel_basis(m)
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.size == 0:
        return V.reshape(0, m.shape[1])
    q, _ = np.linalg.qr(V.T)
    if np.linalg.norm(m @ q) > 1e-9 * max(1.0, np.linalg.norm(m)):
        raise InvalidInputError("V is not contained in the kernel of m")
    return q.T


def elastic_multiplier_energy(spec: PaddedSpectrum, m: np.ndarray) -> float:
    """``int |m(xi/|xi|) f_hat(xi)|^2 dxi`` on the padded lattice (``xi = 0`` omitted)."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    norm = np.linalg.norm(spec.xi, axis=1)
    nz = norm > 0
    unit = spec.xi[nz] / norm[nz, None]
    w = np.sum((unit @ m.T) ** 2, axis=1)
    return float(np.sum(w * spec.mass[nz]))


def low_freq_mass(spec: PaddedSpectrum, V: np.ndarray, mu: float) -> float:
    """Mass in the slab ``|Pi_V xi| <= mu``, excluding ``xi = 0``."""
    proj = spec.xi @ V.T if V.size else np.zeros((spec.xi.shape[0], 0))
    pv = np.linalg.norm(proj, axis=1)
    nz = np.linalg.norm(spec.xi, axis=1) > 0
    return float(np.sum(spec.mass[nz & (pv <= mu)]))


def high_freq_mass(spec: PaddedSpectrum, mu: float) -> float:
    return float(np.sum(spec.mass[np.linalg.norm(spec.xi, axis=1) >= mu]))


def low_freq_control_check(f: np.ndarray, V, mu: float, m, C: float, pad: int = 2) -> ControlResult:
    """Compare slab mass ``||f_hat||^2_{|Pi_V xi| <= mu}`` with ``C mu^2 E_el(f)``."""
    if not mu > 1:
        raise InvalidInputError("mu must exceed 1")
    m = np.atleast_2d(np.asarray(m, dtype=float))
    Vb = _check_subspace(m, V)
    spec = padded_spectrum(f, pad)
    lhs = low_freq_mass(spec, Vb, mu)
    rhs = C * mu**2 * elastic_multiplier_energy(spec, m)
    return ControlResult(lhs, rhs, bool(lhs <= rhs))


def perimeter_unit_cube(d: int) -> float:
    return 2.0 * d


def high_freq_control_check(f: np.ndarray, mu: float, C: float, pad: int = 2) -> ControlResult:
    """Compare ``||f_hat||^2_{|xi| >= mu}`` with ``C mu^-1 (TV(f) + Per)``."""
    if not mu > 0:
        raise InvalidInputError("mu must be positive")
    f = np.asarray(f, dtype=float)
    spec = padded_spectrum(f, pad)
    lhs = high_freq_mass(spec, mu)
    rhs = C / mu * (surface_energy(f, periodic=False) + perimeter_unit_cube(f.ndim))
    return ControlResult(lhs, rhs, bool(lhs <= rhs))


@dataclass(frozen=True)
class AuxConstants:
    """Frozen constants for the frequency controls (``safety`` x worst reference ratio)."""

    C_low: float
    C_high: float
    safety: float
    pad: int
    reference: str

    def to_dict(self) -> dict:
        return asdict(self)


def calibrate_low_freq(fields: Iterable[np.ndarray], m, mus: Sequence[float], V=None,
                       safety: float = 2.0, pad: int = 2) -> float:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    Vb = _check_subspace(m, V)
    worst = 0.0
    for f in fields:
        spec = padded_spectrum(f, pad)
        el = elastic_multiplier_energy(spec, m)
        for mu in mus:
            lhs = low_freq_mass(spec, Vb, mu)
            if lhs == 0:
                continue
            if el <= 0:
                raise CalibrationError("reference field has slab mass but no elastic energy")
            worst = max(worst, lhs / (mu**2 * el))
    if worst == 0:
        raise CalibrationError("reference set carries no low-frequency mass")
    return safety * worst


def calibrate_high_freq(fields: Iterable[np.ndarray], mus: Sequence[float],
                        safety: float = 2.0, pad: int = 2) -> float:
    worst = 0.0
    for f in fields:
        f = np.asarray(f, dtype=float)
        spec = padded_spectrum(f, pad)
        s = surface_energy(f, periodic=False) + perimeter_unit_cube(f.ndim)
        for mu in mus:
            worst = max(worst, high_freq_mass(spec, mu) * mu / s)
    if worst == 0:
        raise CalibrationError("reference set carries no high-frequency mass")
    return safety * worst


def two_well_scalar(labels: np.ndarray, lam: float, a_label: int = 0) -> np.ndarray:
    """``f = (1 - lam) chi_A - lam chi_B`` from a two-phase label array."""
    if not 0 < lam < 1:
        raise InvalidInputError("lam must lie in (0, 1)")
    return np.where(np.asarray(labels) == a_label, 1.0 - lam, -lam)


def random_block_scalar(d: int, n: int, block: int, lam: float, rng: np.random.Generator) -> np.ndarray:
    """Two-valued ``f`` built from random blocks of ``block`` cells per side."""
    if n % block:
        raise InvalidInputError("block must divide n")
    coarse = rng.random((n // block,) * d) < 1 - lam
    fine = coarse
    for ax in range(d):
        fine = np.repeat(fine, block, axis=ax)
    return np.where(fine, 1.0 - lam, -lam)


def laminate_scalar(d: int, n: int, axis: int, periods: int, lam: float) -> np.ndarray:
    x = (np.arange(n) + 0.5) / n
    phase = (x * periods) % 1.0 < 1 - lam
    shape = [1] * d
    shape[axis] = n
    return np.broadcast_to(np.where(phase, 1.0 - lam, -lam).reshape(shape), (n,) * d).copy()


def reference_scalar_fields(d: int, n: int, lam: float, seed: int = 0, count: int = 6) -> list[np.ndarray]:
    """Declared calibration set: laminates along each axis plus random block fields."""
    rng = np.random.default_rng(seed)
    out = [laminate_scalar(d, n, a, p, lam) for a in range(d) for p in (1, 4)]
    for i in range(count):
        block = [1, 2, 4, 8][i % 4]
        out.append(random_block_scalar(d, n, block, lam, rng))
    return out


def calibrate_aux_constants(m, d: int = 2, n: int = 32, lam: float = 0.5, seed: int = 0,
                            mus_low: Sequence[float] = (1.5, 2.0, 4.0, 8.0, 16.0),
                            mus_high: Sequence[float] = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0),
                            safety: float = 2.0, pad: int = 2) -> AuxConstants:
    fields = reference_scalar_fields(d, n, lam, seed)
    c_low = calibrate_low_freq(fields, m, mus_low, safety=safety, pad=pad)
    c_high = calibrate_high_freq(fields, mus_high, safety=safety, pad=pad)
    ref = f"laminates+random blocks d={d} n={n} lam={lam} seed={seed}"
    return AuxConstants(c_low, c_high, safety, pad, ref)

