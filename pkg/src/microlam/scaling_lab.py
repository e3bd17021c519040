"""Sweeps over constructions, scaling-law fits and calibrated diagnostics."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .constructions import (
    BranchingParams,
    branching_complex,
    branching_labels,
    build_two_well_branching,
    interface_check,
)
from .energy import (
    AuxConstants,
    EnergyReport,
    diagonal_relaxed_energy,
    elastic_multiplier_energy,
    padded_spectrum,
    perimeter_unit_cube,
    surface_energy,
    two_well_relaxed_energy,
)
from .errors import CalibrationError, FitError, InvalidInputError, MicrolamError
from .field_grid import ConeSpec, Grid, PhaseField, cone_symbol, dft, field_values
from .symbol_core import divergence
from .t3_construction import (
    WELLS as T3_WELLS,
    build_t3_laminate,
    paper_schedule,
    rasterize_t3,
)

__all__ = [
    "SweepConfig",
    "SweepRow",
    "SweepTable",
    "run_sweep",
    "ScalingFitResult",
    "fit_scaling",
    "exponent_balance",
    "LowerBoundCertificate",
    "lower_bound_certificate",
    "RigidityCheck",
    "rigidity_estimate_check",
    "calibrate_rigidity_constant",
    "rigidity_energy",
    "t3_block_field",
    "t3_construction_field",
    "rigidity_reference_set",
    "cone_radii",
    "worker_count",
    "ConeProfile",
    "cone_truncation_profile",
]

CONSTRUCTIONS = ("branching", "t3")


# ------------------------------------------------------------------ sweeps


@dataclass(frozen=True)
class SweepConfig:
    """One sweep: a construction, its parameter policy and a strictly decreasing eps list.

    ``params`` for ``branching``: ``theta``, ``lam``, ``d``, ``variant`` and
    ``N`` (an integer, or omitted for ``round(eps^{-1/3})``). For ``t3``: ``F``
    (name of the datum, default ``S3``); the schedule is the paper policy.
    ``verify`` rasterises the ``verify`` largest eps (all resolvable rows when
    ``None``); ``min_cells`` is the smallest admissible number of grid cells
    across the finest laminate.
    """

    construction: str
    eps: tuple = ()
    params: dict = field(default_factory=dict)
    grid_max: int = 2048
    grid_max_3d: int = 128
    min_cells: int = 4
    verify: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.construction not in CONSTRUCTIONS:
            raise InvalidInputError(f"unknown construction {self.construction!r}")
        eps = tuple(float(e) for e in self.eps)
        object.__setattr__(self, "eps", eps)
        if any(not 0 < e < 1 for e in eps):
            raise InvalidInputError("every eps must lie in (0, 1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise InvalidInputError("eps must be strictly decreasing (no duplicates)")
        if self.min_cells < 1:
            raise InvalidInputError("min_cells must be positive")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["eps"] = list(self.eps)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        data = dict(data)
        if "eps_range" in data:
            lo, hi, num = data.pop("eps_range")
            data["eps"] = tuple(np.logspace(math.log10(hi), math.log10(lo), int(num)))
        data["eps"] = tuple(data.get("eps", ()))
        return cls(**data)


@dataclass
class SweepRow:
    eps: float
    params: dict
    report: EnergyReport | None
    checks: dict
    status: str = "ok"
    reason: str = ""

    def csv_cells(self) -> list:
        r = self.report
        vals = [None] * 4 if r is None else [r.E_el_pair, r.E_el_relaxed, r.E_surf, r.E_total]
        return [self.eps, json.dumps(self.params, sort_keys=True), *vals,
                json.dumps(self.checks, sort_keys=True), self.status, self.reason]


@dataclass
class SweepTable:
    config: SweepConfig
    rows: list[SweepRow]

    COLUMNS = ("eps", "params", "E_el_pair", "E_el_relaxed", "E_surf", "E_total", "checks", "status",
               "reason")

    def __len__(self) -> int:
        return len(self.rows)

    def ok_rows(self) -> list[SweepRow]:
        return [r for r in self.rows if r.status == "ok"]

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        rows = self.ok_rows()
        return (np.array([r.eps for r in rows]), np.array([r.report.E_total for r in rows]))


def _finest_width_branching(p: BranchingParams) -> float:
    return min(p.lam, 1 - p.lam) * p.l(p.j0 + 1)


def _grid_for(width: float, min_cells: int, cap: int) -> int | None:
    n = 4
    while n * width < min_cells:
        n *= 2
        if n > cap:
            return None
    return n


def _branching_row(cfg: SweepConfig, eps: float, verify: bool) -> SweepRow:
    prm = dict(cfg.params)
    N = prm.pop("N", None)
    N = max(1, round(eps ** (-1.0 / 3))) if N is None else int(N)
    p = BranchingParams(N=N, theta=prm.get("theta", 0.3), lam=prm.get("lam", 0.5),
                        d=prm.get("d", 3), variant=prm.get("variant", "upper"))
    res = build_two_well_branching(p, eps)
    window = branching_complex(p, periods=min(2, p.N))
    rep = interface_check(window, divergence(p.d, p.d))
    checks = {"interface": bool(rep.passed), "interface_residual": rep.max_residual / rep.scale}
    used = {"N": p.N, "theta": p.theta, "lam": p.lam, "d": p.d, "variant": p.variant, "j0": p.j0}
    relaxed = None
    extruded = p.variant == "upper" or p.d == 2
    cap = cfg.grid_max if extruded else cfg.grid_max_3d
    n = _grid_for(_finest_width_branching(p), cfg.min_cells, cap)
    if verify and n is not None:
        c = (np.arange(n) + 0.5) / n
        if extruded:
            pts = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1).reshape(-1, 2)
            full = np.zeros((len(pts), p.d))
            full[:, :2] = pts
            full[:, 2:] = 0.5
            labels = branching_labels(p, full).reshape(n, n)
        else:
            pts = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)
            labels = branching_labels(p, pts).reshape(n, n, n)
        relaxed = two_well_relaxed_energy(labels, p.A, p.B, p.F)
        # ordering against the exact construction: u is periodic and divergence-free
        # with mean <u>, so relaxed(chi, F) <= pair + |F - <chi>|^2 - |<u> - <chi>|^2
        mean_chi = p.A + (p.B - p.A) * labels.mean()
        mean_u = window.mean_value()
        corr = float(np.sum((p.F - mean_chi) ** 2) - np.sum((mean_u - mean_chi) ** 2))
        slack = 5 * p.d / n * res.energy.E_el_pair
        checks["ordering"] = bool(relaxed <= res.energy.E_el_pair + corr + slack)
        checks["grid"] = n
    else:
        checks["ordering"] = None
        checks["grid"] = "unresolved" if n is None else None
    report = EnergyReport(eps, res.energy.E_el_pair, relaxed, res.energy.E_surf)
    return SweepRow(eps, used, report, checks)


def _t3_row(cfg: SweepConfig, eps: float, verify: bool) -> SweepRow:
    from .hulls_and_wells import named_matrix

    F = named_matrix(cfg.params.get("F", "S3"))
    from .t3_construction import t3_rules

    _, _, extra = t3_rules(F)
    p = paper_schedule(eps, extra)
    res = build_t3_laminate(p, F, eps, increments=False, check=True)
    checks = {"interface": bool(res.interface_passed), "interface_residual": res.interface_residual}
    used = {"m": p.m, "r": [str(x) for x in p.r], "F": cfg.params.get("F", "S3")}
    relaxed = None
    if verify:
        n = cfg.grid_max_3d
        ras = rasterize_t3(p, n, F)
        relaxed = diagonal_relaxed_energy(ras.phase_field(), F)
        pair_raster = ras.pair_energy()
        tol = 5 * 3 / n
        checks["grid"] = n
        checks["raster_elastic"] = pair_raster
        checks["raster_elastic_ok"] = bool(abs(pair_raster - res.energy.E_el) <= tol * res.energy.E_el)
        width = float(p.r[-1]) / 2
        if width * n >= cfg.min_cells:
            s = surface_energy(ras.phase_field(), periodic=False)
            checks["raster_surface"] = s
            checks["raster_surface_ok"] = bool(abs(s - res.E_surf_anisotropic) <= tol * res.E_surf_anisotropic)
        else:
            checks["raster_surface"] = "unresolved"
        # u = F on every face, so <u> = F and no mean correction is needed
        checks["ordering"] = bool(relaxed <= res.energy.E_el_pair * (1 + tol))
    else:
        checks["ordering"] = None
    report = EnergyReport(eps, res.energy.E_el_pair, relaxed, res.energy.E_surf)
    return SweepRow(eps, used, report, checks)


def _run_row(args) -> SweepRow:
    cfg, eps, verify = args
    try:
        if cfg.construction == "branching":
            return _branching_row(cfg, eps, verify)
        return _t3_row(cfg, eps, verify)
    except MicrolamError as exc:
        return SweepRow(eps, dict(cfg.params), None, {}, "failed", f"{type(exc).__name__}: {exc}")


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("MICROLAM_THREADS", "1")))
    except ValueError:
        return 1


def run_sweep(cfg: SweepConfig, workers: int | None = None) -> SweepTable:
    """Evaluate every eps of the sweep; failed rows carry their reason and do not abort."""
    workers = worker_count() if workers is None else workers
    if cfg.verify is None:
        verify = [True] * len(cfg.eps)
    else:
        verify = [i < cfg.verify for i in range(len(cfg.eps))]
    jobs = [(cfg, e, v) for e, v in zip(cfg.eps, verify)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_row, jobs))
    else:
        rows = [_run_row(j) for j in jobs]
    return SweepTable(cfg, rows)


# ------------------------------------------------------------------ fits


@dataclass
class ScalingFitResult:
    """``algebraic``: ``E = a eps^alpha``; ``stretched``: ``E = a exp(-c |log eps|^{1/2})``."""

    model: str
    a: float
    exponent: float
    r2: float
    residuals: np.ndarray
    n_points: int
    window: tuple[float, float]

    @property
    def alpha(self) -> float:
        if self.model != "algebraic":
            raise AttributeError("alpha is defined for the algebraic model")
        return self.exponent

    @property
    def c(self) -> float:
        if self.model != "stretched":
            raise AttributeError("c is defined for the stretched model")
        return self.exponent

    def to_dict(self) -> dict:
        return {"model": self.model, "a": self.a, "exponent": self.exponent, "r2": self.r2,
                "residuals": self.residuals.tolist(), "n_points": self.n_points,
                "window": list(self.window)}


def fit_scaling(data, model: str = "algebraic") -> ScalingFitResult:
    """Least squares in linearised coordinates.

    ``data`` is a :class:`SweepTable` or a pair ``(eps, E)``.
    """
    if isinstance(data, SweepTable):
        eps, E = data.arrays()
    else:
        eps, E = (np.asarray(x, dtype=float) for x in data)
    if eps.shape != E.shape or eps.ndim != 1:
        raise FitError("eps and E must be 1-d arrays of equal length")
    if len(eps) < 4:
        raise FitError(f"need at least 4 points, got {len(eps)}")
    if np.any(~np.isfinite(E)) or np.any(E <= 0):
        raise FitError("energies must be finite and positive")
    if np.any(eps <= 0) or np.any(eps >= 1):
        raise FitError("eps must lie in (0, 1)")
    y = np.log(E)
    if model == "algebraic":
        x = np.log(eps)
    elif model == "stretched":
        x = np.sqrt(np.abs(np.log(eps)))
    else:
        raise FitError(f"unknown model {model!r}")
    X = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    slope = float(coef[0])
    exponent = slope if model == "algebraic" else -slope
    return ScalingFitResult(model, float(np.exp(coef[1])), exponent, r2, resid, len(eps),
                            (float(eps.min()), float(eps.max())))


def exponent_balance(p: int) -> Fraction:
    """Optimal exponent for a symbol vanishing to order ``p``.

    Balancing ``mu^{2p} E`` against ``mu^{-1} eps^{-1} (eps E)`` gives
    ``mu = eps^{-1/(2p+1)}`` and ``E ~ eps^{2p/(2p+1)}``.
    """
    if isinstance(p, bool) or not isinstance(p, (int, np.integer)) or p < 1:
        raise InvalidInputError("degeneracy degree must be an integer >= 1")
    return Fraction(2 * int(p), 2 * int(p) + 1)


# ------------------------------------------------------------------ lower bound


@dataclass
class LowerBoundCertificate:
    """Outcome of the frequency-splitting chain with ``mu = eps^{-1/3}``.

    ``certified`` is the implied lower bound on ``E_tilde = E_el + eps Per``
    (padded whole-space quantities); ``vacuous`` flags a non-positive bound.
    """

    eps: float
    mu: float
    norm_sq: float
    zero_mass: float
    elastic: float
    perimeter: float
    energy: float
    certified: float
    vacuous: bool
    respected: bool
    constants: dict

    def to_dict(self) -> dict:
        return asdict(self)


def lower_bound_certificate(f_or_chi, eps: float, m, constants: AuxConstants | None,
                            lam: float | None = None, a_label: int = 0) -> LowerBoundCertificate:
    """Evaluate ``||f||^2 <= |f_hat(0)|^2 + C_low mu^2 E_el + C_high mu^-1 (Per + 2d)``.

    ``f_or_chi`` is the scalar ``f = (1 - lam) chi_A - lam chi_B`` or a two-phase
    :class:`PhaseField` (then ``lam`` is required). ``m`` is the multiplier
    matrix, ``B - A`` for the divergence.
    """
    if constants is None:
        raise CalibrationError("lower-bound constants must be calibrated first "
                               "(see energy.calibrate_aux_constants)")
    if not 0 < eps < 1:
        raise InvalidInputError("eps must lie in (0, 1)")
    if isinstance(f_or_chi, PhaseField):
        if lam is None:
            raise InvalidInputError("lam is required for a phase field")
        if len(f_or_chi.wells) != 2:
            raise InvalidInputError("the certificate is for two-well fields")
        f = np.where(f_or_chi.labels == a_label, 1.0 - lam, -lam)
    else:
        f = np.asarray(f_or_chi, dtype=float)
    mu = eps ** (-1.0 / 3)
    spec = padded_spectrum(f, constants.pad)
    norm_sq = float(np.sum(spec.mass))
    zero = float(np.sum(spec.mass[np.linalg.norm(spec.xi, axis=1) == 0]))
    el = elastic_multiplier_energy(spec, m)
    per = surface_energy(f, periodic=False)
    energy = el + eps * per
    cmax = max(constants.C_low, constants.C_high)
    num = norm_sq - zero - constants.C_high * eps ** (1.0 / 3) * perimeter_unit_cube(f.ndim)
    certified = eps ** (2.0 / 3) * num / cmax
    vacuous = certified <= 0
    return LowerBoundCertificate(eps, mu, norm_sq, zero, el, per, energy, certified, vacuous,
                                 bool(energy >= certified), constants.to_dict())


# ------------------------------------------------------------------ rigidity estimate


@dataclass
class RigidityCheck:
    lhs: float
    rhs: float
    passed: bool
    elastic: float
    surface: float
    c_nu: float
    nu: float
    smallest_c: float


def _diag_variances(chi: PhaseField) -> float:
    return float(sum(np.var(chi.diagonal(i)) for i in range(3)))


def rigidity_energy(chi: PhaseField, F, eps: float) -> tuple[float, float]:
    """Periodic relaxed elastic energy and periodic surface energy of a T3 phase field."""
    el = diagonal_relaxed_energy(chi, F)
    surf = surface_energy(chi, periodic=True)
    return el, surf


def rigidity_estimate_check(chi: PhaseField, F, eps: float, c_nu: float, nu: float = 0.25) -> RigidityCheck:
    """``sum_j ||chi_jj - <chi_jj>||^2 <= exp(c_nu |log eps|^{1/2 + nu}) E_per^{1/2}``."""
    if not 0 < eps < 1:
        raise InvalidInputError("eps must lie in (0, 1)")
    if not 0 < nu < 1:
        raise InvalidInputError("nu must lie in (0, 1)")
    if chi.grid.d != 3 or chi.value_shape != (3, 3):
        raise InvalidInputError("the rigidity estimate is stated for 3 x 3 fields in 3-d")
    lhs = _diag_variances(chi)
    el, surf = rigidity_energy(chi, F, eps)
    E = el + eps * surf
    L = abs(math.log(eps)) ** (0.5 + nu)
    rhs = math.exp(c_nu * L) * math.sqrt(E)
    smallest = 0.0 if lhs == 0 else max(0.0, math.log(lhs / math.sqrt(E)) / L) if E > 0 else math.inf
    return RigidityCheck(lhs, rhs, bool(lhs <= rhs), el, surf, c_nu, nu, smallest)


def calibrate_rigidity_constant(fields: Sequence[tuple[PhaseField, float]], F, nu: float = 0.25,
                                safety: float = 2.0) -> float:
    """Smallest ``c_nu`` passing every ``(chi, eps)`` of a reference set, times ``safety``."""
    worst = 0.0
    for chi, eps in fields:
        res = rigidity_estimate_check(chi, F, eps, 0.0, nu)
        if not math.isfinite(res.smallest_c):
            raise CalibrationError("reference field has zero energy but non-zero variance")
        worst = max(worst, res.smallest_c)
    return safety * worst


def t3_block_field(n: int, block: int, rng: np.random.Generator) -> PhaseField:
    """Random T3 phase field made of ``block^3`` cubes."""
    if n % block:
        raise InvalidInputError("block must divide n")
    coarse = rng.integers(0, 3, (n // block,) * 3)
    fine = coarse
    for ax in range(3):
        fine = np.repeat(fine, block, axis=ax)
    return PhaseField(Grid(3, n), fine, T3_WELLS)


def t3_construction_field(p, n: int, F=None) -> PhaseField:
    return rasterize_t3(p, n, F).phase_field()


def rigidity_reference_set(n: int = 32, seed: int = 0) -> list[tuple[PhaseField, float]]:
    """Declared calibration set: T3 laminates of depth 1 and 2 plus random block fields."""
    from .t3_construction import T3Params

    rng = np.random.default_rng(seed)
    out = []
    for r in ((Fraction(1, 4),), (Fraction(1, 4), Fraction(1, 16))):
        for eps in (1e-2, 1e-3):
            out.append((t3_construction_field(T3Params(len(r), r, eps), n), eps))
    for block in (2, 4, 8):
        if n % block == 0:
            out.append((t3_block_field(n, block, rng), 1e-2))
    return out


# ------------------------------------------------------------------ cone truncation


@dataclass
class ConeProfile:
    k: np.ndarray
    radii: np.ndarray
    errors: np.ndarray
    envelope: np.ndarray
    alpha: float
    mu: float
    X: float

    def to_dict(self) -> dict:
        return {"k": self.k.tolist(), "radii": self.radii.tolist(), "errors": self.errors.tolist(),
                "envelope": self.envelope.tolist(), "alpha": self.alpha, "mu": self.mu, "X": self.X}


def cone_radii(eps: float, kmax: int, nu: float = 0.25, M: float = 6.0) -> tuple[float, float, np.ndarray]:
    """``alpha = |log eps|^{-1/(2+nu)}``, ``mu = eps^alpha`` and ``lambda_k = M^k eps^{(2+k) alpha - 1}``."""
    alpha = abs(math.log(eps)) ** (-1.0 / (2 + nu))
    mu = eps**alpha
    ks = np.arange(kmax + 1)
    return alpha, mu, M**ks * eps ** ((2 + ks) * alpha - 1)


def cone_truncation_profile(chi, eps: float, kmax: int = 5, nu: float = 0.25, M: float = 6.0,
                            mu: float | None = None, C0: float = 1.0, gamma: float | None = None,
                            F=None, degree: int = 2) -> ConeProfile:
    """Mass of ``f_j = chi_jj`` outside the cones ``C_{j, mu, lambda_k}`` for ``k = 0..kmax``.

    The envelope ``(30 C0 / gamma^{24 degree})^k max{X^{(1-gamma)^k}, X}`` with
    ``X = mu^-2 delta + lambda^-1 beta`` uses the periodic elastic and surface
    energies for ``delta`` and ``beta``; ``C0`` is a free constant and the
    comparison is diagnostic only.
    """
    grid, vals = field_values(chi)
    if grid.d != 3 or vals.shape[3:] != (3, 3):
        raise InvalidInputError("cone truncation is defined for 3 x 3 fields in 3-d")
    alpha, mu_default, radii = cone_radii(eps, kmax, nu, M)
    mu = mu_default if mu is None else mu
    lam0 = eps ** (2 * alpha - 1)
    gamma = alpha / 8 if gamma is None else gamma
    coeffs = [dft(vals[..., j, j], 3) for j in range(3)]
    errors = np.zeros(kmax + 1)
    for ki, rad in enumerate(radii):
        for j in range(3):
            m = cone_symbol(grid, ConeSpec(j, mu, rad))
            errors[ki] += float(np.sum(np.abs((1 - m) * coeffs[j]) ** 2))
    if F is None:
        F = np.mean(vals, axis=(0, 1, 2))
    delta = diagonal_relaxed_energy(chi, F)
    beta = surface_energy(chi, periodic=True)
    X = mu**-2 * delta + beta / lam0
    ks = np.arange(kmax + 1)
    base = 30 * C0 / gamma ** (24 * degree)
    with np.errstate(over="ignore"):
        env = base**ks * np.maximum(X ** ((1 - gamma) ** ks), X)
    return ConeProfile(ks, radii, errors, env, alpha, mu, X)
