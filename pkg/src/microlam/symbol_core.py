"""Constant-coefficient operators, their symbols and wave cones.

An operator of order ``k`` acting on ``u: R^d -> R^n`` is stored through its
coefficient matrices ``A_alpha`` (shape ``m x n``), indexed by exponent vectors
``alpha`` in ``N^d`` with ``|alpha| = k``. Matrix-valued states (``m x d`` for the
divergence) are flattened in row-major order, so entry ``M[i, j]`` is state
component ``i * d + j``.

Symbols are evaluated as real matrices ``sum_alpha A_alpha xi^alpha``; the global
factor ``i^k`` is dropped because only norms and kernels are ever used.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, InvalidInputError, UnsupportedOrderError

RANK_TOL = 1e-10
WAVE_CONE_TOL = 1e-8

Multi = tuple[int, ...]


@dataclass(frozen=True)
class OperatorSpec:
    """Homogeneous operator ``sum_alpha A_alpha d^alpha``.

    Attributes:
        order: Differential order ``k``.
        d: Space dimension.
        n: State dimension.
        m: Number of equations.
        coeffs: Mapping from exponent vectors to ``m x n`` arrays.
        name: Optional label used by the built-in constructors.
    """

    order: int
    d: int
    n: int
    m: int
    coeffs: Mapping[Multi, np.ndarray]
    name: str = ""
    _alphas: tuple[Multi, ...] = field(init=False, repr=False, compare=False)
    _stack: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.order < 1:
            raise InvalidInputError(f"order must be positive, got {self.order}")
        if min(self.d, self.n, self.m) < 1:
            raise InvalidInputError("dimensions d, n, m must be positive")
        clean: dict[Multi, np.ndarray] = {}
        for alpha, mat in self.coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.d or any(a < 0 for a in alpha):
                raise DimensionError(
                    f"multi-index {alpha} is not an exponent vector in N^{self.d}", alpha
                )
            if sum(alpha) != self.order:
                raise DimensionError(
                    f"multi-index {alpha} has |alpha| = {sum(alpha)}, expected {self.order}",
                    alpha,
                )
            mat = np.array(mat, dtype=float)
            if mat.shape != (self.m, self.n):
                raise DimensionError(
                    f"coefficient for {alpha} has shape {mat.shape}, expected {(self.m, self.n)}",
                    alpha,
                )
            if not np.all(np.isfinite(mat)):
                raise InvalidInputError(f"coefficient for {alpha} is not finite")
            mat.setflags(write=False)
            clean[alpha] = clean[alpha] + mat if alpha in clean else mat
        if not clean or all(not np.any(a) for a in clean.values()):
            raise InvalidInputError("operator has no nonzero coefficient")
        object.__setattr__(self, "coeffs", clean)
        alphas = tuple(sorted(clean))
        object.__setattr__(self, "_alphas", alphas)
        object.__setattr__(self, "_stack", np.stack([clean[a] for a in alphas]))

    @property
    def alphas(self) -> tuple[Multi, ...]:
        return self._alphas

    def first_order_matrices(self) -> list[np.ndarray]:
        """Return ``[A^1, ..., A^d]`` for a first-order operator."""
        if self.order != 1:
            raise UnsupportedOrderError(f"expected a first-order operator, got order {self.order}")
        out = []
        for j in range(self.d):
            alpha = tuple(1 if i == j else 0 for i in range(self.d))
            out.append(np.array(self.coeffs.get(alpha, np.zeros((self.m, self.n)))))
        return out

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "d": self.d,
            "n": self.n,
            "m": self.m,
            "coeffs": [
                {"alpha": list(a), "matrix": self.coeffs[a].tolist()} for a in self.alphas
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping) -> "OperatorSpec":
        try:
            coeffs = {tuple(c["alpha"]): np.asarray(c["matrix"], dtype=float) for c in data["coeffs"]}
            return cls(int(data["order"]), int(data["d"]), int(data["n"]), int(data["m"]), coeffs,
                       name=str(data.get("name", "")))
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed operator description: {exc}") from exc


def _unit(d: int, j: int) -> Multi:
    return tuple(1 if i == j else 0 for i in range(d))


def divergence(m: int = 3, d: int = 3) -> OperatorSpec:
    """Row-wise divergence of ``m x d`` matrix fields: symbol ``M -> M xi``."""
    coeffs = {}
    for j in range(d):
        a = np.zeros((m, m * d))
        for i in range(m):
            a[i, i * d + j] = 1.0
        coeffs[_unit(d, j)] = a
    return OperatorSpec(1, d, m * d, m, coeffs, name="div")


def curl3() -> OperatorSpec:
    """Row-wise curl of ``3 x 3`` matrix fields in three dimensions."""
    eps = np.zeros((3, 3, 3))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[a, b, c] = 1.0
        eps[a, c, b] = -1.0
    coeffs = {}
    for b in range(3):
        mat = np.zeros((9, 9))
        for i in range(3):
            for a in range(3):
                for c in range(3):
                    mat[i * 3 + a, i * 3 + c] = eps[a, b, c]
        coeffs[_unit(3, b)] = mat
    return OperatorSpec(1, 3, 9, 9, coeffs, name="curl3")


def curlcurl2() -> OperatorSpec:
    """Saint-Venant compatibility operator on ``2 x 2`` matrices in the plane.

    Symbol: ``M -> xi_2^2 M_11 - xi_1 xi_2 (M_12 + M_21) + xi_1^2 M_22``.
    """
    coeffs = {
        (0, 2): np.array([[1.0, 0.0, 0.0, 0.0]]),
        (1, 1): np.array([[0.0, -1.0, -1.0, 0.0]]),
        (2, 0): np.array([[0.0, 0.0, 0.0, 1.0]]),
    }
    return OperatorSpec(2, 2, 4, 1, coeffs, name="curlcurl2")


BUILTINS = {"div": divergence, "curl3": curl3, "curlcurl2": curlcurl2}


def builtin_operator(name: str) -> OperatorSpec:
    """Look up a built-in operator; ``div2`` is the planar divergence on ``2 x 2``."""
    if name == "div2":
        return divergence(2, 2)
    try:
        return BUILTINS[name]()
    except KeyError:
        raise InvalidInputError(
            f"unknown operator {name!r}; built-ins are {sorted(BUILTINS) + ['div2']}"
        ) from None


def load_operator(spec: str) -> OperatorSpec:
    """Resolve a built-in name, a JSON file path or an inline JSON string."""
    if spec in BUILTINS or spec == "div2":
        return builtin_operator(spec)
    text = spec
    if not spec.lstrip().startswith("{"):
        try:
            with open(spec, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InvalidInputError(f"cannot read operator {spec!r}: {exc}") from exc
    try:
        return OperatorSpec.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"operator JSON is malformed: {exc}") from exc


def _as_state(op: OperatorSpec, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).reshape(-1)
    if mu.size != op.n:
        raise DimensionError(f"state has {mu.size} entries, operator expects n = {op.n}", "n")
    return mu


def _as_xi(op: OperatorSpec, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != op.d:
        raise DimensionError(f"frequency has {xi.shape[-1]} entries, operator expects d = {op.d}", "d")
    if not np.all(np.isfinite(xi)):
        raise InvalidInputError("frequency must be finite")
    return xi


def _monomials(alphas: Sequence[Multi], xi: np.ndarray) -> np.ndarray:
    """Evaluate ``xi^alpha`` for every alpha; result shape ``xi.shape[:-1] + (len(alphas),)``."""
    expo = np.asarray(alphas, dtype=int)
    return np.prod(xi[..., None, :] ** expo, axis=-1)


def symbol_eval(op: OperatorSpec, xi) -> np.ndarray:
    """Symbol matrix ``sum_alpha A_alpha xi^alpha``.

    ``xi`` may carry leading batch axes; the result then has shape
    ``batch + (m, n)``.
    """
    xi = _as_xi(op, xi)
    mono = _monomials(op.alphas, xi)
    return np.tensordot(mono, op._stack, axes=([-1], [0]))


def _symbol_times(op: OperatorSpec, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectors ``c_alpha = A_alpha mu`` and the exponent array."""
    c = op._stack @ mu
    return c, np.asarray(op.alphas, dtype=int)


def sphere_points(d: int, count: int, seed: int = 0) -> np.ndarray:
    """Quasi-uniform unit vectors in ``R^d`` including the coordinate axes.

    Circle points for ``d = 2``, a Fibonacci lattice for ``d = 3`` and seeded
    Gaussian directions otherwise. The ``2d`` signed axes are appended because
    degenerate directions of structured operators often sit on them.
    """
    if d == 1:
        pts = np.array([[1.0], [-1.0]])
    elif d == 2:
        t = 2 * np.pi * (np.arange(count) + 0.5) / count
        pts = np.stack([np.cos(t), np.sin(t)], axis=1)
    elif d == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        rho = np.sqrt(1 - z * z)
        phi = np.pi * (1 + 5**0.5) * i
        pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    else:
        g = np.random.default_rng(seed).standard_normal((count, d))
        pts = g / np.linalg.norm(g, axis=1, keepdims=True)
    axes = np.concatenate([np.eye(d), -np.eye(d)])
    return np.concatenate([pts, axes])


def _numerical_rank(s: np.ndarray, scale: float, tol: float = RANK_TOL) -> int:
    if scale <= 0:
        return 0
    return int(np.sum(s > tol * scale))


def symbol_norm_bound(op: OperatorSpec, samples: int = 2000) -> float:
    """Largest singular value of the symbol over sampled unit directions."""
    mats = symbol_eval(op, sphere_points(op.d, samples))
    return float(np.linalg.svd(mats, compute_uv=False).max())


@dataclass(frozen=True)
class WaveConeCertificate:
    member: bool
    direction: np.ndarray | None
    residual: float


def _lmu(op: OperatorSpec, mu: np.ndarray) -> np.ndarray:
    return np.stack([a @ mu for a in op.first_order_matrices()], axis=1)


def wave_cone_contains(op: OperatorSpec, mu, tol: float = WAVE_CONE_TOL,
                       samples: int = 10_000) -> WaveConeCertificate:
    """Decide whether ``mu`` lies in the wave cone of ``op``.

    First-order operators are decided exactly through the rank of
    ``L_mu = [A^1 mu | ... | A^d mu]``. Higher orders minimise
    ``|symbol(xi) mu|`` over a sphere lattice followed by Riemannian Newton
    refinement; the reported residual is relative to ``|mu|`` times the largest
    singular value of the symbol on the sphere.
    """
    mu = _as_state(op, mu)
    if not np.any(mu):
        raise InvalidInputError("mu = 0 is excluded from the wave cone")
    if op.order == 1:
        lmu = _lmu(op, mu)
        u, s, vt = np.linalg.svd(lmu, full_matrices=True)
        s_full = np.zeros(op.d)
        s_full[: s.size] = s[: op.d]
        rank = _numerical_rank(s_full, s_full.max())
        member = rank < op.d
        direction = vt[-1] if member else None
        if direction is not None:
            direction = _canonical_sign(direction)
        return WaveConeCertificate(member, direction, float(s_full.min()))
    return _wave_cone_sampled(op, mu, tol, samples)


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    v = np.where(np.abs(v) < 1e-15, 0.0, v)
    idx = np.flatnonzero(np.abs(v) > 1e-12)
    if idx.size and v[idx[0]] < 0:
        v = -v
    return v + 0.0


def _poly_derivatives(c: np.ndarray, expo: np.ndarray, xi: np.ndarray):
    """Value, gradient and Hessian of ``g(xi) = |sum_alpha c_alpha xi^alpha|^2``."""
    d = xi.size
    nal = expo.shape[0]

    def mono(e):
        with np.errstate(invalid="ignore"):
            return np.prod(np.where(e >= 0, xi ** np.maximum(e, 0), 0.0), axis=-1) * np.all(e >= 0, axis=-1)

    p0 = mono(expo)
    dp = np.zeros((d, nal))
    hp = np.zeros((d, d, nal))
    for i in range(d):
        ei = np.eye(d, dtype=int)[i]
        dp[i] = expo[:, i] * mono(expo - ei)
        for j in range(d):
            ej = np.eye(d, dtype=int)[j]
            coef = expo[:, i] * (expo[:, j] - (1 if i == j else 0))
            hp[i, j] = coef * mono(expo - ei - ej)
    v = c.T @ p0
    jac = c.T @ dp.T
    hv = np.einsum("am,ija->mij", c, hp)
    g = float(v @ v)
    grad = 2 * jac.T @ v
    hess = 2 * (jac.T @ jac + np.einsum("m,mij->ij", v, hv))
    return g, grad, hess


def _newton_sphere(c, expo, xi, iters: int = 50):
    for _ in range(iters):
        g, grad, hess = _poly_derivatives(c, expo, xi)
        proj = np.eye(xi.size) - np.outer(xi, xi)
        rgrad = proj @ grad
        if np.linalg.norm(rgrad) < 1e-300:
            break
        rhess = proj @ hess @ proj - float(xi @ grad) * proj
        step = -np.linalg.lstsq(rhess + np.outer(xi, xi), rgrad, rcond=None)[0]
        step = proj @ step
        cand = xi + step
        cand /= np.linalg.norm(cand)
        if _poly_derivatives(c, expo, cand)[0] > g:
            cand = xi - 0.1 * rgrad / max(np.linalg.norm(rgrad), 1e-300)
            cand /= np.linalg.norm(cand)
            if _poly_derivatives(c, expo, cand)[0] > g:
                break
        if np.linalg.norm(cand - xi) < 1e-15:
            xi = cand
            break
        xi = cand
    return xi


def _wave_cone_sampled(op, mu, tol, samples) -> WaveConeCertificate:
    pts = sphere_points(op.d, max(samples, 10_000))
    mats = symbol_eval(op, pts)
    smax = float(np.linalg.svd(mats, compute_uv=False).max())
    scale = smax * float(np.linalg.norm(mu))
    vals = np.linalg.norm(mats @ mu, axis=-1)
    c, expo = _symbol_times(op, mu)
    best_xi, best = None, math.inf
    for idx in np.argsort(vals)[:8]:
        xi = _newton_sphere(c, expo, pts[idx].copy())
        res = float(np.linalg.norm(symbol_eval(op, xi) @ mu))
        if res < best:
            best, best_xi = res, xi
    rel = best / scale if scale > 0 else 0.0
    member = rel <= tol
    return WaveConeCertificate(member, _canonical_sign(best_xi) if member else None, rel)


def lamination_space(op: OperatorSpec, mu) -> np.ndarray:
    """Orthonormal basis (rows) of ``{xi : symbol(xi) mu = 0}`` for first-order ``op``."""
    if op.order != 1:
        raise UnsupportedOrderError("lamination spaces are only computed for first-order operators")
    mu = _as_state(op, mu)
    if not np.any(mu):
        raise InvalidInputError("mu = 0 is excluded from the wave cone")
    lmu = _lmu(op, mu)
    _, s, vt = np.linalg.svd(lmu, full_matrices=True)
    rank = _numerical_rank(s, s.max() if s.size else 0.0)
    basis = vt[rank:]
    if basis.shape[0] == 1:
        basis = _canonical_sign(basis[0])[None, :]
    return basis


@dataclass(frozen=True)
class ConstantRankReport:
    constant: bool
    min_rank: int
    max_rank: int


def constant_rank_check(op: OperatorSpec, samples: int = 2000,
                        tol: float = RANK_TOL) -> ConstantRankReport:
    """Numerical rank of the symbol over a sphere lattice.

    Singular values are compared with the largest singular value observed over
    the whole lattice, so a symbol that vanishes in some direction is seen as a
    rank drop.
    """
    if samples < 100:
        raise InvalidInputError("constant_rank_check needs at least 100 samples")
    mats = symbol_eval(op, sphere_points(op.d, samples))
    s = np.linalg.svd(mats, compute_uv=False)
    scale = float(s.max())
    ranks = np.sum(s > tol * scale, axis=-1) if scale > 0 else np.zeros(len(s), dtype=int)
    lo, hi = int(ranks.min()), int(ranks.max())
    return ConstantRankReport(lo == hi, lo, hi)


@dataclass(frozen=True)
class OmegaMap:
    """Linear map ``omega: R^n -> R^{m x d}`` with ``A(D)u = div omega(u)``.

    Attributes:
        matrix: ``(m*d) x n`` array; row ``i*d + j`` gives ``omega(x)[i, j]``.
        kernel: Orthonormal basis of ``ker omega`` stored as rows.
        shape: ``(m, d)``.
    """

    matrix: np.ndarray
    kernel: np.ndarray
    shape: tuple[int, int]

    def __call__(self, x) -> np.ndarray:
        return (self.matrix @ np.asarray(x, dtype=float).reshape(-1)).reshape(self.shape)


def omega_reduction(op: OperatorSpec, probes: int = 32, seed: int = 0) -> OmegaMap:
    """Build ``omega(x)_{ij} = sum_k A^j_{ik} x_k`` and verify it on random probes."""
    if op.order != 1:
        raise UnsupportedOrderError("omega reduction requires a first-order operator")
    mats = op.first_order_matrices()
    omega = np.zeros((op.m * op.d, op.n))
    for j, a in enumerate(mats):
        for i in range(op.m):
            omega[i * op.d + j] = a[i]
    _, s, vt = np.linalg.svd(omega, full_matrices=True)
    rank = _numerical_rank(s, s.max() if s.size else 0.0)
    result = OmegaMap(omega, vt[rank:], (op.m, op.d))
    rng = np.random.default_rng(seed)
    for _ in range(probes):
        mu = rng.standard_normal(op.n)
        xi = rng.standard_normal(op.d)
        err = np.linalg.norm(result(mu) @ xi - symbol_eval(op, xi) @ mu)
        if err > 1e-13 * (1 + np.linalg.norm(mu) * np.linalg.norm(xi)):
            raise AssertionError(f"omega identity violated by {err}")
    return result


def rotate_frame(u_value, R) -> np.ndarray:
    """Return ``u R``; ``x -> u(Rx) R`` is divergence free iff ``u`` is."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise InvalidInputError("R must be a square matrix")
    if np.max(np.abs(R.T @ R - np.eye(R.shape[0]))) > 1e-12:
        raise InvalidInputError("R is not orthogonal")
    u = np.asarray(u_value, dtype=float)
    if u.shape[-1] != R.shape[0]:
        raise DimensionError("u and R have incompatible shapes", "d")
    return u @ R


def incompatibility_constant(op: OperatorSpec, mu, samples: int = 20_000) -> float:
    """``min_{|xi|=1} |symbol(xi) mu|^2`` over a sphere lattice."""
    mu = _as_state(op, mu)
    vals = np.linalg.norm(symbol_eval(op, sphere_points(op.d, samples)) @ mu, axis=-1)
    return float(vals.min() ** 2)


def first_order_multiplier(op: OperatorSpec, mu) -> np.ndarray:
    """Matrix of the linear map ``xi -> symbol(xi) mu`` (``m x d``)."""
    return _lmu(op, _as_state(op, mu))


def iter_alphas(d: int, k: int) -> Iterable[Multi]:
    """All exponent vectors in ``N^d`` with ``|alpha| = k``."""
    if d == 1:
        yield (k,)
        return
    for a in range(k, -1, -1):
        for rest in iter_alphas(d - 1, k - a):
            yield (a,) + rest
