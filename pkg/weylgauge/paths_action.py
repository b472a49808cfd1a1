"""Discrete paths, action evaluation and the extremal solver."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy import integrate, optimize

from . import constants
from .errors import ConvergenceError, InvalidPathError
from .geometry import ChartMetric, christoffel_second

log = logging.getLogger(__name__)

LagrangianKind = Literal["inhomogeneous-massive", "charged"]


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Path:
    """Polyline x_0..x_M with parameter values tau_0..tau_M.

    Paths built from scratch have increasing parameters. Inversion negates the
    increments, so the only rejected parameter sequence is one with a zero
    increment.
    """

    nodes: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        params = np.array(self.params, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        if nodes.ndim != 2 or nodes.shape[0] < 2:
            raise InvalidPathError(f"path needs at least 2 nodes, got shape {nodes.shape}")
        if params.shape != (nodes.shape[0],):
            raise InvalidPathError(
                f"path has {nodes.shape[0]} nodes but {params.size} parameter values"
            )
        if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(params))):
            raise InvalidPathError("path nodes and parameters must be finite")
        zero = np.flatnonzero(np.diff(params) == 0.0)
        if zero.size:
            raise InvalidPathError(f"path parameter increment {zero[0]} is zero")
        nodes.setflags(write=False)
        params.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "params", params)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_segments(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def start(self) -> np.ndarray:
        return self.nodes[0]

    @property
    def end(self) -> np.ndarray:
        return self.nodes[-1]

    @property
    def displacements(self) -> np.ndarray:
        return np.diff(self.nodes, axis=0)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.params)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def duration(self) -> float:
        return float(np.sum(np.abs(self.increments)))

    def is_closed(self, tol: float | None = None) -> bool:
        tol = constants.ENDPOINT_TOLERANCE if tol is None else tol
        return bool(np.max(np.abs(self.end - self.start)) <= tol)

    def inverted(self) -> Path:
        """Group inverse: same nodes backwards, parameter increments negated."""
        return Path(self.nodes[::-1], self.params[::-1])

    def retraced(self) -> Path:
        """Same nodes backwards, traversed with increasing parameter."""
        return Path(self.nodes[::-1], self.params[0] + (self.params[-1] - self.params[::-1]))

    def shifted(self, offset: float) -> Path:
        return Path(self.nodes, self.params + offset)

    def with_nodes(self, nodes: np.ndarray) -> Path:
        return Path(nodes, self.params)


def straight_path(x, y, tau_span: float, segments: int, tau0: float = 0.0) -> Path:
    """Uniformly parameterised straight segment from x to y."""
    if segments < 1:
        raise InvalidPathError(f"straight path needs at least one segment, got {segments}")
    if tau_span <= 0.0:
        raise InvalidPathError(f"tau_span must be > 0, got {tau_span}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    s = np.linspace(0.0, 1.0, segments + 1)
    return Path(x + np.outer(s, y - x), tau0 + tau_span * s)


def polygon_path(vertices, per_edge: int = 1, tau_span: float = 1.0) -> Path:
    """Closed polygon through ``vertices`` with ``per_edge`` segments on each edge."""
    v = np.asarray(vertices, dtype=float)
    closed = np.vstack([v, v[:1]])
    pieces = [
        closed[i] + np.outer(np.arange(per_edge) / per_edge, closed[i + 1] - closed[i])
        for i in range(len(v))
    ]
    nodes = np.vstack(pieces + [closed[-1:]])
    return Path(nodes, np.linspace(0.0, tau_span, nodes.shape[0]))


# ---------------------------------------------------------------------------
# Potentials and Lagrangians
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaugePotential:
    """Covector field phi_mu on the chart.

    ``segment_integral(a, b)`` is an optional exact primitive over straight
    segments (arrays of segment starts and ends); ``puncture`` marks a point
    the potential is undefined at.
    """

    components: Callable[[np.ndarray], np.ndarray]
    dim: int
    name: str = "custom"
    segment_integral: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(
        default=None, compare=False
    )
    puncture: tuple[float, ...] | None = None

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.components(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        """[..., l, mu] = d_l phi_mu by central differences."""
        pts = np.asarray(x, dtype=float)
        h = constants.GRADIENT_STEP
        cols = []
        for lam in range(self.dim):
            e = np.zeros(self.dim)
            e[lam] = h
            cols.append((self(pts + e) - self(pts - e)) / (2.0 * h))
        return np.stack(cols, axis=-2)

    def check_path(self, path: Path) -> None:
        if path.dim != self.dim:
            raise InvalidPathError(
                f"path dimension {path.dim} does not match potential '{self.name}' ({self.dim})"
            )
        if self.puncture is None:
            return
        c = np.asarray(self.puncture, dtype=float)
        a = path.nodes[:-1] - c
        d = path.displacements
        length2 = np.einsum("ij,ij->i", d, d)
        t = np.clip(-np.einsum("ij,ij->i", a, d) / np.where(length2 > 0.0, length2, 1.0), 0.0, 1.0)
        closest = np.linalg.norm(a + t[:, None] * d, axis=1)
        hit = np.flatnonzero(closest <= constants.ENDPOINT_TOLERANCE)
        if hit.size:
            raise InvalidPathError(
                f"segment {hit[0]} of the path touches the puncture of '{self.name}' at {tuple(c)}"
            )


def solenoid(flux: float, center=(0.0, 0.0)) -> GaugePotential:
    """phi = (f / 2 pi) d(theta) around ``center`` in the punctured plane."""
    c = np.asarray(center, dtype=float)
    k = flux / (2.0 * math.pi)

    def components(x):
        r = x - c
        r2 = np.einsum("...i,...i->...", r, r)
        return k * np.stack([-r[..., 1], r[..., 0]], axis=-1) / r2[..., None]

    def segment_integral(a, b):
        ra, rb = a - c, b - c
        cross = ra[..., 0] * rb[..., 1] - ra[..., 1] * rb[..., 0]
        dot = np.einsum("...i,...i->...", ra, rb)
        return k * np.arctan2(cross, dot)

    return GaugePotential(
        components=components,
        dim=2,
        name=f"solenoid:{flux:g}",
        segment_integral=segment_integral,
        puncture=(float(c[0]), float(c[1])),
    )


def gradient_potential(
    scalar: Callable[[np.ndarray], np.ndarray],
    dim: int,
    gradient: Callable[[np.ndarray], np.ndarray] | None = None,
    name: str = "gradient",
) -> GaugePotential:
    """phi_mu = d_mu Lambda; exact segment integrals Lambda(b) - Lambda(a)."""

    def numeric_gradient(x):
        h = constants.GRADIENT_STEP
        cols = []
        for lam in range(dim):
            e = np.zeros(dim)
            e[lam] = h
            cols.append((scalar(x + e) - scalar(x - e)) / (2.0 * h))
        return np.stack(cols, axis=-1)

    return GaugePotential(
        components=gradient if gradient is not None else numeric_gradient,
        dim=dim,
        name=name,
        segment_integral=lambda a, b: scalar(b) - scalar(a),
    )


def uniform_potential(values) -> GaugePotential:
    c = np.asarray(values, dtype=float)
    return GaugePotential(
        components=lambda x: np.broadcast_to(c, np.shape(x)).copy(),
        dim=c.size,
        name="uniform:" + ",".join(f"{v:g}" for v in c),
        segment_integral=lambda a, b: np.einsum("...i,i->...", b - a, c),
    )


def resolve_potential(potential_id: str) -> GaugePotential:
    kind, _, arg = potential_id.partition(":")
    try:
        if kind == "solenoid":
            return solenoid(float(arg))
        if kind == "uniform":
            return uniform_potential([float(v) for v in arg.split(",")])
    except ValueError as e:
        raise InvalidPathError(f"potential id '{potential_id}': {e}") from e
    raise InvalidPathError(f"unknown potential id '{potential_id}'")


def line_integral(path: Path, potential: GaugePotential, exact: bool = False) -> float:
    """Sum of phi_mu dx^mu over the segments: exact primitive or midpoint rule."""
    potential.check_path(path)
    if exact and potential.segment_integral is not None:
        return float(np.sum(potential.segment_integral(path.nodes[:-1], path.nodes[1:])))
    return float(np.einsum("ij,ij->", potential(path.midpoints), path.displacements))


@dataclass(frozen=True)
class LagrangianSpec:
    """m/2 (g(v, v) + 1), optionally plus e phi_mu v^mu."""

    metric: ChartMetric
    m: float
    kind: LagrangianKind = "inhomogeneous-massive"
    e: float = 0.0
    potential: GaugePotential | None = None

    def __post_init__(self):
        if not self.m > 0.0:
            raise InvalidPathError(f"Lagrangian mass m must be > 0, got {self.m}")
        if self.kind == "charged" and self.potential is None:
            raise InvalidPathError("charged Lagrangian needs a potential")
        if self.potential is not None and self.potential.dim != self.metric.dim:
            raise InvalidPathError(
                f"potential dimension {self.potential.dim} does not match metric dimension {self.metric.dim}"
            )

    @property
    def charged(self) -> bool:
        return self.kind == "charged" and self.e != 0.0


# ---------------------------------------------------------------------------
# Action
# ---------------------------------------------------------------------------


def _check_path(path: Path, lag: LagrangianSpec) -> None:
    if path.dim != lag.metric.dim:
        raise InvalidPathError(
            f"path dimension {path.dim} does not match metric '{lag.metric.name}' ({lag.metric.dim})"
        )
    if lag.kind == "charged" and lag.potential is not None:
        lag.potential.check_path(path)


def mass_segments(path: Path, lag: LagrangianSpec) -> np.ndarray:
    _check_path(path, lag)
    dx = path.displacements
    dtau = path.increments
    g = lag.metric.g(path.midpoints)
    quad = np.einsum("imn,im,in->i", g, dx, dx)
    return 0.5 * lag.m * (quad / dtau + dtau)


def potential_segments(path: Path, lag: LagrangianSpec) -> np.ndarray:
    if not lag.kind == "charged" or lag.potential is None:
        return np.zeros(path.n_segments)
    _check_path(path, lag)
    return lag.e * np.einsum("ij,ij->i", lag.potential(path.midpoints), path.displacements)


def segment_actions(path: Path, lag: LagrangianSpec) -> np.ndarray:
    """Midpoint-rule action of each segment."""
    return mass_segments(path, lag) + potential_segments(path, lag)


def action(path: Path, lag: LagrangianSpec) -> float:
    return float(np.sum(segment_actions(path, lag)))


def action_parts(path: Path, lag: LagrangianSpec) -> tuple[float, float]:
    """(mass part, potential part) of the discrete action."""
    return float(np.sum(mass_segments(path, lag))), float(np.sum(potential_segments(path, lag)))


def arc_length(path: Path, metric: ChartMetric) -> float:
    dx = path.displacements
    quad = np.einsum("imn,im,in->i", metric.g(path.midpoints), dx, dx)
    return float(np.sum(np.sqrt(np.abs(quad))))


# ---------------------------------------------------------------------------
# Euler-Lagrange system
# ---------------------------------------------------------------------------


def action_gradient(path: Path, lag: LagrangianSpec) -> np.ndarray:
    """d(action)/d(node) for every node, shape (M+1, N)."""
    _check_path(path, lag)
    mid = path.midpoints
    dx = path.displacements
    dtau = path.increments[:, None]
    g = lag.metric.g(mid)
    dg = lag.metric.dg(mid)

    common = 0.25 * lag.m * np.einsum("ilmn,im,in->il", dg, dx, dx) / dtau
    flux = lag.m * np.einsum("imn,in->im", g, dx) / dtau
    left = common - flux
    right = common + flux

    if lag.charged:
        assert lag.potential is not None
        phi = lag.potential(mid)
        dphi = np.einsum("ilm,im->il", lag.potential.jacobian(mid), dx)
        left = left + lag.e * (0.5 * dphi - phi)
        right = right + lag.e * (0.5 * dphi + phi)

    grad = np.zeros_like(path.nodes)
    grad[:-1] += left
    grad[1:] += right
    return grad


def el_residual(path: Path, lag: LagrangianSpec) -> float:
    """Max-norm of the discrete Euler-Lagrange residual at interior nodes."""
    if path.n_segments < 2:
        return 0.0
    return float(np.max(np.abs(action_gradient(path, lag)[1:-1])))


def _interior_residual(path: Path, lag: LagrangianSpec, z: np.ndarray) -> np.ndarray:
    nodes = np.array(path.nodes)
    nodes[1:-1] = z.reshape(-1, path.dim)
    return action_gradient(path.with_nodes(nodes), lag)[1:-1].ravel()


def _banded_jacobian(path: Path, lag: LagrangianSpec, z: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian using three interleaved node colours.

    The residual at node i depends only on nodes i-1, i, i+1, so every third
    node can be perturbed in the same evaluation.
    """
    n_int = path.n_segments - 1
    dim = path.dim
    h = constants.JACOBIAN_STEP
    jac = np.zeros((n_int * dim, n_int * dim))
    for colour in range(3):
        members = np.arange(colour, n_int, 3)
        if members.size == 0:
            continue
        for d in range(dim):
            bump = np.zeros((n_int, dim))
            bump[members, d] = h
            delta = (
                _interior_residual(path, lag, z + bump.ravel())
                - _interior_residual(path, lag, z - bump.ravel())
            ) / (2.0 * h)
            delta = delta.reshape(n_int, dim)
            for j in members:
                col = j * dim + d
                lo, hi = max(j - 1, 0), min(j + 2, n_int)
                jac[lo * dim : hi * dim, col] = delta[lo:hi].ravel()
    return jac


def find_extremal(
    lag: LagrangianSpec,
    x,
    y,
    tau_span: float,
    segments: int,
    init: Path | None = None,
    max_iterations: int | None = None,
    tol: float | None = None,
) -> Path:
    """Stationary discrete path between fixed endpoints.

    Damped Newton on the interior-node Euler-Lagrange residual; when a
    Newton step cannot reduce the residual the step falls back to
    backtracked descent along -J^T F.
    """
    if segments < 3:
        raise InvalidPathError(f"find_extremal needs at least 3 segments, got {segments}")
    if tau_span <= 0.0:
        raise InvalidPathError(f"tau_span must be > 0, got {tau_span}")
    max_iterations = constants.EXTREMAL_MAX_ITERATIONS if max_iterations is None else max_iterations
    tol = constants.EXTREMAL_RESIDUAL_TOLERANCE if tol is None else tol
    shrink = constants.BACKTRACK_FACTOR
    max_backtracks = constants.MAX_BACKTRACKS

    path = straight_path(x, y, tau_span, segments) if init is None else init
    if path.n_segments != segments:
        raise InvalidPathError(
            f"initial path has {path.n_segments} segments, expected {segments}"
        )
    z = path.nodes[1:-1].ravel().copy()
    f = _interior_residual(path, lag, z)
    norm = float(np.max(np.abs(f)))

    for iteration in range(max_iterations + 1):
        if norm < tol:
            log.debug(f"Extremal converged in {iteration} iterations, residual {norm:.3e}")
            nodes = np.array(path.nodes)
            nodes[1:-1] = z.reshape(-1, path.dim)
            return path.with_nodes(nodes)
        if iteration == max_iterations:
            break

        jac = _banded_jacobian(path, lag, z)
        moved = False
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            step = None

        if step is not None and np.all(np.isfinite(step)):
            t = 1.0
            for _ in range(max_backtracks):
                trial = z + t * step
                try:
                    f_trial = _interior_residual(path, lag, trial)
                except InvalidPathError:
                    t *= shrink
                    continue
                trial_norm = float(np.max(np.abs(f_trial)))
                if trial_norm < norm:
                    z, f, norm, moved = trial, f_trial, trial_norm, True
                    break
                t *= shrink

        if not moved:
            direction = -jac.T @ f
            scale = float(np.dot(direction, direction))
            t = float(np.dot(f, f)) / scale if scale > 0.0 else 0.0
            for _ in range(max_backtracks):
                trial = z + t * direction
                try:
                    f_trial = _interior_residual(path, lag, trial)
                except InvalidPathError:
                    t *= shrink
                    continue
                trial_norm = float(np.max(np.abs(f_trial)))
                if trial_norm < norm:
                    z, f, norm, moved = trial, f_trial, trial_norm, True
                    break
                t *= shrink
            log.debug(f"Newton step rejected at iteration {iteration}; descent step moved={moved}")

        if not moved:
            raise ConvergenceError(
                f"extremal solver stalled at residual {norm:.3e} after {iteration} iterations",
                residual=norm,
                iterations=iteration,
            )

    raise ConvergenceError(
        f"extremal solver did not reach residual {tol:g} in {max_iterations} iterations (final {norm:.3e})",
        residual=norm,
        iterations=max_iterations,
    )


def hamilton_principal_function(
    lag: LagrangianSpec, x, y, eps: float, segments: int = 32
) -> float:
    """Action along the discrete extremal joining x and y in lapse eps."""
    if eps <= 0.0:
        raise InvalidPathError(f"eps must be > 0, got {eps}")
    return action(find_extremal(lag, x, y, eps, segments), lag)


def homogeneous_action(lag: LagrangianSpec, x, y, segments: int = 32) -> float:
    """Value of the principal function at its stationary lapse.

    For the inhomogeneous Lagrangian this recovers m times the geodesic
    length, the action of the reparameterisation-invariant Lagrangian.
    """
    guess = arc_length(straight_path(x, y, 1.0, segments), lag.metric)
    if guess == 0.0:
        return 0.0
    result = optimize.minimize_scalar(
        lambda eps: hamilton_principal_function(lag, x, y, eps, segments),
        bounds=(0.2 * guess, 5.0 * guess),
        method="bounded",
        options={"xatol": 1e-10 * guess},
    )
    if not result.success:
        raise ConvergenceError(f"lapse search failed: {result.message}")
    log.debug(f"Stationary lapse {result.x:.12g} for straight-line estimate {guess:.6g}")
    return float(result.fun)


# ---------------------------------------------------------------------------
# Geodesic shooting
# ---------------------------------------------------------------------------


def shoot_geodesic(
    metric: ChartMetric,
    x,
    y,
    tau_span: float,
    params=None,
    rtol: float = 1e-12,
) -> Path:
    """Affinely parameterised geodesic from x to y by shooting on the initial velocity."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = metric.dim

    def rhs(_tau, state):
        pos, vel = state[:n], state[n:]
        gamma = christoffel_second(metric, pos)
        return np.concatenate([vel, -np.einsum("lmn,m,n->l", gamma, vel, vel)])

    def endpoint(v0):
        sol = integrate.solve_ivp(
            rhs, (0.0, tau_span), np.concatenate([x, v0]), method="DOP853", rtol=rtol, atol=rtol
        )
        if not sol.success:
            raise ConvergenceError(f"geodesic integration failed: {sol.message}")
        return sol.y[:n, -1] - y

    found = optimize.root(endpoint, (y - x) / tau_span, method="hybr", tol=rtol)
    if not found.success:
        raise ConvergenceError(
            f"geodesic shooting failed: {found.message}",
            residual=float(np.max(np.abs(found.fun))),
        )

    taus = np.linspace(0.0, tau_span, 129) if params is None else np.asarray(params, dtype=float)
    sol = integrate.solve_ivp(
        rhs,
        (0.0, tau_span),
        np.concatenate([x, found.x]),
        method="DOP853",
        rtol=rtol,
        atol=rtol,
        t_eval=taus,
    )
    return Path(sol.y[:n].T, taus)


def smooth_perturbation(path: Path, scale: float, rng: np.random.Generator, modes: int = 3) -> Path:
    """Path with interior nodes displaced by a random low-mode sine series.

    The displacement vanishes at both endpoints and has unit-variance
    Gaussian coefficients times ``scale``.
    """
    s = np.linspace(0.0, 1.0, path.n_segments + 1)
    k = np.arange(1, modes + 1)
    basis = np.sin(np.pi * np.outer(s, k))
    basis[[0, -1]] = 0.0
    coefficients = rng.standard_normal((modes, path.dim))
    return path.with_nodes(path.nodes + scale * basis @ coefficients)
