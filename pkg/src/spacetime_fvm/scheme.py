"""Finite volume scheme driven by total flux functions.

One slab update per cell K reads

    q_plus(u_plus) = q_minus(u_minus) - sum over vertical faces of
                     Q(u_minus, u_neighbor),

where q_minus / q_plus are the monotone total fluxes of the inflow and
outflow faces and Q is a two-point numerical flux that is consistent with
the oriented vertical total flux, conservative across the face and
monotone.  The new state is recovered by inverting q_plus; under the CFL
bound on the lambda ratios the right-hand side provably stays inside the
image, so an inversion failure is reported as a scheme abort rather than
clamped.

Orientation bookkeeping on the product mesh (dt ^ dx positive): a vertical
face oriented as the boundary of its LEFT cell integrates the dt component
of the flux form along decreasing time; the right cell sees the negative.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .fluxfield import FluxField, NotSpacelikeError
from .forms import QuadratureRule, gauss_legendre
from .mesh import (
    CircleDomain,
    Face,
    IntervalDomain,
    MeshError,
    SpacelikeTable,
    Triangulation,
)

__all__ = [
    "BoundaryData",
    "CFLViolation",
    "DegenerateFluxError",
    "FluxKind",
    "LambdaReport",
    "NumericalFluxSpec",
    "RunConfig",
    "RunResult",
    "SliceState",
    "Solver",
    "boundary_ghost_value",
    "compute_lambdas",
    "initial_slice_state",
    "numerical_flux",
    "run",
    "select_timestep",
    "step_cell",
    "vertical_signed_flux",
]

CFL_LIMIT = 0.5
CRITICAL_SAMPLES = 65
RUSANOV_MARGIN = 1.1


class CFLViolation(RuntimeError):
    """A slab failed the CFL bound while enforcement was on."""


class DegenerateFluxError(RuntimeError):
    """No admissible slab height exists above the search floor."""


class FluxKind(str, Enum):
    GODUNOV_OSHER = "godunov_osher"
    RUSANOV = "rusanov"
    # deliberately non-monotone; exists so guard rails can be exercised
    ANTI_DIFFUSIVE = "anti_diffusive"


@dataclass(frozen=True)
class NumericalFluxSpec:
    """Numerical flux selector.

    ``godunov_osher`` realizes the exact interval min/max flux (computed
    from cached critical points of the face flux), ``rusanov`` the central
    flux with dissipation speed ``max(|g'|) * 1.1`` unless overridden.
    ``anti_diffusive`` flips the sign of the dissipation and violates the
    monotonicity axiom on purpose; it is for verifying that the guard
    rails catch broken fluxes, never for production runs.
    """

    kind: FluxKind = FluxKind.GODUNOV_OSHER
    rusanov_speed: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", FluxKind(self.kind))


@dataclass(frozen=True)
class BoundaryData:
    """Boundary trace ``u_B`` and the positive averaging density alpha_B.

    ``u`` maps chart points ``(..., 2)`` to states; it is evaluated on the
    initial slice (t = 0) and on the vertical boundary faces.
    ``alpha_density`` is the positive density of alpha_B with respect to
    the coordinate measure of each boundary face.
    """

    u: Callable[[np.ndarray], np.ndarray]
    alpha_density: Callable[[np.ndarray], np.ndarray] | float = 1.0

    def u_values(self, pts: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.u(np.asarray(pts, dtype=float)), dtype=float)
        return np.broadcast_to(vals, np.shape(pts)[:-1]).copy()

    def alpha_values(self, pts: np.ndarray) -> np.ndarray:
        if callable(self.alpha_density):
            vals = np.asarray(self.alpha_density(np.asarray(pts, dtype=float)), dtype=float)
            return np.broadcast_to(vals, np.shape(pts)[:-1]).copy()
        return np.full(np.shape(pts)[:-1], float(self.alpha_density))


@dataclass(frozen=True)
class RunConfig:
    """Run controls; ``cfl_target`` must respect the stability bound 1/2."""

    cfl_target: float = 0.25
    inversion_tol: float = 1e-12
    quadrature_points: int = 5
    u_range: tuple[float, float] | None = None
    enforce_cfl: bool = True
    check_hyperbolicity: bool = True
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.cfl_target <= CFL_LIMIT:
            raise ValueError(f"cfl_target must lie in (0, {CFL_LIMIT}]")
        if self.inversion_tol <= 0.0:
            raise ValueError("inversion_tol must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def rule(self) -> QuadratureRule:
        return gauss_legendre(self.quadrature_points, 1)


@dataclass
class SliceState:
    """Per-slice map from spacelike faces to states and cached total fluxes."""

    slice_index: int
    face_ids: list[tuple]
    values: np.ndarray
    fluxes: np.ndarray

    def value(self, face_id: tuple) -> float:
        return float(self.values[self._index(face_id)])

    def flux(self, face_id: tuple) -> float:
        return float(self.fluxes[self._index(face_id)])

    def _index(self, face_id: tuple) -> int:
        return self.face_ids.index(tuple(face_id))


# ---------------------------------------------------------------------------
# vertical flux tables
# ---------------------------------------------------------------------------

class VerticalFluxes:
    """Oriented fluxes and numerical fluxes on the vertical faces of a slab.

    ``G(u)`` is the total flux through a face as seen from its left cell
    (outward orientation); ``Q(u, v)`` is the numerical flux in that same
    orientation with ``u`` the left-cell state.  Critical points of G over
    the admissible state range are located once (sampled sign changes of
    G', polished by bisection), making the interval min/max flux exact for
    fluxes with finitely many extrema.
    """

    def __init__(self, x_nodes: np.ndarray, t_lo: float, t_hi: float,
                 flux: FluxField, spec: NumericalFluxSpec,
                 rule: QuadratureRule, u_range: tuple[float, float]):
        self.x_nodes = np.asarray(x_nodes, dtype=float)
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        self.spec = spec
        self.u_range = (float(u_range[0]), float(u_range[1]))
        s = rule.nodes[:, 0]
        ts = t_lo + s * (t_hi - t_lo)
        self.pts = np.stack([np.broadcast_to(ts, (self.x_nodes.size, ts.size)),
                             np.broadcast_to(self.x_nodes[:, None], (self.x_nodes.size, ts.size))],
                            axis=-1)                                   # (nv, nt, 2)
        self.weights = rule.weights * (t_hi - t_lo)                    # (nt,)
        self._wt = flux.omega.coeffs[(0,)]
        self._dwt = flux.omega.du_coeffs[(0,)]

        us = np.linspace(*self.u_range, CRITICAL_SAMPLES)
        dg = self.dG_lattice(us)                                       # (nv, K)
        self._dg_abs_max = np.max(np.abs(dg), axis=1)
        self._dg_max = np.max(dg, axis=1)
        self._dg_min = np.min(dg, axis=1)
        self._locate_criticals(us, dg)

        if spec.rusanov_speed is not None and spec.kind is not FluxKind.GODUNOV_OSHER:
            self.speed = np.full(self.n_faces, float(spec.rusanov_speed))
        else:
            self.speed = RUSANOV_MARGIN * self._dg_abs_max

    @property
    def n_faces(self) -> int:
        return self.x_nodes.size

    # -- raw face fluxes ------------------------------------------------------

    def _eval(self, fn, u, faces=None):
        u = np.asarray(u, dtype=float)
        pts = self.pts if faces is None else self.pts[np.asarray(faces)]
        if u.ndim == 1:
            vals = fn(pts, u[:, None])
            return np.sum(self.weights * vals, axis=-1)
        if u.ndim == 2:
            vals = fn(pts[:, None, :, :], u[:, :, None])
            return np.sum(self.weights * vals, axis=-1)
        raise MeshError("state array must have shape (nv,) or (nv, K)")

    def G(self, u, faces=None) -> np.ndarray:
        """Left-cell-oriented total flux at per-face states.

        ``faces`` optionally gathers a subset (with repetition) of the
        slab's vertical faces; the leading axis of ``u`` must match it.
        """
        return -self._eval(self._wt, u, faces)

    def dG(self, u, faces=None) -> np.ndarray:
        return -self._eval(self._dwt, u, faces)

    def G_lattice(self, us: np.ndarray) -> np.ndarray:
        """G of every face at a shared 1-d lattice of states -> (nv, K)."""
        us = np.asarray(us, dtype=float)
        return self.G(np.broadcast_to(us, (self.n_faces, us.size)))

    def dG_lattice(self, us: np.ndarray) -> np.ndarray:
        us = np.asarray(us, dtype=float)
        return self.dG(np.broadcast_to(us, (self.n_faces, us.size)))

    def _gather_G(self, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
        pts = self.pts[idx]
        vals = self._wt(pts, np.asarray(w, dtype=float)[:, None])
        return -np.sum(self.weights * vals, axis=-1)

    def _gather_dG(self, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
        pts = self.pts[idx]
        vals = self._dwt(pts, np.asarray(w, dtype=float)[:, None])
        return -np.sum(self.weights * vals, axis=-1)

    def _locate_criticals(self, us: np.ndarray, dg: np.ndarray) -> None:
        # strict sign changes are bisected; samples where G' vanishes exactly
        # (a sonic state landing on a sample node) are criticals themselves
        sign_change = dg[:, :-1] * dg[:, 1:] < 0.0
        face_idx, seg_idx = np.nonzero(sign_change)
        lo = us[seg_idx]
        hi = us[seg_idx + 1]
        flo = dg[face_idx, seg_idx]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fmid = self._gather_dG(face_idx, mid) if face_idx.size else np.empty(0)
            left = flo * fmid > 0.0
            lo = np.where(left, mid, lo)
            flo = np.where(left, fmid, flo)
            hi = np.where(left, hi, mid)
        roots = 0.5 * (lo + hi)

        is_zero = dg == 0.0
        left_zero = np.pad(is_zero[:, :-1], ((0, 0), (1, 0)), constant_values=True)
        right_zero = np.pad(is_zero[:, 1:], ((0, 0), (0, 1)), constant_values=True)
        isolated = is_zero & ~(left_zero & right_zero)  # skip flat stretches
        zero_face, zero_idx = np.nonzero(isolated)
        face_idx = np.concatenate([face_idx, zero_face])
        roots = np.concatenate([roots, us[zero_idx]])

        max_per_face = int(np.max(np.bincount(face_idx, minlength=self.n_faces))) \
            if face_idx.size else 0
        self.crit_w = np.full((self.n_faces, max_per_face), np.nan)
        self.crit_g = np.full((self.n_faces, max_per_face), np.nan)
        slot = np.zeros(self.n_faces, dtype=int)
        gvals = self._gather_G(face_idx, roots) if face_idx.size else np.empty(0)
        for k in range(face_idx.size):
            f = face_idx[k]
            self.crit_w[f, slot[f]] = roots[k]
            self.crit_g[f, slot[f]] = gvals[k]
            slot[f] += 1

    # -- numerical fluxes -------------------------------------------------------

    def Q(self, u, v, faces=None) -> np.ndarray:
        """Numerical flux per face in left-cell orientation; shapes (n,) or (n, K)."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        gu = self.G(u, faces)
        gv = self.G(v, faces)
        speed = self.speed if faces is None else self.speed[np.asarray(faces)]
        crit_w = self.crit_w if faces is None else self.crit_w[np.asarray(faces)]
        crit_g = self.crit_g if faces is None else self.crit_g[np.asarray(faces)]
        if self.spec.kind is FluxKind.RUSANOV:
            s = speed if u.ndim == 1 else speed[:, None]
            return 0.5 * (gu + gv) - 0.5 * s * (v - u)
        if self.spec.kind is FluxKind.ANTI_DIFFUSIVE:
            s = speed if u.ndim == 1 else speed[:, None]
            return 0.5 * (gu + gv) + 0.5 * s * (v - u)
        lo = np.minimum(u, v)
        hi = np.maximum(u, v)
        qmin = np.minimum(gu, gv)
        qmax = np.maximum(gu, gv)
        for r in range(crit_w.shape[1]):
            w = crit_w[:, r] if u.ndim == 1 else crit_w[:, r, None]
            g = crit_g[:, r] if u.ndim == 1 else crit_g[:, r, None]
            with np.errstate(invalid="ignore"):
                inside = (w > lo) & (w < hi)
            qmin = np.where(inside, np.minimum(qmin, g), qmin)
            qmax = np.where(inside, np.maximum(qmax, g), qmax)
        return np.where(u <= v, qmin, qmax)

    # -- CFL ingredients --------------------------------------------------------

    def lipschitz_sup(self) -> np.ndarray:
        """Per-face bound for sup over (u, v) of (dQ/du - dQ/dv).

        For the interval min/max flux the supremum equals the largest
        magnitude of G' over the state range; the central fluxes add their
        dissipation speed to half the spread of G'.
        """
        if self.spec.kind is FluxKind.RUSANOV:
            return self.speed + 0.5 * (self._dg_max - self._dg_min)
        if self.spec.kind is FluxKind.ANTI_DIFFUSIVE:
            return np.maximum(self._dg_abs_max, self.speed)
        return self._dg_abs_max

    def lipschitz_sup_fd(self, n_grid: int = 17) -> np.ndarray:
        """Finite-difference estimate of the same supremum on a (u, v) grid."""
        lo, hi = self.u_range
        delta = 1e-5 * (1.0 + (hi - lo))
        us = np.linspace(lo + delta, hi - delta, n_grid)
        uu, vv = np.meshgrid(us, us, indexing="ij")
        uu = np.broadcast_to(uu.ravel(), (self.n_faces, n_grid * n_grid))
        vv = np.broadcast_to(vv.ravel(), (self.n_faces, n_grid * n_grid))
        dqu = (self.Q(uu + delta, vv) - self.Q(uu - delta, vv)) / (2 * delta)
        dqv = (self.Q(uu, vv + delta) - self.Q(uu, vv - delta)) / (2 * delta)
        return np.clip(np.max(dqu - dqv, axis=1), 0.0, None)


# ---------------------------------------------------------------------------
# boundary data handling
# ---------------------------------------------------------------------------

def _face_mean(bd: BoundaryData, pts: np.ndarray, weights: np.ndarray) -> float:
    alpha = weights * bd.alpha_values(pts)
    mass = float(np.sum(alpha))
    if mass <= 0.0:
        raise ValueError("alpha_B mass must be positive on every boundary face")
    return float(np.sum(alpha * bd.u_values(pts)) / mass)


def boundary_ghost_value(face: Face, bd: BoundaryData,
                         rule: QuadratureRule | None = None) -> float:
    """alpha_B-weighted mean of u_B over a boundary face."""
    rule = rule if rule is not None else gauss_legendre(5, 1)
    s = rule.nodes[:, 0]
    if face.kind == "vertical":
        ts = face.t_lo + s * (face.t_hi - face.t_lo)
        pts = np.stack([ts, np.full_like(ts, face.x_lo)], axis=-1)
        weights = rule.weights * (face.t_hi - face.t_lo)
    else:
        xs = face.x_lo + s * (face.x_hi - face.x_lo)
        pts = np.stack([np.full_like(xs, face.t_lo), xs], axis=-1)
        weights = rule.weights * (face.x_hi - face.x_lo)
    return _face_mean(bd, pts, weights)


def initial_slice_state(tri: Triangulation, bd: BoundaryData, flux: FluxField,
                        cfg: RunConfig | None = None,
                        u_range: tuple[float, float] | None = None) -> SliceState:
    """States on the initial slice: alpha_B means of u_B per inflow face.

    Requires the initial slice to be inflow for the flux (positive
    pulled-back du along increasing x); total fluxes are cached alongside.
    """
    cfg = cfg if cfg is not None else RunConfig()
    rule = cfg.rule()
    table = SpacelikeTable(tri, flux, 0, rule=rule, u_range=u_range)
    if np.any(table.orientation < 0.0):
        raise NotSpacelikeError("initial slice is not an inflow boundary for this flux")
    s = rule.nodes[:, 0]
    values = np.empty(tri.n_columns)
    for i in range(tri.n_columns):
        face = tri.faces[("S", 0, i)]
        xs = face.x_lo + s * (face.x_hi - face.x_lo)
        pts = np.stack([np.zeros_like(xs), xs], axis=-1)
        values[i] = _face_mean(bd, pts, rule.weights * (face.x_hi - face.x_lo))
    return SliceState(0, table.face_ids, values, table.q(values))


# ---------------------------------------------------------------------------
# per-slab machinery
# ---------------------------------------------------------------------------

@dataclass
class LambdaReport:
    """Per-cell CFL ratios of one slab (arrays indexed by cell column)."""

    lam_hat: np.ndarray          # (m, 2): per cell, per (left, right) face
    lam_hat_cell: np.ndarray     # (m,)
    lam: np.ndarray              # (m, 2) convex weights, rows sum to 1
    cfl_limit: float
    passed: bool

    def max_cell_ratio(self) -> float:
        return float(np.max(self.lam_hat_cell))


class Slab:
    """All per-slab state: flux tables, ghosts, CFL ratios, the update."""

    def __init__(self, solver: "Solver", j: int):
        self.solver = solver
        self.j = j
        tri = solver.tri
        self.tri = tri
        self.m = tri.n_columns
        self.periodic = tri.periodic
        self.table_minus = solver.slice_table(j)
        self.table_plus = solver.slice_table(j + 1)
        x_nodes = tri.breakpoints[:-1] if tri.periodic else tri.breakpoints
        self.vert = VerticalFluxes(x_nodes, tri.times[j], tri.times[j + 1],
                                   solver.flux, solver.spec, solver.rule, solver.u_range)
        cols = np.arange(self.m)
        self.left_idx = cols
        self.right_idx = (cols + 1) % self.m if tri.periodic else cols + 1
        self._ghosts: tuple[float, float] | None = None
        self._lambda_report: LambdaReport | None = None

    # -- boundary ----------------------------------------------------------------

    def ghost_values(self) -> tuple[float, float] | None:
        """(left, right) ghost states of this slab, or None on a circle."""
        if self.periodic:
            return None
        if self._ghosts is None:
            bd = self.solver.bd
            rule = self.solver.rule
            left = boundary_ghost_value(self.tri.faces[("V", self.j, 0)], bd, rule)
            right = boundary_ghost_value(self.tri.faces[("V", self.j, self.m)], bd, rule)
            self._ghosts = (left, right)
        return self._ghosts

    def boundary_faces(self) -> list[Face]:
        return self.tri.boundary_vertical_faces(self.j)

    # -- per-cell oriented fluxes -------------------------------------------------

    def signed_flux(self, column: int, side: str, u) -> np.ndarray:
        """g_{K, e}(u): oriented total flux through a vertical face as K sees it."""
        idx = self.right_idx[column] if side == "right" else self.left_idx[column]
        sign = 1.0 if side == "right" else -1.0
        u = np.atleast_1d(np.asarray(u, dtype=float))
        faces = np.full(u.shape[0], idx, dtype=int)
        return sign * self.vert.G(u, faces=faces)

    def numerical_flux(self, column: int, side: str, u, v):
        """Q_{K, e}(u, v) with u the cell's own state, v the neighbor state."""
        shape = np.broadcast_shapes(np.shape(u), np.shape(v))
        uu = np.broadcast_to(np.asarray(u, dtype=float), shape).reshape(1, -1)
        vv = np.broadcast_to(np.asarray(v, dtype=float), shape).reshape(1, -1)
        if side == "right":
            out = self.vert.Q(uu, vv, faces=[self.right_idx[column]])[0]
        else:
            out = -self.vert.Q(vv, uu, faces=[self.left_idx[column]])[0]
        return out.reshape(shape) if shape else float(out[0])

    # -- CFL ------------------------------------------------------------------------

    def lambdas(self, estimator: str = "derivative") -> LambdaReport:
        """Per-cell lambda ratios; the cell sums must stay below 1/2.

        ``estimator='derivative'`` uses the exact suprema of the built-in
        fluxes (from G' samples); ``'fd_grid'`` uses central differences of
        Q on a state grid, matching the defining ratio literally.
        """
        if estimator == "derivative" and self._lambda_report is not None:
            return self._lambda_report
        sup = self.vert.lipschitz_sup() if estimator == "derivative" \
            else self.vert.lipschitz_sup_fd()
        dq_min = self.table_plus.dq_min_raw
        lam_hat = np.stack([sup[self.left_idx], sup[self.right_idx]], axis=1) \
            / dq_min[:, None]
        lam_hat_cell = np.sum(lam_hat, axis=1)
        lam = np.empty_like(lam_hat)
        nonzero = lam_hat_cell > 0.0
        lam[nonzero] = lam_hat[nonzero] / lam_hat_cell[nonzero, None]
        lam[~nonzero] = 0.5
        report = LambdaReport(lam_hat=lam_hat, lam_hat_cell=lam_hat_cell, lam=lam,
                              cfl_limit=CFL_LIMIT,
                              passed=bool(np.max(lam_hat_cell) <= CFL_LIMIT * (1 + 1e-12)))
        if estimator == "derivative":
            self._lambda_report = report
        return report

    # -- the update -------------------------------------------------------------------

    def neighbor_states(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(left-cell state, right-cell state) per vertical face, ghosts filled in."""
        if self.periodic:
            u_left = np.roll(values, 1)
            u_right = values
        else:
            gl, gr = self.ghost_values()
            u_left = np.concatenate([[gl], values])
            u_right = np.concatenate([values, [gr]])
        return u_left, u_right

    def face_fluxes(self, values: np.ndarray) -> np.ndarray:
        """Numerical flux per vertical face in left-cell orientation."""
        u_left, u_right = self.neighbor_states(values)
        return self.vert.Q(u_left, u_right)

    def rhs(self, state: SliceState) -> np.ndarray:
        F = self.face_fluxes(state.values)
        return state.fluxes - (F[self.right_idx] - F[self.left_idx])

    def step_cell(self, column: int, state: SliceState) -> float:
        """Single-cell update value (same path as the vectorized step)."""
        rhs = self.rhs(state)
        view = self.table_plus.total_flux_view(column)
        return view.invert(float(rhs[column]), tol=self.solver.cfg.inversion_tol)

    def step(self, state: SliceState) -> SliceState:
        """Advance the whole slab.

        Cell updates are independent (read the old slice, write disjoint
        entries), so the columns may be split across worker threads; the
        per-root iteration is self-contained and the result is identical
        for any thread count.
        """
        rhs = self.rhs(state)
        tol = self.solver.cfg.inversion_tol
        threads = self.solver.cfg.threads
        if threads <= 1 or self.m < 2 * threads:
            u_plus = self.table_plus.invert(rhs, tol=tol)
        else:
            u_plus = np.empty(self.m)
            chunks = np.array_split(np.arange(self.m), threads)

            def work(ix):
                u_plus[ix] = self.table_plus.invert(rhs[ix], tol=tol, columns=ix)

            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, chunks))
        return SliceState(self.j + 1, self.table_plus.face_ids, u_plus, rhs)


# ---------------------------------------------------------------------------
# solver facade
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    """Slice states plus the piecewise constant reconstruction.

    ``u_field(t, x)`` returns the inflow-face value of the cell containing
    the point, i.e. the scheme's piecewise constant approximate solution.
    """

    tri: Triangulation
    flux: FluxField
    spec: NumericalFluxSpec
    bd: BoundaryData
    cfg: RunConfig
    u_range: tuple[float, float]
    states: list[SliceState]
    lambda_max: list[float]
    wall_time: float

    @property
    def final_state(self) -> SliceState:
        return self.states[-1]

    def state(self, j: int) -> SliceState:
        return self.states[j]

    def u_field(self, t: float, x: float) -> float:
        times = self.tri.times
        j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, self.tri.n_slabs - 1))
        xs = self.tri.breakpoints
        if self.tri.periodic:
            x = xs[0] + (x - xs[0]) % (xs[-1] - xs[0])
        i = int(np.clip(np.searchsorted(xs, x, side="right") - 1, 0, self.tri.n_columns - 1))
        return float(self.states[j].values[i])

    def rows(self) -> Iterable[tuple]:
        """CSV rows (slice_index, t, x_left, x_right, u, q)."""
        xs = self.tri.breakpoints
        for state in self.states:
            t = float(self.tri.times[state.slice_index])
            for i in range(self.tri.n_columns):
                yield (state.slice_index, t, float(xs[i]), float(xs[i + 1]),
                       float(state.values[i]), float(state.fluxes[i]))


class Solver:
    """Binds a triangulation, flux field, numerical flux and boundary data."""

    def __init__(self, tri: Triangulation, flux: FluxField, spec: NumericalFluxSpec,
                 bd: BoundaryData, cfg: RunConfig | None = None):
        self.tri = tri
        self.flux = flux
        self.spec = spec
        self.bd = bd
        self.cfg = cfg if cfg is not None else RunConfig()
        self.rule = self.cfg.rule()
        self.u_range = self.cfg.u_range if self.cfg.u_range is not None \
            else self._data_hull()
        self._tables: dict[int, SpacelikeTable] = {}
        self._slabs: dict[int, Slab] = {}
        if self.cfg.check_hyperbolicity:
            self._check_time_observer()

    def _data_hull(self) -> tuple[float, float]:
        """Hull of the boundary trace over the initial slice and all boundary faces."""
        samples = []
        xs = np.linspace(self.tri.breakpoints[0], self.tri.breakpoints[-1], 257)
        pts0 = np.stack([np.zeros_like(xs), xs], axis=-1)
        samples.append(self.bd.u_values(pts0))
        if not self.tri.periodic:
            ts = np.linspace(self.tri.times[0], self.tri.times[-1], 257)
            for xb in (self.tri.breakpoints[0], self.tri.breakpoints[-1]):
                ptsb = np.stack([ts, np.full_like(ts, xb)], axis=-1)
                samples.append(self.bd.u_values(ptsb))
        lo = float(min(np.min(s) for s in samples))
        hi = float(max(np.max(s) for s in samples))
        if hi - lo < 1e-12:
            pad = 0.5 * max(1e-6, abs(hi) * 1e-6)
            lo, hi = lo - pad, hi + pad
        return lo, hi

    def _check_time_observer(self) -> None:
        # hyperbolicity with T = dt reduces to positivity of the dx component of du
        us = np.linspace(*self.u_range, 9)
        ts = np.linspace(self.tri.times[0], self.tri.times[-1], 9)
        xs = np.linspace(self.tri.breakpoints[0], self.tri.breakpoints[-1], 33)
        tt, xx = np.meshgrid(ts, xs, indexing="ij")
        pts = np.stack([tt.ravel(), xx.ravel()], axis=-1)
        worst = min(float(np.min(self.flux.omega.du_coeffs[(1,)](pts, u))) for u in us)
        if worst <= 0.0:
            raise NotSpacelikeError(
                f"flux fails hyperbolicity with the time observer (min coefficient {worst:.3e})")

    def slice_table(self, j: int) -> SpacelikeTable:
        if j not in self._tables:
            self._tables[j] = SpacelikeTable(self.tri, self.flux, j,
                                             rule=self.rule, u_range=self.u_range)
        return self._tables[j]

    def slab(self, j: int) -> Slab:
        if j not in self._slabs:
            self._slabs[j] = Slab(self, j)
        return self._slabs[j]

    def initial_state(self) -> SliceState:
        return initial_slice_state(self.tri, self.bd, self.flux,
                                   cfg=self.cfg, u_range=self.u_range)

    def run(self) -> RunResult:
        start = time.perf_counter()
        state = self.initial_state()
        states = [state]
        lambda_max = []
        for j in range(self.tri.n_slabs):
            slab = self.slab(j)
            report = slab.lambdas()
            lambda_max.append(report.max_cell_ratio())
            if self.cfg.enforce_cfl and not report.passed:
                raise CFLViolation(
                    f"slab {j}: max cell ratio {report.max_cell_ratio():.6f} exceeds "
                    f"{CFL_LIMIT}; shrink the slab height")
            state = slab.step(state)
            states.append(state)
        return RunResult(tri=self.tri, flux=self.flux, spec=self.spec, bd=self.bd,
                         cfg=self.cfg, u_range=self.u_range, states=states,
                         lambda_max=lambda_max, wall_time=time.perf_counter() - start)


def run(tri: Triangulation, flux: FluxField, spec: NumericalFluxSpec,
        bd: BoundaryData, cfg: RunConfig | None = None) -> RunResult:
    """Slice-by-slice evolution over the whole foliation."""
    return Solver(tri, flux, spec, bd, cfg).run()


def vertical_signed_flux(slab: Slab, column: int, side: str, u) -> np.ndarray:
    """Oriented total flux of a vertical face as its owning cell sees it."""
    return slab.signed_flux(column, side, u)


def numerical_flux(slab: Slab, column: int, side: str, u, v):
    """Two-point numerical flux of a cell's vertical face (own state first)."""
    return slab.numerical_flux(column, side, u, v)


def compute_lambdas(slab: Slab, estimator: str = "derivative") -> LambdaReport:
    """Per-cell ratio bookkeeping of a slab (see :meth:`Slab.lambdas`)."""
    return slab.lambdas(estimator=estimator)


def step_cell(slab: Slab, column: int, state: SliceState) -> float:
    """Single-cell update through the guarded total-flux inversion."""
    return slab.step_cell(column, state)


# ---------------------------------------------------------------------------
# time step selection
# ---------------------------------------------------------------------------

def _slab_ratio(domain, breakpoints, flux, spec, rule, u_range, t0, hbar) -> float:
    """Max per-cell lambda ratio of a candidate slab starting at t0."""
    xs = np.asarray(breakpoints, dtype=float)
    m = xs.size - 1
    x_nodes = xs[:-1] if domain.periodic else xs
    vert = VerticalFluxes(x_nodes, t0, t0 + hbar, flux, spec, rule, u_range)
    sup = vert.lipschitz_sup()
    # dq bounds on the outflow slice of the candidate slab
    s = rule.nodes[:, 0]
    X = xs[:-1, None] + s[None, :] * np.diff(xs)[:, None]
    pts = np.stack([np.full_like(X, t0 + hbar), X], axis=-1)
    us = np.linspace(*u_range, 33)
    dens = flux.omega.du_coeffs[(1,)](pts[:, None, :, :], us[None, :, None])
    dq = np.abs(np.sum((rule.weights[None, None, :] * np.diff(xs)[:, None, None]) * dens, axis=-1))
    dq_min = np.min(dq, axis=1)
    left = np.arange(m)
    right = (np.arange(m) + 1) % m if domain.periodic else np.arange(m) + 1
    lam = (sup[left] + sup[right]) / dq_min
    return float(np.max(lam))


def select_timestep(domain: IntervalDomain | CircleDomain, breakpoints: Sequence[float],
                    flux: FluxField, spec: NumericalFluxSpec,
                    u_range: tuple[float, float], cfl_target: float,
                    t_final: float, probes: int = 5,
                    rule: QuadratureRule | None = None) -> float:
    """Largest slab height whose lambda ratios stay below the target.

    Scales a probe slab to the target ratio and verifies on slabs sampled
    across the horizon (the flux may be time dependent).  Returns 0 for a
    zero horizon; raises :class:`DegenerateFluxError` when no height above
    ``1e-12 * t_final`` is admissible.
    """
    if not 0.0 < cfl_target <= CFL_LIMIT:
        raise ValueError(f"cfl_target must lie in (0, {CFL_LIMIT}]")
    if t_final <= 0.0:
        return 0.0
    rule = rule if rule is not None else gauss_legendre(5, 1)
    breakpoints = np.asarray(breakpoints, dtype=float)

    def worst_ratio(hbar: float) -> float:
        starts = np.linspace(0.0, max(t_final - hbar, 0.0), probes)
        return max(_slab_ratio(domain, breakpoints, flux, spec, rule, u_range, t0, hbar)
                   for t0 in starts)

    hbar = float(t_final)
    floor = 1e-12 * t_final
    for _ in range(200):
        lam = worst_ratio(hbar)
        if lam <= 0.0:
            return float(t_final)  # flux-free vertical faces: no CFL constraint
        if lam <= cfl_target * (1.0 + 1e-9):
            grown = min(float(t_final), hbar * cfl_target / lam)
            if grown <= hbar * (1.0 + 1e-6):
                return hbar
            hbar = grown
        else:
            hbar = min(float(t_final), hbar * cfl_target / lam)
            if hbar < floor:
                raise DegenerateFluxError("no admissible slab height above the search floor")
    # the fixed point did not settle; fall back to a safe shrinking pass
    while worst_ratio(hbar) > cfl_target * (1.0 + 1e-9):
        hbar *= 0.9
        if hbar < floor:
            raise DegenerateFluxError("no admissible slab height above the search floor")
    return hbar
