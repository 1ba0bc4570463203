"""Entropy pairs, convex decompositions and discrete-inequality verifiers.

The scheme's stability theory rests on rewriting each cell update as a
convex combination of intermediate states and pushing convex entropies
through it.  This module reconstructs those objects from run output and
evaluates every discrete inequality the theory asserts:

* per-face entropy inequalities (interior and boundary-flavored),
* the per-cell entropy inequality,
* the discrete boundary condition relating entropy and plain fluxes,
* the per-slab global dissipation estimate,
* the global entropy inequality with its five remainder terms A..E,
* Kruzkov slice distances, their contraction across slabs against the
  boundary-data budget, and the inflow-trace gap.

Everything is evaluated with fixed summation order over prebuilt arrays,
so reports are reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .forms import CoordinateForm, ParamForm
from .fluxfield import FluxField
from .mesh import SpacelikeTable, ValueOutsideImage
from .scheme import RunResult, Slab, SliceState, Solver

__all__ = [
    "ContractionReport",
    "DecompositionStates",
    "DissipationReport",
    "EntropyPair",
    "EntropyReport",
    "GlobalInequalityReport",
    "KruzkovPair",
    "boundary_bound_mass",
    "cell_entropy_residuals",
    "check_discrete_boundary_condition",
    "contraction_check",
    "decomposition_states",
    "entropy_total_flux",
    "face_entropy_residuals",
    "global_dissipation_report",
    "global_entropy_inequality_report",
    "identity_pair",
    "kruzkov_form",
    "kruzkov_lattice",
    "kruzkov_numerical_flux",
    "kruzkov_slice_distance",
    "square_pair",
    "verify_run",
]

SIMPSON_TOL = 1e-12


def _sgn(x):
    return np.sign(x)


# ---------------------------------------------------------------------------
# entropy pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntropyPair:
    """Convex Lipschitz entropy with derivative callback.

    The associated flux family is the u-derivative-weighted integral of the
    flux derivative, anchored so it vanishes at state zero; it is realized
    on demand as a :class:`ParamForm` or through per-face total fluxes.
    ``ddu_fn`` (second derivative) enables the exact numerical entropy flux
    superposition; when missing it is formed by central differences.
    """

    u_fn: Callable
    du_fn: Callable
    name: str = "entropy"
    ddu_fn: Callable | None = None

    def u(self, w):
        return np.asarray(self.u_fn(np.asarray(w, dtype=float)), dtype=float)

    def du(self, w):
        return np.asarray(self.du_fn(np.asarray(w, dtype=float)), dtype=float)

    def ddu(self, w):
        if self.ddu_fn is not None:
            return np.asarray(self.ddu_fn(np.asarray(w, dtype=float)), dtype=float)
        h = 1e-5
        w = np.asarray(w, dtype=float)
        return (self.du(w + h) - self.du(w - h)) / (2 * h)

    def admissible_bound(self, hull: tuple[float, float]) -> float:
        ws = np.linspace(hull[0], hull[1], 257)
        return float(np.max(np.abs(self.du(ws))))

    def convexity_modulus(self, hull: tuple[float, float]) -> float:
        """c with U'' >= 2c on the hull (sampled)."""
        ws = np.linspace(hull[0], hull[1], 257)
        return float(0.5 * np.min(self.ddu(ws)))

    def validate(self, hull: tuple[float, float], tol: float = 1e-9) -> None:
        ws = np.linspace(hull[0], hull[1], 65)
        h = 1e-4 * (1 + hull[1] - hull[0])
        second = self.u(ws + h) - 2 * self.u(ws) + self.u(ws - h)
        if np.min(second) < -tol * h * h:
            raise ValueError(f"entropy {self.name} is not convex on the hull")

    def omega_form(self, flux: FluxField, tol: float = SIMPSON_TOL) -> ParamForm:
        """The entropy flux family as a ParamForm (frozen-state coefficients).

        Coefficients integrate the derivative-weighted flux derivative from
        state zero by adaptive Simpson quadrature; intended for frozen
        scalar states (diagnostics), not for the solver hot path.
        """
        coeffs = {}
        du_coeffs = {}
        for idx, dfn in flux.omega.du_coeffs.items():
            def coeff(pts, u, _dfn=dfn):
                u = float(u)
                return adaptive_simpson(
                    lambda v, _p=pts: self.du(v) * _dfn(_p, v), 0.0, u, tol,
                    shape=np.shape(pts)[:-1])

            def dcoeff(pts, u, _dfn=dfn):
                return self.du(u) * _dfn(pts, u)

            coeffs[idx] = coeff
            du_coeffs[idx] = dcoeff
        return ParamForm(flux.omega.degree, flux.omega.chart_dim,
                         coeffs, du_coeffs, flux.omega.u_range)


def square_pair() -> EntropyPair:
    return EntropyPair(lambda w: w * w, lambda w: 2.0 * w, name="square",
                       ddu_fn=lambda w: 2.0 + 0.0 * w)


def identity_pair() -> EntropyPair:
    return EntropyPair(lambda w: w, lambda w: 1.0 + 0.0 * w, name="identity",
                       ddu_fn=lambda w: 0.0 * w)


@dataclass(frozen=True)
class KruzkovPair:
    """The modulus entropy ``|u - c|`` with flux ``sgn(c - u)(omega(c) - omega(u))``.

    ``sgn(0) = 0`` so the flux vanishes identically at coinciding states.
    """

    c: float
    name: str = "kruzkov"

    def u(self, w):
        return np.abs(np.asarray(w, dtype=float) - self.c)

    def du(self, w):
        return _sgn(np.asarray(w, dtype=float) - self.c)


def kruzkov_form(flux: FluxField, ubar: float, c: float) -> CoordinateForm:
    """Kruzkov entropy flux form at frozen states, with analytic partials."""
    sign = float(np.sign(c - ubar))
    coeffs = {}
    for idx, fn in flux.omega.coeffs.items():
        part = None
        if flux.omega.partials is not None and idx in flux.omega.partials:
            part = {ax: (lambda pts, _p=pfn, _s=sign: _s * (_p(pts, c) - _p(pts, ubar)))
                    for ax, pfn in flux.omega.partials[idx].items()}
        coeffs[idx] = _KruzkovCoeff(fn, sign, ubar, c, part)
    return CoordinateForm(flux.omega.degree, flux.omega.chart_dim, coeffs)


class _KruzkovCoeff:
    def __init__(self, fn, sign, ubar, c, partials):
        self.fn = fn
        self.sign = sign
        self.ubar = ubar
        self.cval = c
        self.partials = partials

    def __call__(self, pts):
        return self.sign * (self.fn(pts, self.cval) - self.fn(pts, self.ubar))


def adaptive_simpson(f: Callable, a: float, b: float, tol: float,
                     shape: tuple = (), max_depth: int = 28) -> np.ndarray:
    """Adaptive Simpson quadrature for array-valued integrands.

    ``f(v)`` may return an array; the refinement criterion is the max-norm
    Richardson error estimate.  Handles ``a > b`` with the usual sign flip.
    """
    if a == b:
        return np.zeros(shape)
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0

    def simp(lo, hi, flo, fmid, fhi):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, hi, flo, fmid, fhi, whole, depth):
        mid = 0.5 * (lo + hi)
        lm = f(0.5 * (lo + mid))
        rm = f(0.5 * (mid + hi))
        left = simp(lo, mid, flo, lm, fmid)
        right = simp(mid, hi, fmid, rm, fhi)
        err = np.max(np.abs(left + right - whole))
        if depth >= max_depth or err <= 15.0 * tol * max(1.0, hi - lo):
            return left + right + (left + right - whole) / 15.0
        return (recurse(lo, mid, flo, lm, fmid, left, depth + 1)
                + recurse(mid, hi, fmid, rm, fhi, right, depth + 1))

    fa = f(a)
    fm = f(0.5 * (a + b))
    fb = f(b)
    whole = simp(a, b, fa, fm, fb)
    return sign * recurse(a, b, fa, fm, fb, whole, 0)


# ---------------------------------------------------------------------------
# per-face entropy total fluxes
# ---------------------------------------------------------------------------

class SmoothFaceEntropy:
    """Entropy total fluxes of one slice for a smooth pair.

    ``q_omega(w)`` integrates the derivative-weighted q-derivative from the
    zero state with composite Gauss panels, so polynomial flux data is
    integrated exactly and every face shares one consistent construction.
    """

    def __init__(self, pair: EntropyPair, table: SpacelikeTable, n_panels: int = 32,
                 nodes_per_panel: int = 10):
        self.pair = pair
        self.table = table
        x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
        self._gx = 0.5 * (x + 1.0)
        self._gw = 0.5 * w
        self.n_panels = n_panels

    def q_omega(self, w) -> np.ndarray:
        """Shape-preserving entropy total flux per face; w is (m,) or (m, K)."""
        w = np.asarray(w, dtype=float)
        flat = w.reshape(w.shape[0], -1)
        out = np.empty_like(flat)
        for k in range(flat.shape[1]):
            out[:, k] = self._q_omega_vec(flat[:, k])
        return out.reshape(w.shape)

    def _q_omega_vec(self, w: np.ndarray) -> np.ndarray:
        # composite Gauss on [0, w] per face: v-nodes (m, P*G)
        m = w.shape[0]
        edges = np.linspace(0.0, 1.0, self.n_panels + 1)
        starts = edges[:-1][None, :, None] * w[:, None, None]
        widths = (edges[1] - edges[0]) * w[:, None, None]
        vnodes = starts + self._gx[None, None, :] * widths          # (m, P, G)
        vweights = np.broadcast_to(self._gw[None, None, :] * widths, vnodes.shape)
        vn = vnodes.reshape(m, -1)
        vw = vweights.reshape(m, -1)
        dq = self.table.dq(vn)                                       # (m, P*G)
        return np.sum(vw * self.pair.du(vn) * dq, axis=1)


def entropy_total_flux(tf_or_table, pair, ubar):
    """Entropy total flux along a face for any pair.

    For Kruzkov pairs this is the lattice formula
    ``q(u v c) - q(u ^ c)``; for smooth pairs the anchored integral of the
    derivative-weighted q-derivative.
    """
    if isinstance(pair, KruzkovPair):
        q = tf_or_table.q
        up = np.maximum(np.asarray(ubar, dtype=float), pair.c)
        dn = np.minimum(np.asarray(ubar, dtype=float), pair.c)
        return q(up) - q(dn)
    if isinstance(tf_or_table, SpacelikeTable):
        helper = SmoothFaceEntropy(pair, tf_or_table)
        w = np.asarray(ubar, dtype=float)
        return helper.q_omega(w)

    def integrand(v):
        return pair.du(v) * tf_or_table.dq(np.asarray(v))

    return adaptive_simpson(integrand, 0.0, float(ubar), SIMPSON_TOL)


# ---------------------------------------------------------------------------
# convex decomposition
# ---------------------------------------------------------------------------

@dataclass
class DecompositionStates:
    """Per-cell intermediate states of one slab (columns: 0 = left, 1 = right).

    ``face_states`` solves the single-face refresh of the update,
    ``anchored_states`` the neighbor-anchored variant; ``lam`` are the convex weights.  Both state
    families are produced by guarded total-flux inversion and satisfy the
    bracketing recorded in ``bracket_residual``.
    """

    slab_index: int
    face_states: np.ndarray        # (m, 2)
    anchored_states: np.ndarray   # (m, 2)
    lam: np.ndarray           # (m, 2)
    lam_hat: np.ndarray       # (m, 2)
    lam_hat_cell: np.ndarray  # (m,)
    delta_q: np.ndarray       # (m, 2): Q(u-, nb) - Q(u-, u-)
    delta_q_bar: np.ndarray   # (m, 2): Q(u-, nb) - Q(nb, nb)
    neighbor: np.ndarray      # (m, 2) neighbor states (ghosts filled in)
    q_face_states: np.ndarray      # (m, 2)
    q_anchored_states: np.ndarray        # (m, 2)
    bracket_residual: float


def _neighbors_per_cell(slab: Slab, values: np.ndarray) -> np.ndarray:
    u_left, u_right = slab.neighbor_states(values)
    # cell i: left neighbor state = left-cell state of its LEFT face,
    #          right neighbor state = right-cell state of its RIGHT face
    nb = np.empty((slab.m, 2))
    nb[:, 0] = u_left[slab.left_idx]
    nb[:, 1] = u_right[slab.right_idx]
    return nb


def _q_signed_pair(slab: Slab, side: int, u, v):
    """Q_{K, e}(u, v) for all cells on one side; u, v shaped (m,) or (m, K)."""
    if side == 1:
        return slab.vert.Q(u, v, faces=slab.right_idx)
    return -slab.vert.Q(v, u, faces=slab.left_idx)


def _g_signed(slab: Slab, side: int, w):
    if side == 1:
        return slab.vert.G(np.asarray(w, dtype=float), faces=slab.right_idx)
    return -slab.vert.G(np.asarray(w, dtype=float), faces=slab.left_idx)


def decomposition_states(slab: Slab, state: SliceState,
                         tol: float | None = None) -> DecompositionStates:
    """Intermediate states of the convex decomposition for one slab.

    Requires the CFL ratios of the slab to pass (image containment); an
    inversion failure therefore flags a CFL or flux-axiom breach.
    """
    tol = tol if tol is not None else slab.solver.cfg.inversion_tol
    values = state.values
    report = slab.lambdas()
    lam = report.lam
    lam_hat = report.lam_hat
    nb = _neighbors_per_cell(slab, values)

    m = slab.m
    delta_q = np.empty((m, 2))
    delta_q_bar = np.empty((m, 2))
    for side in (0, 1):
        q_uv = _q_signed_pair(slab, side, values, nb[:, side])
        q_uu = _g_signed(slab, side, values)
        q_vv = _g_signed(slab, side, nb[:, side])
        delta_q[:, side] = q_uv - q_uu
        delta_q_bar[:, side] = q_uv - q_vv

    zero = lam_hat <= 0.0
    flat_tol = 1e-11 * (1.0 + float(np.max(np.abs(state.fluxes))))
    if np.any(np.abs(delta_q[zero]) > flat_tol) or np.any(np.abs(delta_q_bar[zero]) > flat_tol):
        raise ValueOutsideImage("flux varies across a face whose lambda ratio is zero")

    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(zero, 0.0, delta_q / np.where(zero, 1.0, lam))
        scaled_bar = np.where(zero, 0.0, delta_q_bar / np.where(zero, 1.0, lam))

    q_nb = slab.table_plus.q(nb)
    q_own = slab.table_plus.q(values)
    target_tilde = q_own[:, None] - scaled
    target_bar = q_nb + scaled_bar

    face_states = np.empty((m, 2))
    anchored_states = np.empty((m, 2))
    for side in (0, 1):
        face_states[:, side] = np.where(zero[:, side], values,
                                   _safe_invert(slab, target_tilde[:, side], zero[:, side], tol))
        anchored_states[:, side] = np.where(zero[:, side], nb[:, side],
                                 _safe_invert(slab, target_bar[:, side], zero[:, side], tol))

    q_face_states = slab.table_plus.q(face_states)
    q_anchored_states = slab.table_plus.q(anchored_states)

    lo = np.minimum(q_own[:, None], q_nb)
    hi = np.maximum(q_own[:, None], q_nb)
    scale = 1.0 + np.abs(lo) + np.abs(hi)
    bracket = max(
        float(np.max(np.maximum(lo - q_face_states, q_face_states - hi) / scale)),
        float(np.max(np.maximum(lo - q_anchored_states, q_anchored_states - hi) / scale)))

    return DecompositionStates(
        slab_index=slab.j, face_states=face_states, anchored_states=anchored_states, lam=lam, lam_hat=lam_hat,
        lam_hat_cell=report.lam_hat_cell, delta_q=delta_q, delta_q_bar=delta_q_bar,
        neighbor=nb, q_face_states=q_face_states, q_anchored_states=q_anchored_states,
        bracket_residual=bracket)


def _safe_invert(slab: Slab, targets: np.ndarray, skip: np.ndarray, tol: float) -> np.ndarray:
    # inversion targets on skipped faces are replaced by a safe in-image value
    safe = np.where(skip, slab.table_plus.image_lo, targets)
    return slab.table_plus.invert(safe, tol=tol)


def convex_decomposition_residual(slab: Slab, decomp: DecompositionStates,
                                  state_next: SliceState) -> np.ndarray:
    """|sum_lam q(face_states) - q(u_plus)| per cell (the defining identity)."""
    recombined = np.sum(decomp.lam * decomp.q_face_states, axis=1)
    return np.abs(recombined - slab.table_plus.q(state_next.values))


# ---------------------------------------------------------------------------
# Kruzkov lattice checks
# ---------------------------------------------------------------------------

def kruzkov_lattice(slab: Slab, state: SliceState) -> np.ndarray:
    """Check parameters: state hull endpoints, slab values, consecutive midpoints."""
    values = [state.values]
    ghosts = slab.ghost_values()
    if ghosts is not None:
        values.append(np.asarray(ghosts))
    lo, hi = slab.solver.u_range
    vals = np.unique(np.round(np.concatenate(values + [np.array([lo, hi])]), 12))
    mids = 0.5 * (vals[:-1] + vals[1:])
    return np.unique(np.concatenate([vals, mids]))


def _q_omega_lattice(table: SpacelikeTable, w: np.ndarray, c: np.ndarray) -> np.ndarray:
    """q(w v c) - q(w ^ c) on every face; w (m,) or (m,K), c broadcastable."""
    w = np.asarray(w, dtype=float)
    return table.q(np.maximum(w, c)) - table.q(np.minimum(w, c))


def kruzkov_numerical_flux(slab: Slab, column: int, side: str, u, v, c):
    """Q(u v c, v v c) - Q(u ^ c, v ^ c) seen from the cell (scalar/broadcast)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c = np.asarray(c, dtype=float)
    hi = slab.numerical_flux(column, side, np.maximum(u, c), np.maximum(v, c))
    lo = slab.numerical_flux(column, side, np.minimum(u, c), np.minimum(v, c))
    return hi - lo


def _kruzkov_Q_lattice(slab: Slab, side: int, u: np.ndarray, v: np.ndarray,
                       c: np.ndarray) -> np.ndarray:
    """Kruzkov numerical flux per cell/side; u, v are (m,), c is (nc,)."""
    uu = np.maximum(u[:, None], c[None, :])
    vv = np.maximum(v[:, None], c[None, :])
    hi = _q_signed_pair(slab, side, uu, vv)
    uu = np.minimum(u[:, None], c[None, :])
    vv = np.minimum(v[:, None], c[None, :])
    lo = _q_signed_pair(slab, side, uu, vv)
    return hi - lo


def face_entropy_residuals(slab: Slab, decomp: DecompositionStates, state: SliceState,
                           c_values: np.ndarray) -> dict[str, np.ndarray]:
    """Positive parts of the per-face inequalities over the check lattice.

    Returns residual arrays of shape (m, 2, nc): ``dei`` for the interior
    flavor anchored at face_states, ``boundary`` for the neighbor flavor
    anchored at the neighbor state.
    """
    c = np.asarray(c_values, dtype=float)
    m = slab.m
    out_dei = np.empty((m, 2, c.size))
    out_bnd = np.empty((m, 2, c.size))
    values = state.values
    q_plus = slab.table_plus

    for side in (0, 1):
        nbv = decomp.neighbor[:, side]
        lam = decomp.lam[:, side]
        zero = decomp.lam_hat[:, side] <= 0.0
        q_ut = _q_omega_lattice(q_plus, np.broadcast_to(decomp.face_states[:, side, None],
                                                        (m, c.size)), c[None, :])
        q_ub = _q_omega_lattice(q_plus, np.broadcast_to(decomp.anchored_states[:, side, None],
                                                        (m, c.size)), c[None, :])
        q_own = _q_omega_lattice(q_plus, np.broadcast_to(values[:, None], (m, c.size)),
                                 c[None, :])
        q_nb = _q_omega_lattice(q_plus, np.broadcast_to(nbv[:, None], (m, c.size)),
                                c[None, :])
        Q_uv = _kruzkov_Q_lattice(slab, side, values, nbv, c)
        Q_uu = _kruzkov_Q_lattice(slab, side, values, values, c)
        Q_vv = _kruzkov_Q_lattice(slab, side, nbv, nbv, c)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_lam = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, lam))[:, None]
        out_dei[:, side, :] = np.maximum(0.0, q_ut - (q_own - inv_lam * (Q_uv - Q_uu)))
        out_bnd[:, side, :] = np.maximum(0.0, q_ub - (q_nb + inv_lam * (Q_uv - Q_vv)))
    return {"face_inequality": out_dei, "boundary": out_bnd}


def cell_entropy_residuals(slab: Slab, state: SliceState, state_next: SliceState,
                           c_values: np.ndarray) -> np.ndarray:
    """Positive part of the per-cell entropy inequality, shape (m, nc)."""
    c = np.asarray(c_values, dtype=float)
    m = slab.m
    values = state.values
    q_plus_new = _q_omega_lattice(slab.table_plus,
                                  np.broadcast_to(state_next.values[:, None], (m, c.size)),
                                  c[None, :])
    q_plus_old = _q_omega_lattice(slab.table_plus,
                                  np.broadcast_to(values[:, None], (m, c.size)), c[None, :])
    total = q_plus_new - q_plus_old
    nb = _neighbors_per_cell(slab, values)
    for side in (0, 1):
        Q_uv = _kruzkov_Q_lattice(slab, side, values, nb[:, side], c)
        Q_uu = _kruzkov_Q_lattice(slab, side, values, values, c)
        total = total + (Q_uv - Q_uu)
    return np.maximum(0.0, total)


def check_face_entropy_inequality(slab: Slab, column: int, side: str,
                                  pair: KruzkovPair, decomp: DecompositionStates,
                                  state: SliceState) -> tuple[float, float]:
    """(dei residual, boundary-flavor residual) of one cell/face for one pair."""
    res = face_entropy_residuals(slab, decomp, state, np.array([pair.c]))
    s = 0 if side == "left" else 1
    return float(res["face_inequality"][column, s, 0]), float(res["boundary"][column, s, 0])


def check_cell_entropy_inequality(slab: Slab, column: int, pair: KruzkovPair,
                                  state: SliceState, state_next: SliceState) -> float:
    return float(cell_entropy_residuals(slab, state, state_next,
                                        np.array([pair.c]))[column, 0])


# ---------------------------------------------------------------------------
# discrete boundary condition and smooth-pair numerical entropy fluxes
# ---------------------------------------------------------------------------

def _boundary_columns(slab: Slab) -> list[tuple[int, str, int]]:
    """(column, side name, vertical node index) of the slab's boundary faces."""
    if slab.periodic:
        return []
    return [(0, "left", 0), (slab.m - 1, "right", slab.m)]


def _adaptive_gauss(f_vec: Callable, a: float, b: float, tol: float,
                    depth: int = 0, max_depth: int = 18) -> float:
    """Adaptive Gauss quadrature; ``f_vec`` evaluates arrays of points."""
    if b <= a:
        return 0.0
    x10, w10 = np.polynomial.legendre.leggauss(10)
    x20, w20 = np.polynomial.legendre.leggauss(20)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    coarse = half * float(np.sum(w10 * f_vec(mid + half * x10)))
    fine = half * float(np.sum(w20 * f_vec(mid + half * x20)))
    if depth >= max_depth or abs(fine - coarse) <= tol * max(1.0, abs(fine)):
        return fine
    return (_adaptive_gauss(f_vec, a, mid, tol, depth + 1, max_depth)
            + _adaptive_gauss(f_vec, mid, b, tol, depth + 1, max_depth))


def smooth_entropy_numerical_flux(slab: Slab, column: int, side: str,
                                  pair: EntropyPair, u: float, v: float,
                                  tol: float = SIMPSON_TOL) -> float:
    """Numerical entropy flux for a smooth convex pair via Kruzkov superposition.

    Decomposes the pair into modulus entropies over the state hull (plus a
    linear part) and integrates the corresponding Kruzkov numerical fluxes
    against the second derivative; consistency with the anchored entropy
    total flux follows because the hull contains the zero state.  The
    parameter integral is split at the states and the face's critical
    points and refined adaptively across any remaining kinks.
    """
    lo, hi = slab.solver.u_range
    lo = min(lo, 0.0, u, v)
    hi = max(hi, 0.0, u, v)
    beta = 0.5 * (float(pair.du(lo)) + float(pair.du(hi)))
    base = float(slab.numerical_flux(column, side, u, v)) \
        - float(slab.signed_flux(column, side, 0.0)[0])

    sidx = 1 if side == "right" else 0
    node = slab.right_idx[column] if sidx == 1 else slab.left_idx[column]
    sign = 1.0 if sidx == 1 else -1.0

    def g_signed(w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return sign * slab.vert.G(w, faces=np.full(w.shape[0], node, dtype=int))

    def integrand(cv: np.ndarray) -> np.ndarray:
        cv = np.asarray(cv, dtype=float)
        qk = np.asarray(kruzkov_numerical_flux(slab, column, side, u, v, cv))
        anchor = g_signed(np.maximum(0.0, cv)) - g_signed(np.minimum(0.0, cv))
        return 0.5 * pair.ddu(cv) * (qk - anchor)

    crit = slab.vert.crit_w[node]
    splits = sorted({lo, hi, float(np.clip(u, lo, hi)), float(np.clip(v, lo, hi))}
                    | {float(w) for w in crit if np.isfinite(w) and lo < w < hi})
    total = 0.0
    for a, b in zip(splits[:-1], splits[1:]):
        total += _adaptive_gauss(integrand, a, b, tol)
    return beta * base + total


def check_discrete_boundary_condition(slab: Slab, column: int, side: str,
                                      pair, state: SliceState) -> float:
    """Residual of the discrete boundary condition on one boundary face.

    The entropy numerical flux difference must dominate the derivative-
    weighted plain flux difference; returns the positive part of the
    violation.
    """
    ghosts = slab.ghost_values()
    if ghosts is None:
        raise ValueError("discrete boundary condition applies to boundary faces only")
    b = ghosts[0] if side == "left" else ghosts[1]
    u_own = float(state.values[column])
    q_ub = float(slab.numerical_flux(column, side, u_own, b))
    q_bb = float(slab.numerical_flux(column, side, b, b))
    if isinstance(pair, KruzkovPair):
        qo_ub = float(kruzkov_numerical_flux(slab, column, side, u_own, b, pair.c))
        qo_bb = float(kruzkov_numerical_flux(slab, column, side, b, b, pair.c))
    else:
        qo_ub = smooth_entropy_numerical_flux(slab, column, side, pair, u_own, b)
        qo_bb = smooth_entropy_numerical_flux(slab, column, side, pair, b, b)
    lhs = float(pair.du(b)) * (q_ub - q_bb)
    rhs = qo_ub - qo_bb
    return max(0.0, lhs - rhs)


# ---------------------------------------------------------------------------
# global dissipation (per slab)
# ---------------------------------------------------------------------------

@dataclass
class DissipationReport:
    slab_index: int
    dissipation: float
    lhs_general: float
    rhs: float
    slack_general: float
    slack_square_variant: float | None

    def passed(self, tol: float) -> bool:
        ok = self.slack_general >= -tol
        if self.slack_square_variant is not None:
            ok = ok and self.slack_square_variant >= -tol
        return ok


def global_dissipation_report(slab: Slab, decomp: DecompositionStates,
                              state: SliceState, state_next: SliceState,
                              pair: EntropyPair | None = None) -> DissipationReport:
    """Per-slab dissipation estimate for a smooth convex pair (default square).

    The quadratic dissipation sum is weighted by the safety-factored
    derivative bounds of the outflow faces, which only weakens the left
    side, so a negative slack still indicates a genuine violation.
    """
    pair = pair if pair is not None else square_pair()
    hull = slab.solver.u_range
    c_mod = pair.convexity_modulus((min(hull[0], 0.0), max(hull[1], 0.0)))

    ent_plus = SmoothFaceEntropy(pair, slab.table_plus)
    ent_minus = SmoothFaceEntropy(pair, slab.table_minus)
    q_omega_plus = ent_plus.q_omega(state_next.values)
    q_omega_minus = ent_minus.q_omega(state.values)

    coeff = (slab.table_plus.dq_min ** 2 / slab.table_plus.dq_max)[:, None]
    diss = float(np.sum(decomp.lam * coeff
                        * (decomp.face_states - state_next.values[:, None]) ** 2))

    boundary_sum = 0.0
    for column, side, _node in _boundary_columns(slab):
        ghosts = slab.ghost_values()
        b = ghosts[0] if side == "left" else ghosts[1]
        boundary_sum += smooth_entropy_numerical_flux(
            slab, column, side, pair, float(state.values[column]), b)

    lhs = float(np.sum(q_omega_plus)) + c_mod * diss
    rhs = -boundary_sum + float(np.sum(q_omega_minus))
    slack = rhs - lhs

    square_like = abs(float(pair.u(0.0))) < 1e-14 and abs(float(pair.du(0.0))) < 1e-14
    slack_sq = None
    if square_like:
        # anchored convex pairs with vanishing slope at zero have q_omega >= 0
        slack_sq = rhs - c_mod * diss
    return DissipationReport(slab_index=slab.j, dissipation=diss, lhs_general=lhs,
                             rhs=rhs, slack_general=slack,
                             slack_square_variant=slack_sq)


def outflow_entropy_convexity_residual(slab: Slab, decomp: DecompositionStates,
                               state_next: SliceState, pair) -> np.ndarray:
    """Positive part of q_omega(u_plus) - sum lam q_omega(face_states), per cell."""
    if isinstance(pair, KruzkovPair):
        c = np.array([pair.c])
        q_new = _q_omega_lattice(slab.table_plus, state_next.values[:, None], c[None, :])[:, 0]
        q_ut = np.empty_like(decomp.face_states)
        for side in (0, 1):
            q_ut[:, side] = _q_omega_lattice(
                slab.table_plus, decomp.face_states[:, side][:, None], c[None, :])[:, 0]
    else:
        ent = SmoothFaceEntropy(pair, slab.table_plus)
        q_new = ent.q_omega(state_next.values)
        q_ut = ent.q_omega(decomp.face_states)
    return np.maximum(0.0, q_new - np.sum(decomp.lam * q_ut, axis=1))


# ---------------------------------------------------------------------------
# Kruzkov distances and contraction
# ---------------------------------------------------------------------------

def kruzkov_slice_distance(result_u: RunResult, result_v: RunResult, j: int,
                           table: SpacelikeTable | None = None) -> float:
    """Slice sum of Kruzkov entropy total fluxes between two runs."""
    if table is None:
        table = _shared_table(result_u, result_v, j)
    su = result_u.states[j].values
    sv = result_v.states[j].values
    up = np.maximum(su, sv)
    dn = np.minimum(su, sv)
    return float(np.sum(table.q(up) - table.q(dn)))


def _shared_table(ru: RunResult, rv: RunResult, j: int) -> SpacelikeTable:
    if ru.tri.n_columns != rv.tri.n_columns or ru.tri.n_slabs != rv.tri.n_slabs \
            or not np.allclose(ru.tri.breakpoints, rv.tri.breakpoints) \
            or not np.allclose(ru.tri.times, rv.tri.times):
        raise ValueError("contraction checks require both runs on the same triangulation")
    hull = (min(ru.u_range[0], rv.u_range[0]), max(ru.u_range[1], rv.u_range[1]))
    return SpacelikeTable(ru.tri, ru.flux, j, rule=ru.cfg.rule(), u_range=hull)


def boundary_bound_mass(flux: FluxField, face, u_range: tuple[float, float],
                        inflation: float = 1.05, n_samples: int = 33) -> float:
    """Mass of a sampled bound form dominating |du_omega| on a boundary face."""
    ts = np.linspace(face.t_lo, face.t_hi, n_samples)
    pts = np.stack([ts, np.full_like(ts, face.x_lo)], axis=-1)
    us = np.linspace(u_range[0], u_range[1], 17)
    worst = max(float(np.max(np.abs(flux.omega.du_coeffs[(0,)](pts, u)))) for u in us)
    return inflation * worst * (face.t_hi - face.t_lo)


@dataclass
class ContractionReport:
    distances: np.ndarray     # (n_slices,)
    budgets: np.ndarray       # (n_slabs,)
    slacks: np.ndarray        # (n_slabs,): d_{j+1} - d_j - budget_j
    max_slack: float
    trace_gap: float
    passed: bool

    def to_dict(self) -> dict:
        return {"distances": self.distances.tolist(),
                "budgets": self.budgets.tolist(),
                "slacks": self.slacks.tolist(),
                "max_slack": self.max_slack,
                "trace_gap": self.trace_gap,
                "passed": self.passed}


def contraction_check(result_u: RunResult, result_v: RunResult,
                      tol: float = 1e-9) -> ContractionReport:
    """Slice distances must not grow beyond the boundary-data budget.

    The budget of a slab is the sum over its boundary faces of the sampled
    sup of |u_B - v_B| times the mass of the inflated bound form; circle
    domains have empty budgets and the distance must be non-increasing.
    The trace gap compares the first interior slice distance with the
    Kruzkov form of the boundary data on the initial slice.
    """
    tri = result_u.tri
    hull = (min(result_u.u_range[0], result_v.u_range[0]),
            max(result_u.u_range[1], result_v.u_range[1]))
    distances = np.empty(tri.n_slices)
    tables = []
    for j in range(tri.n_slices):
        table = SpacelikeTable(tri, result_u.flux, j, rule=result_u.cfg.rule(), u_range=hull)
        tables.append(table)
        distances[j] = kruzkov_slice_distance(result_u, result_v, j, table=table)

    budgets = np.zeros(tri.n_slabs)
    if not tri.periodic:
        for j in range(tri.n_slabs):
            for face in tri.boundary_vertical_faces(j):
                ts = np.linspace(face.t_lo, face.t_hi, 33)
                pts = np.stack([ts, np.full_like(ts, face.x_lo)], axis=-1)
                du_sup = float(np.max(np.abs(result_u.bd.u_values(pts)
                                             - result_v.bd.u_values(pts))))
                budgets[j] += du_sup * boundary_bound_mass(result_u.flux, face, hull)

    slacks = distances[1:] - distances[:-1] - budgets
    max_slack = float(np.max(slacks)) if slacks.size else 0.0

    # Kruzkov form of the boundary data itself on the initial slice
    table0 = tables[0]
    ub = result_u.bd.u_values(table0.pts)
    vb = result_v.bd.u_values(table0.pts)
    dens_hi = table0._wx(table0.pts, np.maximum(ub, vb))
    dens_lo = table0._wx(table0.pts, np.minimum(ub, vb))
    d_bdata = float(np.sum(table0.weights * (dens_hi - dens_lo)))
    trace_gap = abs(float(distances[1] - d_bdata)) if tri.n_slices > 1 else 0.0

    return ContractionReport(distances=distances, budgets=budgets, slacks=slacks,
                             max_slack=max_slack, trace_gap=trace_gap,
                             passed=bool(max_slack <= tol))


# ---------------------------------------------------------------------------
# global entropy inequality (terms A..E)
# ---------------------------------------------------------------------------

@dataclass
class GlobalInequalityReport:
    lhs: float
    lhs_boundary_variant: float
    A: float
    B: float
    C: float
    D: float
    E: float
    tol: float
    stokes_gap: float = 0.0

    @property
    def rhs(self) -> float:
        return self.A + self.B + self.C + self.D + self.E

    @property
    def remainder_total(self) -> float:
        return abs(self.A) + abs(self.B) + abs(self.C) + abs(self.D) + abs(self.E)

    @property
    def satisfied(self) -> bool:
        return self.lhs <= self.rhs + self.tol and \
            self.lhs_boundary_variant <= self.rhs + self.tol

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "lhs_boundary_variant": self.lhs_boundary_variant,
                "A": self.A, "B": self.B, "C": self.C, "D": self.D, "E": self.E,
                "rhs": self.rhs, "remainder_total": self.remainder_total,
                "stokes_gap": self.stokes_gap, "satisfied": self.satisfied}


@dataclass(frozen=True)
class TestFunction:
    """Non-negative test function with optional analytic gradient."""

    __test__ = False  # not a pytest class despite the name

    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, pts):
        return np.asarray(self.fn(np.asarray(pts, dtype=float)), dtype=float)

    def gradient(self, pts, step: float = 1e-6):
        pts = np.asarray(pts, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(pts), dtype=float)
        out = np.empty(pts.shape)
        for axis in range(pts.shape[-1]):
            h = step * (1.0 + np.abs(pts[..., axis]))
            hi = pts.copy()
            lo = pts.copy()
            hi[..., axis] += h
            lo[..., axis] -= h
            out[..., axis] = (self(hi) - self(lo)) / (2.0 * h)
        return out


def _omega_density(slab: Slab, pair, table: SpacelikeTable, w: np.ndarray) -> np.ndarray:
    """Pointwise oriented entropy-flux density at the table's face nodes."""
    if isinstance(pair, KruzkovPair):
        c = pair.c
        sgn = _sgn(c - w)[:, None]
        dens = sgn * (table._wx(table.pts, c + 0.0 * table.pts[..., 0])
                      - table._wx(table.pts, w[:, None]))
        return table.orientation[:, None] * dens
    # smooth pair: composite Gauss in the state variable at every node
    x, gw = np.polynomial.legendre.leggauss(10)
    x = 0.5 * (x + 1.0)
    gw = 0.5 * gw
    panels = 16
    edges = np.linspace(0.0, 1.0, panels + 1)[:-1]
    frac = (edges[None, :, None] + x[None, None, :] / panels)
    vnodes = w[:, None, None] * frac                          # (m, P, G)
    vweights = (w[:, None, None] / panels) * gw[None, None, :]
    dens = np.zeros(table.pts.shape[:-1])
    for p in range(panels):
        for g in range(x.size):
            v = vnodes[:, p, g]
            dens = dens + vweights[:, p, g, None] * pair.du(v)[:, None] \
                * table._dwx(table.pts, v[:, None])
    return table.orientation[:, None] * dens


def _vertical_entropy_density(slab: Slab, pair, side: int, w: np.ndarray,
                              c: float | None = None) -> np.ndarray:
    """Entropy flux density at vertical-face nodes, oriented as the cell boundary."""
    idx = slab.right_idx if side == 1 else slab.left_idx
    sign = -1.0 if side == 1 else 1.0
    pts = slab.vert.pts[idx]
    if isinstance(pair, KruzkovPair):
        c = pair.c
        sgn = _sgn(c - w)[:, None]
        dens = sgn * (slab.vert._wt(pts, c + 0.0 * pts[..., 0])
                      - slab.vert._wt(pts, w[:, None]))
        return sign * dens
    raise NotImplementedError("vertical entropy densities are provided for Kruzkov pairs")


def global_entropy_inequality_report(result: RunResult, psi: TestFunction, pair,
                                     tol: float | None = None,
                                     validate_support: bool = True,
                                     solver: Solver | None = None) -> GlobalInequalityReport:
    """Evaluate the global entropy inequality and its remainder terms A..E.

    ``psi`` must be non-negative and supported away from the final slice.
    The left-hand side aggregates the volume term, the initial-slice term
    and the boundary numerical entropy fluxes; the boundary variant
    replaces the latter with the trace form implied by the discrete
    boundary condition.  The volume integrals are assembled through the
    per-cell Stokes identity from the same face quadratures as every
    other term, which keeps the inequality exact at the discrete level;
    ``stokes_gap`` reports how far an independent cell quadrature of the
    exterior derivative sits from that assembly.  Kruzkov pairs use
    closed-form densities.
    """
    tri = result.tri
    solver = solver if solver is not None else Solver(
        tri, result.flux, result.spec, result.bd, result.cfg)
    if tol is None:
        scale = max(1.0, max(float(np.max(np.abs(s.fluxes))) for s in result.states))
        tol = 1e-9 * (1.0 + scale)

    if validate_support:
        xs_chk = np.linspace(tri.breakpoints[0], tri.breakpoints[-1], 65)
        top = np.stack([np.full_like(xs_chk, tri.times[-1]), xs_chk], axis=-1)
        if float(np.max(np.abs(psi(top)))) > 1e-12:
            raise ValueError("test function must be supported away from the final slice")

    if not isinstance(pair, KruzkovPair):
        raise NotImplementedError(
            "the global inequality report currently evaluates Kruzkov pairs; "
            "smooth pairs reduce to them by superposition")

    c = pair.c
    flux = result.flux
    A = B = C = D = E = 0.0
    volume = 0.0
    volume_direct = 0.0
    initial = 0.0
    boundary = 0.0
    boundary_variant = 0.0

    # cell quadrature nodes (5x5 Gauss per cell, reused across slabs)
    gx, gw = np.polynomial.legendre.leggauss(5)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    cx, ct = np.meshgrid(gx, gx, indexing="ij")
    cwt = np.outer(gw, gw).ravel()

    for j in range(tri.n_slabs):
        slab = solver.slab(j)
        state = result.states[j]
        state_next = result.states[j + 1]
        decomp = decomposition_states(slab, state)
        values = state.values
        m = slab.m

        # psi averages on vertical faces (coordinate measure) and their
        # lambda-weighted per-cell combinations
        wsum = float(np.sum(slab.vert.weights))
        psi_vert = np.sum(slab.vert.weights * psi(slab.vert.pts), axis=-1) / wsum
        psi_face = np.stack([psi_vert[slab.left_idx], psi_vert[slab.right_idx]], axis=1)
        psi_cell_avg = np.sum(decomp.lam * psi_face, axis=1)

        table_plus = slab.table_plus
        q_omega = lambda w: _q_omega_lattice(table_plus, w, c)  # noqa: E731
        q_ut = np.stack([q_omega(decomp.face_states[:, s]) for s in (0, 1)], axis=1)
        q_new = q_omega(state_next.values)

        # A: lambda-weighted average differences against the outflow refresh
        A += float(np.sum(decomp.lam * (psi_cell_avg[:, None] - psi_face)
                          * (q_ut - q_new[:, None])))

        # B: vertical-face mismatch between averaged and pointwise psi
        for side in (0, 1):
            idx = slab.right_idx if side == 1 else slab.left_idx
            pts = slab.vert.pts[idx]
            dens = _vertical_entropy_density(slab, pair, side, values)
            w_t = slab.vert.weights
            psi_pt = psi(pts)
            B += float(np.sum((psi_face[:, side][:, None] - psi_pt) * w_t * dens))

        # C, D, E: outflow-face pointwise terms
        psi_plus = psi(table_plus.pts)
        wq = table_plus.node_weights()
        dens_ut = [
            _omega_density(slab, pair, table_plus, decomp.face_states[:, s]) for s in (0, 1)]
        dens_new = _omega_density(slab, pair, table_plus, state_next.values)
        dens_old = _omega_density(slab, pair, table_plus, values)
        raw_new = table_plus.density(state_next.values)
        du_new = pair.du(state_next.values)[:, None]
        for side in (0, 1):
            C -= float(np.sum(decomp.lam[:, side][:, None]
                              * (psi_cell_avg[:, None] - psi_plus)
                              * wq * (dens_ut[side] - dens_new)))
            raw_ut = table_plus.density(decomp.face_states[:, side])
            D -= float(np.sum(decomp.lam[:, side][:, None] * psi_plus * du_new
                              * wq * (raw_ut - raw_new)))
        E -= float(np.sum((psi_cell_avg[:, None] - psi_plus) * wq * (dens_new - dens_old)))

        # volume term assembled by the per-cell Stokes identity from the
        # same face quadratures (exact at the discrete level)
        table_minus = slab.table_minus
        psi_minus = psi(table_minus.pts)
        dens_minus = _omega_density(slab, pair, table_minus, values)
        stokes = float(np.sum(psi_plus * wq * dens_old)) \
            - float(np.sum(psi_minus * table_minus.node_weights() * dens_minus))
        for side in (0, 1):
            idx = slab.right_idx if side == 1 else slab.left_idx
            pts_v = slab.vert.pts[idx]
            dens_v = _vertical_entropy_density(slab, pair, side, values)
            stokes += float(np.sum(psi(pts_v) * slab.vert.weights * dens_v))
        volume -= stokes
        volume_direct -= _volume_term(tri, slab, flux, psi, values, c, cx, ct, cwt)

        # initial-slice term
        if j == 0:
            psi0 = psi(table_minus.pts)
            dens0 = _omega_density(slab, pair, table_minus, values)
            initial -= float(np.sum(psi0 * table_minus.node_weights() * dens0))

        # boundary terms
        ghosts = slab.ghost_values()
        for column, side, node in _boundary_columns(slab):
            b = ghosts[0] if side == "left" else ghosts[1]
            psi_b = psi_vert[node]
            boundary += psi_b * float(kruzkov_numerical_flux(
                slab, column, side, float(values[column]), b, c))
            s = 1 if side == "right" else 0
            g_hi = _g_signed(slab, s, np.full(m, max(b, c)))[column]
            g_lo = _g_signed(slab, s, np.full(m, min(b, c)))[column]
            q_omega_ghost = float(g_hi - g_lo)
            qd = float(slab.numerical_flux(column, side, float(values[column]), b)
                       - slab.numerical_flux(column, side, b, b))
            boundary_variant += psi_b * (q_omega_ghost
                                         + float(pair.du(b)) * qd)

    lhs = volume + initial + boundary
    lhs_variant = volume + initial + boundary_variant
    return GlobalInequalityReport(lhs=lhs, lhs_boundary_variant=lhs_variant,
                                  A=A, B=B, C=C, D=D, E=E, tol=tol,
                                  stokes_gap=abs(volume - volume_direct))


def _volume_term(tri, slab, flux, psi, values, c, cx, ct, cwt) -> float:
    """Sum over the slab's cells of the cell integrals of d(psi Omega)(u-)."""
    xs = tri.breakpoints
    t0, t1 = tri.times[slab.j], tri.times[slab.j + 1]
    xl = xs[:-1]
    widths = np.diff(xs)
    X = xl[:, None] + cx.ravel()[None, :] * widths[:, None]
    T = np.broadcast_to(t0 + ct.ravel() * (t1 - t0), X.shape)
    pts = np.stack([T, X], axis=-1)                                  # (m, 25, 2)
    area = widths[:, None] * (t1 - t0)
    w = cwt[None, :] * area

    grad = psi.gradient(pts)
    sgn = _sgn(c - values)[:, None]
    om = flux.omega
    omega_t = sgn * (om.coeffs[(0,)](pts, c) - om.coeffs[(0,)](pts, values[:, None]))
    omega_x = sgn * (om.coeffs[(1,)](pts, c) - om.coeffs[(1,)](pts, values[:, None]))
    integrand = grad[..., 0] * omega_x - grad[..., 1] * omega_t

    if om.partials is not None and (0,) in om.partials and (1,) in om.partials:
        d_omega_x_dt = sgn * (om.partials[(1,)][0](pts, c)
                              - om.partials[(1,)][0](pts, values[:, None]))
        d_omega_t_dx = sgn * (om.partials[(0,)][1](pts, c)
                              - om.partials[(0,)][1](pts, values[:, None]))
        integrand = integrand + psi(pts) * (d_omega_x_dt - d_omega_t_dx)
    else:
        h = 1e-6
        shift = np.zeros_like(pts)
        shift[..., 0] = h * (1.0 + np.abs(pts[..., 0]))
        wx_hi = sgn * (om.coeffs[(1,)](pts + shift, c)
                       - om.coeffs[(1,)](pts + shift, values[:, None]))
        wx_lo = sgn * (om.coeffs[(1,)](pts - shift, c)
                       - om.coeffs[(1,)](pts - shift, values[:, None]))
        d_omega_x_dt = (wx_hi - wx_lo) / (2.0 * shift[..., 0])
        shift[...] = 0.0
        shift[..., 1] = h * (1.0 + np.abs(pts[..., 1]))
        wt_hi = sgn * (om.coeffs[(0,)](pts + shift, c)
                       - om.coeffs[(0,)](pts + shift, values[:, None]))
        wt_lo = sgn * (om.coeffs[(0,)](pts - shift, c)
                       - om.coeffs[(0,)](pts - shift, values[:, None]))
        d_omega_t_dx = (wt_hi - wt_lo) / (2.0 * shift[..., 1])
        integrand = integrand + psi(pts) * (d_omega_x_dt - d_omega_t_dx)

    return float(np.sum(w * integrand))


# ---------------------------------------------------------------------------
# run-level verification
# ---------------------------------------------------------------------------

@dataclass
class CheckSummary:
    name: str
    max_residual: float
    tol: float
    n_checked: int
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "max_residual": self.max_residual,
                "tol": self.tol, "n_checked": self.n_checked, "passed": self.passed}


@dataclass
class EntropyReport:
    checks: list[CheckSummary]
    per_slab: dict[str, list[float]]
    tol: float
    c_lattice_sizes: list[int]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> dict:
        return {"passed": self.passed, "tol": self.tol,
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps({**self.summary(), "per_slab": self.per_slab}, indent=2)

    def residual_rows(self) -> Iterable[tuple]:
        for name, series in self.per_slab.items():
            for j, value in enumerate(series):
                yield (name, j, value)


def verify_run(result: RunResult, tol: float | None = None,
               solver: Solver | None = None,
               include_dissipation: bool = True) -> EntropyReport:
    """Run every discrete entropy check over a finished run.

    The Kruzkov family is checked on the per-slab lattice (state hull
    endpoints, slab values and consecutive midpoints); the quadratic pair
    drives the dissipation estimate.  The default tolerance scales with
    the slab flux magnitude.
    """
    tri = result.tri
    solver = solver if solver is not None else Solver(
        tri, result.flux, result.spec, result.bd, result.cfg)

    flux_scale = max(float(np.max(np.abs(s.fluxes))) for s in result.states)
    tol = tol if tol is not None else 1e-9 * (1.0 + flux_scale)

    names = ["decomposition_identity", "bracketing", "face_inequality", "face_inequality_neighbor",
             "cell_inequality", "boundary_condition", "outflow_convexity_square",
             "conservation_identity"]
    if include_dissipation:
        names.append("dissipation_slack")
    per_slab: dict[str, list[float]] = {n: [] for n in names}
    lattice_sizes = []

    for j in range(tri.n_slabs):
        slab = solver.slab(j)
        state = result.states[j]
        state_next = result.states[j + 1]
        decomp = decomposition_states(slab, state)
        c_vals = kruzkov_lattice(slab, state)
        lattice_sizes.append(int(c_vals.size))

        per_slab["decomposition_identity"].append(
            float(np.max(convex_decomposition_residual(slab, decomp, state_next))))
        per_slab["bracketing"].append(decomp.bracket_residual)

        face_res = face_entropy_residuals(slab, decomp, state, c_vals)
        per_slab["face_inequality"].append(float(np.max(face_res["face_inequality"])))
        per_slab["face_inequality_neighbor"].append(float(np.max(face_res["boundary"])))
        per_slab["cell_inequality"].append(
            float(np.max(cell_entropy_residuals(slab, state, state_next, c_vals))))

        bc = 0.0
        ghosts = slab.ghost_values()
        for column, side, _node in _boundary_columns(slab):
            b = ghosts[0] if side == "left" else ghosts[1]
            u_own = float(state.values[column])
            q_ub = float(slab.numerical_flux(column, side, u_own, b))
            q_bb = float(slab.numerical_flux(column, side, b, b))
            qo_ub = np.asarray(kruzkov_numerical_flux(slab, column, side, u_own, b, c_vals))
            qo_bb = np.asarray(kruzkov_numerical_flux(slab, column, side, b, b, c_vals))
            lhs = _sgn(b - c_vals) * (q_ub - q_bb)
            bc = max(bc, float(np.max(np.maximum(0.0, lhs - (qo_ub - qo_bb)))))
        per_slab["boundary_condition"].append(bc)

        per_slab["outflow_convexity_square"].append(float(np.max(
            outflow_entropy_convexity_residual(slab, decomp, state_next, square_pair()))))

        per_slab["conservation_identity"].append(float(np.max(np.abs(
            slab.table_plus.q(state_next.values) - state_next.fluxes))))

        if include_dissipation:
            rep = global_dissipation_report(slab, decomp, state, state_next)
            worst = max(0.0, -rep.slack_general)
            if rep.slack_square_variant is not None:
                worst = max(worst, -rep.slack_square_variant)
            per_slab["dissipation_slack"].append(worst)

    checks = []
    for name in names:
        series = per_slab[name]
        worst = max(series) if series else 0.0
        checks.append(CheckSummary(name=name, max_residual=float(worst), tol=tol,
                                   n_checked=len(series), passed=bool(worst <= tol)))
    return EntropyReport(checks=checks, per_slab=per_slab, tol=tol,
                         c_lattice_sizes=lattice_sizes)
