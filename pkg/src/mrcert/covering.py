"""One-dimensional coverings by intervals (t - rho(t), t + rho(t)).

``besicovitch_cover`` builds a subdivision a = tau_0 < ... < tau_N = b with
centers t_i such that both neighbouring tau's lie within rho(t_i) of t_i and
min(rho(t_i), |I|) <= tau_i - tau_{i-1} <= 2 rho(t_i).

``uniform_cover`` does the same with the constant radius
eps_0 = ||1/rho||_{L^r}^{-r*}, using only centers where rho exceeds eps_0.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .core import (
    CoveringError,
    IntegrabilityError,
    Interval,
    InvalidArgument,
    ResolutionError,
    Subdivision,
)

log = logging.getLogger(__name__)

DEFAULT_NODES = 4097  # 4096 cells, so dyadic radii land on nodes
_REL_TOL = 1e-12
_SNAP = 1e-9


def _vectorised(fn: Callable, t: np.ndarray) -> np.ndarray:
    try:
        with np.errstate(all="ignore"):
            out = np.asarray(fn(t), dtype=float)
        if out.shape == t.shape:
            return out
    except Exception:  # fall back to pointwise evaluation
        pass
    vals = []
    for s in t:
        try:
            with np.errstate(all="ignore"):
                vals.append(float(fn(float(s))))
        except (ZeroDivisionError, ValueError, OverflowError):
            vals.append(math.nan)
    return np.array(vals)


@dataclass(frozen=True)
class RhoProfile:
    """A positive radius function sampled on ``n_nodes`` equispaced nodes.

    The endpoint samples may be zero or non-finite (a singular endpoint such as
    sqrt(t) at 0); such nodes are never used as centers and are treated as
    open ends by the quadrature.
    """

    interval: Interval
    eval: Callable
    n_nodes: int = DEFAULT_NODES
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_nodes < 3:
            raise InvalidArgument("need at least 3 sample nodes")
        a, b = self.interval.a, self.interval.b
        nodes = np.linspace(a, b, int(self.n_nodes))
        values = _vectorised(self.eval, nodes)
        inner = values[1:-1]
        if not (np.all(np.isfinite(inner)) and np.all(inner > 0)):
            raise InvalidArgument("rho must be finite and positive at every interior node")
        nodes.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, fn: Callable, a: float, b: float, n_nodes: int = DEFAULT_NODES) -> "RhoProfile":
        return cls(Interval(a, b), fn, n_nodes)

    @classmethod
    def from_samples(cls, times, values, n_nodes: Optional[int] = None) -> "RhoProfile":
        """Piecewise-linear interpolation of tabulated values."""
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise InvalidArgument("times and values must be 1-D of equal length >= 2")
        fn = lambda t: np.interp(t, times, values)  # noqa: E731
        return cls(Interval(times[0], times[-1]), fn, n_nodes or max(DEFAULT_NODES, times.size))

    def usable(self) -> np.ndarray:
        return np.isfinite(self.values) & (self.values > 0)

    def __call__(self, t):
        return self.eval(t)


# -- the covering lemma ---------------------------------------------------------

def _greedy_balls(x, r, ok, a, b, tol):
    """Greedy left-to-right cover by closed balls [x - r, x + r] over grid centers."""
    left, right = x - r, x + r
    chosen = []
    frontier = a
    while True:
        cand = ok & (left <= frontier + tol)
        reach = np.where(cand, right, -np.inf)
        best = int(np.argmax(reach))  # first maximiser, i.e. the leftmost
        if not cand.any() or reach[best] <= frontier + tol:
            raise CoveringError(f"covering stalled at t = {frontier:.17g}")
        if reach[best] >= b - tol:
            # last ball: the tightest one that still reaches b, nearest the middle
            last = cand & (right >= b - tol)
            idx = np.nonzero(last)[0]
            mid = 0.5 * (frontier + b)
            order = np.lexsort((np.abs(x[idx] - mid), r[idx]))
            chosen.append(int(idx[order[0]]))
            return chosen
        chosen.append(best)
        frontier = reach[best]


def _prune(idx, x, r):
    """Drop nested balls, then the middle one of any triple with a common point."""
    idx = sorted(idx, key=lambda i: (x[i] - r[i], -(x[i] + r[i])))
    kept = []
    far = -np.inf
    for i in idx:
        if x[i] + r[i] <= far:
            continue
        kept.append(i)
        far = x[i] + r[i]
    changed = True
    while changed:
        changed = False
        for k in range(len(kept) - 2):
            i, j = kept[k], kept[k + 2]
            if x[j] - r[j] < x[i] + r[i]:
                del kept[k + 1]
                changed = True
                break
    return kept


def _paper_taus(kept, x, r, a, b):
    t = x[kept]
    rad = r[kept]
    inner = 0.5 * (t[1:] + t[:-1]) + 0.5 * (rad[:-1] - rad[1:])
    return np.concatenate([[a], inner, [b]]), t, rad


def _merge(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Union of closed intervals [lo_i, hi_i] as sorted disjoint arrays."""
    keep = lo <= hi
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return lo, hi
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    run = np.maximum.accumulate(hi)
    start = np.ones(lo.size, dtype=bool)
    start[1:] = lo[1:] > run[:-1]
    group = np.cumsum(start) - 1
    S = lo[start]
    E = np.full(S.size, -np.inf)
    np.maximum.at(E, group, hi)
    return S, E


def _first_in(S, E, lo):
    """Smallest point of the set union [S_k, E_k] that is >= lo (inf if none); vectorised over lo."""
    k = np.searchsorted(E, lo, side="left")
    inside = k < S.size
    kk = np.minimum(k, S.size - 1)
    return np.where(inside, np.maximum(S[kk], lo), np.inf)


def _layered_search(x, r, ok, L, tol):
    """Fewest-interval subdivision with centers on grid nodes and free tau's.

    Breadth-first over the set of positions reachable as tau_d: a center x_c
    extends a position f with x_c - r_c <= f < x_c (f = a, x_c = a allowed) to
    any y with x_c < y <= x_c + r_c and y - f >= min(r_c, L).  Reachable sets
    are unions of intervals, so each layer costs O(m log m).
    Returns (taus, centers, radii) or None when b cannot be reached.
    """
    a, b = x[0], x[-1]
    tol = 0.25 * tol  # stay strictly inside the tolerance used by Subdivision
    usable = ok & np.isfinite(r) & (r > 0)
    xc, rc = x[usable], r[usable]
    need = np.minimum(rc, L) - tol
    wlo = xc - rc - tol
    top = np.minimum(xc + rc + tol, b)

    def reach(S, E, first_layer):
        fstar = _first_in(S, E, wlo)
        valid = (fstar <= xc) if first_layer else (fstar < xc)
        lo = np.maximum(fstar + need, xc + tol)
        lo_end = np.maximum(fstar + need, xc)  # t_N = b is allowed
        ends_at_b = valid & (lo_end <= b) & (xc + rc + tol >= b)
        return valid, lo, ends_at_b

    layers = [(np.array([a]), np.array([a]))]
    max_layers = int(np.ceil(L / max(rc.min(initial=np.inf), tol))) + 3 if rc.size else 0
    while len(layers) <= max_layers:
        S, E = layers[-1]
        valid, lo, ends_at_b = reach(S, E, len(layers) == 1)
        if ends_at_b.any():
            break
        S2, E2 = _merge(lo[valid], top[valid])
        if S2.size == 0 or (S2.size == S.size and np.array_equal(S2, S) and np.array_equal(E2, E)):
            return None
        layers.append((S2, E2))
    else:
        return None

    taus = [b]
    centers, radii = [], []
    y = b
    for depth in range(len(layers) - 1, -1, -1):
        S, E = layers[depth]
        valid, lo, ends_at_b = reach(S, E, depth == 0)
        if depth == len(layers) - 1:
            hits = np.nonzero(ends_at_b)[0]
        else:
            hits = np.nonzero(valid & (lo <= y) & (top >= y))[0]
        c = int(hits[0])
        ub = min(y - need[c], xc[c])
        k = int(np.searchsorted(S, ub, side="right")) - 1
        prev = min(E[k], ub)
        if depth > 0 and prev >= xc[c]:
            prev = 0.5 * (max(S[k], wlo[c]) + xc[c])
        if depth == 0:
            prev = a
        centers.append(xc[c])
        radii.append(rc[c])
        taus.append(prev)
        y = prev
    taus.reverse()
    centers.reverse()
    radii.reverse()
    return np.array(taus), np.array(centers), np.array(radii)


def besicovitch_cover(rho: RhoProfile, *, method: str = "auto") -> Subdivision:
    """Cover [a, b] with intervals (t_i - rho(t_i), t_i + rho(t_i)).

    ``method='greedy'`` is the classical construction: greedy cover, pruning of
    nested balls and triple overlaps, tau_i at the middle of consecutive
    overlaps.  Its first and last intervals can come out shorter than
    rho(t_i); ``method='auto'`` then falls back to ``method='layered'``, a
    breadth-first search for the fewest intervals with centers on grid nodes.
    """
    x, r = rho.nodes, rho.values
    ok = rho.usable()
    a, b = rho.interval.a, rho.interval.b
    L = b - a
    tol = _REL_TOL * L
    if method not in ("auto", "greedy", "layered"):
        raise InvalidArgument(f"unknown method {method!r}")
    if method in ("auto", "greedy"):
        chosen = _greedy_balls(x, r, ok, a, b, tol)
        kept = _prune(chosen, x, r)
        taus, t, rad = _paper_taus(kept, x, r, a, b)
        try:
            return Subdivision(taus, t, rad)
        except CoveringError as err:
            if method == "greedy":
                raise
            log.debug("greedy covering rejected (%s); using layered search", err)
    found = _layered_search(x, r, ok, L, tol)
    if found is None:
        raise CoveringError(f"no admissible subdivision on the {x.size}-node grid")
    return Subdivision(*found)


# -- Markov-type uniform covering ----------------------------------------------------

def _simpson_open(x: np.ndarray, f: np.ndarray, fn: Optional[Callable]) -> float:
    """Composite Simpson, with a one-point open rule on an end cell whose endpoint value is singular."""
    lo, hi = 0, x.size - 1
    total = 0.0
    if not np.isfinite(f[0]):
        lo = 1
        mid = 0.5 * (x[0] + x[1])
        total += (x[1] - x[0]) * (float(fn(mid)) if fn is not None else f[1])
    if not np.isfinite(f[-1]):
        hi = x.size - 2
        mid = 0.5 * (x[-2] + x[-1])
        total += (x[-1] - x[-2]) * (float(fn(mid)) if fn is not None else f[-2])
    seg = f[lo:hi + 1]
    if not np.all(np.isfinite(seg)):
        raise IntegrabilityError("integrand is singular inside the interval")
    return total + float(integrate.simpson(seg, x=x[lo:hi + 1]))


def inverse_power_integral(rho: RhoProfile, r: float) -> float:
    """int_I rho^{-r} dt.

    Composite Simpson on the sample grid decides integrability (the value may
    not grow by more than 25% when the grid is refined twofold); adaptive
    quadrature of the callable then supplies the reported value when it
    converges cleanly and an endpoint sample is singular, since Simpson is
    only O(h^{1/4})-accurate next to a singularity such as 1/sqrt(t) at 0.
    """
    r = float(r)
    if not r > 1:
        raise InvalidArgument("r must exceed 1")
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f = np.where(rho.values > 0, rho.values, np.nan) ** (-r)
    f[~np.isfinite(f)] = np.inf
    fn = lambda t: float(rho.eval(t)) ** (-r)  # noqa: E731
    fine = _simpson_open(rho.nodes, f, fn)
    coarse_x = rho.nodes[:: 2] if (rho.nodes.size % 2 == 1) else np.append(rho.nodes[:-1:2], rho.nodes[-1])
    coarse_f = f[:: 2] if (rho.nodes.size % 2 == 1) else np.append(f[:-1:2], f[-1])
    coarse = _simpson_open(coarse_x, coarse_f, fn)
    if not (math.isfinite(fine) and fine > 0) or fine > 1.25 * coarse:
        raise IntegrabilityError(
            f"int rho^-{r} does not settle under grid refinement ({coarse:.6g} -> {fine:.6g})")
    if np.all(np.isfinite(f)):
        return fine
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fn, rho.interval.a, rho.interval.b, limit=500,
                                      epsabs=0.0, epsrel=1e-11)
        except (integrate.IntegrationWarning, ZeroDivisionError, ValueError, OverflowError):
            return fine
    if math.isfinite(val) and err <= 1e-8 * val and abs(val - fine) <= 0.5 * fine:
        return float(val)
    return fine


def inverse_norm_power(rho: RhoProfile, r: float) -> float:
    """||1/rho||_{L^r}^{r*} with r* = r / (r - 1)."""
    r = float(r)
    rstar = r / (r - 1.0)
    return inverse_power_integral(rho, r) ** (rstar / r)


def n_bounds(rho: RhoProfile, r: float) -> tuple[int, int]:
    """(ceil(|I| X / 2), max(floor(|I| X), 1)) with X = ||1/rho||_{L^r}^{r*}.

    A relative snap of 1e-9 absorbs quadrature round-off at exact integers.
    """
    val = rho.interval.length * inverse_norm_power(rho, r)
    n_min = max(math.ceil(0.5 * val * (1 - _SNAP)), 1)
    n_max = max(math.floor(val * (1 + _SNAP)), 1)
    return n_min, n_max


def uniform_eps0(rho: RhoProfile, r: float) -> float:
    return 1.0 / inverse_norm_power(rho, r)


def uniform_cover(rho: RhoProfile, r: float, *, max_intervals: int = 10_000_000) -> Subdivision:
    """Subdivision with every radius equal to eps_0 and centers in {rho > eps_0}.

    Tries N = ceil(|I| / (2 eps_0)), ... equal intervals with centers at the
    midpoints (or, failing that, anywhere in the admissible window where rho
    exceeds eps_0).  Interval lengths lie in [eps_0, 2 eps_0], so N is within
    ``n_bounds``.
    """
    eps0 = uniform_eps0(rho, r)
    a, b = rho.interval.a, rho.interval.b
    L = b - a
    n_lo = max(math.ceil(L / (2 * eps0) * (1 - _SNAP)), 1)
    n_hi = max(math.floor(L / eps0 * (1 + _SNAP)), 1)
    if n_lo > max_intervals:
        raise ResolutionError(f"eps_0 = {eps0:.3g} needs more than {max_intervals} intervals")
    if eps0 >= L * (1 - _SNAP):
        # one interval of radius eps_0 already covers I; no center condition needed
        return Subdivision([a, b], [0.5 * (a + b)], [max(eps0, 0.5 * L)])
    for n in range(n_lo, min(n_hi, n_lo + 8) + 1):
        taus = a + (b - a) * np.arange(n + 1) / n
        taus[-1] = b
        centers = _centers_in_window(rho, taus, eps0)
        if centers is not None:
            try:
                return Subdivision(taus, centers, np.full(n, eps0))
            except Exception:
                continue
    x = rho.nodes
    if eps0 > 2 * (x[1] - x[0]):
        dense = rho.usable() & (rho.values > eps0)
        found = _layered_search(x, np.where(dense, eps0, np.nan), dense, L, _REL_TOL * L)
        if found is not None:
            return Subdivision(*found)
    raise ResolutionError(
        f"{{rho > eps_0}} is not eps_0-dense at the sampling resolution (eps_0 = {eps0:.6g})")


def _centers_in_window(rho: RhoProfile, taus: np.ndarray, eps0: float, tries: int = 9):
    """Pick t_i in (tau_{i-1}, tau_i) within eps_0 of both ends and with rho(t_i) > eps_0."""
    lo = np.maximum(taus[1:] - eps0, taus[:-1])
    hi = np.minimum(taus[:-1] + eps0, taus[1:])
    if np.any(lo > hi):
        return None
    centers = np.full(lo.size, np.nan)
    todo = np.ones(lo.size, dtype=bool)
    # midpoint first, then points spreading out towards the window edges
    fractions = [0.5] + [f for k in range(1, tries) for f in (0.5 - k / (2 * tries), 0.5 + k / (2 * tries))]
    for frac in fractions:
        idx = np.nonzero(todo)[0]
        if idx.size == 0:
            break
        cand = lo[idx] + frac * (hi[idx] - lo[idx])
        inside = (cand > taus[idx]) | (idx == 0)
        inside &= (cand < taus[idx + 1]) | (idx == lo.size - 1)
        good = inside & (_vectorised(rho.eval, cand) > eps0)
        centers[idx[good]] = cand[good]
        todo[idx[good]] = False
    return None if todo.any() else centers
