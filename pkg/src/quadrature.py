"""
Adaptive Gauss-Kronrod (7/15) quadrature for vectorised, array-valued integrands.

The integrand receives a 1-D array of nodes and returns an array whose first
axis runs over the nodes, so orbit norms, weak orbit values, Lyapunov
integrands and Gramian integrands all share one engine. Infinite horizons
are handled by integrating up to a finite horizon and extending it until a
caller-supplied analytic tail bound is small enough.
"""

import heapq
import math
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
import structlog

from .config import get_settings
from .exceptions import QuadratureBudgetError

logger = structlog.get_logger(__name__)

Integrand = Callable[[np.ndarray], np.ndarray]

# Kronrod abscissae on [0, 1] (mirrored); odd indices are the 7-point Gauss nodes.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# Full 15-node rule on [-1, 1].
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GAUSS = np.zeros(15)
_GAUSS[[1, 3, 5]] = _WG[:3]
_GAUSS[[13, 11, 9]] = _WG[:3]
_GAUSS[7] = _WG[3]

_EPS = np.finfo(float).eps
_CHUNK = 64


class QuadratureOutcome(NamedTuple):
    value: np.ndarray
    error: float
    nodes: int
    tail_bound: float = 0.0
    horizon: float = 0.0


class _Panel(NamedTuple):
    neg_error: float
    a: float
    b: float
    value: np.ndarray
    error: float


def _norm(values: np.ndarray) -> np.ndarray:
    """Frobenius norm over all trailing axes."""
    if values.ndim == 1:
        return np.abs(values)
    return np.sqrt(np.sum(np.abs(values.reshape(values.shape[0], -1)) ** 2, axis=1))


def _apply_rule(f: Integrand, panels: Sequence[tuple]) -> List[_Panel]:
    """Evaluate the 15-point rule on several panels with one integrand call per chunk."""
    out: List[_Panel] = []
    for start in range(0, len(panels), _CHUNK):
        chunk = panels[start:start + _CHUNK]
        a = np.array([p[0] for p in chunk])
        b = np.array([p[1] for p in chunk])
        half = 0.5 * (b - a)
        center = 0.5 * (a + b)
        t = (center[:, None] + half[:, None] * _NODES[None, :]).reshape(-1)
        values = np.asarray(f(t))
        values = values.reshape((len(chunk), 15) + values.shape[1:])
        for i in range(len(chunk)):
            fv = values[i]
            resk = np.tensordot(_KRONROD, fv, axes=1)
            resg = np.tensordot(_GAUSS, fv, axes=1)
            mean = 0.5 * resk
            resabs = float(np.dot(_KRONROD, _norm(fv))) * half[i]
            resasc = float(np.dot(_KRONROD, _norm(fv - mean[None, ...]))) * half[i]
            err = float(np.linalg.norm(np.ravel((resk - resg) * half[i])))
            if resasc != 0.0 and err != 0.0:
                err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
            if resabs > np.finfo(float).tiny / (50.0 * _EPS):
                err = max(50.0 * _EPS * resabs, err)
            out.append(_Panel(-err, float(a[i]), float(b[i]), resk * half[i], err))
    return out


def partition(
    a: float,
    b: float,
    breakpoints: Optional[Sequence[float]] = None,
    max_step: Optional[float] = None,
) -> List[tuple]:
    """Initial panels from breakpoints, each no longer than ``max_step``."""
    points = sorted({a, b, *[p for p in (breakpoints or []) if a < p < b]})
    panels = []
    for left, right in zip(points[:-1], points[1:]):
        pieces = 1
        if max_step is not None and max_step > 0:
            pieces = max(1, int(math.ceil((right - left) / max_step)))
        edges = np.linspace(left, right, pieces + 1)
        panels.extend(zip(edges[:-1], edges[1:]))
    return panels


def geometric_breakpoints(horizon: float, first: float) -> List[float]:
    """0, first, 2 first, 4 first, ... up to ``horizon``."""
    points = [0.0]
    step = max(first, horizon * 1e-12)
    while step < horizon:
        points.append(step)
        step *= 2.0
    points.append(horizon)
    return points


def integrate(
    f: Integrand,
    a: float,
    b: float,
    *,
    rel_tol: float,
    abs_tol: float = 0.0,
    breakpoints: Optional[Sequence[float]] = None,
    max_step: Optional[float] = None,
    node_budget: Optional[int] = None,
) -> QuadratureOutcome:
    """Globally adaptive bisection until error <= max(abs_tol, rel_tol * |value|)."""
    budget = node_budget or get_settings().node_budget
    if b <= a:
        sample = np.asarray(f(np.array([a])))
        return QuadratureOutcome(np.zeros(sample.shape[1:], dtype=sample.dtype), 0.0, 1)

    heap = _apply_rule(f, partition(a, b, breakpoints, max_step))
    nodes = 15 * len(heap)
    heapq.heapify(heap)
    total = sum(p.value for p in heap)
    error = sum(p.error for p in heap)
    frozen: List[_Panel] = []

    while error > max(abs_tol, rel_tol * float(np.linalg.norm(np.ravel(total)))):
        if not heap:
            break
        if nodes + 30 > budget:
            logger.warning("Quadrature node budget exhausted", nodes=nodes, error=error)
            raise QuadratureBudgetError(
                f"tolerance not reached within {budget} nodes (error {error:.3e})",
                estimate=total, error=error, nodes=nodes,
            )
        worst = heapq.heappop(heap)
        mid = 0.5 * (worst.a + worst.b)
        if mid - worst.a <= 100.0 * _EPS * max(abs(mid), 1.0):
            frozen.append(worst)
            continue
        left, right = _apply_rule(f, [(worst.a, mid), (mid, worst.b)])
        nodes += 30
        total = total - worst.value + left.value + right.value
        error = error - worst.error + left.error + right.error
        heapq.heappush(heap, left)
        heapq.heappush(heap, right)

    panels = heap + frozen
    total = sum(p.value for p in panels)
    error = float(sum(p.error for p in panels))
    if error > max(abs_tol, rel_tol * float(np.linalg.norm(np.ravel(total)))):
        raise QuadratureBudgetError(
            f"roundoff limit reached before tolerance (error {error:.3e})",
            estimate=total, error=error, nodes=nodes,
        )
    return QuadratureOutcome(np.asarray(total), error, nodes)


def integrate_to_infinity(
    f: Integrand,
    tail_bound: Callable[[float], float],
    horizon: float,
    *,
    rel_tol: float,
    abs_tol: float = 0.0,
    first_step: float = 1.0,
    max_step: Optional[float] = None,
    node_budget: Optional[int] = None,
    max_extensions: int = 40,
) -> QuadratureOutcome:
    """Integral over [0, inf) as [0, T] plus a certified tail bound.

    ``tail_bound(T)`` must bound the norm of the integral over (T, inf) in the
    norm the tolerance is measured in: the absolute value for scalars and the
    Frobenius norm for array-valued integrands.
    The horizon doubles until the tail is below the requested tolerance.
    """
    budget = node_budget or get_settings().node_budget
    horizon = max(horizon, first_step)
    head = integrate(
        f, 0.0, horizon, rel_tol=rel_tol, abs_tol=abs_tol,
        breakpoints=geometric_breakpoints(horizon, first_step),
        max_step=max_step, node_budget=budget,
    )
    value, error, nodes = head.value, head.error, head.nodes
    tail = tail_bound(horizon)
    extensions = 0
    while tail > max(abs_tol, rel_tol * float(np.linalg.norm(np.ravel(value)))):
        if extensions >= max_extensions:
            raise QuadratureBudgetError(
                f"tail bound {tail:.3e} still too large at horizon {horizon:.3e}",
                estimate=value, error=error + tail, nodes=nodes,
            )
        extension = integrate(
            f, horizon, 2.0 * horizon,
            rel_tol=rel_tol,
            abs_tol=max(abs_tol, rel_tol * float(np.linalg.norm(np.ravel(value)))),
            max_step=max_step, node_budget=max(budget - nodes, 30),
        )
        value = value + extension.value
        error += extension.error
        nodes += extension.nodes
        horizon *= 2.0
        tail = tail_bound(horizon)
        extensions += 1

    logger.debug("Infinite-horizon quadrature", horizon=horizon, nodes=nodes, tail=tail)
    return QuadratureOutcome(np.asarray(value), float(error), nodes, float(tail), float(horizon))
