"""Adaptive tensor Gauss-Kronrod (7-15) quadrature over rectangles."""

from __future__ import annotations

import heapq

import numpy as np

from .errors import QuadratureConvergenceError

# 15-point Kronrod abscissae (nonnegative half) and weights; the odd-indexed
# abscissae form the embedded 7-point Gauss rule.
_XGK_HALF = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK_HALF = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG_HALF = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK_HALF[:-1], _XGK_HALF[::-1]])          # 15 nodes
_WK = np.concatenate([_WGK_HALF[:-1], _WGK_HALF[::-1]])              # Kronrod
_WG = np.zeros(15)
_WG[1:14:2] = np.concatenate([_WG_HALF[:-1], _WG_HALF[::-1]])        # Gauss


def _panel(f, x0, x1, y0, y1):
    """One tensor GK15/G7 evaluation; returns (integral, error_estimate)."""
    sx, sy = 0.5 * (x1 - x0), 0.5 * (y1 - y0)
    xs = x0 + sx * (_NODES + 1.0)
    ys = y0 + sy * (_NODES + 1.0)
    fv = np.asarray(f(xs[:, None], ys[None, :]), dtype=float)
    ik = float(_WK @ fv @ _WK) * sx * sy
    ig = float(_WG @ fv @ _WG) * sx * sy
    return ik, abs(ik - ig)


def integrate_rectangle(f, x0, x1, y0, y1, tol, budget=1000):
    """Adaptive 2D integral of f over [x0,x1]x[y0,y1] to absolute tolerance.

    f must broadcast over numpy arrays in both arguments.  The rectangle
    with the worst error estimate is split into four quadrants until the
    summed estimate falls below tol; exceeding ``budget`` panel evaluations
    raises QuadratureConvergenceError.
    """
    ik, err = _panel(f, x0, x1, y0, y1)
    heap = [(-err, 0, (x0, x1, y0, y1), ik, err)]
    total_i, total_err = ik, err
    count = 1
    tiebreak = 1
    while total_err > tol:
        if count >= budget:
            raise QuadratureConvergenceError(
                f"quadrature did not reach tolerance {tol:g} within {budget} "
                f"panels (error estimate {total_err:g})",
                error_estimate=total_err,
            )
        _, _, (a, b, c, d), i_old, e_old = heapq.heappop(heap)
        xm, ym = 0.5 * (a + b), 0.5 * (c + d)
        total_i -= i_old
        total_err -= e_old
        for (qa, qb, qc, qd) in (
            (a, xm, c, ym), (xm, b, c, ym), (a, xm, ym, d), (xm, b, ym, d)
        ):
            ik, err = _panel(f, qa, qb, qc, qd)
            heapq.heappush(heap, (-err, tiebreak, (qa, qb, qc, qd), ik, err))
            tiebreak += 1
            total_i += ik
            total_err += err
        count += 4
    return total_i, total_err
