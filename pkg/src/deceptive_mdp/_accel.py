"""Bellman sweep kernels.

The numba kernels are used when numba imports and ``DECEPTIVE_MDP_NO_NUMBA`` is
unset (or ``0``). Both paths perform the same float operations in the same
order, so they produce bit-identical values.
"""

from __future__ import annotations

import os

import numpy as np

_disabled = os.environ.get("DECEPTIVE_MDP_NO_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

HAVE_NUMBA = numba is not None
BACKEND = "numba" if HAVE_NUMBA and not _disabled else "numpy"


def sweep_numpy(values, nxt, rew, gamma, frozen):
    """One synchronous sweep; returns ``(new_values, max_abs_change)``.

    Each backup is floored at the current value, so a start below the optimum
    rises monotonically to it.
    """
    valid = nxt >= 0
    cand = np.where(valid, rew + gamma * values[np.where(valid, nxt, 0)], -np.inf)
    new = np.maximum(cand.max(axis=1), values)
    new[frozen] = values[frozen]
    live = ~frozen
    if not live.any():
        return new, 0.0
    return new, float(np.max(np.abs(new[live] - values[live])))


def solve_numpy(values, nxt, rew, gamma, frozen, tol, max_sweeps):
    """Sweep until the largest change drops below ``tol``.

    Returns ``(values, sweeps, residual)``; ``residual >= tol`` means the
    sweep budget ran out.
    """
    v = values.copy()
    residual = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        v, residual = sweep_numpy(v, nxt, rew, gamma, frozen)
        sweeps += 1
        if residual < tol:
            break
    return v, sweeps, float(residual)


if HAVE_NUMBA:

    @numba.njit(cache=False, nogil=True)
    def _sweep_nb(values, nxt, rew, gamma, frozen, out):
        n, na = nxt.shape
        residual = 0.0
        for c in range(n):
            if frozen[c]:
                out[c] = values[c]
                continue
            best = -np.inf
            for a in range(na):
                j = nxt[c, a]
                if j >= 0:
                    q = rew[c, a] + gamma * values[j]
                    if q > best:
                        best = q
            if best < values[c]:
                best = values[c]
            out[c] = best
            d = abs(best - values[c])
            if d > residual:
                residual = d
        return residual

    @numba.njit(cache=False, nogil=True)
    def _solve_nb(values, nxt, rew, gamma, frozen, tol, max_sweeps):
        v = values.copy()
        buf = np.empty_like(v)
        residual = np.inf
        sweeps = 0
        while sweeps < max_sweeps:
            residual = _sweep_nb(v, nxt, rew, gamma, frozen, buf)
            v, buf = buf, v
            sweeps += 1
            if residual < tol:
                break
        return v, sweeps, residual

    def sweep_numba(values, nxt, rew, gamma, frozen):
        out = np.empty_like(values)
        residual = _sweep_nb(values, nxt, rew, float(gamma), frozen, out)
        return out, float(residual)

    def solve_numba(values, nxt, rew, gamma, frozen, tol, max_sweeps):
        v, sweeps, residual = _solve_nb(values, nxt, rew, float(gamma), frozen, float(tol), int(max_sweeps))
        return v, int(sweeps), float(residual)

else:  # pragma: no cover
    sweep_numba = sweep_numpy
    solve_numba = solve_numpy


if BACKEND == "numba":
    sweep, solve = sweep_numba, solve_numba
else:
    sweep, solve = sweep_numpy, solve_numpy
