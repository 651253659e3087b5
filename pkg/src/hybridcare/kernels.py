"""Euler path kernels with Brownian-bridge barrier detection.

Every kernel exists twice: a numba-compiled loop and a vectorised numpy
version with identical semantics. ``scan_exit`` and ``walk_path`` dispatch to
whichever backend ``hybridcare._accel`` selected at import time.

Exit codes: 0 = still inside, 1 = hit the lower barrier (0), 2 = hit the
upper barrier.
"""
import math

import numpy as np

from ._accel import BACKEND, njit

ALIVE = 0
LOWER = 1
UPPER = 2


# ---------------------------------------------------------------- numba ----

@njit
def _scan_exit_nb(start, upper, z, u, drift, sigma, dt, bridge):
    n, m = z.shape
    step = np.full(n, -1, dtype=np.int64)
    side = np.zeros(n, dtype=np.int8)
    end = start.copy()
    mu = -drift * dt
    sd = sigma * math.sqrt(dt)
    s2dt = sigma * sigma * dt
    use_bridge = bridge and s2dt > 0.0
    for i in range(n):
        s = start[i]
        up = upper[i]
        finite_up = up < np.inf
        for j in range(m):
            s_new = s + (mu + sd * z[i, j])
            code = 0
            if s_new <= 0.0:
                code = 1
            elif s_new >= up:
                code = 2
            elif use_bridge:
                pl = math.exp(-2.0 * s * s_new / s2dt)
                ph = 0.0
                if finite_up:
                    ph = math.exp(-2.0 * (up - s) * (up - s_new) / s2dt)
                if u[i, j] < pl:
                    code = 1
                elif u[i, j] < pl + ph:
                    code = 2
            if code != 0:
                step[i] = j
                side[i] = code
                s = 0.0 if code == 1 else up
                break
            s = s_new
        end[i] = s
    return step, side, end


@njit
def _walk_path_nb(start, upper, z, u, drift, sigma, dt, bridge, out):
    m = z.shape[0]
    mu = -drift * dt
    sd = sigma * math.sqrt(dt)
    s2dt = sigma * sigma * dt
    use_bridge = bridge and s2dt > 0.0
    finite_up = upper < np.inf
    s = start
    out[0] = s
    for j in range(m):
        s_new = s + (mu + sd * z[j])
        code = 0
        if s_new <= 0.0:
            code = 1
        elif s_new >= upper:
            code = 2
        elif use_bridge:
            pl = math.exp(-2.0 * s * s_new / s2dt)
            ph = 0.0
            if finite_up:
                ph = math.exp(-2.0 * (upper - s) * (upper - s_new) / s2dt)
            if u[j] < pl:
                code = 1
            elif u[j] < pl + ph:
                code = 2
        if code != 0:
            out[j + 1] = 0.0 if code == 1 else upper
            return j + 1, code
        out[j + 1] = s_new
        s = s_new
    return m, 0


# ---------------------------------------------------------------- numpy ----

def _exit_codes(prev, new, upper, u, sigma, dt, bridge):
    code = np.zeros(new.shape, dtype=np.int8)
    lo = new <= 0.0
    hi = (new >= upper) & ~lo
    code[lo] = LOWER
    code[hi] = UPPER
    s2dt = sigma * sigma * dt
    if bridge and s2dt > 0.0:
        inside = ~(lo | hi)
        with np.errstate(invalid="ignore", over="ignore"):
            pl = np.exp(-2.0 * prev * new / s2dt)
            gap_prev = upper - prev
            gap_new = upper - new
            ph = np.where(np.isfinite(gap_prev), np.exp(-2.0 * gap_prev * gap_new / s2dt), 0.0)
        code[inside & (u < pl)] = LOWER
        code[inside & (u >= pl) & (u < pl + ph)] = UPPER
    return code


def _scan_exit_np(start, upper, z, u, drift, sigma, dt, bridge):
    n, m = z.shape
    incr = -drift * dt + sigma * math.sqrt(dt) * z
    # fold the start into the first increment so the running sum adds terms
    # in the same order as the compiled loop
    incr[:, 0] += start
    path = np.cumsum(incr, axis=1)
    prev = np.empty_like(path)
    prev[:, 0] = start
    prev[:, 1:] = path[:, :-1]
    code = _exit_codes(prev, path, upper[:, None], u, sigma, dt, bridge)
    hit = code != ALIVE
    any_hit = hit.any(axis=1)
    first = np.argmax(hit, axis=1)
    step = np.where(any_hit, first, -1).astype(np.int64)
    side = np.where(any_hit, code[np.arange(n), first], ALIVE).astype(np.int8)
    end = path[:, -1].copy()
    end[side == LOWER] = 0.0
    end[side == UPPER] = upper[side == UPPER]
    return step, side, end


def _walk_path_np(start, upper, z, u, drift, sigma, dt, bridge, out):
    m = z.shape[0]
    incr = -drift * dt + sigma * math.sqrt(dt) * z
    incr[0] += start
    out[0] = start
    np.cumsum(incr, out=out[1 : m + 1])
    prev = out[:m]
    new = out[1 : m + 1]
    code = _exit_codes(prev, new, upper, u, sigma, dt, bridge)
    hit = np.flatnonzero(code)
    if hit.size == 0:
        return m, 0
    j = int(hit[0])
    c = int(code[j])
    out[j + 1] = 0.0 if c == LOWER else upper
    return j + 1, c


# ------------------------------------------------------------- dispatch ----

if BACKEND == "numba":
    _scan_exit = _scan_exit_nb
    _walk_path = _walk_path_nb
else:
    _scan_exit = _scan_exit_np
    _walk_path = _walk_path_np


def scan_exit(start, upper, z, u, drift, sigma, dt, bridge=True, backend=None):
    """Advance a batch of paths through one block of Gaussian increments.

    Parameters
    ----------
    start, upper : ndarray, shape (n,)
        Current scores and upper barriers (``np.inf`` for a single barrier).
    z, u : ndarray, shape (n, m)
        Standard normals and uniforms for ``m`` steps.
    drift, sigma, dt : float
        The score moves by ``-drift*dt + sigma*sqrt(dt)*z`` per step.
    bridge : bool
        Also detect barrier crossings between grid points.

    Returns
    -------
    step : ndarray of int64
        Index of the step in which the path exited, or -1.
    side : ndarray of int8
        Exit code per path.
    end : ndarray
        Score after the block (the barrier value for exited paths).
    """
    start = np.ascontiguousarray(start, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    fn = _pick(backend, _scan_exit_nb, _scan_exit_np, _scan_exit)
    return fn(start, upper, z, u, float(drift), float(sigma), float(dt), bool(bridge))


def walk_path(start, upper, z, u, drift, sigma, dt, bridge, out, backend=None):
    """Walk one path through a block, recording every grid score in ``out``.

    ``out`` must have length ``len(z) + 1``; ``out[0]`` receives ``start``.
    Returns ``(k, code)`` where ``out[k]`` is the last valid entry.
    """
    fn = _pick(backend, _walk_path_nb, _walk_path_np, _walk_path)
    k, code = fn(float(start), float(upper), z, u, float(drift), float(sigma), float(dt), bool(bridge), out)
    return int(k), int(code)


def _pick(backend, nb, npy, default):
    if backend is None:
        return default
    if backend == "numba":
        return nb
    if backend == "numpy":
        return npy
    raise ValueError(f"unknown backend {backend!r}")


def simulate_exits(start, upper, drift, sigma, dt, n, rng, bridge=True, block=128,
                   chunk=16384, max_time=None, backend=None):
    """Monte Carlo exit times of ``n`` independent paths.

    Paths start at ``start`` and are absorbed at 0 or at ``upper``
    (pass ``np.inf`` for a single barrier). The exit time of a path that
    leaves during step ``j`` is recorded at the step midpoint.

    Returns
    -------
    times : ndarray
        Exit times (``nan`` if ``max_time`` elapsed first).
    side : ndarray of int8
        ``LOWER``, ``UPPER`` or ``ALIVE``.
    """
    times = np.full(n, np.nan)
    sides = np.zeros(n, dtype=np.int8)
    if upper <= start:
        times[:] = 0.0
        sides[:] = UPPER
        return times, sides
    for lo in range(0, n, chunk):
        idx = np.arange(lo, min(n, lo + chunk))
        score = np.full(idx.size, float(start))
        ups = np.full(idx.size, float(upper))
        steps_done = 0
        while idx.size:
            if max_time is not None and steps_done * dt >= max_time:
                break
            z = rng.standard_normal((idx.size, block))
            u = rng.random((idx.size, block))
            step, side, end = scan_exit(score, ups, z, u, drift, sigma, dt, bridge, backend)
            done = side != ALIVE
            times[idx[done]] = (steps_done + step[done] + 0.5) * dt
            sides[idx[done]] = side[done]
            keep = ~done
            idx, score, ups = idx[keep], end[keep], ups[keep]
            steps_done += block
    return times, sides


def step_path(score, drift, sigma, dt, rng, lower=0.0, upper=np.inf, bridge=True):
    """Single Euler step of the health score.

    Returns ``(new_score, crossed_lower, crossed_upper)``. A crossing is
    reported when the endpoint lies beyond a barrier or, with ``bridge``,
    when the Brownian bridge between the endpoints touches one.
    """
    z = rng.standard_normal()
    uu = rng.random()
    new = score - drift * dt + sigma * math.sqrt(dt) * z
    s2dt = sigma * sigma * dt
    if new <= lower:
        return lower, True, False
    if new >= upper:
        return upper, False, True
    if bridge and s2dt > 0.0:
        pl = math.exp(-2.0 * (score - lower) * (new - lower) / s2dt)
        ph = 0.0 if not math.isfinite(upper) else math.exp(-2.0 * (upper - score) * (upper - new) / s2dt)
        if uu < pl:
            return lower, True, False
        if uu < pl + ph:
            return upper, False, True
    return new, False, False
