"""Inner loops of the solver, in two interchangeable backends.

Every kernel exists as a numba ``@njit`` function and as a vectorised numpy
function with the same signature. The public names at the bottom of this
module are bound to the numba versions unless the environment variable
``DECMAC_DISABLE_NUMBA`` is set to a truthy value (or numba is missing), in
which case the numpy versions are used. Both sets stay importable under
their suffixed names so tests and benchmarks can compare them directly.

Notation: an interference distribution is the pair ``(y, q)`` of atom
values and masses; ``f(x) = sum_m q_m / (1 + x + y_m)``.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_FALSY = {"", "0", "false", "no", "off"}
NUMBA_DISABLED = os.environ.get("DECMAC_DISABLE_NUMBA", "").strip().lower() not in _FALSY
USE_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"

# Newton stops once the step is below this fraction of (1 + x).
NEWTON_RTOL = 1e-13
NEWTON_MAX_ITERS = 200


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------


def eval_f_numpy(x, y, q):
    x = np.asarray(x, dtype=np.float64)
    return (q / (1.0 + x[:, None] + y[None, :])).sum(axis=1)


def invert_f_numpy(targets, y, q):
    """Solve f(x) = t for each target; 0 where t >= f(0).

    Newton from the left never overshoots because f is convex and
    decreasing, and ``1/t - 1 - E[Y]`` is a valid left start by Jensen.
    """
    targets = np.asarray(targets, dtype=np.float64)
    f0 = float(np.sum(q / (1.0 + y)))
    mean_y = float(np.dot(q, y))
    out = np.zeros(targets.shape[0])
    active = targets < f0
    if not np.any(active):
        return out
    t = targets[active]
    hi = 1.0 / t
    x = np.maximum(0.0, hi - 1.0 - mean_y)
    todo = np.ones(t.shape[0], dtype=bool)
    for _ in range(NEWTON_MAX_ITERS):
        idx = np.flatnonzero(todo)
        if idx.size == 0:
            break
        d = 1.0 / (1.0 + x[idx, None] + y[None, :])
        s0 = d @ q
        s1 = (d * d) @ q
        step = (s0 - t[idx]) / s1
        xn = np.clip(x[idx] + step, 0.0, hi[idx])
        done = np.abs(xn - x[idx]) <= NEWTON_RTOL * (1.0 + xn)
        x[idx] = xn
        todo[idx[done]] = False
    out[active] = x
    return out


def expected_log_numpy(x, p, y, q):
    """sum_k p_k sum_m q_m log(1 + x_k + y_m)."""
    return float(p @ np.log1p(x[:, None] + y[None, :]) @ q)


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def eval_f_numba(x, y, q):
        out = np.empty(x.shape[0])
        for k in range(x.shape[0]):
            s = 0.0
            for m in range(y.shape[0]):
                s += q[m] / (1.0 + x[k] + y[m])
            out[k] = s
        return out

    @njit(cache=True)
    def invert_f_numba(targets, y, q):
        n_y = y.shape[0]
        f0 = 0.0
        mean_y = 0.0
        for m in range(n_y):
            f0 += q[m] / (1.0 + y[m])
            mean_y += q[m] * y[m]
        out = np.zeros(targets.shape[0])
        prev_t = np.inf
        prev_x = 0.0
        for k in range(targets.shape[0]):
            t = targets[k]
            if t >= f0:
                continue
            hi = 1.0 / t
            x = max(0.0, hi - 1.0 - mean_y)
            # a smaller target has a larger root, so the last root is a left start
            if t <= prev_t and prev_x > x:
                x = prev_x
            for _ in range(NEWTON_MAX_ITERS):
                s0 = 0.0
                s1 = 0.0
                for m in range(n_y):
                    d = 1.0 / (1.0 + x + y[m])
                    s0 += q[m] * d
                    s1 += q[m] * d * d
                xn = x + (s0 - t) / s1
                if xn < 0.0:
                    xn = 0.0
                elif xn > hi:
                    xn = hi
                converged = abs(xn - x) <= NEWTON_RTOL * (1.0 + xn)
                x = xn
                if converged:
                    break
            out[k] = x
            prev_t = t
            prev_x = x
        return out

    @njit(cache=True)
    def expected_log_numba(x, p, y, q):
        total = 0.0
        for k in range(x.shape[0]):
            s = 0.0
            for m in range(y.shape[0]):
                s += q[m] * np.log1p(x[k] + y[m])
            total += p[k] * s
        return total

else:  # pragma: no cover
    eval_f_numba = eval_f_numpy
    invert_f_numba = invert_f_numpy
    expected_log_numba = expected_log_numpy


if USE_NUMBA:
    eval_f = eval_f_numba
    invert_f = invert_f_numba
    expected_log = expected_log_numba
else:
    eval_f = eval_f_numpy
    invert_f = invert_f_numpy
    expected_log = expected_log_numpy
