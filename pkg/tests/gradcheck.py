"""Central finite-difference oracles used by the gradient tests.

All checks run in float64. The relative error between an analytic and a
numeric gradient is computed per coordinate as

    |analytic - numeric| / max(|analytic|, |numeric|, floor)

and the maximum over coordinates is reported, so a zero-gradient coordinate
with only round-off noise in the numeric estimate cannot dominate.
"""

import numpy as np

STEP = 1e-5
FLOOR = 1e-6


def rel_error(analytic, numeric, floor: float = FLOOR) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {n.shape}")
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def central_diff(scalar_fn, x: np.ndarray, step: float = STEP) -> np.ndarray:
    """Numeric gradient of scalar_fn at the 1-d float64 point x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (scalar_fn(xp) - scalar_fn(xm)) / (2.0 * step)
    return grad


def param_rel_error(params: dict, analytic: dict, loss_fn,
                    step: float = STEP) -> float:
    """Worst relative error over named parameter arrays.

    `params` maps names to live float64 arrays that `loss_fn()` reads;
    each array is perturbed in place coordinate by coordinate. `analytic`
    maps the same names to the gradients under test (missing names are
    treated as all-zero gradients, e.g. for frozen layers).
    """
    worst = 0.0
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ValueError(f"{name}: param_rel_error needs float64 models")
        flat = p.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            upper = loss_fn()
            flat[i] = orig - step
            lower = loss_fn()
            flat[i] = orig
            numeric[i] = (upper - lower) / (2.0 * step)
        got = analytic.get(name)
        if got is None:
            got = np.zeros_like(p)
        worst = max(worst, rel_error(got.reshape(-1), numeric))
    return worst
