"""Loss-landscape probes around individual inputs.

zeta measures the cosine between the negative loss gradient at a neighbor
x_tilde and the displacement back to x; values near +1 over a shrinking
neighborhood characterize a local minimum. The surface probe maps the
mean S1 cosine similarity over a 2-D grid spanned by an adversarial
direction and a random orthogonal one.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, UsageError
from .features import split_sets
from .saliency import csm

DEFAULT_SIGMAS = (0.01, 0.05, 0.1, 0.5, 1.0)


@dataclass
class ZetaSample:
    sigma: float
    values: np.ndarray  # defined realizations, each in [-1, 1]
    correct: bool
    dropped: int  # undefined draws (zero gradient or zero displacement)
    class_index: int


@dataclass
class SurfaceGrid:
    eps1_axis: np.ndarray
    eps2_axis: np.ndarray
    z: np.ndarray  # (n1, n2) mean of S1
    predicted: np.ndarray  # (n1, n2) class labels
    degenerate: np.ndarray  # (n1, n2) zero-norm saliency flags


def zeta_from_gradient(grad, x, x_tilde):
    """cos(-grad, x - x_tilde); NaN when either vector has zero norm."""
    grad = np.asarray(grad, dtype=np.float64).ravel()
    disp = (np.asarray(x, dtype=np.float64) - np.asarray(x_tilde, dtype=np.float64)).ravel()
    gn = np.linalg.norm(grad)
    dn = np.linalg.norm(disp)
    if gn == 0.0 or dn == 0.0:
        return float("nan")
    return float(np.clip(-(grad @ disp) / (gn * dn), -1.0, 1.0))


def zeta(model, x, x_tilde, class_i, loss="sce"):
    grad = model.input_gradients(np.asarray(x_tilde, dtype=np.float64)[None],
                                 [class_i], loss)[0]
    return zeta_from_gradient(grad, x, x_tilde)


def zeta_stats(model, x, sigma, n_injections=1000, class_i=None, y_true=None,
               seed=0, loss="sce"):
    """zeta over Gaussian neighbors x + sigma * eta.

    class_i defaults to the predicted class. Undefined draws are dropped
    and counted; if every draw is undefined the sample is degenerate.
    """
    if sigma <= 0 or n_injections < 1:
        raise UsageError("need sigma > 0 and n_injections >= 1")
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    pred = int(model.predict(x[None])[0])
    if class_i is None:
        class_i = pred
    neighbors = x[None] + sigma * rng.standard_normal((n_injections, *x.shape))
    grads = model.input_gradients(neighbors, np.full(n_injections, class_i), loss)
    flat_g = grads.reshape(n_injections, -1)
    disp = (x[None] - neighbors).reshape(n_injections, -1)
    gn = np.linalg.norm(flat_g, axis=1)
    dn = np.linalg.norm(disp, axis=1)
    defined = (gn > 0.0) & (dn > 0.0)
    if not defined.any():
        raise DegenerateGeometryError(
            f"all {n_injections} neighbor draws had zero gradient or displacement"
        )
    dots = np.einsum("nd,nd->n", flat_g[defined], disp[defined])
    values = np.clip(-dots / (gn[defined] * dn[defined]), -1.0, 1.0)
    correct = pred == int(y_true) if y_true is not None else True
    return ZetaSample(float(sigma), values, bool(correct), int(n_injections - defined.sum()),
                      int(class_i))


def zeta_sweep(model, xs, ys, sigmas=DEFAULT_SIGMAS, n_injections=1000, seed=0,
               loss="sce"):
    """(sample_index, ZetaSample) per (sample, sigma); seeds derived per pair."""
    out = []
    xs = np.asarray(xs, dtype=np.float64)
    for i, (x, y) in enumerate(zip(xs, ys)):
        for j, sigma in enumerate(sigmas):
            out.append((i, zeta_stats(model, x, sigma, n_injections, y_true=int(y),
                                      seed=seed + i * len(sigmas) + j, loss=loss)))
    return out


def save_zeta_csv(path, rows):
    """Write (sample_index, ZetaSample) rows with value quantiles."""
    header = "sample,sigma,correct,class_index,n,dropped,q05,q25,median,q75,q95,mean"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for index, s in rows:
            q = np.quantile(s.values, [0.05, 0.25, 0.5, 0.75, 0.95])
            cells = [str(index), repr(s.sigma), str(int(s.correct)),
                     str(s.class_index), str(s.values.size), str(s.dropped)]
            cells += [repr(float(v)) for v in q] + [repr(float(s.values.mean()))]
            fh.write(",".join(cells) + "\n")


def directional_curvature(grad_fn, x, direction, r=1e-4):
    """Forward-difference estimate of the Hessian quadratic form <H e, e>.

    grad_fn maps a point to the gradient of a scalar function; direction
    is normalized internally.
    """
    x = np.asarray(x, dtype=np.float64)
    e = np.asarray(direction, dtype=np.float64)
    nrm = np.linalg.norm(e)
    if nrm == 0.0:
        raise UsageError("direction must be nonzero")
    e = e / nrm
    g0 = np.asarray(grad_fn(x), dtype=np.float64)
    g1 = np.asarray(grad_fn(x + r * e), dtype=np.float64)
    return float(((g1 - g0) / r).ravel() @ e.ravel())


def orthogonal_direction(gamma, seed=0):
    """Unit vector orthogonal to gamma, from a seeded Gaussian draw."""
    gamma = np.asarray(gamma, dtype=np.float64)
    base = gamma.ravel()
    nrm = np.linalg.norm(base)
    if nrm == 0.0:
        raise UsageError("gamma must be nonzero")
    base = base / nrm
    rng = np.random.default_rng(seed)
    for _ in range(100):
        draw = rng.standard_normal(base.size)
        draw -= (draw @ base) * base
        dn = np.linalg.norm(draw)
        if dn > 1e-12:
            return (draw / dn).reshape(gamma.shape)
    raise DegenerateGeometryError("could not draw an orthogonal direction")


def default_axes(epsilon, points=41):
    """Symmetric grid axis over [-2 eps, 2 eps]."""
    return np.linspace(-2.0 * epsilon, 2.0 * epsilon, points)


def csm_surface(model, x, gamma, eps1_axis, eps2_axis, seed=0, loss="sce",
                clip_range=(0.0, 1.0)):
    """Mean-S1 surface over x + e1 * gamma + e2 * gamma_perp, clipped.

    gamma is unit-normalized; gamma_perp is a seeded orthogonal unit draw.
    Degenerate grid points (any zero-norm saliency map) are flagged, not
    errors.
    """
    x = np.asarray(x, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    gnorm = np.linalg.norm(gamma)
    if gnorm == 0.0:
        raise UsageError("gamma must be nonzero")
    gamma = gamma / gnorm
    perp = orthogonal_direction(gamma, seed=seed)
    eps1_axis = np.asarray(eps1_axis, dtype=np.float64)
    eps2_axis = np.asarray(eps2_axis, dtype=np.float64)
    n1, n2 = eps1_axis.size, eps2_axis.size
    z = np.empty((n1, n2))
    predicted = np.empty((n1, n2), dtype=np.int64)
    degenerate = np.zeros((n1, n2), dtype=bool)
    for i, e1 in enumerate(eps1_axis):
        for j, e2 in enumerate(eps2_axis):
            point = np.clip(x + e1 * gamma + e2 * perp, *clip_range)
            matrix = csm(model, point, loss=loss)
            s1, _ = split_sets(matrix)
            z[i, j] = s1.mean() if s1.size else 0.0
            predicted[i, j] = matrix.predicted_class
            degenerate[i, j] = bool(matrix.degenerate.any()) or s1.size == 0
    return SurfaceGrid(eps1_axis, eps2_axis, z, predicted, degenerate)


def save_surface_csv(path, grid):
    with open(path, "w") as fh:
        fh.write("eps1,eps2,mean_s1,predicted_class,degenerate\n")
        for i, e1 in enumerate(grid.eps1_axis):
            for j, e2 in enumerate(grid.eps2_axis):
                fh.write(f"{float(e1)!r},{float(e2)!r},{float(grid.z[i, j])!r},"
                         f"{grid.predicted[i, j]},{int(grid.degenerate[i, j])}\n")
