"""Signed saliency maps and cosine-similarity matrices.

For an input x and class i, the saliency map is the elementwise sign of
the input gradient of the class-i loss. The cosine-similarity matrix
(CSM) collects the pairwise cosines between the saliency maps of the
top-ranked classes, ordered by descending softmax probability so that
row 0 always belongs to the predicted class.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteGradientError, ShapeMismatchError


@dataclass
class SaliencyMap:
    class_index: int
    values: np.ndarray  # entries in {-1, 0, +1}, shape of x
    degenerate: bool  # all-zero gradient


@dataclass
class Csm:
    entries: np.ndarray  # (m, m) symmetric, values in [-1, 1]
    class_ids: np.ndarray  # (m,) class indices, descending probability
    degenerate: np.ndarray  # (m,) per-class zero-norm flags
    predicted_index: int = 0

    @property
    def predicted_class(self):
        return int(self.class_ids[self.predicted_index])


def class_order(probs):
    """Class indices by descending probability, ties broken by ascending index."""
    probs = np.asarray(probs)
    return np.lexsort((np.arange(probs.size), -probs))


def saliency(model, x, class_i, loss="sce"):
    grad = model.class_input_gradients(x, [class_i], loss)[0]
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError(
            f"gradient for class {class_i} contains non-finite values",
            class_index=class_i,
        )
    values = np.sign(grad)
    return SaliencyMap(int(class_i), values, not values.any())


def cosine(a, b):
    """Cosine similarity of two maps; 0 when either has zero norm."""
    av = (a.values if isinstance(a, SaliencyMap) else np.asarray(a, dtype=np.float64)).ravel()
    bv = (b.values if isinstance(b, SaliencyMap) else np.asarray(b, dtype=np.float64)).ravel()
    if av.shape != bv.shape:
        raise ShapeMismatchError(f"cannot compare maps of sizes {av.size} and {bv.size}")
    na = np.linalg.norm(av)
    nb = np.linalg.norm(bv)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(av @ bv / (na * nb), -1.0, 1.0))


def csm(model, x, top_n=None, loss="sce"):
    """Cosine-similarity matrix of the top-n classes for one sample.

    top_n = None uses all classes. Row/column 0 is the predicted class.
    """
    c = model.num_classes
    if top_n is None:
        top_n = c
    if not 2 <= top_n <= c:
        raise ValueError(f"top_n must lie in [2, {c}], got {top_n}")
    probs = model.probabilities(np.asarray(x, dtype=np.float64)[None])[0]
    ids = class_order(probs)[:top_n]
    grads = model.class_input_gradients(x, ids, loss).reshape(top_n, -1)
    bad = ~np.isfinite(grads).all(axis=1)
    if bad.any():
        cls = int(ids[np.argmax(bad)])
        raise NonFiniteGradientError(
            f"gradient for class {cls} contains non-finite values", class_index=cls
        )
    signs = np.sign(grads)
    norms = np.linalg.norm(signs, axis=1)
    degenerate = norms == 0.0
    unit = signs / np.where(degenerate, 1.0, norms)[:, None]
    entries = unit @ unit.T
    entries = np.clip((entries + entries.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(entries, np.where(degenerate, 0.0, 1.0))
    return Csm(entries, ids.astype(np.int64), degenerate)


def batch_csm(model, xs, top_n=None, loss="sce"):
    """Per-sample CSMs for a batch; identical to calling csm in a loop."""
    return [csm(model, x, top_n=top_n, loss=loss) for x in np.asarray(xs, dtype=np.float64)]


def save_csm_csv(path, matrix):
    """CSV dump: size line, class-id line, then the matrix rows."""
    with open(path, "w") as fh:
        fh.write(f"{len(matrix.class_ids)}\n")
        fh.write(",".join(str(int(i)) for i in matrix.class_ids) + "\n")
        for row in matrix.entries:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def save_saliency_pgm(path, values):
    """Binary PGM dump of a 2-D sign map: -1 -> 0, 0 -> 127, +1 -> 254."""
    arr = np.asarray(values)
    arr = arr.reshape([s for s in arr.shape if s != 1])
    if arr.ndim != 2:
        raise ShapeMismatchError(f"need a 2-D map for PGM export, got shape {values.shape}")
    gray = np.round((arr + 1.0) * 127.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        fh.write(gray.tobytes())
