"""Procedural grayscale digit images.

Renders the ten digits from stroke templates (polylines and elliptic arcs
in a unit square) with per-sample affine jitter, stroke width and intensity
variation, and additive pixel noise. Output images live in [0, 1] with
shape (1, size, size). Useful wherever a small labeled image task is
needed and shipping a real image corpus is not an option.
"""

import numpy as np


def _arc(cx, cy, rx, ry, deg0, deg1, n=16):
    t = np.radians(np.linspace(deg0, deg1, n))
    return np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], axis=1)


def _line(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y1]])


# Stroke templates in unit coordinates, x right and y down.
_TEMPLATES = {
    0: [_arc(0.50, 0.50, 0.30, 0.40, 0, 360, 24)],
    1: [_line(0.50, 0.08, 0.50, 0.92), _line(0.32, 0.30, 0.50, 0.08)],
    2: [
        _arc(0.50, 0.32, 0.28, 0.22, 160, 380),
        _line(0.763, 0.395, 0.22, 0.88),
        _line(0.22, 0.88, 0.80, 0.88),
    ],
    3: [
        _arc(0.45, 0.30, 0.28, 0.20, -160, 90),
        _arc(0.45, 0.70, 0.30, 0.20, -90, 160),
    ],
    4: [
        _line(0.62, 0.08, 0.18, 0.62),
        _line(0.18, 0.62, 0.85, 0.62),
        _line(0.62, 0.08, 0.62, 0.92),
    ],
    5: [
        _line(0.72, 0.10, 0.28, 0.10),
        _line(0.28, 0.10, 0.30, 0.52),
        _arc(0.50, 0.66, 0.26, 0.22, -140, 140),
    ],
    6: [
        _arc(0.55, 0.50, 0.28, 0.40, -80, -260, 22),
        _arc(0.50, 0.70, 0.22, 0.20, 0, 360, 20),
    ],
    7: [_line(0.22, 0.12, 0.78, 0.12), _line(0.78, 0.12, 0.38, 0.90)],
    8: [
        _arc(0.50, 0.30, 0.20, 0.18, 0, 360, 20),
        _arc(0.50, 0.68, 0.24, 0.21, 0, 360, 20),
    ],
    9: [
        _arc(0.48, 0.32, 0.22, 0.20, 0, 360, 20),
        _line(0.70, 0.32, 0.66, 0.90),
    ],
}


def _segments(digit, rng, jitter, hardness=1.0):
    """Jittered stroke segments of one digit, in pixel coordinates."""
    points = np.concatenate(_TEMPLATES[digit])
    if jitter:
        theta = rng.uniform(-0.18, 0.18) * hardness
        scale = rng.uniform(1.0 - 0.12 * hardness, 1.0 + 0.08 * hardness, size=2)
        shift = rng.uniform(-0.06, 0.06, size=2) * hardness
    else:
        theta, scale, shift = 0.0, np.ones(2), np.zeros(2)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    points = (points - 0.5) * scale @ rot.T + 0.5 + shift
    p0, p1 = [], []
    offset = 0
    for stroke in _TEMPLATES[digit]:
        m = len(stroke)
        p0.append(points[offset : offset + m - 1])
        p1.append(points[offset + 1 : offset + m])
        offset += m
    return np.concatenate(p0), np.concatenate(p1)


def _stroke_field(p0, p1, grid, radius):
    """Ink intensity of a polyline against flattened pixel coordinates."""
    seg = p1 - p0
    seg_len2 = np.maximum((seg * seg).sum(axis=1), 1e-12)
    rel = grid[None, :, :] - p0[:, None, :]
    t = np.clip((rel * seg[:, None, :]).sum(axis=2) / seg_len2[:, None], 0.0, 1.0)
    nearest = p0[:, None, :] + t[:, :, None] * seg[:, None, :]
    dist = np.sqrt(((grid[None, :, :] - nearest) ** 2).sum(axis=2)).min(axis=0)
    return np.clip(1.0 - (dist - radius), 0.0, 1.0)


def render_digit(digit, rng=None, size=28, jitter=True, noise=0.02,
                 hardness=1.0, clutter=0):
    """One (size, size) float image of `digit` in [0, 1].

    hardness scales the affine jitter and widens the stroke-thickness and
    contrast ranges; clutter adds that many faint distractor strokes.
    """
    if rng is None:
        rng = np.random.default_rng()
    p0, p1 = _segments(digit, rng, jitter, hardness)
    p0 = p0 * size
    p1 = p1 * size
    coords = (np.arange(size) + 0.5).astype(np.float64)
    gx, gy = np.meshgrid(coords, coords)
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    if jitter:
        radius = rng.uniform(max(0.5, 0.9 - 0.2 * (hardness - 1.0)),
                             1.5 + 0.3 * (hardness - 1.0))
    else:
        radius = 1.1
    img = _stroke_field(p0, p1, grid, radius)
    if jitter:
        amp_lo = max(0.35, 0.75 - 0.25 * (hardness - 1.0))
        img = img * rng.uniform(amp_lo, 1.0)
    for _ in range(clutter):
        ends = rng.uniform(0.08, 0.92, size=(2, 2)) * size
        field = _stroke_field(ends[:1], ends[1:], grid, rng.uniform(0.5, 1.0))
        img = np.maximum(img, field * rng.uniform(0.2, 0.5))
    img = img.reshape(size, size)
    if noise:
        img = img + rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def gen_digit_images(n, seed=0, size=28, noise=0.02, hardness=1.0, clutter=0):
    """Balanced sample of n digit images.

    Returns (x, y) with x of shape (n, 1, size, size) in [0, 1] and y the
    integer digit labels.
    """
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(n) % 10).astype(np.int64)
    x = np.empty((n, 1, size, size), dtype=np.float64)
    for i in range(n):
        x[i, 0] = render_digit(int(y[i]), rng, size=size, noise=noise,
                               hardness=hardness, clutter=clutter)
    return x, y
