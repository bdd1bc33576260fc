"""Attacks producing untrustworthy inputs.

All ball-constrained attacks share one projected-step core, so the
adaptive cosine-similarity attack with weight 0 follows the exact PGD
trajectory. Every attack is a pure function of (model, input, config
seed); batch helpers derive per-sample seeds so results never depend on
batch composition.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ActivationModeError, UsageError
from .nn.losses import softmax
from .saliency import class_order

L2_BUDGET_FACTOR = 10.0  # auto-derived l2 budget per unit of linf budget
DEFAULT_LINF_EPSILON = 0.3


@dataclass
class AttackConfig:
    norm: str = "linf"
    epsilon: float = DEFAULT_LINF_EPSILON
    step_size: float = None  # None -> epsilon / 4
    iterations: int = None  # None -> per-attack default
    loss_kind: str = "sce"
    target: object = None  # None | "random" | fixed class index
    csa_weight: float = 0.8
    clip_range: tuple = (0.0, 1.0)
    seed: int = 0
    random_start: bool = True

    def __post_init__(self):
        if self.norm not in ("linf", "l2"):
            raise UsageError(f"norm must be linf or l2, got {self.norm!r}")
        if self.epsilon <= 0:
            raise UsageError("epsilon must be positive")
        if self.step_size is not None and self.step_size <= 0:
            raise UsageError("step_size must be positive")
        if not 0.0 <= self.csa_weight <= 1.0:
            raise UsageError("csa_weight must lie in [0, 1]")

    @property
    def alpha(self):
        return self.epsilon / 4.0 if self.step_size is None else self.step_size


@dataclass
class AttackResult:
    x_adv: np.ndarray
    success: bool  # prediction differs from the true label
    iterations: int
    final_confidence: float  # max softmax at x_adv
    notes: tuple = ()


def auto_l2_epsilon(linf_epsilon=DEFAULT_LINF_EPSILON):
    return L2_BUDGET_FACTOR * linf_epsilon


def perturbation_norm(x, x_adv, norm):
    delta = (np.asarray(x_adv) - np.asarray(x)).ravel()
    if norm == "linf":
        return float(np.abs(delta).max()) if delta.size else 0.0
    return float(np.linalg.norm(delta))


def verify_budget(x, result, cfg, tol=1e-9):
    """Raise when a ball-constrained result violates its budget or domain."""
    dist = perturbation_norm(x, result.x_adv, cfg.norm)
    if dist > cfg.epsilon + tol:
        raise AssertionError(
            f"{cfg.norm} perturbation {dist} exceeds budget {cfg.epsilon}"
        )
    lo, hi = cfg.clip_range
    if result.x_adv.min() < lo - tol or result.x_adv.max() > hi + tol:
        raise AssertionError("adversarial input escapes the clip range")


def _project(delta, eps, norm):
    if norm == "linf":
        return np.clip(delta, -eps, eps)
    nrm = np.linalg.norm(delta)
    if nrm > eps:
        return delta * (eps / nrm)
    return delta


def _ball_sample(shape, eps, norm, rng):
    if norm == "linf":
        return rng.uniform(-eps, eps, size=shape)
    direction = rng.standard_normal(shape)
    nrm = np.linalg.norm(direction)
    if nrm == 0.0:
        return np.zeros(shape)
    radius = eps * rng.uniform() ** (1.0 / direction.size)
    return direction * (radius / nrm)


def _confidence(model, x):
    probs = softmax(model.forward(x[None]))[0]
    return int(np.argmax(probs)), float(probs.max())


def _finish(model, x, x_adv, y_true, cfg, iterations, notes, check_budget=True):
    pred, conf = _confidence(model, x_adv)
    result = AttackResult(x_adv, pred != int(y_true), iterations, conf, tuple(notes))
    if check_budget:
        verify_budget(x, result, cfg)
    return result


def _pgd_core(model, x, cls, cfg, iters, ascend, rng, csa_weight=0.0, notes=None):
    """Projected gradient steps on the class-`cls` loss.

    With csa_weight > 0 the ascent objective becomes
    csa_weight * mean-pairwise-cosine + (1 - csa_weight) * loss.
    """
    x = np.asarray(x, dtype=np.float64)
    lo, hi = cfg.clip_range
    eps, alpha = cfg.epsilon, cfg.alpha
    notes = [] if notes is None else notes
    if cfg.random_start:
        x_adv = np.clip(x + _ball_sample(x.shape, eps, cfg.norm, rng), lo, hi)
    else:
        x_adv = x.copy()
    for t in range(iters):
        if csa_weight > 0.0:
            grad = csa_weight * csa_surrogate_gradient(model, x_adv, cfg.loss_kind)
            grad += (1.0 - csa_weight) * model.input_gradients(
                x_adv[None], [cls], cfg.loss_kind
            )[0]
        else:
            grad = model.input_gradients(x_adv[None], [cls], cfg.loss_kind)[0]
        if not ascend:
            grad = -grad
        if cfg.norm == "linf":
            step = np.sign(grad)
            if not step.any():
                step = np.sign(rng.uniform(-1.0, 1.0, size=x.shape))
                notes.append(f"zero gradient at iteration {t}, random step")
        else:
            nrm = np.linalg.norm(grad)
            if nrm == 0.0:
                step = rng.standard_normal(x.shape)
                step /= np.linalg.norm(step)
                notes.append(f"zero gradient at iteration {t}, random step")
            else:
                step = grad / nrm
        x_adv = x + _project(x_adv + alpha * step - x, eps, cfg.norm)
        x_adv = np.clip(x_adv, lo, hi)
    return x_adv, notes


def pgd(model, x, y_true, cfg=None):
    """Untargeted projected-gradient ascent on the true-class loss."""
    cfg = cfg or AttackConfig()
    if cfg.target is not None:
        raise UsageError("pgd is untargeted; use pgd_targeted for targets")
    iters = 70 if cfg.iterations is None else cfg.iterations
    rng = np.random.default_rng(cfg.seed)
    x_adv, notes = _pgd_core(model, x, int(y_true), cfg, iters, ascend=True, rng=rng)
    return _finish(model, x, x_adv, y_true, cfg, iters, notes)


def pgd_targeted(model, x, y_true, cfg):
    """Projected-gradient descent on a target-class loss.

    Success means the prediction left the true class, not necessarily
    reaching the target. cfg.target "random" draws a seeded non-true class.
    """
    if cfg.target is None:
        raise UsageError("pgd_targeted needs cfg.target ('random' or a class index)")
    rng = np.random.default_rng(cfg.seed)
    y_true = int(y_true)
    if cfg.target == "random":
        draw = int(rng.integers(model.num_classes - 1))
        target = draw + (draw >= y_true)
    else:
        target = int(cfg.target)
    if target == y_true:
        raise UsageError("target class equals the true label")
    x = np.asarray(x, dtype=np.float64)
    pred, conf = _confidence(model, x)
    if pred == target:
        return AttackResult(x.copy(), True, 0, conf, ("already predicted as target",))
    iters = 100 if cfg.iterations is None else cfg.iterations
    x_adv, notes = _pgd_core(model, x, target, cfg, iters, ascend=False, rng=rng)
    notes.append(f"target={target}")
    return _finish(model, x, x_adv, y_true, cfg, iters, notes)


def csa_objective(model, x, loss_kind="sce"):
    """Mean pairwise cosine between raw non-predicted-class input gradients.

    Smooth surrogate of the mean over S1 of the signed CSM: signs are
    dropped so the objective is differentiable on a softplus model.
    """
    _, unit, valid, _ = _nonpred_gradient_frame(model, x, loss_kind)
    v = int(valid.sum())
    if v < 2:
        return 0.0
    cos = unit @ unit.T
    return float((cos.sum() - np.trace(cos)) / (v * (v - 1)))


def _nonpred_gradient_frame(model, x, loss_kind):
    """Raw gradients of all non-predicted classes plus unit rows and norms."""
    x = np.asarray(x, dtype=np.float64)
    probs = model.probabilities(x[None])[0]
    nonpred = class_order(probs)[1:]
    grads = model.class_input_gradients(x, nonpred, loss_kind)
    flat = grads.reshape(len(nonpred), -1)
    norms = np.linalg.norm(flat, axis=1)
    valid = norms > 0.0
    unit = np.where(valid[:, None], flat / np.where(valid, norms, 1.0)[:, None], 0.0)
    return nonpred, unit[valid], valid, norms


def csa_surrogate_gradient(model, x, loss_kind="sce", fd_step=1e-5):
    """Input gradient of csa_objective.

    Writing g_i for the class-i input gradient and u_i = g_i/|g_i|, the
    objective phi = mean over pairs of <u_i, u_j> has
        d phi / d g_i = (sum_j (u_j - <u_i,u_j> u_i)) / (P * |g_i|)
    over the P unordered valid pairs. The chain to x needs Hessian-vector
    products of each class loss, estimated by central differences of the
    gradient along each a_i direction; all probes run as one batch.
    """
    x = np.asarray(x, dtype=np.float64)
    nonpred, unit, valid, norms = _nonpred_gradient_frame(model, x, loss_kind)
    v = unit.shape[0]
    if v < 2:
        return np.zeros_like(x)
    classes = nonpred[valid]
    pairs = v * (v - 1) / 2.0
    cos = unit @ unit.T
    total = unit.sum(axis=0)
    # rows: sum_{j != i} (u_j - cos_ij * u_i); diagonal terms cancel exactly
    a = (total[None, :] - unit) - (cos.sum(axis=1) - 1.0)[:, None] * unit
    a /= (pairs * norms[valid])[:, None]
    a_norms = np.linalg.norm(a, axis=1)
    live = a_norms > 0.0
    if not live.any():
        return np.zeros_like(x)
    directions = (a[live] / a_norms[live][:, None]).reshape(-1, *x.shape)
    probes = np.concatenate([
        x[None] + fd_step * directions,
        x[None] - fd_step * directions,
    ])
    targets = np.tile(classes[live], 2)
    probe_grads = model.input_gradients(probes, targets, loss_kind)
    m = directions.shape[0]
    hvp = (probe_grads[:m] - probe_grads[m:]) / (2.0 * fd_step)
    return np.tensordot(a_norms[live], hvp, axes=1)


def csa(model, x, y_true, cfg=None):
    """PGD-style ascent on csa_weight * cosine objective + (1-w) * true loss."""
    cfg = cfg or AttackConfig()
    if model.activation_mode != "softplus":
        raise ActivationModeError(
            "the cosine-similarity attack differentiates through input gradients "
            "and needs smooth activations; call model.swap_activations('softplus')"
        )
    iters = 100 if cfg.iterations is None else cfg.iterations
    rng = np.random.default_rng(cfg.seed)
    x_adv, notes = _pgd_core(
        model, x, int(y_true), cfg, iters, ascend=True, rng=rng,
        csa_weight=cfg.csa_weight,
    )
    return _finish(model, x, x_adv, y_true, cfg, iters, notes)


def noise_attack(x, cfg=None, model=None, y_true=None):
    """Uniform noise inside the epsilon ball; no gradient queries."""
    cfg = cfg or AttackConfig()
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    x_adv = np.clip(x + _ball_sample(x.shape, cfg.epsilon, cfg.norm, rng), *cfg.clip_range)
    if model is None:
        result = AttackResult(x_adv, False, 0, math.nan, ("no model given",))
        verify_budget(x, result, cfg)
        return result
    return _finish(model, x, x_adv, y_true, cfg, 0, [])


def rotate(image, degrees, fill=0.0):
    """Bilinear rotation of (h, w) or (c, h, w) images about the center.

    Out-of-frame samples take `fill`. Multiples of 90 degrees on square
    images reduce to permutations up to float trigonometry error.
    """
    image = np.asarray(image, dtype=np.float64)
    squeeze = image.ndim == 2
    stack = image[None] if squeeze else image
    if stack.ndim != 3:
        raise UsageError(f"rotate expects (h, w) or (c, h, w), got shape {image.shape}")
    _, h, w = stack.shape
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h) - cy, np.arange(w) - cx, indexing="ij")
    src_r = cos_t * rr - sin_t * cc + cy
    src_c = sin_t * rr + cos_t * cc + cx
    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    wr = src_r - r0
    wc = src_c - c0
    out = np.zeros_like(stack)
    for corner_r, corner_c, weight in (
        (r0, c0, (1 - wr) * (1 - wc)),
        (r0, c0 + 1, (1 - wr) * wc),
        (r0 + 1, c0, wr * (1 - wc)),
        (r0 + 1, c0 + 1, wr * wc),
    ):
        inside = (corner_r >= 0) & (corner_r < h) & (corner_c >= 0) & (corner_c < w)
        rs = np.clip(corner_r, 0, h - 1)
        cs = np.clip(corner_c, 0, w - 1)
        for ch in range(stack.shape[0]):
            out[ch] += weight * np.where(inside, stack[ch, rs, cs], fill)
    return out[0] if squeeze else out


def rotation_attack(model, x, y_true, cfg=None, degree_range=(-45.0, 45.0)):
    """Random rotation in the given degree range, filled with the domain floor."""
    cfg = cfg or AttackConfig()
    rng = np.random.default_rng(cfg.seed)
    angle = float(rng.uniform(*degree_range))
    x = np.asarray(x, dtype=np.float64)
    x_adv = rotate(x, angle, fill=cfg.clip_range[0])
    x_adv = np.clip(x_adv, *cfg.clip_range)
    return _finish(model, x, x_adv, y_true, cfg, 0, [f"angle={angle:.3f}"],
                   check_budget=False)


def boundary_proximal(model, x, y_true, cfg=None, bisections=20):
    """Low-confidence adversarial proxy.

    Runs PGD, then bisects along the segment from the clean input to the
    PGD endpoint for the closest point past the decision boundary. Stands
    in for boundary-following attacks: it shares their one observable
    property used here, adversarial results of minimal confidence.
    """
    cfg = cfg or AttackConfig()
    x = np.asarray(x, dtype=np.float64)
    pred, conf = _confidence(model, x)
    y_true = int(y_true)
    if pred != y_true:
        return AttackResult(x.copy(), True, 0, conf, ("already misclassified",))
    base = pgd(model, x, y_true, cfg)
    if not base.success:
        return AttackResult(base.x_adv, False, base.iterations,
                            base.final_confidence, base.notes + ("pgd failed",))
    delta = base.x_adv - x
    t_lo, t_hi = 0.0, 1.0
    for _ in range(bisections):
        mid = (t_lo + t_hi) / 2.0
        if int(model.predict((x + mid * delta)[None])[0]) != y_true:
            t_hi = mid
        else:
            t_lo = mid
    x_adv = x + t_hi * delta
    x_adv = np.clip(x + _project(x_adv - x, cfg.epsilon, cfg.norm), *cfg.clip_range)
    result = _finish(model, x, x_adv, y_true, cfg,
                     base.iterations + bisections, [f"t={t_hi:.8f}"])
    if not result.success:
        # projection/clip nudged the point back across; keep the PGD endpoint
        return AttackResult(base.x_adv, True, base.iterations + bisections,
                            base.final_confidence, result.notes + ("bisection reverted",))
    return result


ATTACK_NAMES = ("pgd", "tsce", "tmse", "csa", "noise", "rotation", "boundary")


def run_attack(name, model, x, y_true, cfg):
    if name == "pgd":
        return pgd(model, x, y_true, cfg)
    if name in ("tsce", "tmse"):
        cfg = replace(cfg, loss_kind="sce" if name == "tsce" else "mse",
                      target=cfg.target or "random")
        return pgd_targeted(model, x, y_true, cfg)
    if name == "csa":
        return csa(model, x, y_true, cfg)
    if name == "noise":
        return noise_attack(x, cfg, model=model, y_true=y_true)
    if name == "rotation":
        return rotation_attack(model, x, y_true, cfg)
    if name == "boundary":
        return boundary_proximal(model, x, y_true, cfg)
    raise UsageError(f"unknown attack {name!r}; expected one of {ATTACK_NAMES}")


def attack_batch(model, xs, ys, name, cfg):
    """Per-sample attacks with seeds derived as cfg.seed + index."""
    results = []
    for i, (x, y) in enumerate(zip(np.asarray(xs, dtype=np.float64), ys)):
        results.append(run_attack(name, model, x, int(y), replace(cfg, seed=cfg.seed + i)))
    return results


def parse_attack_spec(spec):
    """Attack spec string -> (name, AttackConfig).

    Form: name[:norm][:key=value]..., e.g. "pgd:linf:eps=0.3:iters=70",
    "tmse:eps=0.3", "csa:w=0.8", "noise", "rotation", "boundary:l2:eps=auto".
    An l2 spec with eps=auto (or no eps) takes 10x the default linf budget.
    """
    tokens = [t for t in spec.split(":") if t]
    if not tokens:
        raise UsageError("empty attack spec")
    name = tokens[0]
    if name not in ATTACK_NAMES:
        raise UsageError(f"unknown attack {name!r}; expected one of {ATTACK_NAMES}")
    fields = {}
    norm = "linf"
    eps = None
    for token in tokens[1:]:
        if token in ("linf", "l2"):
            norm = token
            continue
        if "=" not in token:
            raise UsageError(f"expected key=value in attack spec, got {token!r}")
        key, value = token.split("=", 1)
        if key == "eps":
            eps = value
        elif key == "alpha":
            fields["step_size"] = float(value)
        elif key == "iters":
            fields["iterations"] = int(value)
        elif key == "w":
            fields["csa_weight"] = float(value)
        elif key == "seed":
            fields["seed"] = int(value)
        elif key == "loss":
            fields["loss_kind"] = value
        elif key == "target":
            fields["target"] = value if value == "random" else int(value)
        else:
            raise UsageError(f"unknown attack option {key!r}")
    if eps is None or eps == "auto":
        epsilon = auto_l2_epsilon() if norm == "l2" else DEFAULT_LINF_EPSILON
    else:
        epsilon = float(eps)
    return name, AttackConfig(norm=norm, epsilon=epsilon, **fields)
