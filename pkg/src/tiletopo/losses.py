"""Training objective for map-tile translation.

The objective combines three families of terms:

* content terms, which compare a generated tile against a reference with
  pixel L1 plus two gradient-domain penalties (gradient L1 and gradient
  structure),
* adversarial terms over opaque discriminator scores, and
* identity terms that pin a generator near the identity on its own target
  domain.

Supervised and cycle variants differ only in which content terms are
active. Image-space analytic gradients are provided for the three content
primitives together with a central finite-difference checker.
"""

from dataclasses import dataclass, field

import numpy as np

from .image import luminance_or_self
from .imagemath import (
    columnwise_abs_correlation,
    gradient_map,
    rowwise_abs_correlation,
)
from .validation import (
    ChannelError,
    ConfigError,
    as_image,
    check_nonnegative,
    check_positive,
    check_same_shape,
)


@dataclass(frozen=True)
class LossWeights:
    """Scalar weights and stabilizers of the full objective."""

    lambda_ctn: float = 10.0
    lambda_adv: float = 1.0
    lambda_idt: float = 0.1
    lambda_l1u: float = 1.0
    lambda_l1: float = 10.0
    c1_grastr: float = 1e-8
    c2_grastr: float = 1e-8
    eps_log: float = 1e-12

    def __post_init__(self):
        for name in ("lambda_ctn", "lambda_adv", "lambda_idt", "lambda_l1u", "lambda_l1"):
            check_nonnegative(getattr(self, name), name)
        for name in ("c1_grastr", "c2_grastr", "eps_log"):
            check_positive(getattr(self, name), name)


@dataclass(frozen=True)
class LossBreakdown:
    """A scalar loss together with the weighted terms that sum to it."""

    total: float
    terms: dict = field(default_factory=dict)

    @classmethod
    def from_terms(cls, terms):
        return cls(total=float(sum(terms.values())), terms=dict(terms))


def pixel_l1(a, b):
    """Mean absolute pixel difference over all entries of two tiles."""
    a = as_image(a, "a")
    b = as_image(b, "b")
    check_same_shape(a, b, "a", "b")
    return float(np.mean(np.abs(a - b)))


def gra_l1(gen, truth):
    """Mean absolute difference between the two gradient maps.

    Three-channel inputs are collapsed to luminance first, since the
    gradient map is defined on scalar images.
    """
    gen = as_image(gen, "gen")
    truth = as_image(truth, "truth")
    check_same_shape(gen, truth, "gen", "truth")
    g = gradient_map(luminance_or_self(gen))
    t = gradient_map(luminance_or_self(truth))
    return float(np.mean(np.abs(g - t)))


def gra_str(gen, truth, w=None):
    """Gradient structure loss.

    With G and T the gradient maps of ``gen`` and ``truth``, the loss is

        2 - mean_j corr(G[:, j], T[:, j]) - mean_i corr(G[i, :], T[i, :])

    where ``corr`` is the stabilized absolute Pearson correlation
    (stabilizer ``w.c1_grastr`` for columns, ``w.c2_grastr`` for rows),
    means running over all N-1 columns and M-1 rows of the gradient maps.
    The value lies in [0, 2] up to stabilizer slack.
    """
    if w is None:
        w = LossWeights()
    gen = as_image(gen, "gen")
    truth = as_image(truth, "truth")
    check_same_shape(gen, truth, "gen", "truth")
    g = gradient_map(luminance_or_self(gen))
    t = gradient_map(luminance_or_self(truth))
    col = columnwise_abs_correlation(g, t, w.c1_grastr)
    row = rowwise_abs_correlation(g, t, w.c2_grastr)
    return float(2.0 - np.mean(col) - np.mean(row))


def topo_consistency(gen, truth, w=None):
    """Combined gradient-domain penalty: ``gra_l1 + gra_str``."""
    if w is None:
        w = LossWeights()
    return gra_l1(gen, truth) + gra_str(gen, truth, w)


def content_sup_r2m(gen_map, truth_map, w):
    """Supervised content loss toward the map domain.

    Pixel L1 (weighted by ``lambda_l1``) plus both gradient-domain terms.
    """
    terms = {
        "l1": w.lambda_l1 * pixel_l1(gen_map, truth_map),
        "gra_l1": gra_l1(gen_map, truth_map),
        "gra_str": gra_str(gen_map, truth_map, w),
    }
    return LossBreakdown.from_terms(terms)


def content_sup_m2r(gen_rs, truth_rs, w):
    """Supervised content loss toward the photo domain: pixel L1 only.

    Gradient terms are recorded as zeros so breakdowns from both
    directions share a schema.
    """
    terms = {
        "l1": w.lambda_l1 * pixel_l1(gen_rs, truth_rs),
        "gra_l1": 0.0,
        "gra_str": 0.0,
    }
    return LossBreakdown.from_terms(terms)


def content_cycle_rmr(recon_rs, orig_rs, w):
    """Cycle content loss for photo -> map -> photo reconstruction."""
    terms = {
        "l1": w.lambda_l1u * pixel_l1(recon_rs, orig_rs),
        "gra_l1": 0.0,
        "gra_str": 0.0,
    }
    return LossBreakdown.from_terms(terms)


def content_cycle_mrm(recon_map, orig_map, w):
    """Cycle content loss for map -> photo -> map reconstruction.

    The reconstructed map must also match in the gradient domain.
    """
    terms = {
        "l1": w.lambda_l1u * pixel_l1(recon_map, orig_map),
        "gra_l1": gra_l1(recon_map, orig_map),
        "gra_str": gra_str(recon_map, orig_map, w),
    }
    return LossBreakdown.from_terms(terms)


def adversarial_loss(d_real, d_fake, eps=1e-12):
    """Log-likelihood GAN objective over opaque discriminator scores.

    ``mean(log(clamp(d_real, eps, 1))) + mean(log(clamp(1 - d_fake, eps, 1)))``.
    Either vector may be empty, in which case its term contributes zero;
    this supports steps where only one side of the game is observed.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps!r}")
    total = 0.0
    for name, scores, flip in (("d_real", d_real, False), ("d_fake", d_fake, True)):
        v = np.asarray(scores, dtype=np.float64).ravel()
        if v.size == 0:
            continue
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError(f"{name} scores must lie in [0, 1]")
        v = 1.0 - v if flip else v
        total += float(np.mean(np.log(np.clip(v, eps, 1.0))))
    return total


def identity_loss(g_applied_to_target, target):
    """Pixel L1 between a generator's output on its own domain and the input."""
    return pixel_l1(g_applied_to_target, target)


def total_loss(content, adversarial, identity, w):
    """Combine per-direction terms into the full weighted objective.

    Parameters
    ----------
    content : mapping of name -> LossBreakdown
        Content breakdowns (already carrying their internal L1 weights).
    adversarial : mapping of name -> real
        Adversarial objective values.
    identity : mapping of name -> real
        Identity loss values.
    w : LossWeights

    Returns
    -------
    LossBreakdown
        ``lambda_ctn * sum(content) + lambda_adv * sum(adv) +
        lambda_idt * sum(idt)`` with one ledger entry per weighted term,
        keyed ``ctn.<name>.<term>``, ``adv.<name>``, ``idt.<name>``.
    """
    terms = {}
    for name, bd in dict(content).items():
        for term, value in bd.terms.items():
            terms[f"ctn.{name}.{term}"] = w.lambda_ctn * value
    for name, value in dict(adversarial).items():
        terms[f"adv.{name}"] = w.lambda_adv * float(value)
    for name, value in dict(identity).items():
        terms[f"idt.{name}"] = w.lambda_idt * float(value)
    return LossBreakdown.from_terms(terms)


# ---------------------------------------------------------------------------
# Analytic image-space gradients.

LOSS_IDS = ("pixel_l1", "gra_l1", "gra_str")


def _gradient_map_vjp(img, upstream):
    """Pull a gradient on the gradient map back to image pixels.

    ``upstream`` is dL/dG for G = gradient_map(img). Where the magnitude
    is exactly zero the map is not differentiable; those entries get a
    zero pull-back (callers resample such configurations).
    """
    gx = img[:-1, 1:] - img[:-1, :-1]
    gy = img[1:, :-1] - img[:-1, :-1]
    mag = np.sqrt(gx ** 2 + gy ** 2)
    w = np.zeros_like(mag)
    nz = mag > 0
    w[nz] = upstream[nz] / mag[nz]
    dx = w * gx
    dy = w * gy
    out = np.zeros_like(img)
    out[:-1, 1:] += dx
    out[:-1, :-1] -= dx
    out[1:, :-1] += dy
    out[:-1, :-1] -= dy
    return out


def _abs_corr_gradient(x_cols, y_cols, c):
    """d(stabilized abs corr)/dx per column for equal-shape 2-D arrays."""
    p = x_cols.shape[0]
    dx = x_cols - x_cols.mean(axis=0)
    dy = y_cols - y_cols.mean(axis=0)
    cov = np.mean(dx * dy, axis=0)
    sx = np.sqrt(np.mean(dx ** 2, axis=0))
    sy = np.sqrt(np.mean(dy ** 2, axis=0))
    a = np.abs(cov) + c
    b = sx * sy + c
    grad = np.zeros_like(x_cols)
    live = sx > 0
    sgn = np.sign(cov)
    # d/dx_i of |cov| is sign(cov) * dy_i / p; of sx is dx_i / (p * sx).
    grad[:, live] = (
        sgn[live] * dy[:, live] * b[live]
        - a[live] * sy[live] * dx[:, live] / sx[live]
    ) / (p * b[live] ** 2)
    return grad


def loss_image_gradient(loss_id, gen, truth, w=None):
    """Analytic derivative of a content loss with respect to ``gen`` pixels.

    Supported losses: ``pixel_l1`` (any channel count), ``gra_l1`` and
    ``gra_str`` (single-channel). At non-smooth points (zero pixel or
    gradient-map differences, zero magnitudes) the subgradient zero is
    returned; callers that need checkable gradients must keep inputs
    bounded away from those points.
    """
    if w is None:
        w = LossWeights()
    if loss_id not in LOSS_IDS:
        raise ConfigError(f"unknown loss_id {loss_id!r}; expected one of {LOSS_IDS}")
    gen = as_image(gen, "gen")
    truth = as_image(truth, "truth")
    check_same_shape(gen, truth, "gen", "truth")
    if loss_id == "pixel_l1":
        return np.sign(gen - truth) / gen.size
    if gen.ndim != 2:
        raise ChannelError(f"{loss_id} gradient requires single-channel images")

    g = gradient_map(gen)
    t = gradient_map(truth)
    if loss_id == "gra_l1":
        upstream = np.sign(g - t) / g.size
        return _gradient_map_vjp(gen, upstream)

    # gra_str: columns with c1, rows with c2, each mean contributing
    # negatively to the loss.
    q = g.shape[1]
    p = g.shape[0]
    up_cols = _abs_corr_gradient(g, t, w.c1_grastr)
    up_rows = _abs_corr_gradient(g.T, t.T, w.c2_grastr).T
    upstream = -(up_cols / q) - (up_rows / p)
    return _gradient_map_vjp(gen, upstream)


def loss_value(loss_id, gen, truth, w=None):
    """Evaluate one of the checkable content losses by id."""
    if w is None:
        w = LossWeights()
    if loss_id == "pixel_l1":
        return pixel_l1(gen, truth)
    if loss_id == "gra_l1":
        return gra_l1(gen, truth)
    if loss_id == "gra_str":
        return gra_str(gen, truth, w)
    raise ConfigError(f"unknown loss_id {loss_id!r}; expected one of {LOSS_IDS}")


def sample_smooth_pair(rng, shape, h=1e-3, scale=255.0, max_tries=1000):
    """Draw a random image pair on which all three losses are smooth.

    Central differences with step ``h`` are only trustworthy away from the
    kinks of the absolute values and the square root, so candidate pairs
    are resampled until pixel differences, gradient-map magnitudes,
    gradient-map differences and per-column/row covariances are all
    bounded away from zero by a comfortable multiple of ``h``.
    """
    from .imagemath import gradient_map

    for _ in range(max_tries):
        gen = rng.uniform(0.0, scale, size=shape)
        truth = rng.uniform(0.0, scale, size=shape)
        if np.min(np.abs(gen - truth)) <= 4 * h:
            continue
        g = gradient_map(gen)
        t = gradient_map(truth)
        if np.min(g) <= 10 * h or np.min(np.abs(g - t)) <= 10 * h:
            continue
        dg = g - g.mean(axis=0)
        dt = t - t.mean(axis=0)
        col_cov = np.abs(np.mean(dg * dt, axis=0))
        dgr = g - g.mean(axis=1, keepdims=True)
        dtr = t - t.mean(axis=1, keepdims=True)
        row_cov = np.abs(np.mean(dgr * dtr, axis=1))
        if np.min(col_cov) <= 1000 * h or np.min(row_cov) <= 1000 * h:
            continue
        return gen, truth
    raise RuntimeError(f"no smooth pair found in {max_tries} draws")


def finite_difference_check(loss_id, gen, truth, w=None, h=1e-3):
    """Worst relative error of the analytic gradient vs central differences.

    Each pixel of ``gen`` is perturbed by ``+-h`` and the symmetric
    difference quotient is compared against :func:`loss_image_gradient`.
    Pixels where the analytic gradient is below 1e-8 in magnitude are
    skipped. Returns 0.0 when no pixel passes the gate.
    """
    if w is None:
        w = LossWeights()
    check_positive(h, "h")
    gen = as_image(gen, "gen").copy()
    truth = as_image(truth, "truth")
    analytic = loss_image_gradient(loss_id, gen, truth, w)
    worst = 0.0
    flat = gen.reshape(-1)
    for i in range(flat.size):
        a = analytic.reshape(-1)[i]
        if abs(a) <= 1e-8:
            continue
        orig = flat[i]
        flat[i] = orig + h
        up = loss_value(loss_id, gen, truth, w)
        flat[i] = orig - h
        down = loss_value(loss_id, gen, truth, w)
        flat[i] = orig
        fd = (up - down) / (2.0 * h)
        worst = max(worst, abs(a - fd) / max(abs(a), abs(fd)))
    return worst
