"""Full-reference quality metrics for generated map tiles.

Three metrics are provided: mean squared error on the 8-bit scale, a
single-window structural similarity over whole-image population moments,
and an edge structural similarity index that compares binary edge maps
through a stabilized correlation and a mean-agreement factor. Each can be
computed on BT.601 luminance or as the mean of the three per-channel
values.
"""

from dataclasses import dataclass, field

import numpy as np

from .image import to_luminance
from .imagemath import canny_edges, flatten_progressive, stabilized_abs_correlation
from .validation import (
    ConfigError,
    as_image,
    check_positive,
    check_same_shape,
)

MODES = ("luminance", "rgbmean")


@dataclass(frozen=True)
class MetricConfig:
    """Stabilizers, edge-detector settings and channel handling."""

    c1: float = 1e-12
    c2: float = 1e-12
    canny_sigma: float = 1.4
    canny_low: float = 50.0
    canny_high: float = 150.0
    mode: str = "luminance"

    def __post_init__(self):
        check_positive(self.c1, "c1")
        check_positive(self.c2, "c2")
        check_positive(self.canny_sigma, "canny_sigma")
        if not (0 <= self.canny_low < self.canny_high):
            raise ConfigError(
                f"thresholds must satisfy 0 <= low < high, got "
                f"{self.canny_low!r}, {self.canny_high!r}"
            )
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")


def _per_mode(fn, gen, truth, mode):
    gen = as_image(gen, "gen")
    truth = as_image(truth, "truth")
    check_same_shape(gen, truth, "gen", "truth")
    if gen.ndim == 2:
        return fn(gen, truth)
    if mode == "luminance":
        return fn(to_luminance(gen), to_luminance(truth))
    vals = [fn(gen[:, :, c], truth[:, :, c]) for c in range(3)]
    return float(np.mean(vals))


def mse(gen, truth, cfg=None):
    """Mean squared pixel difference on the 8-bit scale.

    For three-channel inputs the configured mode decides between the
    luminance image and the mean of per-channel values.
    """
    cfg = cfg or MetricConfig()
    return _per_mode(lambda a, b: float(np.mean((a - b) ** 2)), gen, truth, cfg.mode)


def ssim(gen, truth, cfg=None):
    """Global single-window structural similarity.

    Uses whole-image population moments:

        (2 mu_g mu_t + C1)(2 sigma_gt + C2)
        -----------------------------------------
        (mu_g^2 + mu_t^2 + C1)(sigma_g^2 + sigma_t^2 + C2)

    Identical tiles score 1 even when constant, since the stabilizers
    cancel. Values lie in [-1, 1] up to stabilizer slack.
    """
    cfg = cfg or MetricConfig()

    def _ssim(a, b):
        mu_a = np.mean(a)
        mu_b = np.mean(b)
        da = a - mu_a
        db = b - mu_b
        var_a = np.mean(da ** 2)
        var_b = np.mean(db ** 2)
        cov = np.mean(da * db)
        num = (2.0 * mu_a * mu_b + cfg.c1) * (2.0 * cov + cfg.c2)
        den = (mu_a ** 2 + mu_b ** 2 + cfg.c1) * (var_a + var_b + cfg.c2)
        return float(num / den)

    return _per_mode(_ssim, gen, truth, cfg.mode)


def essi_from_edges(edges_gen, edges_truth, cfg=None):
    """Edge structural similarity of two binary edge maps.

    Both maps are flattened by progressive scanning; the score is the
    product of the stabilized absolute correlation (stabilizer C1) and
    the mean-agreement factor theta (stabilizer C2). Two empty maps agree
    perfectly (both factors reduce to C/C = 1); an empty map against a
    dense one is pushed toward zero by theta.
    """
    cfg = cfg or MetricConfig()
    a = np.asarray(edges_gen, dtype=np.float64)
    b = np.asarray(edges_truth, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"edge maps must match in shape: {a.shape} vs {b.shape}")
    terms = stabilized_abs_correlation(
        flatten_progressive(a), flatten_progressive(b), cfg.c1, cfg.c2
    )
    return float(terms.rho * terms.theta)


def essi(gen, truth, cfg=None):
    """Edge structural similarity between two images.

    Each image is reduced to a binary edge map (see
    :func:`tiletopo.imagemath.canny_edges`) and the maps are compared with
    :func:`essi_from_edges`. Symmetric in its arguments; ranges over
    [0, 1] up to stabilizer slack.
    """
    cfg = cfg or MetricConfig()

    def _essi(a, b):
        ea = canny_edges(a, cfg.canny_sigma, cfg.canny_low, cfg.canny_high)
        eb = canny_edges(b, cfg.canny_sigma, cfg.canny_low, cfg.canny_high)
        return essi_from_edges(ea, eb, cfg)

    return _per_mode(_essi, gen, truth, cfg.mode)


METRIC_FNS = {"mse": mse, "ssim": ssim, "essi": essi}


@dataclass(frozen=True)
class TileMetrics:
    tile_id: str
    mode: str
    mse: float
    ssim: float
    essi: float


@dataclass(frozen=True)
class MetricReport:
    """Per-tile metric rows plus per-mode aggregate means."""

    per_tile: tuple
    aggregates: dict = field(default_factory=dict)

    def rows(self):
        for rec in self.per_tile:
            yield rec


def evaluate_pair_set(pairs, cfg=None):
    """Score a set of (tile_id, gen, truth) pairs in both modes.

    Rows are ordered by tile id then mode; aggregates are the arithmetic
    means of the per-tile values for each mode and are absent when the
    input is empty.
    """
    cfg = cfg or MetricConfig()
    items = sorted(pairs, key=lambda p: str(p[0]))
    records = []
    for tile_id, gen, truth in items:
        for mode in MODES:
            mode_cfg = MetricConfig(
                c1=cfg.c1, c2=cfg.c2, canny_sigma=cfg.canny_sigma,
                canny_low=cfg.canny_low, canny_high=cfg.canny_high, mode=mode,
            )
            records.append(TileMetrics(
                tile_id=str(tile_id),
                mode=mode,
                mse=mse(gen, truth, mode_cfg),
                ssim=ssim(gen, truth, mode_cfg),
                essi=essi(gen, truth, mode_cfg),
            ))
    aggregates = {}
    if records:
        for mode in MODES:
            subset = [r for r in records if r.mode == mode]
            aggregates[mode] = {
                "mse": float(np.mean([r.mse for r in subset])),
                "ssim": float(np.mean([r.ssim for r in subset])),
                "essi": float(np.mean([r.essi for r in subset])),
            }
    return MetricReport(per_tile=tuple(records), aggregates=aggregates)
