"""Semi-supervised two-stage training loop for tile translation.

Each epoch runs two stages: an unsupervised stage of two-step cycle
reconstructions over all unpaired records (photo -> map -> photo and
map -> photo -> map), then a supervised stage over all paired records.
After a configurable epoch threshold an anti-leakage rule freezes the
cycle-reconstruction gradient path into the first-step generator of each
cycle, which stops that generator from hiding reconstruction hints in its
output; its adversarial and identity terms stay live unless also blocked.

Models are deliberately tiny: an affine color map as generator and a
logistic channel-statistics discriminator, each with a flat parameter
vector differentiated by central finite differences. The schedule, loss
wiring, freeze rule and optimizer are the point; network capacity is not.
"""

import json
import random
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from .dataset import DatasetManifest, load_manifest, resolve_path
from .image import read_png
from .losses import (
    LossBreakdown,
    LossWeights,
    adversarial_loss,
    content_cycle_mrm,
    content_cycle_rmr,
    content_sup_m2r,
    content_sup_r2m,
    identity_loss,
    pixel_l1,
    total_loss,
)
from .validation import ConfigError, as_image


class TrainingError(RuntimeError):
    """Raised when optimization produces a non-finite loss or parameter."""


@dataclass(frozen=True)
class TrainingSchedule:
    """Epoch counts, freeze threshold and optimizer settings."""

    epochs: int
    freeze_epoch: int
    base_lr: float = 2e-4
    decay_start: int = None
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 1
    freeze_blocks_adversarial: bool = False

    def __post_init__(self):
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError(f"epochs must be a positive integer, got {self.epochs!r}")
        if not isinstance(self.freeze_epoch, int) or not (0 < self.freeze_epoch <= self.epochs):
            raise ConfigError(
                f"freeze_epoch must satisfy 0 < freeze_epoch <= epochs, "
                f"got {self.freeze_epoch!r} with epochs={self.epochs}"
            )
        if self.decay_start is None:
            object.__setattr__(self, "decay_start", self.epochs // 2)
        if not (0 <= self.decay_start <= self.epochs):
            raise ConfigError(f"decay_start must lie in [0, epochs], got {self.decay_start!r}")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not (0.0 < b < 1.0):
                raise ConfigError(f"{name} must lie in (0, 1), got {b!r}")
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr!r}")
        if self.batch_size != 1:
            raise ConfigError("only batch_size=1 is supported")


def learning_rate(sched, epoch):
    """Constant at base_lr, then linear decay to zero at the final epoch."""
    if epoch < sched.decay_start:
        return sched.base_lr
    span = sched.epochs - sched.decay_start
    if span <= 0:
        return sched.base_lr
    return sched.base_lr * (sched.epochs - epoch) / span


class Adam:
    """Textbook bias-corrected Adam over a flat parameter vector."""

    def __init__(self, n_params, beta1=0.5, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params, grad, lr):
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad ** 2
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def fd_param_gradient(objective, params, h_scale=1e-4):
    """Central-difference gradient of ``objective`` over a flat vector.

    The step for parameter i is ``h_scale * max(1, |params[i]|)``. The
    params array is restored exactly after probing.
    """
    grad = np.zeros_like(params)
    for i in range(params.size):
        orig = params[i]
        h = h_scale * max(1.0, abs(orig))
        params[i] = orig + h
        up = objective()
        params[i] = orig - h
        down = objective()
        params[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad


class ToyAffineGenerator:
    """Per-pixel affine color map: out = W @ rgb + b, 12 parameters.

    Initialized at the identity. Output is unclamped; clipping to the
    8-bit range happens only at export.
    """

    n_params = 12

    def __init__(self, params=None):
        if params is None:
            params = np.concatenate([np.eye(3).ravel(), np.zeros(3)])
        self.params = np.asarray(params, dtype=np.float64).copy()
        if self.params.shape != (12,):
            raise ConfigError(f"generator expects 12 parameters, got {self.params.shape}")

    def apply(self, img):
        img = as_image(img)
        w = self.params[:9].reshape(3, 3)
        b = self.params[9:]
        if img.ndim == 2:
            # A single-channel tile is treated as a gray RGB triple.
            img = np.stack([img, img, img], axis=-1)
            return (img @ w.T + b).mean(axis=-1)
        return img @ w.T + b

    def weight_matrix(self):
        return self.params[:9].reshape(3, 3).copy()

    def bias(self):
        return self.params[9:].copy()


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


class ToyStatDiscriminator:
    """Logistic score over per-channel mean/std features, 8 parameters.

    Features are channel means and population standard deviations on the
    8-bit scale divided by 255. Parameters: three mean weights, three
    std weights, a gain and a bias. Zero weights give score 0.5.
    """

    n_params = 8

    def __init__(self, params=None):
        if params is None:
            params = np.concatenate([np.zeros(6), [1.0, 0.0]])
        self.params = np.asarray(params, dtype=np.float64).copy()
        if self.params.shape != (8,):
            raise ConfigError(f"discriminator expects 8 parameters, got {self.params.shape}")

    def score(self, img):
        img = as_image(img)
        if img.ndim == 2:
            img = np.stack([img, img, img], axis=-1)
        mu = img.mean(axis=(0, 1)) / 255.0
        sd = img.std(axis=(0, 1)) / 255.0
        w_mu = self.params[:3]
        w_sd = self.params[3:6]
        gain = self.params[6]
        bias = self.params[7]
        z = gain * (w_mu @ mu + w_sd @ sd) + bias
        return float(_sigmoid(z))


@dataclass
class ModelBundle:
    """The four trainable components of the translation game."""

    g_rm: ToyAffineGenerator
    g_mr: ToyAffineGenerator
    d_m: ToyStatDiscriminator
    d_r: ToyStatDiscriminator

    @classmethod
    def toy(cls):
        return cls(
            g_rm=ToyAffineGenerator(),
            g_mr=ToyAffineGenerator(),
            d_m=ToyStatDiscriminator(),
            d_r=ToyStatDiscriminator(),
        )

    def components(self):
        return {"g_rm": self.g_rm, "g_mr": self.g_mr, "d_m": self.d_m, "d_r": self.d_r}


@dataclass(frozen=True)
class PlanStep:
    stage: str        # "unsupervised" | "supervised"
    direction: str    # "rmr" | "mrm" | "r2m" | "m2r"
    sample_id: str
    freeze_first_step: bool = False


@dataclass(frozen=True)
class EpochPlan:
    epoch: int
    steps: tuple


def build_epoch_plan(manifest, epoch, sched, seed):
    """Plan one epoch: every unsupervised step, then every supervised step.

    Unpaired photo records become photo->map->photo cycles, unpaired map
    records become map->photo->map cycles; each paired record contributes
    one supervised step per direction. Ordering within each stage is
    shuffled deterministically from (seed, epoch). The freeze flag is set
    on unsupervised steps once ``epoch >= freeze_epoch``.
    """
    train = [r for r in manifest.records if r.subset == "train"]
    if not train:
        raise ValueError("manifest has no train records to plan an epoch over")
    rng = random.Random(seed * 1_000_003 + epoch)
    frozen = epoch >= sched.freeze_epoch

    unsup = []
    for r in train:
        if r.group == "unpaired_rs":
            unsup.append(PlanStep("unsupervised", "rmr", r.id, frozen))
        elif r.group == "unpaired_map":
            unsup.append(PlanStep("unsupervised", "mrm", r.id, frozen))
    rng.shuffle(unsup)

    paired = [r for r in train if r.group == "paired"]
    rng.shuffle(paired)
    sup = []
    for r in paired:
        sup.append(PlanStep("supervised", "r2m", r.id))
        sup.append(PlanStep("supervised", "m2r", r.id))
    return EpochPlan(epoch=epoch, steps=tuple(unsup + sup))


def _gen_adv_term(disc, fake, eps):
    """Generator-side adversarial value: mean log(1 - D(fake))."""
    return adversarial_loss([], [disc.score(fake)], eps)


def run_step(step, models, w, optimizers, lr, images, sched=None):
    """Execute one plan step: evaluate the ledger, update each live component.

    Parameters
    ----------
    step : PlanStep
    models : ModelBundle
    w : LossWeights
    optimizers : dict of component name -> Adam
        A component's optimizer advances only when the component has at
        least one live loss term this step; a frozen generator with all
        other terms weighted to zero is therefore left bit-identical.
    lr : float
    images : dict
        ``{"rs": tile}`` and/or ``{"map": tile}`` as the direction needs.
    sched : TrainingSchedule, optional
        Supplies ``freeze_blocks_adversarial``; defaults to not blocking.

    Returns
    -------
    (LossBreakdown, dict)
        The weighted objective ledger and the discriminator losses
        applied this step.
    """
    blocks_adv = bool(sched.freeze_blocks_adversarial) if sched is not None else False
    frozen = step.freeze_first_step
    eps = w.eps_log

    needs = {"rmr": ("rs",), "mrm": ("map",),
             "r2m": ("rs", "map"), "m2r": ("rs", "map")}
    for key in needs.get(step.direction, ()):
        if key not in images:
            raise ValueError(
                f"step {step.direction} on {step.sample_id!r} needs a {key} tile")

    objectives = {}
    disc_losses = {}

    if step.direction == "rmr":
        x_r = images["rs"]
        fake_m = models.g_rm.apply(x_r)
        recon_r = models.g_mr.apply(fake_m)
        content = {"cycle_rmr": content_cycle_rmr(recon_r, x_r, w)}
        adv = {"rmr_first": _gen_adv_term(models.d_m, fake_m, eps)}
        idt = {"mr": identity_loss(models.g_mr.apply(x_r), x_r)}
        breakdown = total_loss(content, adv, idt, w)

        g_rm_terms = []
        if not frozen:
            g_rm_terms.append(lambda: w.lambda_ctn * content_cycle_rmr(
                models.g_mr.apply(models.g_rm.apply(x_r)), x_r, w).total)
        if w.lambda_adv > 0 and not (frozen and blocks_adv):
            g_rm_terms.append(lambda: w.lambda_adv * _gen_adv_term(
                models.d_m, models.g_rm.apply(x_r), eps))
        objectives["g_rm"] = g_rm_terms

        g_mr_terms = [lambda: w.lambda_ctn * content_cycle_rmr(
            models.g_mr.apply(fake_m), x_r, w).total]
        if w.lambda_idt > 0:
            g_mr_terms.append(lambda: w.lambda_idt * identity_loss(
                models.g_mr.apply(x_r), x_r))
        objectives["g_mr"] = g_mr_terms

        if w.lambda_adv > 0:
            d_obj = lambda: -adversarial_loss([], [models.d_m.score(fake_m)], eps)
            objectives["d_m"] = [d_obj]
            disc_losses["d_m"] = d_obj()

    elif step.direction == "mrm":
        x_m = images["map"]
        fake_r = models.g_mr.apply(x_m)
        recon_m = models.g_rm.apply(fake_r)
        content = {"cycle_mrm": content_cycle_mrm(recon_m, x_m, w)}
        adv = {"mrm_first": _gen_adv_term(models.d_r, fake_r, eps)}
        idt = {"rm": identity_loss(models.g_rm.apply(x_m), x_m)}
        breakdown = total_loss(content, adv, idt, w)

        g_mr_terms = []
        if not frozen:
            g_mr_terms.append(lambda: w.lambda_ctn * content_cycle_mrm(
                models.g_rm.apply(models.g_mr.apply(x_m)), x_m, w).total)
        if w.lambda_adv > 0 and not (frozen and blocks_adv):
            g_mr_terms.append(lambda: w.lambda_adv * _gen_adv_term(
                models.d_r, models.g_mr.apply(x_m), eps))
        objectives["g_mr"] = g_mr_terms

        g_rm_terms = [lambda: w.lambda_ctn * content_cycle_mrm(
            models.g_rm.apply(fake_r), x_m, w).total]
        if w.lambda_idt > 0:
            g_rm_terms.append(lambda: w.lambda_idt * identity_loss(
                models.g_rm.apply(x_m), x_m))
        objectives["g_rm"] = g_rm_terms

        if w.lambda_adv > 0:
            d_obj = lambda: -adversarial_loss([], [models.d_r.score(fake_r)], eps)
            objectives["d_r"] = [d_obj]
            disc_losses["d_r"] = d_obj()

    elif step.direction == "r2m":
        x_r, x_m = images["rs"], images["map"]
        fake_m = models.g_rm.apply(x_r)
        content = {"sup_r2m": content_sup_r2m(fake_m, x_m, w)}
        adv = {"r2m": adversarial_loss(
            [models.d_m.score(x_m)], [models.d_m.score(fake_m)], eps)}
        idt = {"rm": identity_loss(models.g_rm.apply(x_m), x_m)}
        breakdown = total_loss(content, adv, idt, w)

        g_rm_terms = [lambda: w.lambda_ctn * content_sup_r2m(
            models.g_rm.apply(x_r), x_m, w).total]
        if w.lambda_adv > 0:
            g_rm_terms.append(lambda: w.lambda_adv * _gen_adv_term(
                models.d_m, models.g_rm.apply(x_r), eps))
        if w.lambda_idt > 0:
            g_rm_terms.append(lambda: w.lambda_idt * identity_loss(
                models.g_rm.apply(x_m), x_m))
        objectives["g_rm"] = g_rm_terms

        if w.lambda_adv > 0:
            d_obj = lambda: -adversarial_loss(
                [models.d_m.score(x_m)], [models.d_m.score(fake_m)], eps)
            objectives["d_m"] = [d_obj]
            disc_losses["d_m"] = d_obj()

    elif step.direction == "m2r":
        x_r, x_m = images["rs"], images["map"]
        fake_r = models.g_mr.apply(x_m)
        content = {"sup_m2r": content_sup_m2r(fake_r, x_r, w)}
        adv = {"m2r": adversarial_loss(
            [models.d_r.score(x_r)], [models.d_r.score(fake_r)], eps)}
        idt = {"mr": identity_loss(models.g_mr.apply(x_r), x_r)}
        breakdown = total_loss(content, adv, idt, w)

        g_mr_terms = [lambda: w.lambda_ctn * content_sup_m2r(
            models.g_mr.apply(x_m), x_r, w).total]
        if w.lambda_adv > 0:
            g_mr_terms.append(lambda: w.lambda_adv * _gen_adv_term(
                models.d_r, models.g_mr.apply(x_m), eps))
        if w.lambda_idt > 0:
            g_mr_terms.append(lambda: w.lambda_idt * identity_loss(
                models.g_mr.apply(x_r), x_r))
        objectives["g_mr"] = g_mr_terms

        if w.lambda_adv > 0:
            d_obj = lambda: -adversarial_loss(
                [models.d_r.score(x_r)], [models.d_r.score(fake_r)], eps)
            objectives["d_r"] = [d_obj]
            disc_losses["d_r"] = d_obj()

    else:
        raise ValueError(f"unknown step direction {step.direction!r}")

    if not np.isfinite(breakdown.total):
        raise TrainingError(
            f"non-finite loss at {step.direction} step on {step.sample_id!r}: "
            f"{breakdown.terms}"
        )

    # Gradients from the shared pre-update snapshot, then apply in a fixed
    # order. Components with no live terms are skipped entirely so even
    # optimizer momentum cannot move them.
    comps = models.components()
    grads = {}
    for name in ("g_rm", "g_mr", "d_m", "d_r"):
        terms = objectives.get(name, [])
        if not terms:
            continue
        obj = lambda terms=terms: sum(t() for t in terms)
        grads[name] = fd_param_gradient(obj, comps[name].params)
    for name, grad in grads.items():
        comp = comps[name]
        comp.params = optimizers[name].step(comp.params, grad, lr)
        if not np.all(np.isfinite(comp.params)):
            raise TrainingError(
                f"non-finite parameters in {name} after {step.direction} step "
                f"on {step.sample_id!r}"
            )
    return breakdown, disc_losses


def manifest_image_loader(manifest_path):
    """Loader resolving record paths against the manifest directory."""

    def load(record):
        rs = read_png(resolve_path(manifest_path, record.rs_path)) if record.rs_path else None
        mp = read_png(resolve_path(manifest_path, record.map_path)) if record.map_path else None
        return rs, mp

    return load


def train(manifest, models, w, sched, seed, image_loader=None, log_path=None):
    """Run the full two-stage schedule; returns the step-level log.

    Parameters
    ----------
    manifest : DatasetManifest or path
    models : ModelBundle
        Updated in place.
    w : LossWeights
    sched : TrainingSchedule
    seed : int
        Drives all epoch shuffles.
    image_loader : callable, optional
        ``record -> (rs, map)`` with None for absent sides. Defaults to
        reading PNGs relative to the manifest path (which must then be a
        path).
    log_path : path, optional
        When given, each log entry is streamed as one JSON line.

    Returns
    -------
    list of dict
        One entry per step: epoch, step index, stage, direction, sample,
        freeze flag, learning rate, weighted total, term ledger, and any
        discriminator losses.
    """
    if not isinstance(manifest, DatasetManifest):
        manifest_path = manifest
        manifest = load_manifest(manifest_path)
        if image_loader is None:
            image_loader = manifest_image_loader(manifest_path)
    if image_loader is None:
        raise ValueError("an image_loader is required when passing a manifest object")

    records = {r.id: r for r in manifest.records}
    cache = {}

    def tiles_for(step):
        if step.sample_id not in cache:
            cache[step.sample_id] = image_loader(records[step.sample_id])
        rs, mp = cache[step.sample_id]
        images = {}
        if rs is not None:
            images["rs"] = rs
        if mp is not None:
            images["map"] = mp
        return images

    optimizers = {
        name: Adam(comp.n_params, sched.adam_beta1, sched.adam_beta2, sched.adam_eps)
        for name, comp in models.components().items()
    }

    log = []
    sink = open(log_path, "w") if log_path else None
    try:
        for epoch in range(sched.epochs):
            lr = learning_rate(sched, epoch)
            plan = build_epoch_plan(manifest, epoch, sched, seed)
            for k, step in enumerate(plan.steps):
                breakdown, disc = run_step(
                    step, models, w, optimizers, lr, tiles_for(step), sched)
                entry = {
                    "epoch": epoch,
                    "step": k,
                    "stage": step.stage,
                    "direction": step.direction,
                    "sample": step.sample_id,
                    "freeze": step.freeze_first_step,
                    "lr": lr,
                    "total": breakdown.total,
                    "terms": breakdown.terms,
                    "disc": disc,
                }
                log.append(entry)
                if sink:
                    sink.write(json.dumps(entry, sort_keys=True) + "\n")
    finally:
        if sink:
            sink.close()
    return log


def save_checkpoint(models, path):
    """Write all component parameter vectors as a versioned JSON blob."""
    doc = {
        "version": 1,
        "params": {name: comp.params.tolist() for name, comp in models.components().items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise ValueError(f"checkpoint {path}: unsupported version {doc.get('version')!r}")
    p = doc["params"]
    return ModelBundle(
        g_rm=ToyAffineGenerator(np.array(p["g_rm"])),
        g_mr=ToyAffineGenerator(np.array(p["g_mr"])),
        d_m=ToyStatDiscriminator(np.array(p["d_m"])),
        d_r=ToyStatDiscriminator(np.array(p["d_r"])),
    )


class MapTileTranslator(BaseEstimator):
    """Estimator-style front end over the toy training loop.

    ``fit`` consumes a dataset manifest (object plus loader, or a path)
    and trains a fresh toy model bundle; ``transform``/``predict`` map
    photo tiles to map tiles with outputs clipped to the 8-bit range.
    """

    def __init__(self, epochs=30, freeze_epoch=None, base_lr=2e-4,
                 decay_start=None, lambda_ctn=10.0, lambda_adv=1.0,
                 lambda_idt=0.1, lambda_l1u=1.0, lambda_l1=10.0, seed=0):
        self.epochs = epochs
        self.freeze_epoch = freeze_epoch
        self.base_lr = base_lr
        self.decay_start = decay_start
        self.lambda_ctn = lambda_ctn
        self.lambda_adv = lambda_adv
        self.lambda_idt = lambda_idt
        self.lambda_l1u = lambda_l1u
        self.lambda_l1 = lambda_l1
        self.seed = seed

    def _schedule(self):
        freeze = self.freeze_epoch
        if freeze is None:
            freeze = max(1, (3 * self.epochs) // 4)
        return TrainingSchedule(
            epochs=self.epochs, freeze_epoch=freeze, base_lr=self.base_lr,
            decay_start=self.decay_start)

    def _weights(self):
        return LossWeights(
            lambda_ctn=self.lambda_ctn, lambda_adv=self.lambda_adv,
            lambda_idt=self.lambda_idt, lambda_l1u=self.lambda_l1u,
            lambda_l1=self.lambda_l1)

    def fit(self, X, y=None, image_loader=None):
        """Train on a manifest (path, or DatasetManifest with a loader)."""
        self.models_ = ModelBundle.toy()
        self.history_ = train(
            X, self.models_, self._weights(), self._schedule(), self.seed,
            image_loader=image_loader)
        return self

    def transform(self, X):
        """Map an iterable of photo tiles to generated map tiles."""
        if not hasattr(self, "models_"):
            raise RuntimeError("this MapTileTranslator instance is not fitted yet")
        out = []
        for tile in X:
            gen = self.models_.g_rm.apply(as_image(tile))
            out.append(np.clip(gen, 0.0, 255.0))
        return out

    def predict(self, X):
        return self.transform(X)
