"""Training loop for the voxel radiance field and the sampling-strategy harness.

Strategies decide which pixels emit rays each iteration:

    uniform          every pixel equally likely
    pixel            color-variation map of each training image (fixed)
    depth            depth-variation map of the current rendered depth,
                     refreshed every `depth_refresh` iterations
    fused            beta * pixel + (1 - beta) * depth, beta ramping 0 -> 0.5
    adaptive         half the rays uniform, the other half redistributed over
                     an 8 x 8 region grid in proportion to those rays' losses
    fused+adaptive   as adaptive, with the first half drawn from the fused map
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import probmap as pm
from . import sampler as sp
from .grid import RadianceGrid, inverse_softplus
from .metrics import psnr, ssim
from .optim import Adam, NumericalError
from .renderer import backprop_rays, render_image, render_rays
from .scene import RayBundle, all_pixels, generate_rays, render_ground_truth

log = logging.getLogger(__name__)

STRATEGIES = ("uniform", "pixel", "depth", "fused", "adaptive", "fused+adaptive")
ALIASES = {"none": "uniform", "pixel+depth": "fused", "all": "fused+adaptive"}
CURVE_HEADER = ("iter", "wall_ms", "loss", "psnr", "ssim")
COMPARE_HEADER = ("strategy", "iters_to_thresh", "final_psnr", "final_ssim", "wall_ms")


def canonical_strategy(name):
    name = ALIASES.get(name, name)
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}; valid: {', '.join(STRATEGIES)}")
    return name


@dataclass
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 1024  # rays per iteration, split evenly over training views
    lr: float = 5e-4
    lr_halve_at: float = 0.3  # fraction of the run after which lr is halved
    samples_per_ray: int = 32
    eval_samples: int = 64
    strategy: str = "uniform"
    beta_max: float = 0.5
    window: int = 3
    s_coef: float = 0.01
    perceptual: bool = False
    perceptual_weight: float = 0.01
    seed: int = 0
    deterministic: bool = False
    depth_refresh: int = 500
    eval_every: int = 50
    grid_resolution: int = 32
    init_density: float = 0.1  # activated density of the initial grid
    tv_weight: float = 0.0  # total-variation smoothness on raw grid parameters
    jitter: bool = True

    def __post_init__(self):
        self.strategy = canonical_strategy(self.strategy)
        for name in ("batch_size", "samples_per_ray", "eval_samples", "window",
                     "depth_refresh", "eval_every", "grid_resolution"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if not 0.0 <= self.lr_halve_at <= 1.0:
            raise ValueError("lr_halve_at must lie in [0, 1]")

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}

    def to_dict(self):
        return asdict(self)


# Desk-scale run used by the strategy comparison: raw voxel parameters need
# a far larger step than the 5e-4 used for network weights.
DESK_OVERRIDES = dict(iterations=600, batch_size=1024, lr=0.1, eval_every=20,
                      depth_refresh=100, init_density=0.01, seed=0)


def desk_config(**overrides):
    return TrainConfig(**{**DESK_OVERRIDES, **overrides})


def lr_at(iteration, config):
    cut = int(round(config.lr_halve_at * config.iterations))
    return config.lr if iteration < cut else config.lr / 2


@dataclass
class CurveRecord:
    iteration: int
    wall_ms: float
    loss: float
    psnr: float
    ssim: float


@dataclass
class TrainCurve:
    records: list = field(default_factory=list)
    counters: dict = field(default_factory=lambda: {"probmap_builds": 0, "fallbacks": 0})

    def append(self, rec):
        if self.records and rec.iteration <= self.records[-1].iteration:
            raise ValueError("curve iterations must be strictly increasing")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def first_reaching(self, threshold):
        for rec in self.records:
            if rec.psnr >= threshold:
                return rec.iteration
        return None

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_HEADER)
            for r in self.records:
                w.writerow([r.iteration, f"{r.wall_ms:.1f}", repr(r.loss), repr(r.psnr), repr(r.ssim)])


def mse_loss(pred, gt):
    """Mean over rays of the squared color error, and its gradient per ray."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"pred/gt shapes differ: {pred.shape} vs {gt.shape}")
    if len(pred) < 1:
        raise ValueError("empty batch")
    diff = pred - gt
    n = len(pred)
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def perceptual_stub_loss(pred, gt, image_ids):
    """Stand-in for a perceptual loss: it is NOT a learned feature distance.

    Mean over images of the L1 distance between the mean predicted and mean
    true color of that image's sampled rays ("patch means").
    """
    loss = 0.0
    grad = np.zeros_like(pred)
    images = np.unique(image_ids)
    for i in images:
        sel = image_ids == i
        d = pred[sel].mean(axis=0) - gt[sel].mean(axis=0)
        loss += np.abs(d).sum()
        grad[sel] += np.sign(d) / sel.sum()
    return loss / len(images), grad / len(images)


class _Views:
    """Ground truth and precomputed rays for a list of cameras."""

    def __init__(self, scene, cameras):
        self.cameras = list(cameras)
        self.images, self.depths, self.bundles = [], [], []
        for cam in self.cameras:
            img, depth = render_ground_truth(scene, cam)
            self.images.append(img)
            self.depths.append(depth)
            u, v = all_pixels(cam)
            self.bundles.append(generate_rays(cam, u, v, scene.aabb_min, scene.aabb_max))

    def __len__(self):
        return len(self.cameras)

    def gather(self, batch):
        """RayBundle and target colors for a SampleBatch."""
        parts = []
        for i in np.unique(batch.image):
            sel = np.flatnonzero(batch.image == i)
            cam = self.cameras[i]
            flat = batch.v[sel] * cam.width + batch.u[sel]
            b = self.bundles[i]
            parts.append((sel, b.origins[flat], b.directions[flat], b.near[flat], b.far[flat],
                          self.images[i].reshape(-1, 3)[flat]))
        order = np.concatenate([p[0] for p in parts])
        inv = np.empty_like(order)
        inv[order] = np.arange(len(order))
        cat = [np.concatenate([p[k] for p in parts])[inv] for k in range(1, 6)]
        return RayBundle(*cat[:4]), cat[4]


def tv_loss(params, grad=None, weight=1.0):
    """Mean squared difference between lattice neighbors, over all axes and channels.

    When `grad` is given, weight * d(tv)/d(params) is accumulated into it.
    """
    total, count = 0.0, 0
    diffs = []
    for axis in range(3):
        d = np.diff(params, axis=axis)
        diffs.append(d)
        total += float(np.sum(d * d))
        count += d.size
    if grad is not None:
        scale = 2.0 * weight / count
        for axis, d in enumerate(diffs):
            hi = [slice(None)] * 4
            lo = [slice(None)] * 4
            hi[axis] = slice(1, None)
            lo[axis] = slice(None, -1)
            grad[tuple(hi)] += scale * d
            grad[tuple(lo)] -= scale * d
    return total / count


def initial_grid(scene, config):
    res = (config.grid_resolution,) * 3
    return RadianceGrid.constant(res, scene.aabb_min, scene.aabb_max,
                                 float(inverse_softplus(config.init_density)), 0.0)


def evaluate(grid, views, K, background):
    scores = []
    for cam, gt in zip(views.cameras, views.images):
        img, _ = render_image(grid, cam, K, background)
        scores.append((psnr(img, gt), ssim(img, gt)))
    return scores


def _split(total, parts):
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


class _StrategyState:
    """Per-image maps and samplers for the guided strategies."""

    def __init__(self, config, views, curve):
        self.config = config
        self.views = views
        self.curve = curve
        self.schedule = pm.BetaSchedule(max(config.iterations, 1), config.beta_max)
        self.pc = [None] * len(views)
        self.pd = [None] * len(views)
        s = config.strategy
        self.uses_pixel = s in ("pixel", "fused", "fused+adaptive")
        self.uses_depth = s in ("depth", "fused", "fused+adaptive")
        self.adaptive = s.endswith("adaptive")
        if self.uses_pixel:
            for i, img in enumerate(views.images):
                self.pc[i] = self._normalize(pm.pixel_std_map(img, config.window), "pixel", i)

    def _normalize(self, raw, source, i):
        self.curve.counters["probmap_builds"] += 1
        try:
            return pm.normalize_map(raw, source, self.config.s_coef)
        except pm.DegenerateMapError:
            log.info("degenerate %s map for view %d; sampling that view uniformly", source, i)
            return None

    def refresh_depth(self, grid, background):
        for i, cam in enumerate(self.views.cameras):
            _, depth = render_image(grid, cam, self.config.samples_per_ray, background)
            self.pd[i] = self._normalize(pm.depth_std_map(depth, self.config.window), "depth", i)

    def guided_map(self, i, iteration):
        if self.uses_pixel and self.uses_depth:
            if self.pc[i] is None or self.pd[i] is None:
                return None
            self.curve.counters["probmap_builds"] += 1
            return pm.fuse(self.pc[i], self.pd[i], pm.beta(iteration, self.schedule))
        return self.pc[i] if self.uses_pixel else self.pd[i] if self.uses_depth else None

    def draw_first_stage(self, i, iteration, rng, count):
        cam = self.views.cameras[i]
        if self.uses_pixel or self.uses_depth:
            pmap = self.guided_map(i, iteration)
            if pmap is not None:
                return sp.draw(sp.build_sampler(pmap), rng, count, i)
            self.curve.counters["fallbacks"] += 1
        return sp.uniform_draw(cam.width, cam.height, rng, count, i)


def _forward_backward(grid, views, batch, config, background, rng):
    bundle, target = views.gather(batch)
    out, cache = render_rays(grid, bundle, config.samples_per_ray, background,
                             rng=rng if config.jitter else None, keep_cache=True)
    return out, cache, target


def train(scene, train_cameras, eval_cameras, config, grid=None):
    """Optimize a voxel grid against analytic renders of `scene`.

    Returns the final grid and a TrainCurve holding one record every
    `eval_every` iterations (plus the last iteration).
    """
    if len(train_cameras) < 1 or len(eval_cameras) < 1:
        raise ValueError("need at least one training and one held-out camera")
    grid = initial_grid(scene, config) if grid is None else grid
    curve = TrainCurve()
    if config.iterations == 0:
        return grid, curve

    background = scene.background
    views = _Views(scene, train_cameras)
    held_out = _Views(scene, eval_cameras)
    rng = sp.make_rng(config.seed)
    opt = Adam()
    state = _StrategyState(config, views, curve)
    per_view = _split(config.batch_size, len(views))
    start = time.perf_counter()

    for it in range(config.iterations):
        if state.uses_depth and it % config.depth_refresh == 0:
            state.refresh_depth(grid, background)

        first = []
        for i, m in enumerate(per_view):
            m1 = m - m // 2 if state.adaptive else m
            if m1 > 0:
                first.append(state.draw_first_stage(i, it, rng, m1))
        batch = sp.SampleBatch.concat(first)
        out, cache, target = _forward_backward(grid, views, batch, config, background, rng)
        caches = [(out, cache, target, batch)]

        if state.adaptive:
            # second stage: redistribute the rest by the first stage's region losses
            per_ray = np.sum((out.color - target) ** 2, axis=1)
            second = []
            for i, m in enumerate(per_view):
                if m // 2 == 0:
                    continue
                cam = views.cameras[i]
                sel = batch.image == i
                sub = sp.SampleBatch(batch.image[sel], batch.u[sel], batch.v[sel])
                stats = sp.region_loss_stats(sub, per_ray[sel], cam.width, cam.height)
                second.append(sp.adaptive_resample(stats.f, m // 2, cam.width, cam.height, rng, i))
            if second:
                batch2 = sp.SampleBatch.concat(second)
                caches.append((*_forward_backward(grid, views, batch2, config, background, rng), batch2))

        pred = np.concatenate([c[0].color for c in caches])
        gt = np.concatenate([c[2] for c in caches])
        loss, dpred = mse_loss(pred, gt)
        if config.perceptual:
            ids = np.concatenate([c[3].image for c in caches])
            ploss, pgrad = perceptual_stub_loss(pred, gt, ids)
            loss += config.perceptual_weight * ploss
            dpred = dpred + config.perceptual_weight * pgrad
        if not np.isfinite(loss):
            raise NumericalError(f"non-finite loss at iteration {it}")

        grad = np.zeros(grid.params.shape)
        offset = 0
        for out_k, cache_k, _, _ in caches:
            n = len(out_k.color)
            backprop_rays(grid, cache_k, dpred[offset:offset + n], grad)
            offset += n
        if config.tv_weight > 0:
            loss += config.tv_weight * tv_loss(grid.params, grad, config.tv_weight)
        opt.step(grid.params, grad, lr_at(it, config))

        done = it + 1
        if done % config.eval_every == 0 or done == config.iterations:
            scores = evaluate(grid, held_out, config.eval_samples, background)
            curve.append(CurveRecord(done, 1000.0 * (time.perf_counter() - start), loss,
                                     float(np.mean([s[0] for s in scores])),
                                     float(np.mean([s[1] for s in scores]))))
            log.debug("iter %d loss %.6f psnr %.3f", done, loss, curve.records[-1].psnr)
    return grid, curve


@dataclass
class ComparisonRow:
    strategy: str
    iters_to_thresh: int | None
    final_psnr: float
    final_ssim: float
    wall_ms: float


def compare_strategies(scene, train_cameras, eval_cameras, config, strategies, reference="uniform",
                       threshold_fraction=0.95):
    """Train once per strategy with identical seeds; rows plus the per-strategy curves.

    The convergence threshold is `threshold_fraction` of the reference
    strategy's final PSNR (the first strategy if `reference` is absent).
    """
    strategies = list(strategies)
    if len(strategies) < 1:
        raise ValueError("need at least one strategy")
    results = []
    for name in strategies:
        cfg = TrainConfig(**{**config.to_dict(), "strategy": name})
        _, curve = train(scene, train_cameras, eval_cameras, cfg)
        results.append((cfg.strategy, curve))
    ref = canonical_strategy(reference) if reference else results[0][0]
    ref_curve = next((c for n, c in results if n == ref), results[0][1])
    threshold = threshold_fraction * ref_curve.records[-1].psnr if ref_curve.records else float("inf")
    rows = []
    for name, curve in results:
        last = curve.records[-1] if curve.records else None
        rows.append(ComparisonRow(name, curve.first_reaching(threshold),
                                  last.psnr if last else float("nan"),
                                  last.ssim if last else float("nan"),
                                  last.wall_ms if last else 0.0))
    return rows, [c for _, c in results], threshold


def write_comparison_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_HEADER)
        for r in rows:
            w.writerow([r.strategy, "" if r.iters_to_thresh is None else r.iters_to_thresh,
                        repr(r.final_psnr), repr(r.final_ssim), f"{r.wall_ms:.1f}"])
