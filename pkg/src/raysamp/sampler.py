"""Pixel samplers: prefix-sum importance sampling, uniform, and loss-driven
adaptive resampling over an 8 x 8 region grid.

All randomness flows through `make_rng`, a numpy Generator on the Philox
4x64 counter-based bit generator, so a seed reproduces the same batches on
every platform numpy supports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRID = 8  # regions per image side for adaptive sampling


def make_rng(seed):
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class SampleBatch:
    image: np.ndarray  # image index per sample
    u: np.ndarray
    v: np.ndarray

    def __len__(self):
        return len(self.u)

    @classmethod
    def concat(cls, batches):
        batches = list(batches)
        if not batches:
            return cls(*(np.zeros(0, dtype=np.int64) for _ in range(3)))
        return cls(np.concatenate([b.image for b in batches]),
                   np.concatenate([b.u for b in batches]),
                   np.concatenate([b.v for b in batches]))


@dataclass
class DiscreteSampler:
    width: int
    height: int
    cumulative: np.ndarray  # row-major prefix sums of the weights
    total: float
    _last_positive: int = field(default=0, repr=False)

    def probability(self, u, v):
        i = v * self.width + u
        prev = self.cumulative[i - 1] if i > 0 else 0.0
        return (self.cumulative[i] - prev) / self.total


def build_sampler(prob_map):
    values = prob_map.values if hasattr(prob_map, "values") else np.asarray(prob_map)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("probability map must be 2-D")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValueError("weights must be finite and nonnegative")
    flat = values.ravel()
    cum = np.cumsum(flat)
    total = float(cum[-1]) if cum.size else 0.0
    if not total > 0:
        raise ValueError("sampling map has zero total weight")
    last = int(np.flatnonzero(flat > 0)[-1])
    h, w = values.shape
    return DiscreteSampler(w, h, cum, total, last)


def draw(sampler, rng, count, image_index=0):
    """`count` i.i.d. draws with replacement, P(pixel) = weight / total."""
    if count < 1:
        raise ValueError("count must be >= 1")
    x = rng.random(count) * sampler.total
    idx = np.searchsorted(sampler.cumulative, x, side="right")
    # x can round up to total; zero-weight tail pixels must stay unreachable
    idx = np.minimum(idx, sampler._last_positive)
    v, u = np.divmod(idx, sampler.width)
    return SampleBatch(np.full(count, image_index, dtype=np.int64), u, v)


def uniform_draw(width, height, rng, count, image_index=0):
    if count < 1:
        raise ValueError("count must be >= 1")
    idx = rng.integers(0, width * height, size=count)
    v, u = np.divmod(idx, width)
    return SampleBatch(np.full(count, image_index, dtype=np.int64), u, v)


def _check_region_grid(width, height, grid):
    if width < grid or height < grid:
        raise ValueError(f"image {width}x{height} is smaller than the {grid}x{grid} region grid")


def region_bounds(width, height, grid=GRID):
    """Per-axis region edges; the last region absorbs the remainder."""
    _check_region_grid(width, height, grid)
    xs = [(width // grid) * k for k in range(grid)] + [width]
    ys = [(height // grid) * k for k in range(grid)] + [height]
    return np.array(xs), np.array(ys)


def region_index(u, v, width, height, grid=GRID):
    """Region id j = row * grid + col for each pixel (0-based)."""
    _check_region_grid(width, height, grid)
    cu = np.minimum(np.asarray(u) // (width // grid), grid - 1)
    cv = np.minimum(np.asarray(v) // (height // grid), grid - 1)
    return cv * grid + cu


@dataclass
class RegionLossStats:
    mean_loss: np.ndarray  # H[j], shape (64,)
    counts: np.ndarray  # |r_j|
    f: np.ndarray  # normalized distribution


def region_loss_stats(batch, losses, width, height, grid=GRID):
    """Mean per-pixel loss inside each of the grid x grid regions.

    The loss for a pixel stands for the sum e^g + e^p of two per-pixel error
    terms; only the squared color error is available here. Regions without
    samples get mean loss 0.
    """
    losses = np.asarray(losses, dtype=np.float64)
    if len(losses) != len(batch):
        raise ValueError(f"{len(losses)} losses for {len(batch)} samples")
    if np.any(losses < 0):
        raise ValueError("losses must be nonnegative")
    n = grid * grid
    if len(batch) == 0:
        zeros = np.zeros(n)
        return RegionLossStats(zeros, np.zeros(n, dtype=np.int64), np.full(n, 1.0 / n))
    j = region_index(batch.u, batch.v, width, height, grid)
    counts = np.bincount(j, minlength=n)
    sums = np.bincount(j, weights=losses, minlength=n)
    mean = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
    stats = RegionLossStats(mean, counts, np.zeros(n))
    stats.f = adaptive_distribution(stats)
    return stats


def adaptive_distribution(stats):
    h = stats.mean_loss if hasattr(stats, "mean_loss") else np.asarray(stats, dtype=np.float64)
    total = h.sum()
    if not total > 0:
        return np.full(len(h), 1.0 / len(h))
    return h / total


def region_counts(f, n_total):
    """round(n_total * f[j]) per region; the residual goes to argmax f."""
    f = np.asarray(f, dtype=np.float64)
    counts = np.rint(n_total * f).astype(np.int64)
    counts[int(np.argmax(f))] += n_total - counts.sum()
    if counts.min() < 0:
        # residual larger than the argmax share: take it from the largest buckets
        deficit = -counts[counts < 0].sum()
        counts[counts < 0] = 0
        for j in np.argsort(-counts, kind="stable"):
            take = min(deficit, counts[j])
            counts[j] -= take
            deficit -= take
            if deficit == 0:
                break
    return counts


def adaptive_resample(f, n_total, width, height, rng, image_index=0, grid=GRID):
    """Draw region j's share of `n_total` uniformly inside region j."""
    f = np.asarray(f, dtype=np.float64)
    if abs(f.sum() - 1.0) > 1e-9:
        raise ValueError("f must sum to 1")
    counts = region_counts(f, n_total)
    xs, ys = region_bounds(width, height, grid)
    j = np.repeat(np.arange(grid * grid), counts)
    col, row = j % grid, j // grid
    u = rng.integers(xs[col], xs[col + 1]) if len(j) else np.zeros(0, dtype=np.int64)
    v = rng.integers(ys[row], ys[row + 1]) if len(j) else np.zeros(0, dtype=np.int64)
    return SampleBatch(np.full(len(j), image_index, dtype=np.int64), u, v)
