"""Distribution functions with exact left limits, and the distributional transform.

The transform of a cdf F with auxiliary uniform V is

    F~(x, V) = F(x-) + V * (F(x) - F(x-)),

which is nondecreasing in x, equals F(x) at continuity points, and maps an
observation Y ~ F (with V independent of Y) to a uniform variable on [0, 1]
even when F has atoms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr
from scipy.stats import norm

from .rng import SeedSpec, AUX_UNIFORM, OBSERVATIONS, stream


class CdfModel:
    """Right-continuous cdf with left-limit and generalized quantile access.

    Subclasses implement eval_cdf / eval_left; atoms() lists jump locations.
    """

    kind = "analytic"
    support_hint = None  # optional (lo, hi)

    def __call__(self, x):
        return self.eval_cdf(x)

    def eval_cdf(self, x):
        raise NotImplementedError

    def eval_left(self, x):
        """F(x-); defaults to F(x) for continuous models."""
        return self.eval_cdf(x)

    def atoms(self):
        return ()

    @property
    def is_continuous(self):
        return len(self.atoms()) == 0

    def upper_quantile(self, q: float) -> float:
        """sup{x : F(x) < q}, with -inf for q <= 0 and +inf when F stays below q.

        Equals inf{x : F(x) >= q} by right continuity whenever the set is
        nonempty and bounded.
        """
        raise NotImplementedError

    def jump(self, x):
        return self.eval_cdf(x) - self.eval_left(x)


class DegenerateCdf(CdfModel):
    """Point mass at c."""

    def __init__(self, c: float):
        self.c = float(c)
        self.support_hint = (self.c, self.c)

    def eval_cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.c, 1.0, 0.0)

    def eval_left(self, x):
        return np.where(np.asarray(x, dtype=float) > self.c, 1.0, 0.0)

    def atoms(self):
        return (self.c,)

    def upper_quantile(self, q):
        if q <= 0.0:
            return -math.inf
        if q > 1.0:
            return math.inf
        return self.c


class NormalCdf(CdfModel):
    def __init__(self, mean: float = 0.0, sd: float = 1.0):
        if sd <= 0:
            raise ValueError("sd must be positive")
        self.mean = float(mean)
        self.sd = float(sd)

    def eval_cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mean) / self.sd)

    def upper_quantile(self, q):
        if q <= 0.0:
            return -math.inf
        if q >= 1.0:
            return math.inf
        return self.mean + self.sd * norm.ppf(q)

    def density_sup(self):
        return 1.0 / (self.sd * math.sqrt(2.0 * math.pi))


class UniformCdf(CdfModel):
    def __init__(self, lo: float, hi: float):
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.lo, self.hi = float(lo), float(hi)
        self.support_hint = (self.lo, self.hi)

    def eval_cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def upper_quantile(self, q):
        if q <= 0.0:
            return -math.inf
        if q > 1.0:
            return math.inf
        return self.lo + min(q, 1.0) * (self.hi - self.lo)

    def density_sup(self):
        return 1.0 / (self.hi - self.lo)


class TwoPointCdf(CdfModel):
    """Mass 1-p at `low`, mass p at `high` (a Bernoulli-type marginal)."""

    def __init__(self, p: float, low: float = 0.0, high: float = 1.0):
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        if not high > low:
            raise ValueError("need high > low")
        self.p = float(p)
        self.low, self.high = float(low), float(high)
        self.support_hint = (low, high)

    def eval_cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.high, 1.0, np.where(x >= self.low, 1.0 - self.p, 0.0))

    def eval_left(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > self.high, 1.0, np.where(x > self.low, 1.0 - self.p, 0.0))

    def atoms(self):
        out = []
        if self.p < 1.0:
            out.append(self.low)
        if self.p > 0.0:
            out.append(self.high)
        return tuple(out)

    def upper_quantile(self, q):
        if q <= 0.0:
            return -math.inf
        if q > 1.0:
            return math.inf
        return self.low if q <= 1.0 - self.p else self.high


class PiecewiseUniformCdf(CdfModel):
    """Mixture of uniform components [(weight, lo, hi)]; degenerate pieces allowed."""

    def __init__(self, components):
        total = sum(w for w, _, _ in components)
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError("weights must sum to 1")
        self.components = [(float(w), float(lo), float(hi)) for w, lo, hi in components]
        self.support_hint = (
            min(lo for _, lo, _ in self.components),
            max(hi for _, _, hi in self.components),
        )

    def eval_cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        for w, lo, hi in self.components:
            if hi > lo:
                out = out + w * np.clip((x - lo) / (hi - lo), 0.0, 1.0)
            else:
                out = out + w * (x >= lo)
        return out

    def eval_left(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        for w, lo, hi in self.components:
            if hi > lo:
                out = out + w * np.clip((x - lo) / (hi - lo), 0.0, 1.0)
            else:
                out = out + w * (x > lo)
        return out

    def atoms(self):
        return tuple(lo for w, lo, hi in self.components if hi == lo and w > 0)

    def upper_quantile(self, q):
        if q <= 0.0:
            return -math.inf
        if q > 1.0:
            return math.inf
        lo, hi = self.support_hint
        if hi == lo:
            return lo
        return _bisect_quantile(self, q, lo, hi)

    def density_sup(self):
        if self.atoms():
            return math.inf
        return max(w / (hi - lo) for w, lo, hi in self.components if hi > lo)


class MixtureCdf(CdfModel):
    """Finite mixture of CdfModels."""

    def __init__(self, parts):
        total = sum(w for w, _ in parts)
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError("weights must sum to 1")
        self.parts = [(float(w), c) for w, c in parts]

    def eval_cdf(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * c.eval_cdf(x) for w, c in self.parts)

    def eval_left(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * c.eval_left(x) for w, c in self.parts)

    def atoms(self):
        out = set()
        for w, c in self.parts:
            if w > 0:
                out.update(c.atoms())
        return tuple(sorted(out))

    def upper_quantile(self, q):
        if q <= 0.0:
            return -math.inf
        if q > 1.0:
            return math.inf
        los, his = [], []
        for _, c in self.parts:
            lo = c.upper_quantile(1e-12)
            hi = c.upper_quantile(1.0 - 1e-12)
            los.append(lo if math.isfinite(lo) else -1e12)
            his.append(hi if math.isfinite(hi) else 1e12)
        return _bisect_quantile(self, q, min(los) - 1.0, max(his) + 1.0)


class NormalUniformSumCdf(CdfModel):
    """Law of N(0, sd^2) + Uniform[0, 1] (independent).

    F(y) = sd * [G(y/sd) - G((y-1)/sd)] with G(u) = u*Phi(u) + phi(u),
    so the density Phi(y/sd) - Phi((y-1)/sd) is bounded by 1.
    """

    def __init__(self, sd: float):
        if sd <= 0:
            raise ValueError("sd must be positive")
        self.sd = float(sd)

    @staticmethod
    def _big_g(u):
        return u * ndtr(u) + norm.pdf(u)

    def eval_cdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.sd * (self._big_g(x / self.sd) - self._big_g((x - 1.0) / self.sd))

    def upper_quantile(self, q):
        if q <= 0.0:
            return -math.inf
        if q >= 1.0:
            return math.inf
        lo = -10.0 * self.sd
        hi = 1.0 + 10.0 * self.sd
        return _bisect_quantile(self, q, lo, hi)

    def density_sup(self):
        # density is Phi(y/sd) - Phi((y-1)/sd), maximal at y = 1/2
        return float(ndtr(0.5 / self.sd) - ndtr(-0.5 / self.sd))


class EmpiricalCdf(CdfModel):
    """Step cdf of a stored sorted sample; left limits exact at atoms."""

    kind = "empirical"

    def __init__(self, sample):
        data = np.asarray(sample, dtype=float)
        if data.size == 0:
            raise ValueError("empty sample")
        if not np.all(np.isfinite(data)):
            raise ValueError("sample must be finite")
        self.sorted = np.sort(data)
        self.n = data.size
        self.support_hint = (float(self.sorted[0]), float(self.sorted[-1]))

    def eval_cdf(self, x):
        return np.searchsorted(self.sorted, np.asarray(x, dtype=float), side="right") / self.n

    def eval_left(self, x):
        return np.searchsorted(self.sorted, np.asarray(x, dtype=float), side="left") / self.n

    def atoms(self):
        return tuple(np.unique(self.sorted))

    def upper_quantile(self, q):
        if q <= 0.0:
            return -math.inf
        if q > 1.0:
            return math.inf
        k = math.ceil(q * self.n)
        return float(self.sorted[min(k, self.n) - 1])


def _bisect_quantile(cdf, q, lo, hi, tol=1e-13, iters=200):
    """inf{x : F(x) >= q} by bisection; assumes F(lo) < q <= F(hi)."""
    flo = float(cdf.eval_cdf(lo))
    fhi = float(cdf.eval_cdf(hi))
    while flo >= q:
        lo -= max(1.0, hi - lo)
        flo = float(cdf.eval_cdf(lo))
    while fhi < q:
        hi += max(1.0, hi - lo)
        fhi = float(cdf.eval_cdf(hi))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if float(cdf.eval_cdf(mid)) >= q:
            hi = mid
        else:
            lo = mid
        if hi - lo <= tol * max(1.0, abs(hi), abs(lo)):
            break
    return hi


def empirical_cdf(sample) -> EmpiricalCdf:
    """Right-continuous step cdf of a nonempty sample."""
    return EmpiricalCdf(sample)


@dataclass(frozen=True)
class TransformSample:
    """One observation with its auxiliary uniform and transformed value."""

    y: float
    v: float
    u: float


def transform_sample(cdf: CdfModel, y: float, v: float) -> TransformSample:
    return TransformSample(y=float(y), v=float(v), u=float(distributional_transform(cdf, y, v)))


def distributional_transform(cdf: CdfModel, y, v):
    """F(y-) + v * (F(y) - F(y-)); v must lie in [0, 1]. Vectorized in y and v."""
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < 0.0) or np.any(v_arr > 1.0):
        raise ValueError("v must lie in [0, 1]")
    right = np.asarray(cdf.eval_cdf(y), dtype=float)
    if cdf.is_continuous:
        # zero jump everywhere, so the transform reduces to F(y)
        return right + 0.0 * v_arr
    left = np.asarray(cdf.eval_left(y), dtype=float)
    return left + v_arr * (right - left)


def ks_to_uniform(u) -> float:
    """sup_x |F_n(x) - x| of a sample u against the uniform cdf on [0, 1]."""
    u = np.sort(np.asarray(u, dtype=float))
    n = u.size
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - u), np.max(u - lo)))


def uniformity_check(cdf: CdfModel, draw, n: int, seed: SeedSpec) -> float:
    """KS distance to uniform of the transformed sample F~(Y_i, V_i).

    draw(rng, size) must sample Y from the law whose cdf is `cdf`; the
    auxiliary uniforms come from a disjoint substream so V is independent
    of Y even under identical master seeds.
    """
    if n < 100:
        raise ValueError("need n >= 100")
    y = draw(stream(seed.master_seed, OBSERVATIONS, seed.replicate_index), n)
    v = stream(seed.master_seed, AUX_UNIFORM, seed.replicate_index).random(n)
    u = distributional_transform(cdf, y, v)
    return ks_to_uniform(u)
