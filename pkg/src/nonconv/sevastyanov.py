"""Numerical verification of the Poisson-factorization hypotheses.

A model exposes the exact joint-arrival oracle b(indices); the checker
evaluates, along an n-grid,

  (i)   max_i b_i -> 0 and sum_i b_i -> lambda,
  (ii)  sums of b over the rare index tuples -> 0 (jointly and as products),
  (iii) b_{i1..ir} / (b_{i1} ... b_{ir}) -> 1 uniformly off the rare sets,

where the rare r-tuples are those containing a proximity cluster or an
index at most the low-index cutoff.  Full enumeration is exact; above the
budget a stratified subsampler covers each stratum separately (rare strata
are never skipped) and reports its coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np

from .errors import ResourceError, ValidationError
from .rng import derive_rng
from .schedules import QSchedule, _UnionFind

DEFAULT_ENUMERATION_BUDGET = 200_000
_STREAM_SEVASTYANOV = 7
_MAX_DIRECT_SINGLES = 200_000


@dataclass(frozen=True)
class StageOracle:
    """Exact b-oracle for one grid point.

    ``b(indices)`` returns the joint arrival probability of the given term
    indices (1-based, distinct).  ``term_count`` is the number of summands.
    ``translation_invariant`` declares that b depends on the index tuple
    only through the multiset of schedule positions up to a common shift;
    stationary models set it so repeated patterns are evaluated once.
    """

    b: Callable
    term_count: int
    translation_invariant: bool = False


@dataclass(frozen=True)
class StageResult:
    n: int
    term_count: int
    threshold: int
    cutoff: int
    max_b: float
    sum_b: float
    rare_sum_joint: float
    rare_sum_product: float
    ratio_band: tuple[float, float] | None
    zero_denominators: int
    mode: str  # "exact" or "sampled"
    coverage: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ConditionReport:
    r: int
    n_grid: tuple[int, ...]
    stages: tuple[StageResult, ...]

    def stage(self, n: int) -> StageResult:
        for s in self.stages:
            if s.n == n:
                return s
        raise ValidationError(f"no stage for n={n}")

    @property
    def max_b(self) -> tuple[float, ...]:
        return tuple(s.max_b for s in self.stages)

    @property
    def sum_b(self) -> tuple[float, ...]:
        return tuple(s.sum_b for s in self.stages)

    @property
    def rare_sum_joint(self) -> tuple[float, ...]:
        return tuple(s.rare_sum_joint for s in self.stages)

    @property
    def rare_sum_product(self) -> tuple[float, ...]:
        return tuple(s.rare_sum_product for s in self.stages)

    @property
    def ratio_band(self) -> tuple:
        return tuple(s.ratio_band for s in self.stages)


def _resolve_rare_params(rare_params, n: int) -> tuple[int, int]:
    if callable(rare_params):
        thr, cut = rare_params(n)
    else:
        thr, cut = rare_params
    if thr < 0 or cut < 0:
        raise ValidationError(f"rare params must be nonnegative, got ({thr}, {cut})")
    return int(thr), int(cut)


def _positions(schedule: QSchedule, N: int) -> np.ndarray:
    return np.array(
        [schedule.evaluate(l) for l in range(1, N + 1)], dtype=np.int64
    )


def _signature(q: np.ndarray, tup) -> tuple:
    pos = np.sort(np.concatenate([q[i - 1] for i in tup]))
    return tuple(int(v) for v in pos - pos[0])


class _BCache:
    """Oracle front end with optional translation-signature memoization."""

    def __init__(self, stage: StageOracle, q: np.ndarray):
        self.stage = stage
        self.q = q
        self._memo: dict[tuple, float] = {}
        self.calls = 0

    def __call__(self, tup) -> float:
        if not self.stage.translation_invariant:
            self.calls += 1
            return float(self.stage.b(tup))
        key = _signature(self.q, tup)
        if key not in self._memo:
            self.calls += 1
            self._memo[key] = float(self.stage.b(tup))
        return self._memo[key]


def _singles(cache: _BCache, N: int) -> np.ndarray:
    if cache.stage.translation_invariant:
        sigs = cache.q - cache.q[:, :1]
        uniq, first, inv = np.unique(
            sigs, axis=0, return_index=True, return_inverse=True
        )
        vals = np.array([cache((int(i) + 1,)) for i in first])
        return vals[inv]
    if N > _MAX_DIRECT_SINGLES:
        raise ResourceError(
            f"{N} single-index oracle calls exceed the direct cap "
            f"{_MAX_DIRECT_SINGLES}; the oracle must declare translation invariance"
        )
    return np.array([cache((i,)) for i in range(1, N + 1)])


def _tuple_is_rare(q: np.ndarray, tup, threshold: int, cutoff: int) -> bool:
    """Rare = some proximity cluster has > 1 element, or min index <= cutoff."""
    if min(tup) <= cutoff:
        return True
    for a, b in combinations(tup, 2):
        d = np.abs(q[a - 1][:, None] - q[b - 1][None, :]).min()
        if d <= threshold:
            return True
    return False


def _cluster_count(q: np.ndarray, tup, threshold: int) -> int:
    uf = _UnionFind()
    for i in tup:
        uf.find(i)
    for a, b in combinations(tup, 2):
        if np.abs(q[a - 1][:, None] - q[b - 1][None, :]).min() <= threshold:
            uf.union(a, b)
    return len({uf.find(i) for i in tup})


# ---------------------------------------------------------------------------
# Exact mode
# ---------------------------------------------------------------------------

def _stage_exact(cache, q, n, N, r, threshold, cutoff, b1) -> StageResult:
    joint = 0.0
    product = 0.0
    lo = hi = None
    zero_den = 0
    for tup in combinations(range(1, N + 1), r):
        if _tuple_is_rare(q, tup, threshold, cutoff):
            joint += cache(tup)
            product += math.prod(b1[i - 1] for i in tup)
        else:
            den = math.prod(b1[i - 1] for i in tup)
            if den == 0.0:
                zero_den += 1
                continue
            ratio = cache(tup) / den
            lo = ratio if lo is None else min(lo, ratio)
            hi = ratio if hi is None else max(hi, ratio)
    band = None if lo is None else (lo, hi)
    return StageResult(
        n=n, term_count=N, threshold=threshold, cutoff=cutoff,
        max_b=float(b1.max()), sum_b=float(b1.sum()),
        rare_sum_joint=joint, rare_sum_product=product,
        ratio_band=band, zero_denominators=zero_den, mode="exact",
        coverage={"rare": 1.0, "ratio": 1.0},
    )


# ---------------------------------------------------------------------------
# Sampled mode (pairs only)
# ---------------------------------------------------------------------------

def _clustered_partners(q: np.ndarray, i_arr: np.ndarray, threshold: int):
    """All pairs (i, j), j != i, with some |q_a(i) - q_b(j)| <= threshold.

    Vectorized over i_arr; every q column is strictly increasing, so each
    (a, b) function pair contributes one contiguous j-window per i.  The
    per-i windows are merged, so every partner j appears exactly once.
    """
    N, ell = q.shape
    m = i_arr.size
    los, his = [], []
    for a in range(ell):
        qa = q[i_arr - 1, a]
        for b in range(ell):
            col = q[:, b]
            los.append(np.searchsorted(col, qa - threshold, side="left"))
            his.append(np.searchsorted(col, qa + threshold, side="right"))
    lo = np.stack(los, axis=1)
    hi = np.stack(his, axis=1)
    order = np.argsort(lo, axis=1)
    lo = np.take_along_axis(lo, order, axis=1)
    hi = np.take_along_axis(hi, order, axis=1)
    prev_end = np.zeros_like(hi)
    prev_end[:, 1:] = np.maximum.accumulate(hi, axis=1)[:, :-1]
    start = np.maximum(lo, prev_end)
    cnt = np.maximum(0, hi - start)
    flat_cnt = cnt.ravel()
    j = np.repeat(start.ravel(), flat_cnt) + _ranges(flat_cnt) + 1  # 1-based
    i = np.repeat(np.repeat(i_arr, ell * ell), flat_cnt)
    mask = i != j
    return i[mask], j[mask]


def _ranges(counts: np.ndarray) -> np.ndarray:
    # concatenation of arange(c) for c in counts
    total = int(counts.sum())
    starts = np.cumsum(counts) - counts
    return np.arange(total, dtype=np.int64) - np.repeat(starts, counts)


def _group_rows(rows: np.ndarray):
    """(first_index, count) per distinct row, via scalar keys when they fit."""
    span = int(rows.max()) + 1 if rows.size else 1
    ncols = rows.shape[1]
    if span**ncols < 2**62:
        keys = np.zeros(rows.shape[0], dtype=np.int64)
        for c in range(ncols):
            keys = keys * span + rows[:, c]
        _, first, counts = np.unique(keys, return_index=True, return_counts=True)
        return first, counts
    uniq, first, counts = np.unique(
        rows, axis=0, return_index=True, return_counts=True
    )
    return first, counts


def _stage_sampled(
    cache, q, n, N, threshold, cutoff, b1, rng, pair_samples, ratio_samples
) -> StageResult:
    suffix = np.concatenate([np.cumsum(b1[::-1])[::-1][1:], [0.0]])  # sum_{j>i} b_j
    joint = 0.0
    product = 0.0
    coverage = {}
    # stratum A: min index <= cutoff.  Clustered partners of each low i are
    # enumerated and summed exactly; the remaining js are subsampled per i.
    count_a = 0
    sampled_a = 0
    for i in range(1, min(cutoff, N) + 1):
        product += b1[i - 1] * suffix[i - 1]
        _, pj = _clustered_partners(q, np.array([i], dtype=np.int64), threshold)
        partners = sorted(set(int(v) for v in pj))
        pset = set(partners) | set(range(1, i + 1))
        for j in partners:
            if j > i:
                joint += cache((i, j))
                count_a += 1
        rest = N - i - sum(1 for j in pset if j > i)
        count_a += rest
        if rest > 0:
            k = min(rest, max(8, pair_samples // max(1, cutoff)))
            draws = 0
            acc = 0.0
            while draws < k:
                j = int(rng.integers(i + 1, N + 1))
                if j in pset:
                    continue
                acc += cache((i, j))
                draws += 1
            joint += rest * acc / k
            sampled_a += k
    coverage["low_index"] = 1.0 if count_a == 0 else min(1.0, sampled_a / count_a)
    # stratum B: clustered pairs with both indices above the cutoff; the
    # pair list is enumerated exactly, b summed via the signature cache.
    count_b = 0
    chunk = 65_536
    for start in range(cutoff + 1, N + 1, chunk):
        i_arr = np.arange(start, min(start + chunk - 1, N) + 1, dtype=np.int64)
        pi, pj = _clustered_partners(q, i_arr, threshold)
        # each unordered pair is kept once, from its smaller endpoint's chunk
        mask = (pj > pi) & (pj > cutoff)
        pi, pj = pi[mask], pj[mask]
        count_b += int(pi.size)
        product += float((b1[pi - 1] * b1[pj - 1]).sum())
        if cache.stage.translation_invariant and pi.size:
            sigs = np.sort(
                np.concatenate([q[pi - 1], q[pj - 1]], axis=1), axis=1
            )
            sigs = sigs - sigs[:, :1]
            first, counts = _group_rows(sigs)
            for rep, cnt in zip(first, counts):
                joint += cnt * cache((int(pi[rep]), int(pj[rep])))
            coverage["cluster"] = 1.0
        elif pi.size:
            k = min(int(pi.size), pair_samples)
            sel = rng.choice(pi.size, size=k, replace=False)
            vals = [cache((int(pi[s]), int(pj[s]))) for s in sel]
            joint += pi.size * float(np.mean(vals))
            coverage["cluster"] = min(1.0, k / pi.size)
        else:
            coverage.setdefault("cluster", 1.0)
    # ratio band over non-rare pairs: uniform draws plus, for a probe set of
    # indices, the nearest non-rare partner (where the ratio is most extreme)
    lo = hi = None
    zero_den = 0
    checked = 0
    probes = np.unique(rng.integers(cutoff + 1, N, size=min(64, max(1, N - cutoff - 1))))
    pairs = []
    for i in probes:
        j = int(i) + 1
        while j <= N and _tuple_is_rare(q, (int(i), j), threshold, cutoff):
            j += 1
        if j <= N:
            pairs.append((int(i), j))
    tries = 0
    while checked + len(pairs) < ratio_samples and tries < 20 * ratio_samples:
        tries += 1
        i = int(rng.integers(1, N + 1))
        j = int(rng.integers(1, N + 1))
        if i == j:
            continue
        tup = (min(i, j), max(i, j))
        if _tuple_is_rare(q, tup, threshold, cutoff):
            continue
        pairs.append(tup)
        checked += 1
    for tup in pairs:
        den = b1[tup[0] - 1] * b1[tup[1] - 1]
        if den == 0.0:
            zero_den += 1
            continue
        ratio = cache(tup) / den
        lo = ratio if lo is None else min(lo, ratio)
        hi = ratio if hi is None else max(hi, ratio)
    total_pairs = N * (N - 1) // 2
    coverage["ratio"] = len(pairs) / max(1, total_pairs - count_a - count_b)
    return StageResult(
        n=n, term_count=N, threshold=threshold, cutoff=cutoff,
        max_b=float(b1.max()), sum_b=float(b1.sum()),
        rare_sum_joint=joint, rare_sum_product=product,
        ratio_band=None if lo is None else (lo, hi),
        zero_denominators=zero_den, mode="sampled", coverage=coverage,
    )


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def check_conditions(
    model_oracle: Callable[[int], StageOracle],
    schedule: QSchedule,
    r: int,
    n_grid,
    rare_params,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
    pair_samples: int = 512,
    ratio_samples: int = 512,
    seed: int = 0,
) -> ConditionReport:
    """Evaluate the three conditions along the grid.

    ``model_oracle(n)`` yields the stage's b-oracle and term count;
    ``rare_params`` is a (threshold, cutoff) pair or a callable of n.
    Grids whose r-subset count exceeds the budget fall back to stratified
    subsampling, which is implemented for r = 2 only.
    """
    if r < 2:
        raise ValidationError(f"tuple order r must be >= 2, got {r}")
    grid = tuple(int(v) for v in n_grid)
    if not grid:
        raise ValidationError("empty n_grid")
    rng = derive_rng(seed, _STREAM_SEVASTYANOV)
    stages = []
    for n in grid:
        stage = model_oracle(n)
        N = stage.term_count
        if N < r:
            raise ValidationError(f"stage n={n} has {N} terms, fewer than r={r}")
        threshold, cutoff = _resolve_rare_params(rare_params, n)
        q = _positions(schedule, N)
        cache = _BCache(stage, q)
        b1 = _singles(cache, N)
        if math.comb(N, r) <= budget:
            stages.append(_stage_exact(cache, q, n, N, r, threshold, cutoff, b1))
        elif r == 2:
            stages.append(
                _stage_sampled(
                    cache, q, n, N, threshold, cutoff, b1, rng,
                    pair_samples, ratio_samples,
                )
            )
        else:
            raise ResourceError(
                f"C({N},{r}) exceeds budget {budget} and subsampling covers r=2 only"
            )
    return ConditionReport(r=r, n_grid=grid, stages=tuple(stages))


@dataclass(frozen=True)
class Tolerances:
    max_b: float = 0.05
    sum_b: float = 0.05
    rare_sum: float = 0.05
    ratio: float = 0.05


@dataclass(frozen=True)
class Verdict:
    passed: bool
    margins: dict[str, float]
    failures: tuple[str, ...]


def poisson_limit_verdict(
    report: ConditionReport, lam: float, tolerances: Tolerances = Tolerances()
) -> Verdict:
    """Pass/fail at the largest grid point with per-condition margins.

    A numerical surrogate for asymptotic hypotheses: pass means every
    condition is within its tolerance at the largest n, not a proof.
    """
    s = report.stage(max(report.n_grid))
    margins = {
        "max_b": tolerances.max_b - s.max_b,
        "sum_b": tolerances.sum_b - abs(s.sum_b - lam),
        "rare_sum_joint": tolerances.rare_sum - s.rare_sum_joint,
        "rare_sum_product": tolerances.rare_sum - s.rare_sum_product,
    }
    if s.ratio_band is None:
        margins["ratio_band"] = -math.inf
    else:
        dev = max(abs(s.ratio_band[0] - 1.0), abs(s.ratio_band[1] - 1.0))
        margins["ratio_band"] = tolerances.ratio - dev
    failures = tuple(k for k, v in margins.items() if v < 0)
    return Verdict(passed=not failures, margins=margins, failures=failures)


def report_rows(report: ConditionReport, lam: float, tolerances: Tolerances = Tolerances()):
    """Rows (n, condition, value, envelope, margin) for CSV emission."""
    rows = []
    for s in report.stages:
        ratio_dev = (
            float("nan")
            if s.ratio_band is None
            else max(abs(s.ratio_band[0] - 1.0), abs(s.ratio_band[1] - 1.0))
        )
        entries = [
            ("max_b", s.max_b, tolerances.max_b),
            ("sum_b_error", abs(s.sum_b - lam), tolerances.sum_b),
            ("rare_sum_joint", s.rare_sum_joint, tolerances.rare_sum),
            ("rare_sum_product", s.rare_sum_product, tolerances.rare_sum),
            ("ratio_band_deviation", ratio_dev, tolerances.ratio),
        ]
        for name, value, env in entries:
            rows.append((s.n, name, value, env, env - value))
    return rows


def rare_sum_envelope_iid(p_n: float, lam_n: float, r: int, ell: int) -> float:
    """Explicit i.i.d.-model envelope p_n * sum_k lam_n^k (r! ell^(2r))^k."""
    base = math.factorial(r) * ell ** (2 * r)
    return p_n * sum((lam_n * base) ** k for k in range(1, r))


# ---------------------------------------------------------------------------
# Model adapters
# ---------------------------------------------------------------------------

def bernoulli_model_oracle(ell: int, lam: float, schedule: QSchedule):
    """Stage factory for the i.i.d. 0-1 array with p = (lam/n)^(1/ell)."""
    from .bernoulli import BernoulliScheme, exact_b

    def factory(n: int) -> StageOracle:
        scheme = BernoulliScheme.from_lambda(n, ell, lam, schedule)
        return StageOracle(
            b=lambda idx: exact_b(scheme, idx),
            term_count=n,
            translation_invariant=True,
        )

    return factory


def markov_model_oracle(targets, schedule: QSchedule):
    """Stage factory over a TargetSetSequence of lifted chains."""
    from .markov import exact_b

    def factory(n: int) -> StageOracle:
        entry = targets.entries[n]
        chain = entry.chain
        stationary = bool(np.allclose(chain.nu, chain.mu, atol=1e-12))
        return StageOracle(
            b=lambda idx: exact_b(chain, schedule, entry.states, idx),
            term_count=n,
            translation_invariant=stationary,
        )

    return factory


def subshift_model_oracle(measure, schedule: QSchedule, lam: float, target_fn):
    """Stage factory for shrinking cylinder targets.

    ``target_fn(n)`` builds the CylinderTarget; the word-lift chain is
    constructed once per stage, and the number of summands is the N with
    N * P(B_n)^ell closest to lam.
    """
    from .markov import exact_b, word_lift
    from .subshift import replicate_count

    def factory(n: int) -> StageOracle:
        target = target_fn(n)
        chain, words = word_lift(target.measure.to_chain(), target.m)
        pos = {w: i for i, w in enumerate(words)}
        gamma = [pos[b] for b in target.blocks]
        N = replicate_count(target, schedule.ell, lam)
        return StageOracle(
            b=lambda idx: exact_b(chain, schedule, gamma, idx),
            term_count=N,
            translation_invariant=True,
        )

    return factory
