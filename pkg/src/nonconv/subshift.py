"""Subshifts of finite type with stationary Markov measures.

Cylinder probabilities, exact Gibbs-ratio and psi-mixing certificates,
short-return screening of reference words, entropy/AEP diagnostics, and the
nonconventional arrival statistic over shrinking cylinder targets together
with its hitting time.

Simulation of the arrival statistic is exact but sparse: instead of
materializing a sample path of length q_ell(N) we sample the successive
occurrence positions of the target block.  After an occurrence the sliding
window is a known word, so inter-occurrence gaps are i.i.d. draws from a
first-passage law computed once on the word-lift chain; the resulting hit
set has exactly the law of the hit set of a simulated path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .distributions import CountDistribution
from .errors import CertificationError, ResourceError, ValidationError
from .markov import FiniteMarkovChain, word_lift
from .rng import (
    STREAM_HITTING,
    STREAM_SAMPLE_POINT,
    STREAM_SUBSHIFT,
    STREAM_TARGET_REFINE,
    derive_rng,
)
from .schedules import QSchedule, logpow_cutoff

_GAP_TAIL_TOL = 1e-15


@dataclass(frozen=True)
class SubshiftSFT:
    """One-sided subshift determined by a 0-1 adjacency matrix."""

    A: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        A = np.asarray(self.A)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError("adjacency matrix must be square")
        if not np.isin(A, (0, 1)).all():
            raise ValidationError("adjacency matrix entries must be 0 or 1")
        if np.any(A.sum(axis=1) == 0) or np.any(A.sum(axis=0) == 0):
            raise ValidationError("adjacency matrix has an all-zero row or column")
        object.__setattr__(self, "_A", A)

    @classmethod
    def from_matrix(cls, A) -> "SubshiftSFT":
        return cls(tuple(tuple(int(v) for v in row) for row in np.asarray(A)))

    @property
    def iota(self) -> int:
        return self._A.shape[0]

    @cached_property
    def wp(self) -> int:
        """Smallest power with A^wp entrywise positive (topological mixing)."""
        Ak = np.eye(self.iota, dtype=np.int64)
        for p in range(1, 2 * self.iota * self.iota + 2):
            Ak = np.minimum(Ak @ self._A, 1)
            if Ak.min() > 0:
                return p
        raise CertificationError("adjacency matrix has no positive power; not mixing")

    def admissible(self, word) -> bool:
        w = tuple(word)
        if not w or any(a < 0 or a >= self.iota for a in w):
            return False
        return all(self._A[a, b] == 1 for a, b in zip(w, w[1:]))

    def words(self, length: int):
        """Yield all admissible words of the given length, lexicographically."""
        if length < 1:
            raise ValidationError("word length must be >= 1")
        stack = [(a,) for a in reversed(range(self.iota))]
        while stack:
            w = stack.pop()
            if len(w) == length:
                yield w
                continue
            for a in reversed(range(self.iota)):
                if self._A[w[-1], a]:
                    stack.append(w + (a,))

    def bridge_exists(self, a: int, b: int, steps: int) -> bool:
        """Is there an admissible path of exactly ``steps`` edges from a to b?"""
        if steps == 0:
            return a == b
        Ak = np.minimum(np.linalg.matrix_power(self._A.astype(np.int64), min(steps, 2 * self.wp)), 1)
        if steps >= 2 * self.wp:
            # beyond 2*wp every entry is positive already
            return True
        return bool(Ak[a, b] > 0)


def full_shift(iota: int) -> SubshiftSFT:
    return SubshiftSFT.from_matrix(np.ones((iota, iota), dtype=int))


def golden_mean_shift() -> SubshiftSFT:
    return SubshiftSFT.from_matrix([[1, 1], [1, 0]])


class MarkovGibbsMeasure:
    """Stationary Markov measure compatible with the subshift.

    Q must be row-stochastic with Q_ij > 0 exactly where A_ij = 1.  The
    induced two-coordinate potential is phi(w) = ln Q_{w0 w1}; cylinder
    probabilities are exact products pi_{a0} prod Q_{a_i a_{i+1}}.
    """

    def __init__(self, sft: SubshiftSFT, Q):
        Q = np.asarray(Q, dtype=float)
        A = sft._A
        if Q.shape != A.shape:
            raise ValidationError("Q must match the adjacency matrix shape")
        if np.any((Q > 0) != (A == 1)):
            raise ValidationError("Q must be positive exactly on adjacency edges")
        self.sft = sft
        self.chain = FiniteMarkovChain(Q)  # validates stochasticity and aperiodicity
        self.Q = self.chain.P
        self.pi = self.chain.mu
        self.chain.nu = self.pi.copy()  # stationary start

    @property
    def entropy(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(self.Q > 0, np.log(np.where(self.Q > 0, self.Q, 1.0)), 0.0)
        return float(-np.sum(self.pi[:, None] * self.Q * logs))

    def to_chain(self) -> FiniteMarkovChain:
        return FiniteMarkovChain(self.Q, nu=self.pi)

    def is_uniform_full_shift(self) -> bool:
        return bool(np.allclose(self.Q, 1.0 / self.sft.iota))


def uniform_measure(sft: SubshiftSFT) -> MarkovGibbsMeasure:
    """The Markov measure with uniform transitions on admissible edges."""
    A = sft._A.astype(float)
    Q = A / A.sum(axis=1, keepdims=True)
    return MarkovGibbsMeasure(sft, Q)


def cylinder_prob(measure: MarkovGibbsMeasure, word) -> float:
    w = tuple(int(a) for a in word)
    if not measure.sft.admissible(w):
        raise ValidationError(f"word {w} is not admissible under the adjacency matrix")
    p = measure.pi[w[0]]
    for a, b in zip(w, w[1:]):
        p *= measure.Q[a, b]
    return float(p)


# ---------------------------------------------------------------------------
# Gibbs ratio and psi-mixing certificates
# ---------------------------------------------------------------------------

def gibbs_constant(measure: MarkovGibbsMeasure, n_max: int) -> float:
    """Max two-sided cylinder/exp-Birkhoff ratio over words up to n_max.

    The potential is phi(w) = ln Q_{w0 w1} with zero pressure; the Birkhoff
    sum over a length-n word needs one continuation symbol, taken as the
    periodic wrap when admissible and otherwise the most likely admissible
    successor.  Returns max(ratio, 1/ratio) over all scanned words.
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    worst = 1.0
    for n in range(1, n_max + 1):
        for w in measure.sft.words(n):
            last, first = w[-1], w[0]
            if measure.sft._A[last, first]:
                nxt = first
            else:
                nxt = int(np.argmax(measure.Q[last]))
            # ratio = P([w]) / exp(sum_{i<n} ln Q_{w_i w_{i+1}}) with w_n = nxt
            ratio = measure.pi[first] / measure.Q[last, nxt]
            worst = max(worst, ratio, 1.0 / ratio)
    return float(worst)


@dataclass(frozen=True)
class PsiMixingCertificate:
    C: float
    beta: float
    spectral_beta: float
    worst_pair: tuple
    envelope: tuple[float, ...]  # max relative error per effective gap 1..gap_max


def psi_mixing_check(
    measure: MarkovGibbsMeasure, l_max: int, gap_max: int
) -> PsiMixingCertificate:
    """Exhaustive multiplicative-mixing scan over cylinder pairs.

    For every admissible pair U (length <= l_max), V (length <= l_max) and
    shift n >= len(U), the exact relative error
    |P(U n T^{-n} V) - P(U) P(V)| / (P(U) P(V)) is evaluated; the tightest
    envelope C e^{-beta g} in the effective gap g = n - len(U) + 1 is fit.
    """
    iota = measure.sft.iota
    errs = np.zeros((gap_max, iota, iota))
    Qg = measure.Q.copy()
    for g in range(1, gap_max + 1):
        errs[g - 1] = np.abs(Qg / measure.pi[None, :] - 1.0)
        Qg = Qg @ measure.Q
    # relative error depends on the cylinder pair only through U's last
    # symbol and V's first; scan all pairs to locate the worst one
    envelope = []
    worst = (0.0, None)
    reachable = np.zeros((iota, iota), dtype=bool)
    for lu in range(1, l_max + 1):
        for u in measure.sft.words(lu):
            for v0 in range(iota):
                reachable[u[-1], v0] = True
    for g in range(1, gap_max + 1):
        e = 0.0
        for a in range(iota):
            for b in range(iota):
                if reachable[a, b] and errs[g - 1, a, b] > e:
                    e = errs[g - 1, a, b]
                    if e > worst[0]:
                        worst = (e, (a, b, g))
        envelope.append(e)
    env = np.array(envelope)
    eigs = np.sort(np.abs(np.linalg.eigvals(measure.Q)))[::-1]
    lam2 = eigs[1] if len(eigs) > 1 else 0.0
    spectral_beta = math.inf if lam2 < 1e-14 else -math.log(lam2)
    if np.all(env < 1e-12):
        return PsiMixingCertificate(
            C=0.0, beta=math.inf, spectral_beta=spectral_beta,
            worst_pair=worst[1], envelope=tuple(envelope),
        )
    usable = [g for g in range(1, gap_max + 1) if env[g - 1] > 1e-12]
    fit = [g for g in usable if g > gap_max // 2] or usable
    if len(fit) < 2:
        fit = usable
    slope, _ = np.polyfit(fit, [math.log(env[g - 1]) for g in fit], 1)
    beta = -float(slope)
    if beta <= 0:
        raise CertificationError("psi-mixing envelope is not geometrically decaying")
    C = max(env[g - 1] * math.exp(beta * g) for g in range(1, gap_max + 1))
    return PsiMixingCertificate(
        C=float(C), beta=beta, spectral_beta=spectral_beta,
        worst_pair=worst[1], envelope=tuple(envelope),
    )


# ---------------------------------------------------------------------------
# Short returns, sampling, AEP
# ---------------------------------------------------------------------------

def short_return_check(sft: SubshiftSFT, word, a_n: int) -> bool:
    """True when the length-n cylinder avoids self-intersection at shifts <= a_n.

    For shifts i < n the intersection is nonempty iff the word overlaps
    itself (w_{k+i} = w_k); for i >= n it is nonempty iff an admissible
    bridge of i - n + 1 edges connects the last symbol back to the first.
    """
    w = tuple(int(a) for a in word)
    if not sft.admissible(w):
        raise ValidationError(f"word {w} is not admissible")
    if a_n < 1:
        return True
    n = len(w)
    for i in range(1, a_n + 1):
        if i < n:
            if w[i:] == w[: n - i]:
                return False
        else:
            if sft.bridge_exists(w[-1], w[0], i - n + 1):
                return False
    return True


def sample_point(measure: MarkovGibbsMeasure, length: int, seed: int) -> tuple[int, ...]:
    """Draw an admissible word of the given length from the measure."""
    if length < 1:
        raise ValidationError("length must be >= 1")
    rng = derive_rng(seed, STREAM_SAMPLE_POINT)
    pi_cdf = np.cumsum(measure.pi)
    q_cdf = np.cumsum(measure.Q, axis=1)
    state = int(np.searchsorted(pi_cdf, rng.random(), side="right"))
    out = [state]
    us = rng.random(length - 1)
    for u in us:
        state = int(np.searchsorted(q_cdf[state], u, side="right"))
        out.append(state)
    return tuple(out)


def aep_deviation(measure: MarkovGibbsMeasure, word) -> float:
    """|(1/n) ln P([word]) + entropy|.

    The log-probability is accumulated termwise so that long words whose
    cylinder mass underflows a float still evaluate correctly.
    """
    w = tuple(int(a) for a in word)
    if not measure.sft.admissible(w):
        raise ValidationError(f"word {w} is not admissible under the adjacency matrix")
    logp = math.log(measure.pi[w[0]])
    for a, b in zip(w, w[1:]):
        logp += math.log(measure.Q[a, b])
    return abs(logp / len(w) + measure.entropy)


def sample_clear_word(
    measure: MarkovGibbsMeasure, n: int, eps: float, seed: int, max_tries: int = 10_000
) -> tuple[int, ...]:
    """Rejection-sample a word of length n passing the short-return screen."""
    a_n = logpow_cutoff(n, eps)
    for t in range(max_tries):
        w = sample_point(measure, n, seed + t)
        if short_return_check(measure.sft, w, a_n):
            return w
    raise ResourceError(f"no short-return-clear word of length {n} in {max_tries} tries")


# ---------------------------------------------------------------------------
# Cylinder targets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CylinderTarget:
    """Target event B_n: a union of length-m blocks refining the n-prefix of omega_star."""

    measure: MarkovGibbsMeasure
    omega_star: tuple[int, ...]
    n: int
    s: float
    eps: float
    blocks: tuple[tuple[int, ...], ...]
    a_n: int
    short_return_clear: bool

    @property
    def m(self) -> int:
        return len(self.blocks[0])

    @cached_property
    def prob(self) -> float:
        return float(sum(cylinder_prob(self.measure, b) for b in self.blocks))


def make_target(
    measure: MarkovGibbsMeasure,
    omega_star,
    n: int,
    s: float = 0.0,
    eps: float = 0.25,
    refine_seed: int | None = None,
    keep_fraction: float = 1.0,
) -> CylinderTarget:
    """Build B_n from the first n symbols of omega_star.

    With s = 0 the target is the plain n-cylinder.  With s > 0 it is the
    union of all admissible extensions to length n + floor(s ln n); a seeded
    rule keeps a fraction of them when keep_fraction < 1 (at least one).
    """
    w = tuple(int(a) for a in omega_star)
    if len(w) < n:
        raise ValidationError(f"omega_star has {len(w)} symbols, need at least n={n}")
    if not measure.sft.admissible(w[:n]):
        raise ValidationError("omega_star prefix is not admissible")
    prefix = w[:n]
    m = n + int(s * math.log(n)) if n > 1 else n
    if m == n:
        blocks = [prefix]
    else:
        blocks = [prefix + ext[1:] for ext in _extensions(measure.sft, prefix[-1], m - n)]
        if keep_fraction < 1.0:
            if refine_seed is None:
                raise ValidationError("keep_fraction < 1 requires refine_seed")
            rng = derive_rng(refine_seed, STREAM_TARGET_REFINE)
            keep = max(1, int(round(keep_fraction * len(blocks))))
            chosen = rng.choice(len(blocks), size=keep, replace=False)
            blocks = [blocks[i] for i in sorted(chosen)]
    a_n = logpow_cutoff(n, eps)
    clear = short_return_check(measure.sft, prefix, a_n)
    return CylinderTarget(
        measure=measure, omega_star=w, n=n, s=s, eps=eps,
        blocks=tuple(blocks), a_n=a_n, short_return_clear=clear,
    )


def _extensions(sft: SubshiftSFT, last: int, length: int):
    """All admissible words of the given length starting from ``last``."""
    stack = [(last,)]
    out = []
    while stack:
        w = stack.pop()
        if len(w) == length + 1:
            out.append(w)
            continue
        for a in range(sft.iota):
            if sft._A[w[-1], a]:
                stack.append(w + (a,))
    return sorted(out)


def replicate_count(target: CylinderTarget, ell: int, lam: float) -> int:
    """N with N * P(B_n)^ell closest to lam (at least 1)."""
    return max(1, int(round(lam / target.prob**ell)))


# ---------------------------------------------------------------------------
# Sparse hit engine
# ---------------------------------------------------------------------------

class _HitEngine:
    """Exact sampler for the positions where the sliding window lands in B_n.

    Built once per (measure, target, horizon); replicates then draw i.i.d.
    first-passage gaps.  Gap laws are truncated where the survival mass
    drops below 1e-15; truncated draws count as "no further hit", which is
    exact up to that mass.
    """

    def __init__(self, target: CylinderTarget, horizon: int):
        self.horizon = horizon
        chain, words = word_lift(target.measure.to_chain(), target.m)
        pos = {w: i for i, w in enumerate(words)}
        missing = [b for b in target.blocks if b not in pos]
        if missing:
            raise ValidationError(f"target blocks not admissible: {missing[:3]}")
        self.block_states = np.array([pos[b] for b in target.blocks], dtype=np.int64)
        S = chain.M
        iota = target.measure.sft.iota
        succ = np.full((S, iota), -1, dtype=np.int64)
        pr = np.zeros((S, iota))
        for i, w in enumerate(words):
            for a in range(iota):
                nxt = w[1:] + (a,)
                j = pos.get(nxt)
                if j is not None and chain.P[i, j] > 0:
                    succ[i, a] = j
                    pr[i, a] = chain.P[i, j]
        valid = succ >= 0
        self._succ_flat = succ[valid]
        self._pr_flat = pr[valid]
        self._src_flat = np.repeat(np.arange(S), valid.sum(axis=1))
        # reorder so weights can be gathered as u[src] * pr
        self.S = S
        hit_mask = np.zeros(S, dtype=bool)
        hit_mask[self.block_states] = True
        self._hit_mask = hit_mask
        start = chain.nu.copy()
        self.init_times, self.init_blocks, self.init_cdf = self._first_passage(start, t0=0)
        self.gap_tables = []
        for b in self.block_states:
            e = np.zeros(S)
            e[b] = 1.0
            self.gap_tables.append(self._first_passage(e, t0=1))

    def _step(self, u: np.ndarray) -> np.ndarray:
        return np.bincount(
            self._succ_flat, weights=u[self._src_flat] * self._pr_flat, minlength=self.S
        )

    def _first_passage(self, u: np.ndarray, t0: int):
        """Joint law of (first hit time >= t0, hit block), truncated.

        Returns (times, block_index, cdf) flattened over absorbed events;
        residual mass beyond the truncation is left off the cdf and maps to
        "no hit within horizon" when sampled.
        """
        times, blocks, probs = [], [], []
        t = 0
        if t0 == 1:
            u = self._step(u)
            t = 1
        while True:
            absorbed = u[self.block_states]
            nz = np.nonzero(absorbed > 0)[0]
            for j in nz:
                times.append(t)
                blocks.append(j)
                probs.append(absorbed[j])
            u = u.copy()
            u[self.block_states] = 0.0
            if u.sum() < _GAP_TAIL_TOL or t >= self.horizon:
                break
            u = self._step(u)
            t += 1
        return (
            np.array(times, dtype=np.int64),
            np.array(blocks, dtype=np.int64),
            np.cumsum(np.array(probs)),
        )

    def sample_hits(self, rng, replicates: int):
        """Hit positions for a batch: returns (rep_ids, positions), unsorted."""
        rep_chunks, pos_chunks = [], []
        idx = np.searchsorted(self.init_cdf, rng.random(replicates), side="right")
        alive = idx < len(self.init_cdf)
        cur_rep = np.nonzero(alive)[0].astype(np.int64)
        cur_pos = self.init_times[idx[alive]]
        cur_blk = self.init_blocks[idx[alive]]
        keep = cur_pos <= self.horizon
        cur_rep, cur_pos, cur_blk = cur_rep[keep], cur_pos[keep], cur_blk[keep]
        while cur_rep.size:
            rep_chunks.append(cur_rep)
            pos_chunks.append(cur_pos)
            nxt_pos = np.empty_like(cur_pos)
            nxt_blk = np.empty_like(cur_blk)
            alive = np.zeros(cur_rep.size, dtype=bool)
            for b, (times, blocks, cdf) in enumerate(self.gap_tables):
                sel = np.nonzero(cur_blk == b)[0]
                if sel.size == 0:
                    continue
                j = np.searchsorted(cdf, rng.random(sel.size), side="right")
                ok = j < len(cdf)
                okj = j[ok]
                alive[sel[ok]] = True
                nxt_pos[sel[ok]] = cur_pos[sel[ok]] + times[okj]
                nxt_blk[sel[ok]] = blocks[okj]
            alive &= nxt_pos <= self.horizon
            cur_rep = cur_rep[alive]
            cur_pos = nxt_pos[alive]
            cur_blk = nxt_blk[alive]
        if not rep_chunks:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        return np.concatenate(rep_chunks), np.concatenate(pos_chunks)


def _schedule_columns(schedule, N: int) -> np.ndarray:
    return np.array([schedule.evaluate(l) for l in range(1, N + 1)], dtype=np.int64)


def _counts_and_first(q_cols, horizon, rep_ids, positions, replicates):
    """Per-replicate arrival count and first arriving term l (0 = none)."""
    N, ell = q_cols.shape
    q1 = q_cols[:, 0]
    if rep_ids.size == 0:
        return (
            np.zeros(replicates, dtype=np.int64),
            np.zeros(replicates, dtype=np.int64),
        )
    stride = horizon + 2
    key = rep_ids * stride + positions
    key.sort()
    li = np.searchsorted(q1, positions)
    cand = (li < N) & (q1[np.minimum(li, N - 1)] == positions)
    l_val = li[cand] + 1
    reps = rep_ids[cand]
    ok = np.ones(l_val.size, dtype=bool)
    for j in range(1, ell):
        tq = q_cols[l_val - 1, j]
        k = np.searchsorted(key, reps * stride + tq)
        ok &= (k < key.size) & (key[np.minimum(k, max(0, key.size - 1))] == reps * stride + tq)
    counts = np.bincount(reps[ok], minlength=replicates)
    first = np.zeros(replicates, dtype=np.int64)
    if ok.any():
        sel_r, sel_l = reps[ok], l_val[ok]
        big = N + 1
        firsts = np.full(replicates, big, dtype=np.int64)
        np.minimum.at(firsts, sel_r, sel_l)
        first = np.where(firsts <= N, firsts, 0)
    return counts, first


def _check_preconditions(schedule: QSchedule, target: CylinderTarget):
    if not target.short_return_clear:
        raise ValidationError(
            "target fails short_return_check: the reference word self-overlaps "
            f"within a(n)={target.a_n}; pick a different omega_star"
        )
    if schedule.ell >= 2 and target.measure is not None and schedule.gap_params is None:
        raise ValidationError(
            "schedules with ell >= 2 must declare gap_params (c, gamma) growth"
        )


def simulate_nonconventional_batch(
    measure: MarkovGibbsMeasure,
    schedule: QSchedule,
    target: CylinderTarget,
    lam: float,
    seed: int,
    replicates: int,
    batch: int | None = None,
):
    """Arrival-count draws; returns (samples, N, realized_lambda)."""
    _check_preconditions(schedule, target)
    N = replicate_count(target, schedule.ell, lam)
    horizon = schedule.max_index(N)
    engine = _HitEngine(target, horizon)
    q_cols = _schedule_columns(schedule, N)
    rng = derive_rng(seed, STREAM_SUBSHIFT)
    expected_hits = max(1.0, horizon * target.prob)
    if batch is None:
        batch = max(64, min(replicates, int(2e7 / expected_hits)))
    out = np.empty(replicates, dtype=np.int64)
    done = 0
    while done < replicates:
        r = min(batch, replicates - done)
        rep_ids, positions = engine.sample_hits(rng, r)
        counts, _ = _counts_and_first(q_cols, horizon, rep_ids, positions, r)
        out[done : done + r] = counts
        done += r
    return out, N, float(N * target.prob**schedule.ell)


def simulate_nonconventional(measure, schedule, target, lam, seed):
    """One draw; returns (S, N)."""
    samples, N, _ = simulate_nonconventional_batch(measure, schedule, target, lam, seed, 1)
    return int(samples[0]), N


def hitting_time_batch(
    measure: MarkovGibbsMeasure,
    schedule: QSchedule,
    target: CylinderTarget,
    seed: int,
    replicates: int,
    lam_cap: float = 8.0,
):
    """Scaled hitting times P(B)^ell * tau, censored at the horizon.

    Returns (scaled, censored): censored replicates saw no simultaneous
    arrival among terms l <= lam_cap / P(B)^ell and their scaled value is
    reported as lam_cap (a lower bound).
    """
    _check_preconditions(schedule, target)
    N_cap = replicate_count(target, schedule.ell, lam_cap)
    horizon = schedule.max_index(N_cap)
    engine = _HitEngine(target, horizon)
    q_cols = _schedule_columns(schedule, N_cap)
    rng = derive_rng(seed, STREAM_HITTING)
    expected_hits = max(1.0, horizon * target.prob)
    batch = max(64, min(replicates, int(2e7 / expected_hits)))
    scale = target.prob**schedule.ell
    scaled = np.empty(replicates)
    censored = np.empty(replicates, dtype=bool)
    done = 0
    while done < replicates:
        r = min(batch, replicates - done)
        rep_ids, positions = engine.sample_hits(rng, r)
        _, first = _counts_and_first(q_cols, horizon, rep_ids, positions, r)
        cen = first == 0
        scaled[done : done + r] = np.where(cen, lam_cap, first * scale)
        censored[done : done + r] = cen
        done += r
    return scaled, censored


def hitting_time(measure, schedule, target, seed, lam_cap: float = 8.0):
    """One scaled hitting time; returns (value, censored)."""
    scaled, censored = hitting_time_batch(measure, schedule, target, seed, 1, lam_cap)
    return float(scaled[0]), bool(censored[0])


# ---------------------------------------------------------------------------
# Exact oracles
# ---------------------------------------------------------------------------

def exact_b_subshift(
    measure: MarkovGibbsMeasure,
    schedule: QSchedule,
    target: CylinderTarget,
    indices,
    state_budget: int = 1 << 16,
) -> float:
    """Joint arrival probability for the given term indices, exact.

    Lifts the measure to the chain of sliding m-blocks and runs the
    restricted matrix-product oracle there.
    """
    if measure.sft.iota**target.m > state_budget:
        raise ResourceError(
            f"lift of order {target.m} needs up to {measure.sft.iota ** target.m} "
            f"states, over budget {state_budget}"
        )
    from .markov import exact_b

    chain, words = word_lift(measure.to_chain(), target.m)
    pos = {w: i for i, w in enumerate(words)}
    gamma = [pos[b] for b in target.blocks]
    return exact_b(chain, schedule, gamma, indices)


def exact_sum_distribution_subshift(
    measure: MarkovGibbsMeasure,
    schedule: QSchedule,
    target: CylinderTarget,
    N: int,
    path_budget: int = 10**7,
) -> CountDistribution:
    """Exact law of the arrival count over terms l <= N, by word enumeration.

    Enumerates every admissible word of length q_ell(N) + m weighted by its
    cylinder probability; tiny N only.
    """
    horizon = schedule.max_index(N)
    length = horizon + target.m
    if measure.sft.iota**length > path_budget:
        raise ResourceError(
            f"{measure.sft.iota}^{length} words exceed budget {path_budget}"
        )
    times = [schedule.evaluate(l) for l in range(1, N + 1)]
    blocks = set(target.blocks)
    m = target.m
    pmf = np.zeros(N + 1)
    for w in measure.sft.words(length):
        p = cylinder_prob(measure, w)
        count = sum(
            1 for tup in times if all(w[t : t + m] in blocks for t in tup)
        )
        pmf[count] += p
    out = {k: float(v) for k, v in enumerate(pmf) if v > 0.0}
    return CountDistribution(pmf=out, kind="exact")
