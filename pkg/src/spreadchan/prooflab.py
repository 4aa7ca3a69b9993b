"""Diagnostics for the posterior-ratio machinery.

Pieces: the eight-term exponent decomposition of a moved-tap hypothesis'
log-likelihood, its dominant a/b/c terms, Gaussian-maximum order
statistics, random tap-move partitions of the support space, and the
per-group posterior ratio J evaluated in the log domain.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .link import circulant_apply
from .posterior import _likelihood_tables
from .signals import empirical_autocorr

#: Euler's constant, used by the order-statistic expansions.
EULER_C = float(np.euler_gamma)

#: Partition construction enumerates every support; refuse beyond this.
MAX_PARTITION_SUPPORTS = 10**6


def _moved_vectors(signal, hyp, i, k):
    """Dense pieces of a tap move: the moved hypothesis H^{i->k}, the
    single-tap vector with g_i at position k, and their difference D
    (the hypothesis with its tap at i removed; the same for every k)."""
    support = hyp.support
    pos = np.flatnonzero(support == i)
    if pos.size == 0:
        raise ValueError(f"hypothesis has no tap at index {i}")
    if k != i and k in support:
        raise ValueError(f"target index {k} is already occupied")
    g_i = float(hyp.gains[pos[0]])
    moved = hyp.to_vector(signal.kc)
    moved[i] = 0.0
    moved[k] = g_i
    single = np.zeros(signal.kc)
    single[k] = g_i
    return moved, single, g_i


@dataclass(frozen=True)
class ExponentDecomposition:
    """The eight additive pieces of ``-||Y - sqrt(snr) x H^{i->k}||^2 / 2``.

    With D the moved hypothesis minus its relocated tap (i.e. the anchor
    with the tap at i removed) and e the single-tap vector g_i at k:

    t1 = -||Y||^2 / 2                      (k-independent)
    t2 = -snr ||x D||^2 / 2                (k-independent)
    t3 = -snr ||x e||^2 / 2                (constant over k: equal column norms)
    t4 = -snr <x D, x e>                   (the "a" term)
    t5 = +snr <x Htilde, x D>              (k-independent)
    t6 = +snr <x Htilde, x e>              (the "b" term)
    t7 = +sqrt(snr) <Z, x D>               (k-independent)
    t8 = +sqrt(snr) <Z, x e>               (the "c" term)
    """

    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float
    t7: float
    t8: float
    total: float

    @property
    def terms(self):
        return np.array([self.t1, self.t2, self.t3, self.t4,
                         self.t5, self.t6, self.t7, self.t8])


def decompose_exponent(signal, htilde, z, hyp, i, k, snr) -> ExponentDecomposition:
    """Evaluate the eight terms literally; their sum equals the direct
    quadratic form (pure algebra, no approximation)."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    z = np.asarray(z, dtype=float)
    moved, single, _ = _moved_vectors(signal, hyp, i, k)
    rs = math.sqrt(snr)
    xd = circulant_apply(signal, moved - single)
    xe = circulant_apply(signal, single)
    xh = circulant_apply(signal, htilde.to_vector())
    y = rs * xh + z
    t1 = -0.5 * float(y @ y)
    t2 = -0.5 * snr * float(xd @ xd)
    t3 = -0.5 * snr * float(xe @ xe)
    t4 = -snr * float(xd @ xe)
    t5 = snr * float(xh @ xd)
    t6 = snr * float(xh @ xe)
    t7 = rs * float(z @ xd)
    t8 = rs * float(z @ xe)
    total = t1 + t2 + t3 + t4 + t5 + t6 + t7 + t8
    return ExponentDecomposition(t1, t2, t3, t4, t5, t6, t7, t8, total)


def ab_c_terms(signal, htilde, z, hyp, i, k, snr):
    """The three k-dependent terms via autocorrelation sums (independent of
    the vector route used by decompose_exponent):

    a_k = -snr g_i sum_{j != k} H^{i->k}_j <Xbar^j, Xbar^k>
    b_k = +snr g_i sum_j Htilde_j <Xbar^j, Xbar^k>
    c_k = +sqrt(snr) g_i <Z, Xbar^k>
    """
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    z = np.asarray(z, dtype=float)
    support = hyp.support
    pos = np.flatnonzero(support == i)
    if pos.size == 0:
        raise ValueError(f"hypothesis has no tap at index {i}")
    if k != i and k in support:
        raise ValueError(f"target index {k} is already occupied")
    kc = signal.kc
    g_i = float(hyp.gains[pos[0]])
    r = empirical_autocorr(signal)
    keep = support != i
    a = -snr * g_i * float(hyp.gains[keep] @ r[(k - support[keep]) % kc])
    b = snr * g_i * float(htilde.gains @ r[(k - htilde.support) % kc])
    c = math.sqrt(snr) * g_i * float(z @ np.roll(signal.samples, k))
    return a, b, c


def order_stat_mean(m: int, sigma: float = 1.0) -> float:
    """Asymptotic mean of the maximum of m IID N(0, sigma^2) variables,
    via the classical extreme-value expansion (C is Euler's constant):

    sigma * (sqrt(2 ln m) - (ln ln m + ln 4 pi - 2 C) / (2 sqrt(2 ln m)))
    """
    if m < 2:
        raise ValueError("need m >= 2")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    ln_m = math.log(m)
    lead = math.sqrt(2.0 * ln_m)
    correction = (math.log(ln_m) + math.log(4.0 * math.pi) - 2.0 * EULER_C) / (2.0 * lead)
    return sigma * (lead - correction)


def order_stat_var(m: int, sigma: float = 1.0) -> float:
    """Asymptotic variance pi^2 sigma^2 / (12 ln m) of the same maximum."""
    if m < 2:
        raise ValueError("need m >= 2")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return math.pi ** 2 * sigma ** 2 / (12.0 * math.log(m))


@dataclass
class SwapGroup:
    """One partition block: an anchor support holding a tap at the pivot
    index plus the supports assigned to it, each reachable from the anchor
    by relocating that tap.  k_set aligns with members: the delay the
    anchor's pivot tap moves to (k = pivot for the anchor itself)."""

    anchor: tuple
    members: list
    k_set: list


def build_swap_partition(kc, n_taps, i, seed=0):
    """Randomly partition all L-sparse supports into tap-move groups.

    Supports holding a tap at i anchor their own group; every other support
    relocates one of its taps (chosen uniformly) to i and joins that
    anchor's group.  A balancing pass then moves members out of groups
    above twice the expected size (K_c - L)/L and refills groups below half
    of it, so group sizes stay within a factor of two of the expectation.
    """
    if not 0 <= i < kc:
        raise ValueError(f"pivot index {i} outside [0, {kc})")
    if not 1 <= n_taps < kc:
        raise ValueError(f"need 1 <= L < K_c, got L={n_taps}, K_c={kc}")
    if math.comb(kc, n_taps) > MAX_PARTITION_SUPPORTS:
        raise ValueError(
            f"C({kc}, {n_taps}) supports exceed the enumeration limit "
            f"{MAX_PARTITION_SUPPORTS}"
        )
    rng = np.random.default_rng(seed)

    groups: dict[tuple, list[tuple]] = {}
    deferred = []
    for support in itertools.combinations(range(kc), n_taps):
        if i in support:
            groups[support] = [support]
        else:
            deferred.append(support)
    for support in deferred:
        moved = support[int(rng.integers(n_taps))]
        anchor = tuple(sorted(set(support) - {moved} | {i}))
        groups[anchor].append(support)

    target = (kc - n_taps) / n_taps
    cap = 2.0 * target
    floor = 0.5 * target

    def compatible(member):
        return [tuple(sorted(set(member) - {q} | {i})) for q in member]

    for _ in range(64):
        changed = False
        # shed from groups above the cap into their smallest compatible group
        for anchor in sorted(groups, key=lambda a: (-len(groups[a]), a)):
            while len(groups[anchor]) > cap:
                movable = [m for m in groups[anchor] if m != anchor]
                best = None
                for member in movable:
                    for other in compatible(member):
                        if other == anchor:
                            continue
                        size = len(groups[other])
                        if best is None or size < best[0]:
                            best = (size, other, member)
                if best is None:
                    break
                _, other, member = best
                groups[anchor].remove(member)
                groups[other].append(member)
                changed = True
        # refill groups below the floor from the largest donor holding a
        # compatible member
        for anchor in sorted(groups, key=lambda a: (len(groups[a]), a)):
            while len(groups[anchor]) < floor:
                best = None
                for k in range(kc):
                    if k == i or k in anchor:
                        continue
                    member = tuple(sorted(set(anchor) - {i} | {k}))
                    holder = next(a for a, g in groups.items() if member in g)
                    if holder == anchor:
                        continue
                    size = len(groups[holder])
                    if size - 1 <= len(groups[anchor]):
                        continue  # no strict improvement
                    if size - 1 < floor:
                        continue  # would break the donor
                    if best is None or size > best[0]:
                        best = (size, holder, member)
                if best is None:
                    break
                _, holder, member = best
                groups[holder].remove(member)
                groups[anchor].append(member)
                changed = True
        if not changed:
            break

    result = []
    for anchor in sorted(groups):
        members = sorted(groups[anchor])
        k_set = []
        anchor_set = set(anchor)
        for member in members:
            if member == anchor:
                k_set.append(i)
            else:
                (k,) = set(member) - anchor_set
                k_set.append(k)
        result.append(SwapGroup(anchor=anchor, members=members, k_set=k_set))
    return result


def sample_k_set(kc, support, i, seed=0) -> np.ndarray:
    """Seeded draw of one group's k values for an anchor with a tap at i.

    Each empty delay joins with probability 1/L (the chance the
    corresponding moved support picks exactly that tap to relocate), plus
    k = i for the anchor itself.  Feasible at any K_c, unlike the full
    partition.
    """
    support = np.asarray(support, dtype=np.int64)
    if i not in support:
        raise ValueError(f"anchor support has no tap at {i}")
    rng = np.random.default_rng(seed)
    empty = np.setdiff1d(np.arange(kc), support)
    joined = empty[rng.random(empty.size) < 1.0 / support.size]
    return np.concatenate([[i], joined]).astype(np.int64)


@dataclass(frozen=True)
class JRatio:
    """One anchor's share of the posterior-mean ratio, log domain.

    j = g_i exp(E_i) / sum_{k in group} exp(E_k) with
    E_k = -||Y - sqrt(snr) x H^{i->k}||^2 / 2; c_kstar is the largest
    noise term t8 over the group.
    """

    j: float
    log_nominator: float
    log_denominator: float
    c_kstar: float
    k_set: np.ndarray


def j_ratio(signal, htilde, z, hyp, i, snr, k_set=None, seed=0) -> JRatio:
    """Evaluate the per-group ratio over k_set (drawn via sample_k_set when
    not supplied).  All exponents are assembled from the k-independent base
    plus the three k-dependent terms, in the log domain."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    z = np.asarray(z, dtype=float)
    kc = signal.kc
    support = hyp.support
    pos = np.flatnonzero(support == i)
    if pos.size == 0:
        raise ValueError(f"hypothesis has no tap at index {i}")
    g_i = float(hyp.gains[pos[0]])
    if k_set is None:
        k_set = sample_k_set(kc, support, i, seed=seed)
    k_set = np.asarray(k_set, dtype=np.int64)
    if i not in k_set:
        raise ValueError("k_set must contain the pivot index")
    occupied = set(int(s) for s in support)
    for k in k_set:
        if int(k) != i and int(k) in occupied:
            raise ValueError(f"target index {int(k)} is already occupied")

    rs = math.sqrt(snr)
    r = empirical_autocorr(signal)
    zc, _ = _likelihood_tables(z, signal)
    d = hyp.to_vector(kc)
    d[i] = 0.0
    xd = circulant_apply(signal, d)
    xh = circulant_apply(signal, htilde.to_vector())
    y = rs * xh + z
    base = (-0.5 * float(y @ y)
            - 0.5 * snr * float(xd @ xd)
            + snr * float(xh @ xd)
            + rs * float(z @ xd)
            - 0.5 * snr * g_i * g_i * float(r[0]))

    keep = support != i
    lag_a = (k_set[:, None] - support[keep][None, :]) % kc
    a_terms = -snr * g_i * (r[lag_a] @ hyp.gains[keep])
    lag_b = (k_set[:, None] - htilde.support[None, :]) % kc
    b_terms = snr * g_i * (r[lag_b] @ htilde.gains)
    c_terms = rs * g_i * zc[k_set]

    exponents = base + a_terms + b_terms + c_terms
    log_den = float(logsumexp(exponents))
    e_i = float(exponents[np.flatnonzero(k_set == i)[0]])
    log_nom = math.log(abs(g_i)) + e_i
    j = math.copysign(math.exp(log_nom - log_den), g_i)
    return JRatio(
        j=j,
        log_nominator=log_nom,
        log_denominator=log_den,
        c_kstar=float(np.max(c_terms)),
        k_set=k_set,
    )
