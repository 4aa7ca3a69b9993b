"""Posterior channel estimation and the Monte Carlo mmse.

The conditional mean of the channel given (Y, X) is computed two ways:
exact enumeration over the finite hypothesis space (small instances) and
Metropolis sampling whose tap-move proposal relocates one occupied delay to
one empty delay (large instances).  All weight arithmetic is done in the
log domain with max-subtraction: competing hypotheses differ by
exponentially large likelihood factors.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .channel import BOUNDED_B1, BOUNDED_B2, GAIN_GRID_POINTS, sample_channel
from .link import circulant_apply, transmit
from .signals import FFT_CUTOFF, empirical_autocorr

#: Hard ceiling on exact enumeration (supports times gain patterns).
ENUMERATION_BUDGET = 10**7

#: The "auto" method switches to sampling above this many hypotheses.
AUTO_EXACT_LIMIT = 200_000


class EnumerationBudgetError(ValueError):
    """Raised when exact enumeration would exceed its budget."""


@dataclass(frozen=True)
class Hypothesis:
    """A candidate channel: distinct tap delays with aligned gains."""

    support: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=np.int64)
        gains = np.asarray(self.gains, dtype=float)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "gains", gains)
        if gains.shape != support.shape:
            raise ValueError("gains must align with support")
        if np.unique(support).size != support.size:
            raise ValueError("support delays must be distinct")

    @property
    def n_taps(self) -> int:
        return int(self.support.size)

    def to_vector(self, kc: int) -> np.ndarray:
        v = np.zeros(kc)
        v[self.support] = self.gains
        return v


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean plus mode-specific diagnostics.

    Exact mode carries the normalized weight vector (support-major,
    gain-pattern-minor enumeration order) and the log evidence.  Sampling
    mode carries the pooled effective sample size, acceptance rate, and the
    largest per-coordinate gap between chain means; `converged` compares
    that gap to the caller's tolerance (a signal, not an error: the caller
    decides whether to extend sampling).
    """

    hhat: np.ndarray
    mode: str
    log_evidence: float | None = None
    weights: np.ndarray | None = None
    ess: float | None = None
    acceptance_rate: float | None = None
    chain_gap: float | None = None
    converged: bool | None = None


def gain_alphabet(n_taps: int, gain_model: str) -> np.ndarray:
    """Per-tap gain values the posterior enumerates or samples over.

    rademacher: {-1, +1} / sqrt(L).  bounded_uniform: the magnitude range
    discretized onto GAIN_GRID_POINTS points, both signs.
    """
    scale = 1.0 / np.sqrt(n_taps)
    if gain_model == "rademacher":
        return np.array([-scale, scale])
    if gain_model == "bounded_uniform":
        mags = np.linspace(BOUNDED_B1, BOUNDED_B2, GAIN_GRID_POINTS) * scale
        return np.concatenate([-mags[::-1], mags])
    raise ValueError(f"unknown gain model {gain_model!r}")


def hypothesis_count(kc: int, n_taps: int, gain_model: str) -> int:
    return math.comb(kc, n_taps) * len(gain_alphabet(n_taps, gain_model)) ** n_taps


def _seed_list(seed) -> list:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def _likelihood_tables(received, signal):
    """cc[p] = <Y, Xbar^p> and r[d] = <Xbar^0, Xbar^d>.

    The log-likelihood of a hypothesis H is
    -||Y||^2/2 + sqrt(snr) * sum_a g_a cc[p_a]
    - snr/2 * sum_{a,b} g_a g_b r[(p_b - p_a) mod K_c],
    so these two tables are all any posterior computation needs.
    """
    kc = signal.kc
    if kc > FFT_CUTOFF:
        fx = np.fft.rfft(signal.samples)
        cc = np.fft.irfft(np.fft.rfft(received) * np.conj(fx), kc)
        r = np.fft.irfft(np.abs(fx) ** 2, kc)
    else:
        cc = np.array([received @ np.roll(signal.samples, p) for p in range(kc)])
        r = empirical_autocorr(signal)
    return cc, r


def normalize_log_weights(log_weights: np.ndarray):
    """Max-subtracted softmax; returns (weights, logsumexp)."""
    m = float(np.max(log_weights))
    w = np.exp(log_weights - m)
    total = float(w.sum())
    return w / total, m + math.log(total)


def exact_posterior(received, signal, snr, n_taps, gain_model="rademacher",
                    budget=ENUMERATION_BUDGET) -> PosteriorSummary:
    """Posterior mean by enumerating every (support, gain-pattern) hypothesis.

    w(H) is proportional to exp(-||Y - sqrt(snr) x H||^2 / 2) times the
    uniform prior; the posterior mean and log evidence follow.  Raises
    EnumerationBudgetError beyond the budget (use mcmc_posterior instead).
    """
    y = np.asarray(received, dtype=float)
    kc = signal.kc
    if y.shape != (kc,):
        raise ValueError(f"received vector must have length {kc}")
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    if not 1 <= n_taps <= kc:
        raise ValueError(f"need 1 <= L <= K_c, got L={n_taps}, K_c={kc}")
    count = hypothesis_count(kc, n_taps, gain_model)
    if count > budget:
        raise EnumerationBudgetError(
            f"{count} hypotheses exceed the enumeration budget {budget}; "
            "use mcmc_posterior"
        )
    alphabet = gain_alphabet(n_taps, gain_model)
    patterns = np.array(list(itertools.product(alphabet, repeat=n_taps)))
    supports = np.array(
        list(itertools.combinations(range(kc), n_taps)), dtype=np.int64
    )
    cc, r = _likelihood_tables(y, signal)
    y2 = float(y @ y)
    rs = math.sqrt(snr)

    n_s = len(supports)
    lw = np.empty((n_s, len(patterns)))
    # chunk so the (rows, L, L) lag tensor stays modest
    chunk = max(1, int(4e6 / max(1, n_taps * n_taps)))
    for start in range(0, n_s, chunk):
        sup = supports[start:start + chunk]
        t1 = cc[sup] @ patterns.T
        lags = (sup[:, None, :] - sup[:, :, None]) % kc
        t2 = np.einsum("sab,ga,gb->sg", r[lags], patterns, patterns, optimize=True)
        lw[start:start + chunk] = -0.5 * y2 + rs * t1 - 0.5 * snr * t2

    weights, lse = normalize_log_weights(lw.ravel())
    log_evidence = lse - math.log(count)
    weights = weights.reshape(n_s, len(patterns))
    per_tap = weights @ patterns
    hhat = np.zeros(kc)
    np.add.at(hhat, supports, per_tap)
    return PosteriorSummary(
        hhat=hhat, mode="exact", log_evidence=log_evidence, weights=weights.ravel()
    )


class Chain:
    """One Metropolis chain over sparse channel hypotheses.

    Proposal mixture:
      - tap move: relocate one occupied delay (uniform) to one empty delay
        drawn from a matched-filter-weighted distribution, keeping its
        gain; the asymmetry is Hastings-corrected, and the weights become
        exactly uniform at snr = 0 (ratio 1);
      - tap move with a fresh gain: same relocation, gain redrawn uniformly
        from the alphabet (crosses joint support/sign barriers that the
        gain-preserving move can reach only through low-probability
        saddles);
      - gain update: sign flip for rademacher, uniform resample from the
        gain grid for bounded_uniform (symmetric);
      - global sign flip: negate every gain (the prior's mirror symmetry,
        symmetric);
      - single-tap Gibbs: redraw one tap's (delay, gain) from its exact
        conditional given the rest (always accepted); this is the move that
        hops between near-modes when the posterior is concentrated.
    The log-likelihood is maintained incrementally through the cc/r tables;
    the MH steps cost O(L), the Gibbs step O(K_c L).
    """

    #: proposal mixture: move, move+fresh gain, gain update, Gibbs;
    #: the remainder is the global sign flip
    P_MOVE = 0.25
    P_MOVE_FRESH = 0.25
    P_GAIN = 0.3
    P_GIBBS = 0.1

    def __init__(self, kc, cc, r, snr, n_taps, gain_model, rng, init="random"):
        self.kc = kc
        self.cc = cc
        self.r = r
        self.snr = float(snr)
        self.rs = math.sqrt(snr)
        self.rng = rng
        self.gain_model = gain_model
        self.alphabet = gain_alphabet(n_taps, gain_model)
        if init == "matched":
            # start at the matched-filter guess: the L largest |<Y, Xbar^p>|
            # with gains snapped to the alphabet.  Any start is valid; this
            # one sits near the posterior mass when the snr is large.
            idx = np.argpartition(-np.abs(cc), n_taps - 1)[:n_taps]
            self.support = np.sort(idx).astype(np.int64)
            raw = cc[self.support] / (self.rs * r[0]) if self.rs > 0 \
                else np.zeros(n_taps)
            snap = np.abs(raw[:, None] - self.alphabet[None, :]).argmin(axis=1)
            self.gains = self.alphabet[snap].astype(float).copy()
        elif init == "random":
            self.support = rng.choice(kc, n_taps, replace=False).astype(np.int64)
            self.gains = rng.choice(self.alphabet, n_taps)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.occupied = np.zeros(kc, dtype=bool)
        self.occupied[self.support] = True
        # Tap-move targets are drawn from half softmax of the single-tap
        # matched-filter evidence, half uniform (so no reverse move is ever
        # starved).  At snr = 0 the evidence vanishes and this is exactly
        # the uniform kernel.
        evidence = self.rs * np.abs(cc) / math.sqrt(n_taps)
        soft = np.exp(evidence - evidence.max())
        soft /= soft.sum()
        self.target_prob = 0.5 * soft + 0.5 / kc
        self.target_cdf = np.cumsum(self.target_prob)
        self.target_cdf[-1] = 1.0
        self.loglik = self.loglik_full()

    def loglik_full(self) -> float:
        """Recompute sqrt(snr) T1 - snr/2 T2 from scratch (-||Y||^2/2 omitted)."""
        t1 = self.gains @ self.cc[self.support]
        lags = (self.support[None, :] - self.support[:, None]) % self.kc
        t2 = self.gains @ (self.r[lags] @ self.gains)
        return float(self.rs * t1 - 0.5 * self.snr * t2)

    def set_state(self, support, gains):
        """Force the chain to a specific hypothesis (test hook)."""
        self.support = np.asarray(support, dtype=np.int64).copy()
        self.gains = np.asarray(gains, dtype=float).copy()
        self.occupied[:] = False
        self.occupied[self.support] = True
        self.loglik = self.loglik_full()

    def _accept(self, dll) -> bool:
        return dll >= 0 or self.rng.random() < math.exp(dll)

    def _tap_move(self, fresh_gain: bool) -> bool:
        rng = self.rng
        a = int(rng.integers(len(self.support)))
        p = int(self.support[a])
        while True:  # rejection-sample an empty target; mass on empties stays O(1)
            k = int(np.searchsorted(self.target_cdf, rng.random(), side="right"))
            if not self.occupied[k]:
                break
        g = self.gains[a]
        g_new = float(self.alphabet[rng.integers(len(self.alphabet))]) \
            if fresh_gain else g
        r = self.r
        d_new = r[(self.support - k) % self.kc]
        d_old = r[(self.support - p) % self.kc]
        # cross terms over the other taps b != a
        cross = (g_new * (self.gains @ d_new - g * r[(p - k) % self.kc])
                 - g * (self.gains @ d_old - g * r[0]))
        dt2 = (g_new * g_new - g * g) * r[0] + 2.0 * cross
        dt1 = g_new * self.cc[k] - g * self.cc[p]
        dll = self.rs * dt1 - 0.5 * self.snr * dt2
        # Hastings correction: forward draws k among current empties,
        # reverse draws p among the empties after the move
        occ_mass = float(self.target_prob[self.support].sum())
        occ_mass_new = occ_mass - self.target_prob[p] + self.target_prob[k]
        log_q = (math.log(self.target_prob[p]) - math.log(self.target_prob[k])
                 + math.log1p(-occ_mass) - math.log1p(-occ_mass_new))
        if self._accept(dll + log_q):
            self.support[a] = k
            self.gains[a] = g_new
            self.occupied[p] = False
            self.occupied[k] = True
            self.loglik += dll
            return True
        return False

    def _gain_move(self) -> bool:
        rng = self.rng
        a = int(rng.integers(len(self.support)))
        g = self.gains[a]
        if self.gain_model == "rademacher":
            g_new = -g
        else:
            g_new = float(self.alphabet[rng.integers(len(self.alphabet))])
        dg = g_new - g
        if dg == 0.0:
            return True  # self-move, ratio 1
        r = self.r
        d = r[(self.support - self.support[a]) % self.kc]
        cross = self.gains @ d - g * r[0]
        dt2 = (g_new * g_new - g * g) * r[0] + 2.0 * dg * cross
        dll = self.rs * dg * self.cc[self.support[a]] - 0.5 * self.snr * dt2
        if self._accept(dll):
            self.gains[a] = g_new
            self.loglik += dll
            return True
        return False

    def _global_flip(self) -> bool:
        # T2 is quadratic in the gains, so only T1 changes sign
        t1 = float(self.gains @ self.cc[self.support])
        dll = -2.0 * self.rs * t1
        if self._accept(dll):
            np.negative(self.gains, out=self.gains)
            self.loglik += dll
            return True
        return False

    def _gibbs_move(self) -> bool:
        rng = self.rng
        a = int(rng.integers(len(self.support)))
        p = int(self.support[a])
        g = float(self.gains[a])
        others = np.delete(self.support, a)
        other_gains = np.delete(self.gains, a)
        # m[k] = sum_{b != a} g_b r[(k - p_b) mod K_c]
        lags = (np.arange(self.kc)[:, None] - others[None, :]) % self.kc
        m = self.r[lags] @ other_gains
        alpha = self.alphabet
        # conditional logits of tap a at (delay k, gain value)
        logits = ((self.rs * self.cc - self.snr * m)[:, None] * alpha[None, :]
                  - 0.5 * self.snr * self.r[0] * alpha[None, :] ** 2)
        blocked = self.occupied.copy()
        blocked[p] = False
        logits[blocked, :] = -np.inf
        flat = logits.ravel()
        flat = np.exp(flat - flat.max())
        cdf = np.cumsum(flat)
        pick = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        k, gi = divmod(pick, len(alpha))
        g_new = float(alpha[gi])
        dll = (self.rs * g_new * self.cc[k] - self.rs * g * self.cc[p]
               - 0.5 * self.snr * ((g_new * g_new - g * g) * self.r[0]
                                   + 2.0 * (g_new * m[k] - g * m[p])))
        self.support[a] = k
        self.gains[a] = g_new
        self.occupied[p] = False
        self.occupied[k] = True
        self.loglik += dll
        return True

    def step(self) -> bool:
        u = self.rng.random()
        if len(self.support) < self.kc:
            if u < self.P_MOVE:
                return self._tap_move(fresh_gain=False)
            if u < self.P_MOVE + self.P_MOVE_FRESH:
                return self._tap_move(fresh_gain=True)
        if u < self.P_MOVE + self.P_MOVE_FRESH + self.P_GAIN:
            return self._gain_move()
        if u < self.P_MOVE + self.P_MOVE_FRESH + self.P_GAIN + self.P_GIBBS:
            return self._gibbs_move()
        return self._global_flip()


def _ess(trace: np.ndarray) -> float:
    """Effective sample size via the initial-positive-pair autocorrelation sum."""
    n = len(trace)
    x = trace - trace.mean()
    var = float(x @ x) / n
    if var <= 0 or n < 4:
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n] / (var * n)
    tau = 1.0
    t = 1
    while t + 1 < n:
        pair = ac[t] + ac[t + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        t += 2
    return float(min(n, max(1.0, n / tau)))


def mcmc_posterior(received, signal, snr, n_taps, gain_model="rademacher",
                   chains=4, burnin=None, samples=10_000, seed=0,
                   gap_tol=0.05) -> PosteriorSummary:
    """Posterior mean by Metropolis sampling with cross-chain diagnostics.

    Chain c draws from default_rng([*seed, c]); burn-in defaults to
    10 * K_c proposals.  The summary reports the pooled post-burn-in mean,
    acceptance rate, effective sample size, and the largest per-coordinate
    gap between chain means; `converged` is that gap tested against
    gap_tol.  Non-convergence is a signal, never an exception.
    """
    y = np.asarray(received, dtype=float)
    kc = signal.kc
    if y.shape != (kc,):
        raise ValueError(f"received vector must have length {kc}")
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    if not 1 <= n_taps <= kc:
        raise ValueError(f"need 1 <= L <= K_c, got L={n_taps}, K_c={kc}")
    if chains < 2:
        raise ValueError("need chains >= 2 for the agreement diagnostic")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if burnin is None:
        burnin = 10 * kc
    cc, r = _likelihood_tables(y, signal)

    chain_means = np.zeros((chains, kc))
    accepted = 0
    ess_total = 0.0
    for c in range(chains):
        rng = np.random.default_rng(_seed_list(seed) + [c])
        # alternate starts: matched-filter chains equilibrate fast when the
        # posterior is concentrated, random ones keep the multi-start check
        chain = Chain(kc, cc, r, snr, n_taps, gain_model, rng,
                      init="matched" if c % 2 == 0 else "random")
        for _ in range(burnin):
            chain.step()
        hsum = np.zeros(kc)
        trace = np.empty(samples)
        for t in range(samples):
            accepted += chain.step()
            hsum[chain.support] += chain.gains
            trace[t] = chain.loglik
        chain_means[c] = hsum / samples
        ess_total += _ess(trace)

    hhat = chain_means.mean(axis=0)
    gap = float((chain_means.max(axis=0) - chain_means.min(axis=0)).max())
    return PosteriorSummary(
        hhat=hhat,
        mode="mcmc",
        ess=ess_total,
        acceptance_rate=accepted / (chains * samples),
        chain_gap=gap,
        converged=bool(gap <= gap_tol),
    )


def posterior_mean(received, signal, snr, n_taps, gain_model="rademacher",
                   method="auto", exact_limit=AUTO_EXACT_LIMIT, seed=0,
                   chains=4, burnin=None, samples=10_000,
                   gap_tol=0.05) -> PosteriorSummary:
    """Dispatch to exact enumeration or sampling.

    "auto" enumerates exactly when the hypothesis space is at most
    exact_limit and samples otherwise; "exact" and "mcmc" force a path.
    """
    if method == "exact":
        return exact_posterior(received, signal, snr, n_taps, gain_model)
    if method == "mcmc":
        return mcmc_posterior(received, signal, snr, n_taps, gain_model,
                              chains=chains, burnin=burnin, samples=samples,
                              seed=seed, gap_tol=gap_tol)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    if hypothesis_count(signal.kc, n_taps, gain_model) <= exact_limit:
        return exact_posterior(received, signal, snr, n_taps, gain_model)
    return mcmc_posterior(received, signal, snr, n_taps, gain_model,
                          chains=chains, burnin=burnin, samples=samples,
                          seed=seed, gap_tol=gap_tol)


def mmse_samples(signal, snr, n_taps, trials, seed, gain_model="rademacher",
                 method="auto", exact_limit=AUTO_EXACT_LIMIT, chains=4,
                 burnin=None, samples=10_000, gap_tol=0.05) -> np.ndarray:
    """Per-trial values of ||x Htilde - x Hhat||^2 with fresh (Htilde, Z).

    Trial t derives its streams as default_rng([*seed, t, 1]) for the
    channel, [*seed, t, 2] for the noise and [*seed, t, 3] for the sampler,
    so any trial reproduces in isolation and a fixed seed reuses the same
    channels and noises across snr values (common random numbers).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base = _seed_list(seed)
    errs = np.empty(trials)
    for t in range(trials):
        chan = sample_channel(signal.kc, n_taps, gain_model, seed=base + [t, 1])
        obs = transmit(signal, chan, snr, noise_seed=base + [t, 2])
        post = posterior_mean(
            obs.received, signal, snr, n_taps, gain_model, method=method,
            exact_limit=exact_limit, seed=base + [t, 3], chains=chains,
            burnin=burnin, samples=samples, gap_tol=gap_tol,
        )
        resid = circulant_apply(signal, chan.to_vector() - post.hhat)
        errs[t] = resid @ resid
    return errs


def mmse_at(signal, snr, n_taps, trials, seed, **kwargs):
    """Monte Carlo mmse estimate at one snr; returns (estimate, stderr)."""
    errs = mmse_samples(signal, snr, n_taps, trials, seed, **kwargs)
    estimate = float(errs.mean())
    stderr = float(errs.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return estimate, stderr
