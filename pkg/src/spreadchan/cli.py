"""Command-line interface.

Subcommands: ``sweep <config>`` runs a persisted scaling experiment,
``mmse`` a single-cell quick estimate, ``prooflab`` the proof-term
diagnostic battery, and ``selftest`` the fast identity suite.  Exit codes:
0 success, 1 validation/usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import channel as channel_mod
from . import harness, posterior, prooflab, rate
from .link import circulant_apply, transmit
from .signals import cyclic_shift, empirical_autocorr, gen_signal

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="spreadchan",
                     description="Sparse-multipath spreading-signal laboratory")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_sweep = sub.add_parser("sweep", help="run a sweep from a config file")
    p_sweep.add_argument("config", help="flat key=value config file")
    p_sweep.set_defaults(func=cmd_sweep)

    p_mmse = sub.add_parser("mmse", help="single-cell Monte Carlo mmse")
    p_mmse.add_argument("--kc", type=int, required=True)
    p_mmse.add_argument("--l", type=int, required=True)
    p_mmse.add_argument("--snr", type=float, required=True)
    p_mmse.add_argument("--trials", type=int, default=100)
    p_mmse.add_argument("--seed", type=int, default=0)
    p_mmse.add_argument("--gain-model", default="rademacher",
                        choices=channel_mod.GAIN_MODELS)
    p_mmse.set_defaults(func=cmd_mmse)

    p_lab = sub.add_parser("prooflab", help="proof-term diagnostic battery")
    p_lab.add_argument("--kc", type=int, default=1024)
    p_lab.add_argument("--l", type=int, default=32)
    p_lab.add_argument("--rho", type=float, default=0.1)
    p_lab.add_argument("--trials", type=int, default=50)
    p_lab.add_argument("--seed", type=int, default=0)
    p_lab.set_defaults(func=cmd_prooflab)

    p_self = sub.add_parser("selftest", help="fast identity checks")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def cmd_sweep(args) -> int:
    if not os.path.exists(args.config):
        print(f"config file not found: {args.config}", file=sys.stderr)
        return EXIT_USAGE
    config = harness.load_config(args.config)
    records = harness.run_sweep(config)
    print(f"wrote {config.output}.csv and {config.output}.json "
          f"({len(records)}/{len(config.cells())} cells ok)")
    for rec in records:
        print(f"  kc={rec.kc} l={rec.l} rho={rec.rho:g} snr={rec.snr:.6g} "
              f"penalty_ratio={rec.penalty_ratio:.4f}"
              f" +- {rec.penalty_stderr:.4f}")
    return EXIT_OK


def cmd_mmse(args) -> int:
    if args.kc < 2 or not 1 <= args.l < args.kc:
        raise ValueError(f"need K_c >= 2 and 1 <= L < K_c, "
                         f"got K_c={args.kc}, L={args.l}")
    if args.snr < 0:
        raise ValueError("snr must be nonnegative")
    sig = gen_signal("iid_binary", args.kc, seed=[args.seed, 0])
    estimate, stderr = posterior.mmse_at(
        sig, args.snr, args.l, args.trials, seed=args.seed,
        gain_model=args.gain_model,
    )
    print(f"mmse({args.snr:g}) = {estimate:.6g} +- {stderr:.3g} "
          f"(K_c={args.kc}, L={args.l}, trials={args.trials})")
    return EXIT_OK


def cmd_prooflab(args) -> int:
    kc, n_taps = args.kc, args.l
    if kc < 2 or not 1 <= n_taps < kc:
        raise ValueError(f"need K_c >= 2 and 1 <= L < K_c, "
                         f"got K_c={kc}, L={n_taps}")
    snr = args.rho * rate.threshold_snr(kc, n_taps)
    rng_root = args.seed

    worst_identity = 0.0
    a_pass = 0
    a_total = 0
    cond7_fraction = []
    c_star_ratios = []
    log_j = []
    for t in range(args.trials):
        sig = gen_signal("iid_binary", kc, seed=[rng_root, t, 0])
        chan = channel_mod.sample_channel(kc, n_taps, "rademacher",
                                          seed=[rng_root, t, 1])
        z = np.random.default_rng([rng_root, t, 2]).standard_normal(kc)
        hyp = posterior.Hypothesis(support=chan.support, gains=chan.gains)

        passing = set(channel_mod.check_condition7(sig, chan).tolist())
        cond7_fraction.append(len(passing) / kc)
        # rademacher taps have magnitude exactly 1/sqrt(L), so B1 = 1
        bound = channel_mod.DEFAULT_B3 * snr * math.sqrt(kc / n_taps)
        for i in chan.support:
            i = int(i)
            if i not in passing:
                continue
            a_i, _, _ = prooflab.ab_c_terms(sig, chan, z, hyp, i, i, snr)
            a_total += 1
            a_pass += abs(a_i) <= bound

        i0 = int(chan.support[0])
        dec = prooflab.decompose_exponent(sig, chan, z, hyp, i0, i0, snr)
        moved = hyp.to_vector(kc)
        y = math.sqrt(snr) * circulant_apply(sig, chan.to_vector()) + z
        resid = y - math.sqrt(snr) * circulant_apply(sig, moved)
        worst_identity = max(worst_identity,
                             abs(dec.total - (-0.5 * float(resid @ resid))))

        jr = prooflab.j_ratio(sig, chan, z, hyp, i0, snr, seed=[rng_root, t, 3])
        log_j.append(jr.log_nominator - jr.log_denominator)
        m = len(jr.k_set)
        if m >= 2:
            sigma = math.sqrt(snr * kc) / math.sqrt(n_taps)
            c_star_ratios.append(jr.c_kstar / prooflab.order_stat_mean(m, sigma))

    print(f"prooflab battery: K_c={kc} L={n_taps} rho={args.rho:g} "
          f"snr={snr:.6g} trials={args.trials}")
    print(f"  exponent identity worst |sum - direct| = {worst_identity:.3e}")
    print(f"  condition-7 pass fraction: median "
          f"{float(np.median(cond7_fraction)):.4f}")
    if a_total:
        print(f"  a-term bound held for {a_pass}/{a_total} passing taps "
              f"({a_pass / a_total:.2%})")
    print(f"  c* / order-stat prediction: median "
          f"{float(np.median(c_star_ratios)):.3f}")
    print(f"  median log|J| = {float(np.median(log_j)):.3f}")
    return EXIT_OK


def _selftest_checks():
    sig = gen_signal("iid_binary", 16, seed=7)

    def shift_identity():
        assert np.array_equal(cyclic_shift(sig, 0), sig.samples)
        assert np.array_equal(cyclic_shift(sig, 16), sig.samples)
        v = np.arange(16.0)
        roll = v
        for _ in range(16):
            roll = np.roll(roll, 1)
        assert np.array_equal(roll, v)

    def autocorr_hand_values():
        from .signals import SpreadSignal
        ones = SpreadSignal(np.ones(4), "iid_binary", 4)
        assert np.allclose(empirical_autocorr(ones), [4, 4, 4, 4])
        alt = SpreadSignal(np.array([1.0, -1.0, 1.0, -1.0]), "iid_binary", 4)
        assert np.allclose(empirical_autocorr(alt), [4, -4, 4, -4])

    def circulant_columns():
        for k in (0, 3, 11):
            e = np.zeros(16)
            e[k] = 1.0
            assert np.allclose(circulant_apply(sig, e), cyclic_shift(sig, k))

    def transmit_zero_snr():
        chan = channel_mod.sample_channel(16, 2, seed=1)
        obs = transmit(sig, chan, 0.0, noise_seed=2)
        assert np.array_equal(obs.received, obs.noise)

    def posterior_zero_snr():
        chan = channel_mod.sample_channel(16, 2, seed=1)
        obs = transmit(sig, chan, 0.0, noise_seed=3)
        post = posterior.exact_posterior(obs.received, sig, 0.0, 2)
        assert np.allclose(post.hhat, 0.0, atol=1e-12)
        assert np.allclose(post.weights, post.weights[0])

    def exponent_identity():
        chan = channel_mod.sample_channel(16, 2, seed=4)
        z = np.random.default_rng(5).standard_normal(16)
        hyp = posterior.Hypothesis(chan.support, chan.gains)
        i = int(chan.support[0])
        dec = prooflab.decompose_exponent(sig, chan, z, hyp, i, i, 1.0)
        y = circulant_apply(sig, chan.to_vector()) + z
        resid = y - circulant_apply(sig, hyp.to_vector(16))
        assert abs(dec.total - (-0.5 * resid @ resid)) < 1e-9

    def partition_covers():
        groups = prooflab.build_swap_partition(8, 2, 0, seed=0)
        seen = [m for g in groups for m in g.members]
        assert len(seen) == len(set(seen)) == 28

    def threshold_value():
        assert abs(rate.threshold_snr(math.e, 1.0) - 1 / math.e) < 1e-12

    def order_stat_scaling():
        assert abs(prooflab.order_stat_mean(100, 2.0)
                   - 2 * prooflab.order_stat_mean(100, 1.0)) < 1e-12

    def penalty_trivials():
        grid = np.linspace(0, 1, 5)
        flat = rate.MmseCurve(grid, np.full(5, 16.0), np.zeros(5))
        summary = rate.penalty_and_rate(flat, 1.0, 16, 100.0)
        assert abs(summary.penalty_ratio - 1.0) < 1e-12
        assert summary.rate_upper_nats == 0.0

    return [
        ("cyclic shift identities", shift_identity),
        ("autocorrelation hand values", autocorr_hand_values),
        ("circulant column extraction", circulant_columns),
        ("transmit at snr=0", transmit_zero_snr),
        ("posterior at snr=0", posterior_zero_snr),
        ("exponent decomposition identity", exponent_identity),
        ("swap partition covers", partition_covers),
        ("threshold at ratio e", threshold_value),
        ("order-stat sigma scaling", order_stat_scaling),
        ("penalty ratio trivials", penalty_trivials),
    ]


def cmd_selftest(args) -> int:
    failures = 0
    for name, check in _selftest_checks():
        try:
            check()
        except Exception as exc:  # noqa: BLE001 - reported per check
            failures += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"ok   {name}")
    if failures:
        print(f"{failures} selftest check(s) failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
