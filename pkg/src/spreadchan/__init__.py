"""spreadchan: a numerical lab for spreading signals over sparse
block-coherent multipath channels.

Submodules follow the pipeline: ``signals`` generates and validates
spreading waveforms, ``channel`` samples sparse tap vectors, ``link``
synthesizes circulant observations, ``posterior`` computes conditional-mean
channel estimates (exact or sampled) and the Monte Carlo mmse, ``rate``
turns mmse curves into mutual information and penalty ratios, ``prooflab``
exposes the term-by-term diagnostics behind the vanishing-rate behavior,
and ``harness`` runs persisted scaling sweeps.
"""

from .signals import (
    SpreadSignal,
    SpreadingCheck,
    check_spreading,
    cyclic_shift,
    empirical_autocorr,
    gen_signal,
)
from .channel import (
    ChannelRealization,
    ScalingSchedule,
    channel_entropy_nats,
    check_condition7,
    condition7_values,
    sample_channel,
)
from .link import LinkObservation, circulant_apply, transmit
from .posterior import (
    EnumerationBudgetError,
    Hypothesis,
    PosteriorSummary,
    exact_posterior,
    mcmc_posterior,
    mmse_at,
    mmse_samples,
    posterior_mean,
)
from .rate import MmseCurve, RateSummary, mutual_info_immse, penalty_and_rate, threshold_snr
from .prooflab import (
    ExponentDecomposition,
    JRatio,
    SwapGroup,
    ab_c_terms,
    build_swap_partition,
    decompose_exponent,
    j_ratio,
    order_stat_mean,
    order_stat_var,
    sample_k_set,
)
from .harness import SweepConfig, SweepRecord, load_config, parse_config, read_records, run_cell, run_sweep

__version__ = "0.1.0"
