"""Phase-aware monaural audio source separation with anisotropic-Gaussian
NMF models (complex ISNMF), plus Wiener-filter baselines and BSS metrics."""

from .circular import (
    AnisotropyCoefficients,
    VonMisesParams,
    anisotropy_params,
    bessel_i,
    bessel_i_ratio,
    chi2_normalize,
    rvm_moments,
    sample_ag,
    sample_rvm,
    vm_log_pdf,
)
from .em import (
    AGMoments,
    EmConfig,
    EmReport,
    PosteriorMoments,
    SourceModel,
    ag_moments,
    e_step,
    m_step_nmf,
    m_step_phase,
    map_objective,
    mix_moments,
    phase_corrected_stats,
    run_complex_isnmf,
    run_isotropic_em,
)
from .metrics import BssScores, bss_eval
from .nmf import (
    NmfFactors,
    is_divergence,
    isnmf_fit,
    learn_dictionary,
    load_dictionary,
    normalize,
    save_dictionary,
)
from .signal_io import ComplexSpectrogram, StftConfig, Waveform, istft, read_wav, stft, write_wav
from .sinusoid import (
    estimate_frequencies,
    phase_log_prior,
    qifft_peaks,
    regions_of_influence,
    unwrap_phases,
    unwrap_step,
)
from .wiener import anisotropic_wiener, wiener_filter

__version__ = "0.1.0"
