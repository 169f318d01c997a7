"""Lossless ANN to time-to-first-spike conversion."""

from ._core import (
    Backend,
    ChecksumError,
    ConfigError,
    ConversionRefused,
    DomainError,
    FormatError,
    Network,
    OpCounters,
    SequencingError,
    ShapeError,
    SimConfig,
    SpikingNetwork,
    ThresholdMode,
    build_preset,
    convert,
    decode_spikes,
    encode_input,
    load_model,
    membrane_potential,
    power_proxy,
    project_weight_sums,
    psnr,
    run_network,
    save_model,
    solve_spike_discrete,
    solve_spike_exact,
    ssim,
)

__all__ = [name for name in dir() if not name.startswith("_")]
