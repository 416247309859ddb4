"""Python access to the ion clock laser-chain simulation core."""

from ._core import (
    ConfigError,
    NumericalError,
    __version__,
    allan_deviation,
    default_config,
    evaluate_psd,
    fit_lineshape,
    linewidths,
    normalize_config,
    preset_json,
    presets,
    rabi_probability,
    reproduce,
    run,
    scenarios,
    synthesize_trace,
    zeeman_table,
)

__all__ = [
    "ConfigError",
    "NumericalError",
    "__version__",
    "allan_deviation",
    "default_config",
    "evaluate_psd",
    "fit_lineshape",
    "linewidths",
    "normalize_config",
    "preset_json",
    "presets",
    "rabi_probability",
    "reproduce",
    "run",
    "scenarios",
    "synthesize_trace",
    "zeeman_table",
]
