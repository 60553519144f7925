# Copyright 2026 The spikelite Authors
# SPDX-License-Identifier: Apache-2.0
"""Hybrid linear-attention toy models and spike coding."""

import json

from ._core import (
    Model,
    SpikeliteError,
    expand_collapse,
    gla,
    quantize_weights,
    scaling_factor,
    sliding_window_attention,
    softmax_attention,
    spike_encode,
)
from . import _core

__all__ = [
    "Model",
    "SpikeliteError",
    "build_model",
    "energy_report",
    "expand_collapse",
    "firing_stats",
    "gla",
    "quantize_weights",
    "scaling_factor",
    "sliding_window_attention",
    "softmax_attention",
    "spike_encode",
]


def build_model(config, seed=0):
    """Builds a model from a config dict or JSON string."""
    if not isinstance(config, str):
        config = json.dumps(config)
    return Model.build(config, seed)


def firing_stats(x, k, window=3):
    return json.loads(_core.firing_stats_json(x, k, window))


def energy_report(avg_spikes):
    return json.loads(_core.energy_report_json(avg_spikes))
