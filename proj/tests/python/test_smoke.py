# Copyright 2026 The spikelite Authors
# SPDX-License-Identifier: Apache-2.0

import math

import numpy as np
import pytest

import spikelite

CONFIG = {"family": "7B-like", "depth": 2, "d_model": 16, "heads": 2,
          "d_head": 8, "vocab": 32, "d_ff": 24}


def test_gla_forms_agree():
    rng = np.random.default_rng(0)
    q, k, v = (rng.uniform(-1, 1, (2, 19, 4)).astype(np.float32) for _ in range(3))
    g = rng.uniform(0.2, 1.0, (2, 19, 4)).astype(np.float32)
    rec = spikelite.gla(q, k, v, g, form="recurrent")
    for form, chunk in [("parallel", 1), ("chunkwise", 1), ("chunkwise", 5)]:
        np.testing.assert_allclose(spikelite.gla(q, k, v, g, form=form, chunk=chunk), rec,
                                   rtol=1e-5, atol=1e-5)


def test_covering_window_is_softmax():
    rng = np.random.default_rng(1)
    q, k, v = (rng.normal(size=(1, 12, 8)).astype(np.float32) for _ in range(3))
    np.testing.assert_array_equal(spikelite.sliding_window_attention(q, k, v, 12),
                                  spikelite.softmax_attention(q, k, v))


def test_spike_codec():
    counts, v_th = spikelite.spike_encode(np.array([[1.0, -2.0, 0.0, 3.0]]), 1.0)
    assert v_th.tolist() == [1.5]
    assert counts.tolist() == [[1, -1, 0, 2]]
    steps, events, back = spikelite.expand_collapse([-3, 0, 5], "ternary")
    assert (steps, events, back) == (5, 8, [-3, 0, 5])
    with pytest.raises(spikelite.SpikeliteError):
        spikelite.expand_collapse([-1], "binary")


def test_stats_and_energy():
    stats = spikelite.firing_stats(np.zeros((2, 4), np.float32), 1.0)
    assert stats["silent_fraction"] == 1.0
    report = spikelite.energy_report(1.13)
    assert math.isclose(report["mac_energy_pj"], 0.0339, rel_tol=1e-9)


def test_quantize_and_scaling():
    q, scale = spikelite.quantize_weights(np.array([[-1.0, 0.5, 1.0]], np.float32))
    assert q.tolist() == [[-127, 64, 127]]
    assert math.isclose(scale[0], 1 / 127, rel_tol=1e-6)
    assert abs(spikelite.scaling_factor(16, 1, 1) - (16 / 17) ** (1 / 3)) < 1e-12


def test_model_round_trip(tmp_path):
    model = spikelite.build_model(CONFIG, seed=3)
    tokens, logits, stats = model.generate([1, 2, 3], 4)
    assert len(tokens) == 4 and len(logits) == 32 and stats == ""
    path = str(tmp_path / "m.sbkt")
    model.save(path)
    again = spikelite.Model.load(path)
    assert again.prefill_logits([1, 2, 3]) == model.prefill_logits([1, 2, 3])
    _, _, spiked = model.generate([1, 2, 3], 2, spike_k=4.0)
    assert "windowed_sparsity" in spiked


def test_conversion_summary():
    fa = dict(CONFIG, family="FA-only")
    model = spikelite.build_model(fa, seed=1)
    converted, summary = model.convert('{"target": "SWA", "window": 64}')
    assert '"SWA"' in summary
    assert converted.prefill_logits([5, 6, 7]) == model.prefill_logits([5, 6, 7])


def test_errors_surface():
    with pytest.raises(spikelite.SpikeliteError):
        spikelite.build_model(dict(CONFIG, d_model=15))
