"""Smoke tests for the tarnet extension module (built into build/python)."""

import math

import numpy as np
import pytest

import tarnet


def test_mel_scale():
    assert tarnet.hz_to_mel(0.0) == 0.0
    assert tarnet.hz_to_mel(700.0) == pytest.approx(2595.0 * math.log10(2.0))
    assert tarnet.mel_to_hz(tarnet.hz_to_mel(1234.5)) == pytest.approx(1234.5)
    with pytest.raises(ValueError):
        tarnet.hz_to_mel(-5.0)


def test_log_mel_shape_and_silence():
    silence = np.zeros(16000)
    feats = tarnet.log_mel(silence, sample_rate=16000, num_mels=80)
    assert feats.shape == (80, 98)
    assert np.allclose(feats, math.log(1e-6))


def test_synth_utterance_is_deterministic():
    a = tarnet.synth_utterance(120.0, [500, 1500, 2500], [80, 120, 160], seed=5,
                               duration=0.5)
    b = tarnet.synth_utterance(120.0, [500, 1500, 2500], [80, 120, 160], seed=5,
                               duration=0.5)
    assert a.shape == (8000,)
    assert np.array_equal(a, b)
    c = tarnet.synth_utterance(120.0, [500, 1500, 2500], [80, 120, 160], seed=6,
                               duration=0.5)
    assert not np.array_equal(a, c)


def test_model_forward_and_embedding():
    model = tarnet.Model.fresh(num_mels=40, num_speakers=6, seed=3)
    wave = tarnet.synth_utterance(150.0, [600, 1400, 2600], [90, 130, 170],
                                  duration=0.6, seed=9)
    feats = tarnet.log_mel(wave, num_mels=40)
    logits = model.forward(feats)
    assert logits.shape == (6,)
    assert np.isfinite(logits).all()
    emb = model.embedding(feats)
    assert emb.shape == (192,)
    assert model.num_speakers == 6
    assert model.receptive_field_frames == 379
    assert model.num_params > 0


def test_variable_length_input():
    model = tarnet.Model.fresh(num_mels=20, num_speakers=4, seed=1)
    for frames in (1, 7, 50):
        feats = np.random.default_rng(0).normal(size=(20, frames))
        assert model.forward(feats).shape == (4,)


def test_receptive_field():
    assert tarnet.receptive_field() == 379
    assert tarnet.receptive_field([1, 2], [], [], repeats=1, kernel=3) == 7


def test_metrics():
    scores = [[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]
    labels = [0, 1, 1]
    assert tarnet.topk_accuracy(scores, labels, 1) == pytest.approx(2 / 3)
    assert tarnet.topk_accuracy(scores, labels, 2) == pytest.approx(1.0)

    p, r, f1 = tarnet.weighted_prf([0, 0, 1, 1], [0, 1, 1, 1])
    assert p == pytest.approx(5 / 6)
    assert r == pytest.approx(3 / 4)
    assert f1 == pytest.approx(11 / 15)


def test_approx_randomization():
    same = tarnet.approx_randomization([1, 0, 1, 1], [1, 0, 1, 1], n_perm=200, seed=1)
    assert same["p_value"] == pytest.approx(1.0)
    r1 = tarnet.approx_randomization([1, 1, 1, 0], [0, 0, 1, 0], n_perm=500, seed=2)
    r2 = tarnet.approx_randomization([1, 1, 1, 0], [0, 0, 1, 0], n_perm=500, seed=2)
    assert r1["p_value"] == r2["p_value"]
    assert 0.0 < r1["p_value"] <= 1.0


def test_gradcheck_fast_config():
    passed, max_err = tarnet.gradcheck(seed=7)
    assert passed
    assert max_err < 1e-4
