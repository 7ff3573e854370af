# Copyright 2026 The revoice Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json
import math

import numpy as np
import pytest

import revoice


def tone(seconds=1.0, freq=150.0, rate=24000):
    t = np.arange(int(seconds * rate)) / rate
    return 0.3 * np.sin(2 * np.pi * freq * t) + 0.1 * np.sin(2 * np.pi * 3 * freq * t)


def test_wav_round_trip(tmp_path):
    x = tone(0.2)
    path = tmp_path / "x.wav"
    revoice.save_wav(path, x, 24000)
    y, rate = revoice.load_wav(path)
    assert rate == 24000
    assert np.max(np.abs(y - x)) <= 2.0 ** -15


def test_codec_table():
    assert revoice.codec_probability("mp3") == 0.5
    assert revoice.allowed_bitrates("a-law") == [64000.0]
    recipe = revoice.sample_recipe(3)
    assert 5.0 <= recipe["snr_db"] <= 30.0
    assert revoice.sample_recipe(3) == recipe


def test_mix_and_gain_normalize():
    rng = np.random.default_rng(0)
    mixed = revoice.mix_at_snr(tone(), 0.1 * rng.standard_normal(5000), 10.0, seed=1)
    assert mixed.shape == (24000,)
    assert np.max(np.abs(mixed)) <= 1.0
    assert np.allclose(revoice.gain_normalize([0.5, -1.0, 0.25]), [0.45, -0.9, 0.225])
    with pytest.raises(revoice.ValidationError):
        revoice.gain_normalize([0.0, 0.0])


def test_speaker_embedding_and_wer():
    e = revoice.speaker_embedding(tone())
    assert math.isclose(float(np.linalg.norm(e)), 1.0, abs_tol=1e-6)
    with pytest.raises(revoice.ValidationError):
        revoice.speaker_embedding(tone(0.2))
    assert revoice.word_error_rate("a b c", "a x c") == pytest.approx(1 / 3)


def test_cli(tmp_path):
    code, _, err = revoice.run_cli(["bogus"])
    assert code == 2 and "error[usage]" in err
    code, _, err = revoice.run_cli(["make-fixtures", "--out", str(tmp_path / "fx")])
    assert code == 0, err
    lines = (tmp_path / "fx" / "clean.jsonl").read_text().splitlines()
    assert len(lines) == 8
    assert "utt_id" in json.loads(lines[0])
