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

"""Python bindings for the revoice speech restoration toolkit."""

import json

from ._revoice import (
    BackendError,
    Error,
    FormatError,
    IoError,
    TrainingError,
    ValidationError,
    allowed_bitrates,
    codec_probability,
    gain_normalize,
    load_wav,
    mix_at_snr,
    run_cli,
    save_wav,
    speaker_embedding,
    word_error_rate,
)
from ._revoice import sample_recipe as _sample_recipe


def sample_recipe(seed, pattern="reverb+codec"):
    """Degradation recipe for `seed` as a dict."""
    return json.loads(_sample_recipe(seed, pattern))


__all__ = [
    "BackendError",
    "Error",
    "FormatError",
    "IoError",
    "TrainingError",
    "ValidationError",
    "allowed_bitrates",
    "codec_probability",
    "gain_normalize",
    "load_wav",
    "mix_at_snr",
    "run_cli",
    "sample_recipe",
    "save_wav",
    "speaker_embedding",
    "word_error_rate",
]
