# Copyright 2026 The cmfkit Authors. All Rights Reserved.
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

"""Python bindings for the cmfkit CMF prediction core."""

from __future__ import annotations

import json
from typing import Any, Iterable, Mapping, Sequence

from . import _core
from ._core import ArtifactError, CmfError, consistency_rate, mae, pop, rmse, safety_similarity

__all__ = [
    "ArtifactError",
    "CmfError",
    "Predictor",
    "Service",
    "TargetEncoder",
    "consistency_rate",
    "evaluate",
    "generate_synthetic",
    "mae",
    "pop",
    "pseudo_sentence",
    "rmse",
    "safety_similarity",
    "train_bundle",
]


def _dump(value: Any) -> str:
    return value if isinstance(value, str) else json.dumps(value)


def pseudo_sentence(record: Mapping[str, Any], render_field_names: bool = False) -> str:
    return _core.pseudo_sentence(_dump(record), render_field_names)


def generate_synthetic(records: int = 2000, seed: int = 1, noise_sigma: float = 0.03,
                       facility: str = "roadway", missing_rate: float = 0.15) -> list[dict]:
    return json.loads(_core.generate_synthetic(records, seed, noise_sigma, facility, missing_rate))


class TargetEncoder:
    def __init__(self, state: "_core.TargetEncoder"):
        self._state = state

    @classmethod
    def fit(cls, records: Iterable[Mapping[str, Any]], facility: str, features: Sequence[str],
            smoothing: float = 100.0) -> "TargetEncoder":
        return cls(_core.TargetEncoder.fit(_dump(list(records)), facility, list(features), smoothing))

    def encode_value(self, feature: str, category: str) -> float:
        return self._state.encode_value(feature, category)

    @property
    def global_mean(self) -> float:
        return self._state.global_mean

    @property
    def features(self) -> list[str]:
        return self._state.features

    def to_dict(self) -> dict:
        return json.loads(self._state.to_json())


def train_bundle(records: Iterable[Mapping[str, Any]], facility: str, out_dir: str,
                 config: Mapping[str, Any] | None = None) -> None:
    _core.train_bundle(_dump(list(records)), facility, str(out_dir), _dump(config) if config else "")


def evaluate(records: Iterable[Mapping[str, Any]], facility: str, model: str = "cmf",
             config: Mapping[str, Any] | None = None) -> dict:
    return json.loads(_core.evaluate(_dump(list(records)), facility, model, _dump(config) if config else ""))


class Predictor:
    def __init__(self, core: "_core.Predictor"):
        self._core = core

    @classmethod
    def load(cls, artifacts: str) -> "Predictor":
        return cls(_core.Predictor.load(str(artifacts)))

    def predict(self, request: Mapping[str, Any]) -> dict:
        return json.loads(self._core.predict(_dump(request)))

    @property
    def model_version(self) -> str:
        return self._core.model_version

    def model_info(self) -> dict:
        return json.loads(self._core.model_info())


class Service:
    """HTTP handlers without the transport. Each method returns (status, body)."""

    def __init__(self, predictor: Predictor, batch_cap: int = 256):
        self._core = _core.Service(predictor._core, batch_cap)

    def predict(self, body: Any) -> tuple[int, Any]:
        status, text = self._core.predict(_dump(body))
        return status, json.loads(text)

    def predict_batch(self, body: Any) -> tuple[int, Any]:
        status, text = self._core.predict_batch(_dump(body))
        return status, json.loads(text)

    def model(self) -> tuple[int, Any]:
        status, text = self._core.model()
        return status, json.loads(text)

    def health(self) -> tuple[int, Any]:
        status, text = self._core.health()
        return status, json.loads(text)
