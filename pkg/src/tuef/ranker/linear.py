"""Fixed-weight linear scorer over the feature vector."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DEFAULT_WEIGHTS = {
    "FrequencyIndexTag": 1.0,
    "FrequencyIndexText": 1.0,
    "VisitCountContent": 0.5,
    "Ratio": 1.0,
}


@dataclass
class LinearScorer:
    weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    feature_names: tuple[str, ...] = ()
    kind: str = "linear"

    def vector(self) -> np.ndarray:
        unknown = set(self.weights) - set(self.feature_names)
        if unknown:
            raise KeyError(f"weights for unknown features: {sorted(unknown)}")
        return np.array([self.weights.get(n, 0.0) for n in self.feature_names])

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(x, dtype=float)) @ self.vector()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "feature_names": list(self.feature_names),
                "weights": dict(sorted(self.weights.items()))}

    @classmethod
    def from_dict(cls, data: dict) -> "LinearScorer":
        return cls(weights=dict(data["weights"]), feature_names=tuple(data["feature_names"]))


def parse_weights(spec: str | Mapping[str, float] | None, feature_names: Sequence[str]) -> dict[str, float]:
    """``"Ratio:1,Degree:0.5"`` -> ``{"Ratio": 1.0, "Degree": 0.5}``."""
    if spec is None or spec == "":
        return dict(DEFAULT_WEIGHTS)
    if isinstance(spec, Mapping):
        return {k: float(v) for k, v in spec.items()}
    out = {}
    for item in spec.split(","):
        name, _, value = item.partition(":")
        name = name.strip()
        if name not in feature_names:
            raise KeyError(f"unknown feature {name!r}")
        out[name] = float(value)
    return out
