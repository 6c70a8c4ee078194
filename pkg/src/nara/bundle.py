"""Model bundle: the three parameter sets plus data statistics and calibration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ar import ArParams
from .confidence import ConfParams, ThresholdCalibration
from .priors import PriorParams


@dataclass
class ModelBundle:
    ar: ArParams
    prior: PriorParams
    conf: ConfParams
    calibration: ThresholdCalibration
    data_mean: float = 0.0
    data_std: float = 1.0
    theta_trained: bool = False
    prior_trained: bool = False
    conf_trained: bool = False
    config: object = None

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, model in (("ar", self.ar), ("prior", self.prior), ("conf", self.conf)):
            for name, p in model.parameters().items():
                out[f"{prefix}.{name}"] = p
        return out

    def standardize(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.data_mean) / self.data_std

    def destandardize(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.data_std + self.data_mean


def init_bundle(
    *,
    window: int,
    chunk: int,
    hidden: int,
    layers: int,
    kappa: float,
    calibration_mode: str,
    seed: int,
    config: object = None,
) -> ModelBundle:
    """Freshly initialized bundle; all randomness comes from the given seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xB0D])))
    return ModelBundle(
        ar=ArParams.init(hidden, layers, rng),
        prior=PriorParams.init(window, chunk, rng),
        conf=ConfParams.init(window, chunk, rng),
        calibration=ThresholdCalibration(mode=calibration_mode, kappa=kappa),
        config=config,
    )
