"""Synthetic streams whose conformal scores are chosen directly."""

import numpy as np

from cuqds.data import Dataset, Sample
from cuqds.predictors import PredictorOutput


class ZeroPredictor:
    def __init__(self, J=2, D=1):
        self.J, self.D = J, D

    def predict(self, x):
        return PredictorOutput.single(np.zeros((self.J, self.D)))


class FixedSigma:
    def __init__(self, sigma=1.0):
        self.value = sigma

    def sigma(self, observed):
        return self.value


def score_dataset(scores, role="test", start=0, J=2, D=1):
    """Samples whose future is the constant ``score`` so that, with a zero
    predictor and unit sigma, the conformal score equals ``score``."""
    samples = [
        Sample(f"s{i}", np.zeros((2, D)), np.full((J, D), float(s)), start + i)
        for i, s in enumerate(scores)
    ]
    return Dataset(samples, role)
