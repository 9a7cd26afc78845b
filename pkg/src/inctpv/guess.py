"""Guess operators: image-to-image maps applied before each incremental solve.

Identity and oracle-blend operators serve as test doubles; model-backed
operators run exported networks through the bundled ONNX executor.
"""

import os

import numpy as np

from .onnx_lite import OnnxModel


class GuessOperator:
    """Image-to-image map with a provenance descriptor.

    apply() must preserve shape and return finite values; concrete operators
    other than the identity clamp their output to >= 0.
    """

    descriptor: str = "abstract"

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x):
        return self.apply(x)


class _IdentityGuess(GuessOperator):
    descriptor = "identity"

    def apply(self, x):
        return np.asarray(x, dtype=np.float64).copy()


class _OracleBlendGuess(GuessOperator):
    def __init__(self, target, beta):
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {beta}")
        self.target = np.asarray(target, dtype=np.float64)
        self.beta = float(beta)
        self.descriptor = f"oracle-blend({beta})"

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.target.shape:
            raise ValueError(f"input shape {x.shape} does not match target {self.target.shape}")
        return np.maximum((1.0 - self.beta) * x + self.beta * self.target, 0.0)


class _ModelGuess(GuessOperator):
    def __init__(self, path, expected_side):
        self.model = OnnxModel(path)
        shape = self.model.input_shape
        out_shape = None
        for name, s in self.model.graph["outputs"]:
            if name == self.model.output_name:
                out_shape = s
        for what, s in (("input", shape), ("output", out_shape)):
            spatial = [d for d in s if d is not None][-2:] if s else []
            if len(s or []) != 4 or spatial != [expected_side, expected_side]:
                raise ValueError(
                    f"model {what} signature {s} does not match a single "
                    f"{expected_side}x{expected_side} image"
                )
        self.side = expected_side
        self.descriptor = f"model({os.path.basename(str(path))})"

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.side, self.side):
            raise ValueError(f"input shape {x.shape} does not match ({self.side}, {self.side})")
        out = self.model.run(x.astype(np.float32)[None, None])
        return np.maximum(out[0, 0].astype(np.float64), 0.0)


def identity_guess() -> GuessOperator:
    """The do-nothing guess: apply(x) returns x unchanged (bitwise)."""
    return _IdentityGuess()


def oracle_blend_guess(target, beta: float) -> GuessOperator:
    """Blend toward a known target: apply(x) = (1-beta)*x + beta*target,
    clamped to >= 0. Simulates a high-quality guess without trained weights."""
    return _OracleBlendGuess(target, beta)


def load_model_guess(path, expected_side: int) -> GuessOperator:
    """Load an exported network whose signature is one single-channel
    expected_side x expected_side image; inference output is clamped to >= 0."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"model file not found: {path}")
    return _ModelGuess(path, int(expected_side))
