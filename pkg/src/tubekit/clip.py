from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True, eq=False)
class Clip:
    """``T x H x W x 3`` uint8 video clip."""

    pixels: np.ndarray
    frame_rate: float = 25.0

    def __post_init__(self):
        p = self.pixels
        if p.dtype != np.uint8:
            raise InvalidInputError(f"clip pixels must be uint8, got {p.dtype}")
        if p.ndim != 4 or p.shape[-1] != 3 or min(p.shape[:3]) < 1:
            raise InvalidInputError(f"clip pixels must be T x H x W x 3, got {p.shape}")

    @property
    def shape(self):
        return self.pixels.shape

    @property
    def T(self) -> int:
        return self.pixels.shape[0]

    @property
    def H(self) -> int:
        return self.pixels.shape[1]

    @property
    def W(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        return isinstance(other, Clip) and np.array_equal(self.pixels, other.pixels)

    __hash__ = None
