"""Flash ADC model for column currents."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdcModel:
    bits: int
    full_scale_current: float  # amperes

    @property
    def max_code(self) -> int:
        return (1 << self.bits) - 1

    @property
    def lsb(self) -> float:
        return self.full_scale_current / self.max_code

    @classmethod
    def from_config(cls, hw) -> "AdcModel":
        return cls(bits=hw.adc_bits, full_scale_current=hw.adc_full_scale)


def adc_quantize(current, adc: AdcModel):
    """Nearest code (ties to even), clamped to [0, 2**h - 1]. Works on arrays."""
    code = np.clip(np.rint(np.asarray(current, dtype=np.float64) / adc.lsb), 0, adc.max_code).astype(np.int64)
    return int(code) if code.ndim == 0 else code
