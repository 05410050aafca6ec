"""Counter-based noise streams.

A :class:`NoiseStream` is a Philox key derived from ``(seed, domain)``.
The draws for time step ``k`` start at Philox counter block ``k``, so they
can be produced in any order.  Within a step particle ``i`` gets row ``i``
of the draw matrix; rows are generated in order, so a particle's path does
not depend on how many particles follow it.
"""

from __future__ import annotations

import zlib

import numpy as np

DOMAINS = ("truth", "truth-init", "obs", "fpf", "fpf-init", "sir", "sir-init", "sir-resample")


def _domain_id(domain: str) -> int:
    return zlib.crc32(domain.encode())


class NoiseStream:
    def __init__(self, seed: int, domain: str):
        self.seed = int(seed)
        self.domain = domain
        key = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, _domain_id(domain)]).generate_state(2, np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self._template = self._bitgen.state

    def __repr__(self):
        return f"NoiseStream(seed={self.seed}, domain={self.domain!r})"

    def generator(self, step: int) -> np.random.Generator:
        """Generator positioned at the start of counter block ``step``."""
        if step < 0:
            raise ValueError("step must be non-negative")
        state = dict(self._template)
        state["state"] = {"counter": np.array([0, 0, step, 0], dtype=np.uint64), "key": self._template["state"]["key"]}
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        self._bitgen.state = state
        return np.random.Generator(self._bitgen)

    def normal(self, step: int, shape) -> np.ndarray:
        return self.generator(step).standard_normal(shape)

    def uniform(self, step: int, shape=None) -> np.ndarray | float:
        return self.generator(step).random(shape)
