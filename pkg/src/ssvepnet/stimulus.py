from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StimulusTable:
    """Flicker frequency (Hz) and phase (rad) of every class, by class id."""

    frequencies: tuple[float, ...]
    phases: tuple[float, ...]

    def __post_init__(self):
        f = tuple(float(v) for v in self.frequencies)
        p = tuple(float(v) for v in self.phases)
        if len(f) != len(p):
            raise ValueError("frequencies and phases must have equal length")
        if not f:
            raise ValueError("stimulus table is empty")
        if any(b <= a for a, b in zip(f, f[1:])):
            raise ValueError("frequencies must be strictly increasing")
        if any(v <= 0 for v in f):
            raise ValueError("frequencies must be positive")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "phases", p)

    @classmethod
    def standard(cls) -> "StimulusTable":
        """12 targets, 9.25-14.75 Hz in 0.5 Hz steps, phases advancing by pi/2."""
        freqs = 9.25 + 0.5 * np.arange(12)
        phases = np.mod(0.5 * np.pi * np.arange(12), 2 * np.pi)
        return cls(tuple(freqs), tuple(phases))

    @property
    def n_classes(self) -> int:
        return len(self.frequencies)

    @property
    def class_ids(self) -> range:
        return range(self.n_classes)

    @property
    def entries(self) -> list[tuple[int, float, float]]:
        return list(zip(self.class_ids, self.frequencies, self.phases))

    def frequency(self, class_id: int) -> float:
        self._check(class_id)
        return self.frequencies[class_id]

    def phase(self, class_id: int) -> float:
        self._check(class_id)
        return self.phases[class_id]

    def _check(self, class_id):
        if not 0 <= int(class_id) < self.n_classes or int(class_id) != class_id:
            raise KeyError(f"unknown class id {class_id!r}")

    def to_json(self) -> list[dict]:
        return [{"class_id": k, "frequency": f, "phase": p} for k, f, p in self.entries]

    @classmethod
    def from_json(cls, entries: list[dict]) -> "StimulusTable":
        entries = sorted(entries, key=lambda e: e["class_id"])
        if [e["class_id"] for e in entries] != list(range(len(entries))):
            raise ValueError("class ids must be 0..K-1")
        return cls(tuple(e["frequency"] for e in entries), tuple(e["phase"] for e in entries))
