"""The JSON run configuration shared by every command-line subcommand.

Sections: ``signal``, ``synth``, ``model``, ``cca``, ``combined_cca``,
``harness`` and ``analysis``. Any key a section does not define is an
error. :meth:`RunConfig.resolved` materialises every default so a run can
be reproduced from its manifest alone.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .harness import HarnessConfig
from .nnet.model import ModelConfig
from .nnet.train import TrainConfig
from .pipeline import PreprocessConfig
from .synthgen import SynthConfig

SECTIONS = ("signal", "synth", "model", "cca", "combined_cca", "harness", "analysis")


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


@dataclass(frozen=True)
class AnalysisConfig:
    perplexity: float = 30.0
    n_iter: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    layer: int = 3
    max_points: int = 2000
    seed: int = 0
    what: tuple[str, ...] = ("spectra", "tsne", "phase")

    def __post_init__(self):
        if self.layer not in (1, 2, 3):
            raise ValueError("layer must be 1, 2 or 3")
        bad = set(self.what) - {"spectra", "tsne", "phase"}
        if bad:
            raise ValueError(f"unknown analyses {sorted(bad)}")


def _names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _checked(section: str, d, allowed: set[str]) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"section {section!r} must be a JSON object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    return d


def _tuple(v):
    return None if v is None else tuple(v)


@dataclass(frozen=True)
class RunConfig:
    signal: PreprocessConfig = field(default_factory=PreprocessConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_harmonics: int = 2
    fusion: str = "signed_square"
    prototype_segments: tuple[int, ...] | None = None
    methods: tuple[str, ...] = ("cnn", "cca", "combined_cca")
    majority_vote: bool = False
    shuffle_labels: bool = False
    shuffle_seed: int = 0
    workers: int = 1
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        doc = _checked("<root>", doc, set(SECTIONS))
        try:
            signal = PreprocessConfig(**_checked("signal", doc.get("signal", {}), _names(PreprocessConfig)))
            synth = SynthConfig.from_json(_checked("synth", doc.get("synth", {}), _names(SynthConfig)))
            m = _checked("model", doc.get("model", {}), _names(ModelConfig) | _names(TrainConfig))
            model = ModelConfig(**{k: v for k, v in m.items() if k in _names(ModelConfig)})
            train = TrainConfig(**{k: v for k, v in m.items() if k in _names(TrainConfig)})
            cca = _checked("cca", doc.get("cca", {}), {"n_harmonics"})
            ccca = _checked("combined_cca", doc.get("combined_cca", {}), {"fusion", "prototype_segments"})
            h = _checked("harness", doc.get("harness", {}),
                         {"methods", "majority_vote", "shuffle_labels", "shuffle_seed", "workers"})
            a = dict(_checked("analysis", doc.get("analysis", {}), _names(AnalysisConfig)))
            if "what" in a:
                a["what"] = tuple(a["what"])
            cfg = cls(signal, synth, model, train,
                      n_harmonics=cca.get("n_harmonics", 2),
                      fusion=ccca.get("fusion", "signed_square"),
                      prototype_segments=_tuple(ccca.get("prototype_segments")),
                      methods=tuple(h.get("methods", cls.methods)),
                      majority_vote=h.get("majority_vote", False),
                      shuffle_labels=h.get("shuffle_labels", False),
                      shuffle_seed=h.get("shuffle_seed", 0),
                      workers=h.get("workers", 1),
                      analysis=AnalysisConfig(**a))
            cfg.harness()  # validates methods / fusion
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_json(doc)

    def harness(self) -> HarnessConfig:
        return HarnessConfig(self.methods, self.n_harmonics, self.fusion, self.prototype_segments,
                             self.model, self.train, self.majority_vote, self.shuffle_labels,
                             self.shuffle_seed, self.workers)

    def resolved(self) -> dict:
        """Every setting, defaults included, in the same layout :meth:`from_json` reads."""
        analysis = dataclasses.asdict(self.analysis)
        analysis["what"] = list(self.analysis.what)
        return {
            "signal": self.signal.to_json(),
            "synth": self.synth.to_json(),
            "model": {**self.model.to_json(), **self.train.to_json()},
            "cca": {"n_harmonics": self.n_harmonics},
            "combined_cca": {"fusion": self.fusion,
                             "prototype_segments": None if self.prototype_segments is None
                             else list(self.prototype_segments)},
            "harness": {"methods": list(self.methods), "majority_vote": self.majority_vote,
                        "shuffle_labels": self.shuffle_labels, "shuffle_seed": self.shuffle_seed,
                        "workers": self.workers},
            "analysis": analysis,
        }
