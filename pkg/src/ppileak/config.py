"""Pipeline configuration file (JSON) with full defaults and strict keys."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

from .audit import ExperimentConfig
from .descriptor import DescriptorConfig
from .errors import ParseError
from .interface import InterfaceConfig
from .ioutil import fingerprint
from .similarity import SimilarityConfig
from .splits import SplitSpec


@dataclass(frozen=True)
class ClusteringConfig:
    min_seq_id: float = 0.3
    tool: str = "builtin"  # "builtin" or an MMseqs2-compatible executable
    mode: str = "easy-cluster"

    def __post_init__(self):
        if not 0 < self.min_seq_id <= 1:
            raise ValueError("min_seq_id must lie in (0, 1]")


@dataclass(frozen=True)
class IoConfig:
    """Default file names; not part of the config fingerprint."""

    interfaces: str = "interfaces.jsonl"
    descriptors: str = "descriptors.tsv"
    clusters: str = "clusters.tsv"
    split: str = "split.json"
    report: str = "report.json"
    experiment: str = "experiment.json"
    workers: Optional[int] = None


_SECTIONS = {
    "interface": InterfaceConfig,
    "descriptor": DescriptorConfig,
    "similarity": SimilarityConfig,
    "clustering": ClusteringConfig,
    "split": SplitSpec,
    "experiment": ExperimentConfig,
    "io": IoConfig,
}


def _default_split() -> SplitSpec:
    return SplitSpec("interface_component")


@dataclass(frozen=True)
class PipelineConfig:
    interface: InterfaceConfig = field(default_factory=InterfaceConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    split: SplitSpec = field(default_factory=_default_split)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    io: IoConfig = field(default_factory=IoConfig)

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def section_fingerprint(self, name: str) -> str:
        if name == "descriptor":
            return self.descriptor.fingerprint
        return fingerprint(asdict(getattr(self, name)))

    @property
    def fingerprint(self) -> str:
        """Hash of every section except ``io``."""
        data = self.to_dict()
        data.pop("io")
        return fingerprint(data)

    def with_seed(self, seed: int) -> "PipelineConfig":
        return dataclasses.replace(
            self, split=dataclasses.replace(self.split, seed=seed),
            experiment=dataclasses.replace(self.experiment, seed=seed))

    @classmethod
    def from_dict(cls, data) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ParseError("config must be a JSON object")
        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ParseError(f"unknown config sections: {', '.join(unknown)}")
        sections = {}
        for name, kind in _SECTIONS.items():
            values = data.get(name, {})
            if not isinstance(values, dict):
                raise ParseError(f"config section {name!r} must be an object")
            allowed = {f.name for f in dataclasses.fields(kind)}
            bad = sorted(set(values) - allowed)
            if bad:
                raise ParseError(f"unknown keys in section {name!r}: {', '.join(bad)}")
            if kind is SplitSpec:
                values = {**asdict(_default_split()), **values}
            try:
                sections[name] = kind(**values)
            except (TypeError, ValueError) as exc:
                raise ParseError(f"invalid section {name!r}: {exc}") from None
        return cls(**sections)

    @classmethod
    def read(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"config is not JSON ({exc.msg})", exc.lineno) from None
        return cls.from_dict(data)
