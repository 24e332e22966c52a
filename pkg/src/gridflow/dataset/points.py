"""Partition processors and the partition -> parameter point mapping."""

from __future__ import annotations

from dataclasses import replace

from ..errors import ConfigError, InvalidPartition
from .model import Partition


class LfnToPfn:
    """Rewrites logical file names to physical ones by prefix."""

    def __init__(self, prefixes: dict):
        # longest prefix first so nested prefixes resolve predictably
        self.prefixes = sorted(prefixes.items(), key=lambda kv: -len(kv[0]))

    @classmethod
    def from_config(cls, view, section, **_):
        raw = view.get([section, "dataset"], "pfn prefix", "")
        prefixes = {}
        for line in filter(None, (s.strip() for s in raw.split("\n"))):
            lfn, sep, pfn = line.partition("=>")
            if not sep or not lfn.strip() or not pfn.strip():
                raise ConfigError(
                    f"{view.where([section, 'dataset'], 'pfn prefix')}: expected 'lfn => pfn', got {line!r}"
                )
            prefixes[lfn.strip()] = pfn.strip()
        return cls(prefixes)

    def rewrite(self, url: str) -> str:
        for lfn, pfn in self.prefixes:
            if url.startswith(lfn):
                return pfn + url[len(lfn):]
        return url

    def __call__(self, part: Partition) -> Partition:
        return replace(part, file_urls=[self.rewrite(u) for u in part.file_urls])


class PartitionLocationBlacklist:
    def __init__(self, sites):
        self.sites = set(sites)

    @classmethod
    def from_config(cls, view, section, **_):
        return cls(view.get_list([section, "dataset"], "partition location blacklist"))

    def __call__(self, part: Partition) -> Partition:
        if part.locations is None:
            return part
        return replace(part, locations=[s for s in part.locations if s not in self.sites])


def partition_to_point(part: Partition, chain=()) -> tuple[dict, dict]:
    """Variables and requirements contributed by a valid partition."""
    if not part.valid:
        raise InvalidPartition(f"partition {part.partition_id} is invalid")
    for processor in chain:
        part = processor(part)
    values = {
        "FILE_NAMES": " ".join(part.file_urls),
        "SKIP_EVENTS": str(part.skip_units),
        "MAX_EVENTS": str(part.num_units),
        "DATASET": part.dataset,
        "DATASET_NICK": part.nickname,
    }
    requirements = {}
    if part.locations is not None:
        requirements["LOCATION"] = list(part.locations)
    return values, requirements
