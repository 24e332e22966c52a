"""Dataset processors: pure block-stream transformations applied in order."""

from __future__ import annotations

import fnmatch
import logging
from dataclasses import replace

from ..errors import ConfigError, ConsistencyError

log = logging.getLogger(__name__)


class UrlFilter:
    """Drops files whose url matches an exclude pattern (or misses every include pattern)."""

    def __init__(self, exclude=(), include=()):
        self.exclude = list(exclude)
        self.include = list(include)

    @classmethod
    def from_config(cls, view, section, **_):
        return cls(
            view.get_list([section, "dataset"], "url exclude"),
            view.get_list([section, "dataset"], "url include"),
        )

    def keep(self, url: str) -> bool:
        if self.include and not any(fnmatch.fnmatchcase(url, p) for p in self.include):
            return False
        return not any(fnmatch.fnmatchcase(url, p) for p in self.exclude)

    def __call__(self, blocks):
        return [replace(b, files=[f for f in b.files if self.keep(f.url)]) for b in blocks]


class MetadataFilter:
    """Drops files whose metadata value for a key matches a pattern."""

    def __init__(self, rules):
        self.rules = list(rules)  # (key, pattern)

    @classmethod
    def from_config(cls, view, section, **_):
        rules = []
        for item in view.get_list([section, "dataset"], "metadata exclude"):
            key, sep, pattern = item.partition("=")
            if not sep or not key:
                raise ConfigError(
                    f"{view.where([section, 'dataset'], 'metadata exclude')}: expected key=pattern, got {item!r}"
                )
            rules.append((key, pattern))
        return cls(rules)

    def keep(self, metadata: dict) -> bool:
        for key, pattern in self.rules:
            if key in metadata and fnmatch.fnmatchcase(metadata[key], pattern):
                return False
        return True

    def __call__(self, blocks):
        return [replace(b, files=[f for f in b.files if self.keep(f.metadata)]) for b in blocks]


class LocationBlacklist:
    """Removes blacklisted sites from block locations.

    A block whose every location is blacklisted cannot run anywhere and is
    dropped; blocks without location information are left alone.
    """

    def __init__(self, sites):
        self.sites = set(sites)

    @classmethod
    def from_config(cls, view, section, **_):
        return cls(view.get_list([section, "dataset"], "location blacklist"))

    def __call__(self, blocks):
        out = []
        for block in blocks:
            if block.locations is None:
                out.append(block)
                continue
            locations = [site for site in block.locations if site not in self.sites]
            if block.locations and not locations:
                log.warning("dropping block %s#%s: all locations blacklisted", *block.key)
                continue
            out.append(replace(block, locations=locations))
        return out


class Deduplicate:
    """Drops urls already seen in an earlier block (first occurrence wins)."""

    @classmethod
    def from_config(cls, view, section, **_):
        return cls()

    def __call__(self, blocks):
        seen: set = set()
        out = []
        for block in blocks:
            files = []
            for entry in block.files:
                if entry.url not in seen:
                    seen.add(entry.url)
                    files.append(entry)
            out.append(replace(block, files=files))
        return out


class ConsistencyCheck:
    """Rejects negative unit counts, duplicate urls and, if required, missing counts."""

    def __init__(self, require_units: bool = False):
        self.require_units = require_units

    @classmethod
    def from_config(cls, view, section, require_units=False, **_):
        return cls(require_units)

    def __call__(self, blocks):
        for block in blocks:
            name = f"{block.dataset}#{block.block_id}"
            urls: set = set()
            for entry in block.files:
                if not entry.url:
                    raise ConsistencyError(name, "file with empty url")
                if entry.url in urls:
                    raise ConsistencyError(name, f"duplicate url {entry.url}")
                urls.add(entry.url)
                if entry.work_units is None:
                    if self.require_units:
                        raise ConsistencyError(name, f"{entry.url} has no work unit count")
                elif entry.work_units < 0:
                    raise ConsistencyError(name, f"{entry.url} has negative work units {entry.work_units}")
        return list(blocks)


def run_dataset_processors(blocks, chain):
    """Apply ``chain`` in order, dropping blocks that end up without files."""
    blocks = [b for b in blocks if b.files]
    for processor in chain:
        blocks = [b for b in processor(blocks) if b.files]
    return blocks
