"""Partition plugins: split the segments of a block into partition groups.

A group is representable as a partition (file list + skip in the first
file + unit count) only if every file but the first starts at unit 0 and
every file but the last is used up to its end.  All splitters keep to
that rule and never combine segments of different blocks.
"""

from __future__ import annotations

from ..errors import MissingWorkUnits
from .model import VALID, DatasetBlock, Partition, Segment


def block_segments(block: DatasetBlock) -> list[Segment]:
    """Whole-file segments of a block; zero-unit files carry no work and are skipped."""
    out = []
    for entry in block.files:
        units = entry.work_units
        if units == 0:
            continue
        out.append(Segment(entry.url, 0, units, units, entry.metadata))
    return out


def _links(prev: Segment, nxt: Segment) -> bool:
    prev_done = prev.end is None or prev.end == prev.size
    return prev_done and nxt.start == 0


def runs(segments) -> list[list[Segment]]:
    """Split a segment sequence into maximal chains that may share a partition."""
    out: list[list[Segment]] = []
    for seg in segments:
        if out and _links(out[-1][-1], seg):
            out[-1].append(seg)
        else:
            out.append([seg])
    return out


class Partitioner:
    requires_units = False

    @classmethod
    def from_config(cls, view, section, **_):
        return cls()

    def split(self, segments: list[Segment]) -> list[list[Segment]]:
        raise NotImplementedError

    def partition(self, blocks, first_id: int = 0) -> list[Partition]:
        return partition_blocks(blocks, self, first_id)


class BlockBoundaryPartitioner(Partitioner):
    """One partition per block."""

    def split(self, segments):
        return runs(segments)


class FileCountPartitioner(Partitioner):
    """At most ``files`` files per partition."""

    def __init__(self, files: int):
        if files < 1:
            raise ValueError("files per job must be >= 1")
        self.files = files

    @classmethod
    def from_config(cls, view, section, **_):
        return cls(view.get_int([section, "dataset"], "files per job", "1"))

    def split(self, segments):
        out = []
        for run in runs(segments):
            for i in range(0, len(run), self.files):
                out.append(run[i:i + self.files])
        return out


def _require_units(segments):
    for seg in segments:
        if seg.end is None:
            raise MissingWorkUnits(f"file {seg.url} has no work unit count")


class WorkUnitPartitioner(Partitioner):
    """Fills partitions with ``units`` work units, splitting files as needed."""

    requires_units = True

    def __init__(self, units: int):
        if units < 1:
            raise ValueError("units per job must be >= 1")
        self.units = units

    @classmethod
    def from_config(cls, view, section, **_):
        return cls(view.get_int([section, "dataset"], "units per job"))

    def split(self, segments):
        _require_units(segments)
        target = self.units
        out = []
        for run in runs(segments):
            group: list[Segment] = []
            filled = 0
            for seg in run:
                pos = seg.start
                while pos < seg.end:
                    take = min(seg.end - pos, target - filled)
                    group.append(Segment(seg.url, pos, pos + take, seg.size, seg.metadata))
                    pos += take
                    filled += take
                    if filled == target:
                        out.append(group)
                        group, filled = [], 0
            if group:
                out.append(group)
        return out


class MetadataGroupPartitioner(Partitioner):
    """One partition per distinct value of a metadata key within a block."""

    def __init__(self, key: str):
        self.key = key

    @classmethod
    def from_config(cls, view, section, **_):
        return cls(view.get([section, "dataset"], "metadata key"))

    def split(self, segments):
        groups: dict[str, list[Segment]] = {}
        for seg in segments:
            groups.setdefault(seg.metadata.get(self.key, ""), []).append(seg)
        out = []
        for group in groups.values():
            out.extend(runs(group))
        return out


class HybridPartitioner(Partitioner):
    """File-count grouping, then work-unit splitting of groups above ``units``."""

    requires_units = True

    def __init__(self, files: int, units: int):
        self.by_files = FileCountPartitioner(files)
        self.by_units = WorkUnitPartitioner(units)

    @classmethod
    def from_config(cls, view, section, **_):
        scope = [section, "dataset"]
        return cls(view.get_int(scope, "files per job"), view.get_int(scope, "units per job"))

    def split(self, segments):
        _require_units(segments)
        out = []
        for group in self.by_files.split(segments):
            if sum(seg.units for seg in group) > self.by_units.units:
                out.extend(self.by_units.split(group))
            else:
                out.append(group)
        return out


def _common_metadata(group) -> dict:
    first = group[0].metadata
    if len(group) == 1:
        return dict(first)
    return {k: v for k, v in first.items() if all(seg.metadata.get(k) == v for seg in group[1:])}


def make_partition(partition_id: int, block: DatasetBlock, group: list[Segment]) -> Partition:
    known = all(seg.end is not None for seg in group)
    file_units = [seg.units for seg in group] if known else []
    return Partition(
        partition_id=partition_id,
        dataset=block.dataset,
        block_id=block.block_id,
        file_urls=[seg.url for seg in group],
        skip_units=group[0].start if known else 0,
        num_units=sum(file_units) if known else -1,
        locations=list(block.locations) if block.locations is not None else None,
        metadata=_common_metadata(group),
        state=VALID,
        file_units=file_units,
        nickname=block.nickname,
    )


def partition_segments(block: DatasetBlock, segments, plugin, first_id: int) -> list[Partition]:
    parts = []
    for group in plugin.split(segments):
        if group:
            parts.append(make_partition(first_id + len(parts), block, group))
    return parts


def partition_blocks(blocks, plugin, first_id: int = 0) -> list[Partition]:
    """Partitions for every block, in block order then unit offset order."""
    parts: list[Partition] = []
    for block in blocks:
        parts.extend(partition_segments(block, block_segments(block), plugin, first_id + len(parts)))
    return parts
