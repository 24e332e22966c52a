"""Propagation of dataset changes into partitions."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .model import INVALID, DatasetDelta, Segment
from .partitioners import partition_segments


def compute_delta(old_blocks, new_blocks) -> DatasetDelta:
    old = {b.key: b for b in old_blocks}
    new = {b.key: b for b in new_blocks}
    delta = DatasetDelta()
    delta.added_blocks = [key for key in new if key not in old]
    delta.removed_blocks = [key for key in old if key not in new]
    for key, new_block in new.items():
        old_block = old.get(key)
        if old_block is None:
            continue
        old_files = {f.url: f for f in old_block.files}
        new_urls = set()
        for entry in new_block.files:
            new_urls.add(entry.url)
            before = old_files.get(entry.url)
            if before is None:
                delta.added_files.append((key, entry.url))
            elif before.work_units != entry.work_units:
                delta.resized_files.append((key, entry.url, before.work_units, entry.work_units))
        delta.removed_files.extend((key, f.url) for f in old_block.files if f.url not in new_urls)
    return delta


@dataclass
class ResyncResult:
    kept: list  # partition ids
    invalidated: list  # partition ids
    appended: list  # new Partition objects
    partitions: list  # full updated partition list (old + appended)


def _subtract(size: int, covered: list) -> list[tuple[int, int]]:
    gaps = []
    pos = 0
    for start, end in sorted(covered):
        if start > pos:
            gaps.append((pos, start))
        pos = max(pos, end)
    if pos < size:
        gaps.append((pos, size))
    return gaps


def resync_partitions(parts, delta: DatasetDelta, plugin, new_blocks) -> ResyncResult:
    """Invalidate partitions hit by ``delta`` and cover the remaining work.

    A partition is invalidated when one of its files was removed (alone or
    with its block) or shrank below the end of its slice.  Grown files keep
    their partitions; the new tail, new files and the still existing parts
    of invalidated slices are partitioned by ``plugin`` with fresh ids.
    """
    removed_blocks = set(delta.removed_blocks)
    removed = set(delta.removed_files)
    shrunk = {
        (key, url): new for key, url, old, new in delta.resized_files
        if new is None or old is None or new < old
    }
    kept, invalidated = [], []
    covered: dict = {}
    updated = []
    for part in parts:
        if not part.valid:
            updated.append(part)
            continue
        key = (part.dataset, part.block_id)
        hit = key in removed_blocks
        if not hit:
            for url, start, end in part.slices():
                if (key, url) in removed:
                    hit = True
                elif (key, url) in shrunk:
                    size = shrunk[(key, url)]
                    if size is None or end is None or end > size:
                        hit = True
                if hit:
                    break
        if hit:
            invalidated.append(part.partition_id)
            updated.append(replace(part, state=INVALID))
            continue
        kept.append(part.partition_id)
        updated.append(part)
        for url, start, end in part.slices():
            covered.setdefault((key, url), []).append((start, end))

    next_id = max((p.partition_id for p in parts), default=-1) + 1
    appended = []
    for block in new_blocks:
        segments = []
        for entry in block.files:
            spans = covered.get((block.key, entry.url))
            units = entry.work_units
            if units is None or any(end is None for _, end in spans or ()):
                if not spans:
                    segments.append(Segment(entry.url, 0, units, units, entry.metadata))
                continue
            for start, end in _subtract(units, spans or []):
                segments.append(Segment(entry.url, start, end, units, entry.metadata))
        if segments:
            new_parts = partition_segments(block, segments, plugin, next_id)
            next_id += len(new_parts)
            appended.extend(new_parts)
    return ResyncResult(kept, invalidated, appended, updated + appended)
