"""Dataset data types and the file segments partitioners operate on."""

from __future__ import annotations

from dataclasses import dataclass, field

VALID = "valid"
INVALID = "invalid"


@dataclass(slots=True)
class FileEntry:
    url: str
    work_units: int | None = None
    metadata: dict = field(default_factory=dict)


@dataclass(slots=True)
class DatasetBlock:
    dataset: str
    block_id: str
    files: list
    locations: list | None = None
    nickname: str = ""

    @property
    def key(self) -> tuple[str, str]:
        return (self.dataset, self.block_id)


@dataclass(slots=True)
class Partition:
    """Contiguous slice of one block's work.

    ``file_units`` records how many units are taken from each listed file
    (the first file starting at ``skip_units``); it is empty for partitions
    over files without unit counts, which always cover whole files and have
    ``num_units == -1``.
    """

    partition_id: int
    dataset: str
    block_id: str
    file_urls: list
    skip_units: int
    num_units: int
    locations: list | None = None
    metadata: dict = field(default_factory=dict)
    state: str = VALID
    file_units: list = field(default_factory=list)
    nickname: str = ""

    @property
    def valid(self) -> bool:
        return self.state == VALID

    def slices(self) -> list[tuple[str, int, int | None]]:
        """``(url, start, end)`` unit ranges covered; ``end`` None means whole file."""
        if not self.file_units:
            return [(url, 0, None) for url in self.file_urls]
        out = []
        start = self.skip_units
        for url, units in zip(self.file_urls, self.file_units):
            out.append((url, start, start + units))
            start = 0
        return out


@dataclass(slots=True)
class Segment:
    """Unit range ``[start, end)`` of a file of ``size`` units (None: unknown)."""

    url: str
    start: int
    end: int | None
    size: int | None
    metadata: dict

    @property
    def units(self) -> int | None:
        return None if self.end is None else self.end - self.start


@dataclass
class DatasetDelta:
    """Differences between two scans.

    File lists only cover blocks present in both scans; files of appearing
    or vanishing blocks are implied by ``added_blocks``/``removed_blocks``.
    """

    added_files: list = field(default_factory=list)  # (block key, url)
    removed_files: list = field(default_factory=list)  # (block key, url)
    resized_files: list = field(default_factory=list)  # (block key, url, old, new)
    added_blocks: list = field(default_factory=list)  # block keys
    removed_blocks: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (
            self.added_files or self.removed_files or self.resized_files
            or self.added_blocks or self.removed_blocks
        )
