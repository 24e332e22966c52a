"""Dataset providers: manifest files, directory scans, synthetic data."""

from __future__ import annotations

import os
import random
from pathlib import Path

from ..errors import ConfigError, ManifestSyntaxError, ProviderUnavailable
from .model import DatasetBlock, FileEntry


def _nick(dataset: str) -> str:
    return dataset.strip("/").split("/")[-1] or dataset


class ManifestProvider:
    """Reads a text manifest.

    ::

        [dataset_name#block_id]
        locations = site1 site2
        url [work_units [key=value ...]]

    ``#`` starts a comment at line start or after whitespace.
    """

    def __init__(self, path, nickname: str | None = None):
        self.path = Path(path)
        self.nickname = nickname

    @classmethod
    def from_spec(cls, arg: str, base_dir: Path, nickname=None):
        path = Path(arg)
        return cls(path if path.is_absolute() else base_dir / path, nickname)

    def blocks(self) -> list[DatasetBlock]:
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ProviderUnavailable(f"cannot read manifest {self.path}: {exc}") from None
        return parse_manifest(text, self.path, self.nickname)


def _strip_hash_comment(line: str) -> str:
    stripped = line.strip()
    if stripped.startswith("#"):
        return ""
    pos = stripped.find(" #")
    tab = stripped.find("\t#")
    cut = min(p for p in (pos, tab, len(stripped)) if p >= 0)
    return stripped[:cut].strip()


def parse_manifest(text: str, path="<manifest>", nickname=None) -> list[DatasetBlock]:
    blocks: list[DatasetBlock] = []
    current = None
    urls: set = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_hash_comment(raw)
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or "#" not in line:
                raise ManifestSyntaxError(path, lineno, raw)
            dataset, _, block_id = line[1:-1].rpartition("#")
            if not dataset.strip() or not block_id.strip():
                raise ManifestSyntaxError(path, lineno, raw)
            dataset = dataset.strip()
            current = DatasetBlock(dataset, block_id.strip(), [], None, nickname or _nick(dataset))
            blocks.append(current)
            urls = set()
            continue
        if current is None:
            dataset = Path(str(path)).stem
            current = DatasetBlock(dataset, "0", [], None, nickname or dataset)
            blocks.append(current)
            urls = set()
        head, sep, rest = line.partition("=")
        if sep and head.strip() == "locations":
            current.locations = rest.split()
            continue
        tokens = line.split()
        url = tokens[0]
        units = None
        metadata = {}
        meta_tokens = tokens[1:]
        if meta_tokens and "=" not in meta_tokens[0]:
            try:
                units = int(meta_tokens[0])
            except ValueError:
                raise ManifestSyntaxError(path, lineno, raw) from None
            meta_tokens = meta_tokens[1:]
        for token in meta_tokens:
            key, sep, value = token.partition("=")
            if not sep or not key:
                raise ManifestSyntaxError(path, lineno, raw)
            metadata[key] = value
        if url in urls:
            raise ManifestSyntaxError(path, lineno, f"duplicate url {url}")
        urls.add(url)
        current.files.append(FileEntry(url, units, metadata))
    return blocks


def write_manifest(blocks, path) -> None:
    """Write ``blocks`` in manifest format (inverse of parse_manifest)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for block in blocks:
            fh.write(f"[{block.dataset}#{block.block_id}]\n")
            if block.locations is not None:
                fh.write("locations = " + " ".join(block.locations) + "\n")
            for entry in block.files:
                parts = [entry.url]
                if entry.work_units is not None:
                    parts.append(str(entry.work_units))
                parts.extend(f"{k}={v}" for k, v in entry.metadata.items())
                fh.write(" ".join(parts) + "\n")


class DirectoryScanProvider:
    """One block listing every regular file below a directory; units are bytes."""

    def __init__(self, path, nickname: str | None = None):
        self.path = Path(path)
        self.nickname = nickname

    @classmethod
    def from_spec(cls, arg: str, base_dir: Path, nickname=None):
        path = Path(arg)
        return cls(path if path.is_absolute() else base_dir / path, nickname)

    def blocks(self) -> list[DatasetBlock]:
        if not self.path.is_dir():
            raise ProviderUnavailable(f"not a directory: {self.path}")
        root = self.path.resolve()
        found = []
        for dirpath, dirnames, filenames in os.walk(root):
            dirnames.sort()
            for name in sorted(filenames):
                full = Path(dirpath) / name
                if full.is_file():
                    found.append(FileEntry(str(full), full.stat().st_size, {}))
        if not found:
            return []
        dataset = str(root)
        return [DatasetBlock(dataset, "0", found, None, self.nickname or root.name)]


class SyntheticProvider:
    """Seeded random datasets for tests and benchmarks."""

    SITES = ("site_a", "site_b", "site_c", "site_d", "site_e")

    def __init__(self, datasets=9, blocks=1, files=99, seed=0, min_units=100, max_units=1000):
        self.datasets = datasets
        self.blocks_per_dataset = blocks
        self.files = files
        self.seed = seed
        self.min_units = min_units
        self.max_units = max_units

    @classmethod
    def from_spec(cls, arg: str, base_dir=None, nickname=None):
        """``datasets=9,blocks=1,files=99,seed=7`` style arguments."""
        names = {"datasets", "blocks", "files", "seed", "min_units", "max_units"}
        kwargs = {}
        for item in filter(None, (s.strip() for s in arg.split(","))):
            key, sep, value = item.partition("=")
            if not sep or key.strip() not in names:
                raise ConfigError(f"bad synthetic provider argument {item!r}")
            kwargs[key.strip()] = int(value)
        return cls(**kwargs)

    def blocks(self) -> list[DatasetBlock]:
        rng = random.Random(self.seed)
        out = []
        for d in range(self.datasets):
            dataset = f"/synthetic/ds{d:03d}"
            for b in range(self.blocks_per_dataset):
                files = [
                    FileEntry(
                        f"/store/synthetic/ds{d:03d}/b{b:05d}/f{f:03d}.root",
                        rng.randint(self.min_units, self.max_units),
                        {},
                    )
                    for f in range(self.files)
                ]
                sites = sorted(rng.sample(self.SITES, rng.randint(1, 2)))
                out.append(DatasetBlock(dataset, f"b{b:05d}", files, sites, f"ds{d:03d}"))
        return out


PROVIDER_KINDS = {"manifest", "scan", "synthetic"}


def provide_blocks(provider) -> list[DatasetBlock]:
    """Blocks of one provider, or the concatenated stream of several."""
    if isinstance(provider, (list, tuple)):
        out = []
        for item in provider:
            out.extend(item.blocks())
        return out
    return provider.blocks()
