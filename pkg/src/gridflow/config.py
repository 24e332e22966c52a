"""Ini-style configuration: includes, continuations, scoped lookup.

Lines are one of::

    [section]                 ; optionally followed by key = value
    key = value               ; text after ';' is a comment
        continued value       ; indented lines extend the previous value

``[global] include = a.conf b.conf`` pulls other files in depth-first;
entries of an included file rank below the entries of the including file.
Command line overrides (``section.key=value``) rank above every file.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ConfigSyntaxError, IncludeCycle, MissingFile, MissingOption

_MISSING = object()
_WS = re.compile(r"\s+")
_HEADER = re.compile(r"^\[([^\]]*)\]\s*(.*)$")

EMPTY_FINGERPRINT = hashlib.sha256(b"gridflow-config-v1").hexdigest()


def canonical_name(name: str) -> str:
    """Lower-case ``name`` and collapse internal whitespace runs."""
    return _WS.sub(" ", name.strip()).lower()


def canonical_value(value: str) -> str:
    lines = (_WS.sub(" ", line.strip()) for line in value.split("\n"))
    return "\n".join(line for line in lines if line)


@dataclass(frozen=True)
class Provenance:
    source: str
    line: int = 0

    def __str__(self) -> str:
        return f"{self.source}:{self.line}" if self.line else self.source


@dataclass
class ConfigView:
    """Merged, read-only view of all configuration sources.

    ``entries`` maps canonical ``(section, key)`` to the raw value.  The view
    remembers which options were looked up so unused ones can be reported.
    """

    entries: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    scope_chain: tuple = ("global",)
    _accessed: set = field(default_factory=set, repr=False, compare=False)

    def __eq__(self, other):
        if not isinstance(other, ConfigView):
            return NotImplemented
        return self.entries == other.entries

    def get(self, scope_chain, key, default=_MISSING):
        return get(self, scope_chain, key, default)

    def get_int(self, scope_chain, key, default=_MISSING) -> int:
        raw = self.get(scope_chain, key, default)
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(
                f"{self.where(scope_chain, key)}: option {key!r} expects an integer, got {raw!r}"
            ) from None

    def get_float(self, scope_chain, key, default=_MISSING) -> float:
        raw = self.get(scope_chain, key, default)
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(
                f"{self.where(scope_chain, key)}: option {key!r} expects a number, got {raw!r}"
            ) from None

    def get_list(self, scope_chain, key, default=()) -> list[str]:
        raw = self.get(scope_chain, key, None)
        if raw is None:
            return list(default)
        return raw.split()

    def has(self, section, key) -> bool:
        return (canonical_name(section), canonical_name(key)) in self.entries

    def sections(self) -> list[str]:
        seen = dict.fromkeys(sec for sec, _ in self.entries)
        return list(seen)

    def keys(self, section) -> list[str]:
        section = canonical_name(section)
        return [key for sec, key in self.entries if sec == section]

    def where(self, scope_chain, key) -> str:
        """Describe the source (file:line) of the option that a lookup hits."""
        key = canonical_name(key)
        for section in scope_chain:
            prov = self.provenance.get((canonical_name(section), key))
            if prov is not None:
                return str(prov)
        return "<default>"

    def unused_options(self) -> list[tuple[str, str]]:
        """Entries no lookup has touched (the include directive is consumed by the parser)."""
        return [e for e in self.entries if e not in self._accessed and e != ("global", "include")]

    def dump(self) -> str:
        """Canonical ``section.key = value`` listing, sorted."""
        lines = []
        for (section, key), value in sorted(self.entries.items()):
            lines.append(f"{section}.{key} = {canonical_value(value).replace(chr(10), chr(92) + 'n')}")
        return "\n".join(lines) + ("\n" if lines else "")

    def to_ini(self) -> str:
        """Serialize to ini text that parses back to an equal view."""
        out = []
        for section in self.sections():
            out.append(f"[{section}]")
            for key in self.keys(section):
                first, *rest = self.entries[(section, key)].split("\n")
                out.append(f"{key} = {first}")
                out.extend(f"    {line}" for line in rest)
        return "\n".join(out) + ("\n" if out else "")


def get(view: ConfigView, scope_chain, key: str, default=_MISSING):
    """Return ``key`` from the first section of ``scope_chain`` defining it."""
    if isinstance(scope_chain, str):
        scope_chain = [scope_chain]
    if not scope_chain:
        raise ValueError("scope_chain must not be empty")
    ckey = canonical_name(key)
    for section in scope_chain:
        entry = (canonical_name(section), ckey)
        if entry in view.entries:
            view._accessed.add(entry)
            return view.entries[entry]
    if default is _MISSING:
        raise MissingOption(key, scope_chain)
    return default


def _strip_comment(line: str) -> str:
    pos = line.find(";")
    return line if pos < 0 else line[:pos]


class _Parser:
    def __init__(self):
        self.entries: dict = {}
        self.provenance: dict = {}

    def parse_file(self, path: Path, chain: tuple) -> None:
        path = Path(path)
        resolved = path.resolve()
        if resolved in chain:
            raise IncludeCycle([*chain, resolved])
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise MissingFile(path) from None
        except OSError as exc:
            raise MissingFile(path) from exc
        own, includes = self._scan(path, text)
        for inc in includes:
            self.parse_file(inc, (*chain, resolved))
        for (section_key, value, lineno) in own:
            self.entries[section_key] = value
            self.provenance[section_key] = Provenance(str(path), lineno)

    def _scan(self, path: Path, text: str):
        """Split a file into its own entries and its include targets."""
        own: list = []
        values: dict = {}
        includes: list[Path] = []
        section = None
        current = None  # (section, key) receiving continuation lines
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = _strip_comment(raw)
            if not line.strip():
                continue
            if line[0] in " \t":
                if current is None:
                    raise ConfigSyntaxError(path, lineno, raw)
                values[current] = values[current] + "\n" + line.strip()
                continue
            line = line.strip()
            match = _HEADER.match(line)
            if match:
                section = canonical_name(match.group(1))
                if not section:
                    raise ConfigSyntaxError(path, lineno, raw)
                current = None
                line = match.group(2).strip()
                if not line:
                    continue
            if "=" not in line or section is None:
                raise ConfigSyntaxError(path, lineno, raw)
            key, _, value = line.partition("=")
            key = canonical_name(key)
            if not key:
                raise ConfigSyntaxError(path, lineno, raw)
            current = (section, key)
            if current not in values:
                own.append([current, None, lineno])
            else:
                for item in own:
                    if item[0] == current:
                        item[2] = lineno
            values[current] = value.strip()
        for item in own:
            item[1] = values[item[0]]
            if item[0] == ("global", "include"):
                includes.extend(path.parent / name for name in item[1].split())
        return [tuple(item) for item in own], includes


def parse_override(text: str) -> tuple[tuple[str, str], str]:
    name, sep, value = text.partition("=")
    section, dot, key = name.strip().partition(".")
    if not sep or not dot or not section.strip() or not key.strip():
        raise ConfigError(f"malformed override {text!r}, expected section.key=value")
    return (canonical_name(section), canonical_name(key)), value.strip()


def parse_config(paths, cli_overrides=()) -> ConfigView:
    """Parse and merge ``paths`` (in order) plus ``section.key=value`` overrides."""
    parser = _Parser()
    for path in paths:
        parser.parse_file(Path(path), ())
    for text in cli_overrides:
        entry, value = parse_override(text)
        parser.entries[entry] = value
        parser.provenance[entry] = Provenance("cli-override")
    return ConfigView(entries=parser.entries, provenance=parser.provenance)


def parse_text(text: str, name: str = "<string>") -> ConfigView:
    """Parse a single in-memory ini document (includes are not followed)."""
    parser = _Parser()
    own, _ = parser._scan(Path(name), text)
    for entry, value, lineno in own:
        parser.entries[entry] = value
        parser.provenance[entry] = Provenance(name, lineno)
    return ConfigView(entries=parser.entries, provenance=parser.provenance)


def fingerprint(view: ConfigView, scope=None) -> str:
    """Order- and comment-insensitive digest of the entries in ``scope``.

    ``scope`` is None (all sections), an iterable of section names, or a
    predicate on the section name.
    """
    if scope is None:
        keep = lambda sec: True  # noqa: E731
    elif callable(scope):
        keep = scope
    else:
        wanted = {canonical_name(s) for s in scope}
        keep = wanted.__contains__
    triples = sorted(
        (sec, key, canonical_value(value))
        for (sec, key), value in view.entries.items()
        if keep(sec)
    )
    if not triples:
        return EMPTY_FINGERPRINT
    digest = hashlib.sha256()
    for sec, key, value in triples:
        for part in (sec, key, value):
            digest.update(part.encode("utf-8"))
            digest.update(b"\0")
        digest.update(b"\1")
    return digest.hexdigest()
