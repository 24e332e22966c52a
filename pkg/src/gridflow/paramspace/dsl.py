"""Parser for the parameter expression language.

Grammar::

    expr   := term ('+' term)*
    term   := factor (WS factor)*
    factor := NAME | NAME '[' NAME ']' | '(' NAME (',' NAME)* ')'
            | '{' SECTION '}' | '<' DATASET '>'

Juxtaposed factors form a cross product, ``+`` concatenates subspaces,
``{s}`` embeds the space defined by section ``s`` and ``<d>`` draws points
from the partitions of dataset ``d``.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import replace

from ..config import ConfigView, canonical_name
from ..errors import DslError, DslSyntaxError, LookupWithoutKey, MissingOption, UnknownSection
from .sources import Chain, Cross, DataSource, Lookup, ParameterPoint, TupleList, ValueList
from .sources import enumerate_space, parse_values, variables

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<section>\{[^{}]*\})
  | (?P<dataset><[^<>]*>)
  | (?P<sym>[()\[\],+])
    """,
    re.VERBOSE,
)


def _tokenize(expr: str):
    tokens = []
    pos = 0
    while pos < len(expr):
        match = _TOKEN.match(expr, pos)
        if match is None:
            raise DslSyntaxError(expr, pos, f"unexpected character {expr[pos]!r}")
        kind = match.lastgroup
        if kind != "ws":
            tokens.append((kind, match.group(), pos))
        pos = match.end()
    tokens.append(("end", "", len(expr)))
    return tokens


class _Parser:
    def __init__(self, expr, resolve_section, resolve_values, resolve_dataset):
        self.expr = expr
        self.tokens = _tokenize(expr)
        self.i = 0
        self.resolve_section = resolve_section
        self.resolve_values = resolve_values
        self.resolve_dataset = resolve_dataset

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None, text=None):
        tok = self.tokens[self.i]
        if (kind and tok[0] != kind) or (text and tok[1] != text):
            want = text or kind
            found = tok[1] or "end of expression"
            raise DslSyntaxError(self.expr, tok[2], f"expected {want!r}, found {found!r}")
        self.i += 1
        return tok

    def parse(self):
        if self.peek()[0] == "end":
            raise DslSyntaxError(self.expr, 0, "empty parameter expression")
        terms = [self.term()]
        while self.peek()[1] == "+":
            self.take()
            terms.append(self.term())
        self.take("end")
        return terms[0] if len(terms) == 1 else Chain(tuple(terms))

    def term(self):
        factors = [self.factor()]
        while self.peek()[0] in ("name", "section", "dataset") or self.peek()[1] == "(":
            factors.append(self.factor())
        for factor in factors:
            if isinstance(factor, Lookup):
                defined = set()
                for other in factors:
                    if other is not factor:
                        defined.update(variables(other))
                if factor.key_var not in defined:
                    raise LookupWithoutKey(
                        f"lookup {factor.var}[{factor.key_var}] needs a sibling factor defining {factor.key_var}"
                    )
        return factors[0] if len(factors) == 1 else Cross(tuple(factors))

    def factor(self):
        kind, text, pos = self.peek()
        if kind == "name":
            self.take()
            if self.peek()[1] == "[":
                self.take()
                key_var = self.take("name")[1]
                self.take("sym", "]")
                source = self.resolve_values(text)
                if isinstance(source, ValueList):
                    source = Lookup(text, key_var, source.values, ())
                elif isinstance(source, Lookup):
                    source = replace(source, var=text, key_var=key_var)
                else:
                    raise DslError(f"{text} cannot be used as a lookup")
                return source
            source = self.resolve_values(text)
            if isinstance(source, Lookup):
                # used without a key: only the default values apply
                return ValueList(text, source.default_values)
            return source
        if text == "(":
            self.take()
            names = [self.take("name")[1]]
            while self.peek()[1] == ",":
                self.take()
                names.append(self.take("name")[1])
            self.take("sym", ")")
            return self.resolve_values("(" + ", ".join(names) + ")")
        if kind == "section":
            self.take()
            return self.resolve_section(text[1:-1].strip())
        if kind == "dataset":
            self.take()
            if self.resolve_dataset is None:
                raise DslError(f"dataset reference {text} but no datasets are configured")
            return self.resolve_dataset(text[1:-1].strip())
        raise DslSyntaxError(self.expr, pos, f"unexpected {text or 'end of expression'!r}")


def parse_dsl(expr: str, section_resolver, value_resolver=None, dataset_resolver=None):
    """Parse ``expr`` into a parameter source tree.

    ``section_resolver(name)`` builds the source of a ``{name}`` reference,
    ``value_resolver(key)`` returns the source for a variable or tuple key
    and ``dataset_resolver(name)`` the DataSource for ``<name>``.
    """
    if value_resolver is None:
        def value_resolver(key):
            raise DslError(f"no value resolver for {key!r}")
    return _Parser(expr, section_resolver, value_resolver, dataset_resolver).parse()


def _squash(key: str) -> str:
    return re.sub(r"\s+", "", key).lower()


class SpaceBuilder:
    """Builds parameter sources from the ``parameters`` options of a view."""

    def __init__(self, view: ConfigView, dataset_resolver=None):
        self.view = view
        self.dataset_resolver = dataset_resolver

    def build(self, section: str = "parameters", parent_chain: tuple = (), _stack: tuple = ()):
        section = canonical_name(section)
        if section in _stack:
            raise DslError("recursive parameter section reference: " + " -> ".join((*_stack, section)))
        if not self.view.has(section, "parameters"):
            raise UnknownSection(f"section [{section}] does not define a parameter space")
        scope = (section, *parent_chain)
        expr = self.view.get([section], "parameters")

        def resolve_section(name):
            return self.build(name, scope, (*_stack, section))

        def resolve_values(key):
            return parse_values(self._raw(scope, key), key)

        return parse_dsl(expr, resolve_section, resolve_values, self.dataset_resolver)

    def _raw(self, scope, key):
        try:
            return self.view.get(scope, key)
        except MissingOption:
            pass
        wanted = _squash(key)
        for section in scope:
            for candidate in self.view.keys(section):
                if _squash(candidate) == wanted:
                    return self.view.get([section], candidate)
        raise DslError(f"parameter {key} is not defined in sections {list(scope)}")


def build_space(view: ConfigView, dataset_resolver=None, default_dataset: str | None = None) -> list[ParameterPoint]:
    """Enumerate the job parameter space configured in ``view``.

    Resolution order: ``[parameters] parameters`` expression, else the
    default dataset alone, else ``[jobs] jobs`` identical empty points.  A
    default dataset the expression does not mention is crossed in on the left.
    """
    if view.has("parameters", "parameters"):
        source = SpaceBuilder(view, dataset_resolver).build()
        if default_dataset is not None and dataset_resolver is not None and not _mentions(source, default_dataset):
            source = Cross((dataset_resolver(default_dataset), source))
        return enumerate_space(source)
    if default_dataset is not None and dataset_resolver is not None:
        return enumerate_space(dataset_resolver(default_dataset))
    count = view.get_int(["jobs"], "jobs", "1")
    return [ParameterPoint({}) for _ in range(count)]


def _mentions(source, dataset: str) -> bool:
    if isinstance(source, DataSource):
        return source.name == dataset
    if isinstance(source, tuple):
        return any(_mentions(item, dataset) for item in source)
    if dataclasses.is_dataclass(source):
        return any(_mentions(getattr(source, f.name), dataset) for f in dataclasses.fields(source))
    return False


__all__ = ["SpaceBuilder", "build_space", "parse_dsl", "DataSource", "TupleList"]
