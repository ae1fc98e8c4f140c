"""Per-commit sets of modified methods.

Function boundaries come from tree-sitter grammars for C, C++, C#, Java,
JavaScript, PHP, Python and Ruby.  A method counts as modified when a diff
hunk touches its span in the pre-image (removed lines) or the post-image
(added lines).
"""
from __future__ import annotations

import bisect
import fnmatch
import json
import logging
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import PurePosixPath
from typing import Iterable

from tree_sitter import Language, Node, Parser

from .gitrepo import FileDiff, Repository

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class MethodRef:
    file: str
    qualified_name: str
    arity: int

    def __post_init__(self):
        if not self.file:
            raise ValueError("MethodRef.file must be non-empty")
        if not self.qualified_name:
            raise ValueError("MethodRef.qualified_name must be non-empty")

    def label(self) -> str:
        return f"{self.file}|{self.qualified_name}|{self.arity}"

    @classmethod
    def from_label(cls, label: str) -> "MethodRef":
        file, rest = label.split("|", 1)
        name, arity = rest.rsplit("|", 1)
        return cls(file, name, int(arity))


@dataclass(frozen=True)
class MethodChangeSet:
    commit: str
    methods: frozenset[MethodRef]
    is_merge: bool = False
    commit_time: int = 0
    # (old_path, new_path) pairs detected by git in this commit
    renames: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.is_merge and self.methods:
            raise ValueError("merge commits carry no methods")


# --------------------------------------------------------------------------
# test path policy


@dataclass(frozen=True)
class TestPathPolicy:
    __test__ = False  # keep pytest from collecting this class

    segments: tuple[str, ...] = ("test", "tests", "spec", "specs")
    prefixes: tuple[str, ...] = ("test_",)
    suffixes: tuple[str, ...] = ("_test", "Test", ".spec", ".test")
    patterns: tuple[str, ...] = ()

    @classmethod
    def from_config(cls, data: dict | None) -> "TestPathPolicy":
        if not data:
            return cls()
        kwargs = {k: tuple(v) for k, v in data.items() if k in ("segments", "prefixes", "suffixes", "patterns")}
        return cls(**kwargs)

    def key(self) -> tuple:
        return (self.segments, self.prefixes, self.suffixes, self.patterns)


def is_test_path(path: str, policy: TestPathPolicy | None = None) -> bool:
    policy = policy or TestPathPolicy()
    parts = PurePosixPath(path).parts
    if not parts:
        return False
    segs = {s.lower() for s in policy.segments}
    if any(p.lower() in segs for p in parts[:-1]):
        return True
    name = parts[-1]
    stem = name.rsplit(".", 1)[0] if "." in name else name
    if any(name.startswith(p) for p in policy.prefixes):
        return True
    if any(stem.endswith(s) for s in policy.suffixes):
        return True
    return any(
        fnmatch.fnmatch(path, pat) or fnmatch.fnmatch(name, pat) for pat in policy.patterns
    )


# --------------------------------------------------------------------------
# languages


@dataclass(frozen=True)
class _LangSpec:
    name: str
    functions: frozenset[str]
    scopes: frozenset[str]
    # node types inside a parameter list that are not parameters
    skip_params: frozenset[str] = frozenset({"comment"})


_LANGS: dict[str, _LangSpec] = {
    "python": _LangSpec(
        "python",
        frozenset({"function_definition"}),
        frozenset({"class_definition", "function_definition"}),
        frozenset({"comment", "keyword_separator", "positional_separator"}),
    ),
    "java": _LangSpec(
        "java",
        frozenset({"method_declaration", "constructor_declaration", "compact_constructor_declaration"}),
        frozenset({
            "class_declaration", "interface_declaration", "enum_declaration",
            "record_declaration", "annotation_type_declaration",
        }),
        frozenset({"comment", "line_comment", "block_comment"}),
    ),
    "c": _LangSpec("c", frozenset({"function_definition"}), frozenset()),
    "cpp": _LangSpec(
        "cpp",
        frozenset({"function_definition"}),
        frozenset({"namespace_definition", "class_specifier", "struct_specifier"}),
    ),
    "javascript": _LangSpec(
        "javascript",
        frozenset({
            "function_declaration", "generator_function_declaration", "method_definition",
            "function_expression", "arrow_function", "function",
        }),
        frozenset({"class_declaration", "class"}),
    ),
    "php": _LangSpec(
        "php",
        frozenset({"function_definition", "method_declaration"}),
        frozenset({"class_declaration", "interface_declaration", "trait_declaration", "namespace_definition"}),
    ),
    "ruby": _LangSpec(
        "ruby",
        frozenset({"method", "singleton_method"}),
        frozenset({"class", "module"}),
    ),
    "csharp": _LangSpec(
        "csharp",
        frozenset({
            "method_declaration", "constructor_declaration", "destructor_declaration",
            "local_function_statement", "operator_declaration",
        }),
        frozenset({
            "class_declaration", "struct_declaration", "interface_declaration",
            "record_declaration", "namespace_declaration",
        }),
    ),
}

_EXTENSIONS = {
    ".py": "python",
    ".java": "java",
    ".c": "c",
    ".h": "cpp",
    ".cc": "cpp", ".cpp": "cpp", ".cxx": "cpp", ".c++": "cpp",
    ".hh": "cpp", ".hpp": "cpp", ".hxx": "cpp",
    ".js": "javascript", ".jsx": "javascript", ".mjs": "javascript", ".cjs": "javascript",
    ".php": "php",
    ".rb": "ruby",
    ".cs": "csharp",
}


def language_for(path: str) -> str | None:
    suffix = PurePosixPath(path).suffix.lower()
    return _EXTENSIONS.get(suffix)


@lru_cache(maxsize=None)
def _language(name: str) -> Language:
    if name == "python":
        import tree_sitter_python as mod
        return Language(mod.language())
    if name == "java":
        import tree_sitter_java as mod
        return Language(mod.language())
    if name == "c":
        import tree_sitter_c as mod
        return Language(mod.language())
    if name == "cpp":
        import tree_sitter_cpp as mod
        return Language(mod.language())
    if name == "javascript":
        import tree_sitter_javascript as mod
        return Language(mod.language())
    if name == "php":
        import tree_sitter_php as mod
        return Language(mod.language_php())
    if name == "ruby":
        import tree_sitter_ruby as mod
        return Language(mod.language())
    if name == "csharp":
        import tree_sitter_c_sharp as mod
        return Language(mod.language())
    raise KeyError(name)


_local = threading.local()


def _parser(name: str) -> Parser:
    # tree-sitter parsers are not thread-safe; keep one per thread
    parsers = getattr(_local, "parsers", None)
    if parsers is None:
        parsers = _local.parsers = {}
    if name not in parsers:
        parsers[name] = Parser(_language(name))
    return parsers[name]


@dataclass(frozen=True)
class MethodSpan:
    qualified_name: str
    arity: int
    start: int  # 1-based, inclusive
    end: int


def _text(node: Node | None) -> str:
    return node.text.decode("utf-8", "replace") if node is not None else ""


def _c_declarator_name(decl: Node | None) -> tuple[str, Node | None]:
    """Walk a C/C++ declarator down to its function_declarator."""
    while decl is not None and decl.type != "function_declarator":
        decl = decl.child_by_field_name("declarator")
    if decl is None:
        return "", None
    inner = decl.child_by_field_name("declarator")
    return _text(inner).replace(" ", ""), decl.child_by_field_name("parameters")


def _function_name(lang: str, node: Node) -> tuple[str, Node | None]:
    """Return ``(name, parameter-list node)``; empty name means anonymous."""
    if lang in ("c", "cpp"):
        return _c_declarator_name(node.child_by_field_name("declarator"))
    params = node.child_by_field_name("parameters")
    if lang == "javascript":
        if params is None:
            params = node.child_by_field_name("parameter")
        name = node.child_by_field_name("name")
        if name is None and node.type in ("function_expression", "arrow_function", "function"):
            parent = node.parent
            if parent is not None and parent.type == "variable_declarator":
                name = parent.child_by_field_name("name")
                if name is not None and name.type != "identifier":
                    name = None
            elif parent is not None and parent.type in ("pair", "assignment_expression"):
                key = parent.child_by_field_name("key") or parent.child_by_field_name("left")
                if key is not None and key.type in ("property_identifier", "identifier", "member_expression"):
                    name = key
        return _text(name), params
    if lang == "ruby" and node.type == "singleton_method":
        return f"{_text(node.child_by_field_name('object'))}.{_text(node.child_by_field_name('name'))}", params
    return _text(node.child_by_field_name("name")), params


def _arity(lang: str, params: Node | None, spec: _LangSpec) -> int:
    if params is None:
        return 0
    if params.type == "identifier":  # JS arrow with a bare parameter
        return 1
    kids = [c for c in params.named_children if c.type not in spec.skip_params]
    if lang in ("c", "cpp") and len(kids) == 1 and kids[0].type == "parameter_declaration":
        only = kids[0]
        if only.child_by_field_name("declarator") is None and _text(only).strip() == "void":
            return 0
    return len(kids)


def _scope_name(lang: str, node: Node) -> str:
    if lang == "php" and node.type == "namespace_definition" and node.child_by_field_name("body") is None:
        return ""
    if lang in ("c", "cpp") and node.type == "function_definition":
        return _c_declarator_name(node.child_by_field_name("declarator"))[0]
    name = node.child_by_field_name("name")
    return _text(name).replace("\\", "::")


def function_spans(source: str, lang: str) -> tuple[list[MethodSpan], int, bool]:
    """Named function spans in ``source``.

    Returns ``(spans, anonymous_count, had_syntax_errors)``.
    """
    spec = _LANGS[lang]
    tree = _parser(lang).parse(source.encode("utf-8"))
    spans: list[MethodSpan] = []
    anonymous = 0
    functions = spec.functions
    scopes = spec.scopes | functions

    def visit(node: Node, chain: tuple[str, ...]):
        nonlocal anonymous
        next_chain = chain
        if node.type in functions:
            name, params = _function_name(lang, node)
            if name:
                start_node = node
                if node.parent is not None and node.parent.type == "decorated_definition":
                    start_node = node.parent
                spans.append(
                    MethodSpan(
                        "::".join(chain + (name,)),
                        _arity(lang, params, spec),
                        start_node.start_point[0] + 1,
                        node.end_point[0] + 1,
                    )
                )
                next_chain = chain + (name,)
            else:
                anonymous += 1
        elif node.type in scopes:
            scope = _scope_name(lang, node)
            if scope:
                next_chain = chain + (scope,)
        for child in node.named_children:
            visit(child, next_chain)

    visit(tree.root_node, ())
    return spans, anonymous, tree.root_node.has_error


# --------------------------------------------------------------------------
# diagnostics and cache


class Diagnostics:
    """Line-delimited (commit, file, reason) records collected during a run."""

    def __init__(self):
        self._records: list[dict] = []
        self._lock = threading.Lock()

    def add(self, commit: str, file: str, reason: str):
        with self._lock:
            self._records.append({"commit": commit, "file": file, "reason": reason})

    @property
    def records(self) -> list[dict]:
        with self._lock:
            return list(self._records)

    def __len__(self):
        return len(self._records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


class ChangeSetCache:
    """Thread-safe memo of change sets keyed by repository, commit and query."""

    def __init__(self):
        self._data: dict[tuple, MethodChangeSet] = {}
        self._lock = threading.Lock()

    def get(self, key: tuple) -> MethodChangeSet | None:
        with self._lock:
            return self._data.get(key)

    def put(self, key: tuple, value: MethodChangeSet):
        with self._lock:
            self._data.setdefault(key, value)

    def __len__(self):
        return len(self._data)


# --------------------------------------------------------------------------
# modified methods


def _touched(spans: list[MethodSpan], lines: Iterable[int]) -> set[tuple[str, int]]:
    lines = sorted(set(lines))
    hit = set()
    if not lines:
        return hit
    for span in spans:
        i = bisect.bisect_left(lines, span.start)
        if i < len(lines) and lines[i] <= span.end:
            hit.add((span.qualified_name, span.arity))
    return hit


def _spans_for(repo: Repository, rev: str, path: str, lang: str, commit: str,
               diagnostics: Diagnostics | None) -> list[MethodSpan] | None:
    text = repo.file_text(rev, path)
    if text is None:
        return []
    try:
        spans, anonymous, had_errors = function_spans(text, lang)
    except Exception as exc:  # parser failure: skip the file, keep going
        if diagnostics is not None:
            diagnostics.add(commit, path, f"parse failure: {exc}")
        logger.warning("could not parse %s at %s: %s", path, rev[:12], exc)
        return None
    if diagnostics is not None:
        if anonymous:
            diagnostics.add(commit, path, f"skipped {anonymous} anonymous function(s)")
        if had_errors:
            diagnostics.add(commit, path, "syntax errors; partial parse used")
    return spans


def methods_in_diff(repo: Repository, commit: str, parent: str | None, fd: FileDiff,
                    diagnostics: Diagnostics | None = None) -> set[MethodRef]:
    """Methods of one file whose span in either image intersects the diff."""
    lang = language_for(fd.path)
    if lang is None or fd.binary:
        return set()
    touched: set[tuple[str, int]] = set()
    if fd.old_path is not None and parent is not None:
        old_spans = _spans_for(repo, parent, fd.old_path, lang, commit, diagnostics)
        if old_spans is None:
            return set()
        touched |= _touched(old_spans, fd.deleted_lines())
    if fd.new_path is not None:
        new_spans = _spans_for(repo, commit, fd.new_path, lang, commit, diagnostics)
        if new_spans is None:
            return set()
        touched |= _touched(new_spans, fd.added_lines())
    return {MethodRef(fd.path, name, arity) for name, arity in touched}


def modified_methods(
    repo: Repository,
    commit: str,
    test_filter: TestPathPolicy | None = None,
    *,
    paths: Iterable[str] | None = None,
    diagnostics: Diagnostics | None = None,
    cache: ChangeSetCache | None = None,
) -> MethodChangeSet:
    """Methods modified (including deleted) by ``commit``, test files excluded.

    ``paths`` optionally restricts parsing to files whose post-image path (or
    pre-image path, for deletions) is listed; renames are reported either way.
    """
    policy = test_filter or TestPathPolicy()
    meta = repo.commit_meta(commit)
    restrict = frozenset(paths) if paths is not None else None
    key = (str(repo.path), meta.id, policy.key(), restrict)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    if meta.is_merge:
        result = MethodChangeSet(meta.id, frozenset(), True, meta.commit_time)
    else:
        parent = meta.parents[0] if meta.parents else None
        methods: set[MethodRef] = set()
        renames = []
        for fd in repo.diff_commit(meta.id):
            if fd.kind == "renamed":
                renames.append((fd.old_path, fd.new_path))
            if restrict is not None and fd.path not in restrict:
                continue
            if is_test_path(fd.path, policy):
                continue
            if fd.binary or language_for(fd.path) is None:
                continue
            methods |= methods_in_diff(repo, meta.id, parent, fd, diagnostics)
        result = MethodChangeSet(meta.id, frozenset(methods), False, meta.commit_time, tuple(renames))
    if cache is not None:
        cache.put(key, result)
    return result
