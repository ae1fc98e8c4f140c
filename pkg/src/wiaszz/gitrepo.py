"""Read-only access to git repositories through the ``git`` command line.

All history, diff and blame queries shell out to git and parse its output.
Remote repositories are cloned once into a cache directory and reused.
"""
from __future__ import annotations

import hashlib
import logging
import os
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from filelock import FileLock

logger = logging.getLogger(__name__)

EMPTY_TREE = "4b825dc642cb6eb9a060e54bf8d69288fbee4904"
_HEX40 = re.compile(r"^[0-9a-f]{40}$")
_HUNK_HEADER = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")


class GitError(Exception):
    """A git command failed or returned something we cannot use."""


class NotARepositoryError(GitError):
    pass


class UnresolvableCommitError(GitError):
    pass


def is_commit_id(value: str) -> bool:
    return bool(_HEX40.match(value))


@dataclass(frozen=True)
class CommitMeta:
    id: str
    parents: tuple[str, ...]
    author_time: int
    commit_time: int
    message: str = ""

    @property
    def is_merge(self) -> bool:
        return len(self.parents) > 1

    @property
    def is_root(self) -> bool:
        return not self.parents


@dataclass(frozen=True)
class Hunk:
    """One ``-U0`` hunk; ``lines`` holds ``("-"|"+", text)`` pairs in diff order."""

    old_start: int
    old_count: int
    new_start: int
    new_count: int
    lines: tuple[tuple[str, str], ...] = ()

    @property
    def old_lines(self) -> range:
        return range(self.old_start, self.old_start + self.old_count)

    @property
    def new_lines(self) -> range:
        return range(self.new_start, self.new_start + self.new_count)


@dataclass(frozen=True)
class FileDiff:
    old_path: str | None
    new_path: str | None
    kind: str  # added | deleted | modified | renamed
    hunks: tuple[Hunk, ...] = ()
    binary: bool = False

    def __post_init__(self):
        if self.kind == "added" and self.old_path is not None:
            raise ValueError("added file cannot have an old path")
        if self.kind == "deleted" and self.new_path is not None:
            raise ValueError("deleted file cannot have a new path")
        if self.kind == "renamed" and (
            not self.old_path or not self.new_path or self.old_path == self.new_path
        ):
            raise ValueError("renamed file needs two different paths")

    @property
    def path(self) -> str:
        """Post-image path, or the pre-image path for deletions."""
        return self.new_path if self.new_path is not None else self.old_path

    def deleted_lines(self) -> list[int]:
        """Old-image line numbers removed or rewritten by this diff."""
        return [n for h in self.hunks for n in h.old_lines]

    def added_lines(self) -> list[int]:
        """New-image line numbers inserted or rewritten by this diff."""
        return [n for h in self.hunks for n in h.new_lines]


@dataclass(frozen=True)
class BlameAttribution:
    file: str
    line: int
    origin: str


def _unquote(path: str) -> str:
    # git C-quotes paths containing unusual bytes
    if len(path) >= 2 and path[0] == '"' and path[-1] == '"':
        raw = path[1:-1].encode("latin-1", "backslashreplace").decode("unicode_escape")
        return raw.encode("latin-1").decode("utf-8", "replace")
    return path


def _strip_prefix(path: str) -> str | None:
    path = _unquote(path)
    if path == "/dev/null":
        return None
    if path[:2] in ("a/", "b/"):
        return path[2:]
    return path


def parse_diff(text: str) -> list[FileDiff]:
    """Parse ``git diff -U0`` output into :class:`FileDiff` records."""
    diffs: list[FileDiff] = []
    current: dict | None = None
    hunk: dict | None = None

    def close_hunk():
        nonlocal hunk
        if hunk is not None:
            current["hunks"].append(
                Hunk(hunk["os"], hunk["oc"], hunk["ns"], hunk["nc"], tuple(hunk["lines"]))
            )
            hunk = None

    def close_file():
        nonlocal current
        if current is None:
            return
        close_hunk()
        old, new = current["old"], current["new"]
        if current["new_file"]:
            old, kind = None, "added"
        elif current["deleted_file"]:
            new, kind = None, "deleted"
        elif old is not None and new is not None and old != new:
            kind = "renamed"
        else:
            kind = "modified"
        diffs.append(
            FileDiff(old, new, kind, tuple(current["hunks"]), current["binary"])
        )
        current = None

    for line in text.split("\n"):
        if line.startswith("diff --git "):
            close_file()
            current = {
                "old": None, "new": None, "new_file": False, "deleted_file": False,
                "binary": False, "hunks": [],
            }
            names = line[len("diff --git "):]
            # best-effort split; refined by ---/+++ or rename headers below
            m = re.match(r'^("(?:[^"\\]|\\.)*"|\S+) ("(?:[^"\\]|\\.)*"|\S+)$', names)
            if m:
                current["old"] = _strip_prefix(m.group(1))
                current["new"] = _strip_prefix(m.group(2))
            elif names.startswith("a/") and " b/" in names:
                half = (len(names) - 1) // 2
                current["old"] = names[2:half]
                current["new"] = names[half + 3:]
            continue
        if current is None:
            continue
        if hunk is not None and line[:1] in ("+", "-") and not line.startswith(("+++ ", "--- ")):
            hunk["lines"].append((line[0], line[1:]))
            continue
        if hunk is not None and line.startswith("\\"):
            continue
        if line.startswith("@@"):
            close_hunk()
            m = _HUNK_HEADER.match(line)
            if not m:
                raise GitError(f"malformed hunk header: {line!r}")
            hunk = {
                "os": int(m.group(1)),
                "oc": int(m.group(2)) if m.group(2) is not None else 1,
                "ns": int(m.group(3)),
                "nc": int(m.group(4)) if m.group(4) is not None else 1,
                "lines": [],
            }
        elif line.startswith("new file mode"):
            current["new_file"] = True
        elif line.startswith("deleted file mode"):
            current["deleted_file"] = True
        elif line.startswith("rename from "):
            current["old"] = _unquote(line[len("rename from "):])
        elif line.startswith("rename to "):
            current["new"] = _unquote(line[len("rename to "):])
        elif line.startswith("--- "):
            p = _strip_prefix(line[4:])
            if p is not None:
                current["old"] = p
        elif line.startswith("+++ "):
            p = _strip_prefix(line[4:])
            if p is not None:
                current["new"] = p
        elif line.startswith("Binary files ") or line.startswith("GIT binary patch"):
            current["binary"] = True
    close_file()
    return diffs


_LOG_FORMAT = "%H%x1f%P%x1f%at%x1f%ct%x1f%B%x1e"


def _parse_log(text: str) -> list[CommitMeta]:
    metas = []
    for record in text.split("\x1e"):
        record = record.lstrip("\n")
        if not record:
            continue
        sha, parents, at, ct, message = record.split("\x1f", 4)
        metas.append(
            CommitMeta(sha, tuple(parents.split()), int(at), int(ct), message.rstrip("\n"))
        )
    return metas


@dataclass
class Repository:
    """Handle over a local working clone. Confine one handle to one worker."""

    path: Path
    source: str = ""
    _meta: dict[str, CommitMeta] = field(default_factory=dict, repr=False)

    def git(self, *args: str, check: bool = True, input: bytes | None = None) -> str:
        cmd = ["git", "-C", str(self.path), "-c", "core.quotePath=false", *args]
        proc = subprocess.run(cmd, capture_output=True, input=input)
        if check and proc.returncode != 0:
            raise GitError(
                f"{' '.join(args[:3])} failed: {proc.stderr.decode('utf-8', 'replace').strip()}"
            )
        return proc.stdout.decode("utf-8", "replace")

    def resolve(self, rev: str) -> str:
        proc = subprocess.run(
            ["git", "-C", str(self.path), "rev-parse", "--verify", "--quiet", f"{rev}^{{commit}}"],
            capture_output=True,
        )
        if proc.returncode != 0:
            raise UnresolvableCommitError(f"cannot resolve {rev!r} in {self.path}")
        return proc.stdout.decode().strip()

    def head(self) -> str:
        return self.resolve("HEAD")

    def commit_meta(self, rev: str) -> CommitMeta:
        sha = rev if rev in self._meta else self.resolve(rev)
        if sha not in self._meta:
            (meta,) = _parse_log(self.git("log", "-1", f"--format={_LOG_FORMAT}", sha))
            self._meta[sha] = meta
        return self._meta[sha]

    def commit_time(self, rev: str) -> int:
        return self.commit_meta(rev).commit_time

    def is_ancestor(self, ancestor: str, descendant: str) -> bool:
        proc = subprocess.run(
            ["git", "-C", str(self.path), "merge-base", "--is-ancestor", ancestor, descendant],
            capture_output=True,
        )
        return proc.returncode == 0

    def file_text(self, rev: str, path: str) -> str | None:
        """Contents of ``path`` at ``rev``, or None when it does not exist there."""
        proc = subprocess.run(
            ["git", "-C", str(self.path), "cat-file", "blob", f"{rev}:{path}"],
            capture_output=True,
        )
        if proc.returncode != 0:
            return None
        return proc.stdout.decode("utf-8", "replace")

    def walk_history(self, start: str, oldest_time: int, max_commits: int) -> list[CommitMeta]:
        return walk_history(self, start, oldest_time, max_commits)

    def diff_commit(self, commit: str) -> list[FileDiff]:
        return diff_commit(self, commit)

    def blame_lines(self, at: str, file: str, lines: Iterable[int]) -> list[BlameAttribution]:
        return blame_lines(self, at, file, lines)


def _cache_key(url: str) -> str:
    return hashlib.sha256(url.encode("utf-8")).hexdigest()[:20]


def _looks_remote(source: str) -> bool:
    return "://" in source or re.match(r"^[\w.-]+@[\w.-]+:", source) is not None


def open_repository(source: str | os.PathLike, cache_dir: str | os.PathLike | None = None) -> Repository:
    """Return a handle over ``source``.

    Local paths are used in place. Remote URLs are cloned (full history) into
    ``<cache_dir>/<url-hash>/`` the first time and reused afterwards without
    fetching.
    """
    source = str(source)
    if _looks_remote(source):
        if cache_dir is None:
            raise GitError("a cache directory is required for remote repositories")
        cache = Path(cache_dir)
        cache.mkdir(parents=True, exist_ok=True)
        target = cache / _cache_key(source)
        with FileLock(str(target) + ".lock"):
            if not (target / ".git").exists() and not (target / "HEAD").exists():
                logger.info("cloning %s into %s", source, target)
                proc = subprocess.run(
                    ["git", "clone", "--quiet", "--no-checkout", source, str(target)],
                    capture_output=True,
                )
                if proc.returncode != 0:
                    raise GitError(
                        f"cannot clone {source}: {proc.stderr.decode('utf-8', 'replace').strip()}"
                    )
        path = target
    else:
        path = Path(source)
        if not path.is_dir():
            raise NotARepositoryError(f"{source}: not a repository")
    proc = subprocess.run(
        ["git", "-C", str(path), "rev-parse", "--git-dir"], capture_output=True
    )
    if proc.returncode != 0:
        raise NotARepositoryError(f"{source}: not a repository")
    repo = Repository(path.resolve(), source)
    try:
        repo.head()
    except UnresolvableCommitError:
        raise GitError(f"{source}: cannot resolve default branch") from None
    return repo


def walk_history(repo: Repository, start: str, oldest_time: int, max_commits: int) -> list[CommitMeta]:
    """First-parent ancestors of ``start`` (inclusive), newest first.

    The walk stops at the first commit older than ``oldest_time`` or after
    ``max_commits`` entries.
    """
    if max_commits < 1:
        raise ValueError("max_commits must be positive")
    start = repo.resolve(start)
    start_time = repo.commit_time(start)
    if oldest_time > start_time:
        raise ValueError("oldest_time is later than the start commit")
    out = repo.git(
        "log", "--first-parent", f"--max-count={max_commits}", f"--format={_LOG_FORMAT}", start
    )
    walked: list[CommitMeta] = []
    for meta in _parse_log(out):
        if meta.commit_time < oldest_time:
            break
        repo._meta.setdefault(meta.id, meta)
        walked.append(meta)
    return walked


def diff_commit(repo: Repository, commit: str) -> list[FileDiff]:
    """Diff ``commit`` against its first parent (empty tree for roots), renames on."""
    meta = repo.commit_meta(commit)
    base = meta.parents[0] if meta.parents else EMPTY_TREE
    out = repo.git(
        "diff", "--no-color", "--no-ext-diff", "-M", "-U0", "--full-index", base, meta.id
    )
    return parse_diff(out)


def _ranges(lines: Sequence[int]) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    for n in sorted(set(lines)):
        if spans and n == spans[-1][1] + 1:
            spans[-1] = (spans[-1][0], n)
        else:
            spans.append((n, n))
    return spans


def blame_lines(repo: Repository, at: str, file: str, lines: Iterable[int]) -> list[BlameAttribution]:
    """Origin commit for each requested line of ``file`` as of revision ``at``."""
    wanted = sorted(set(lines))
    if not wanted:
        return []
    at = repo.resolve(at)
    text = repo.file_text(at, file)
    if text is None:
        raise GitError(f"{file} does not exist at {at[:12]}")
    length = len(text.splitlines())
    bad = [n for n in wanted if n < 1 or n > length]
    if bad:
        raise GitError(f"line {bad[0]} out of range for {file} ({length} lines)")
    args = ["blame", "--porcelain"]
    for lo, hi in _ranges(wanted):
        args += ["-L", f"{lo},{hi}"]
    out = repo.git(*args, at, "--", file)
    origins: dict[int, str] = {}
    for line in out.split("\n"):
        parts = line.split(" ")
        if len(parts) >= 3 and is_commit_id(parts[0]) and parts[1].isdigit() and parts[2].isdigit():
            origins[int(parts[2])] = parts[0]
    return [BlameAttribution(file, n, origins[n]) for n in wanted]
