import json

import pytest

from wiaszz import methods as mm
from wiaszz.gitrepo import open_repository
from wiaszz.methods import (
    ChangeSetCache,
    Diagnostics,
    MethodRef,
    TestPathPolicy,
    function_spans,
    is_test_path,
    language_for,
    modified_methods,
)


@pytest.mark.parametrize("path, expected", [
    ("src/tests/util.c", True),
    ("src/contest.c", False),
    ("FooTest.java", True),
    ("test_helpers.py", True),
    ("lib/parser_test.go", True),
    ("web/app.spec.js", True),
    ("web/app.test.ts", True),
    ("Spec/Models/user.rb", True),
    ("src/latest.py", False),
    ("src/testing/util.py", False),
    ("attestation.c", False),
])
def test_is_test_path_defaults(path, expected):
    assert is_test_path(path, TestPathPolicy()) is expected


def test_is_test_path_custom_patterns():
    policy = TestPathPolicy(patterns=("fixtures/*", "*_check.py"))
    assert is_test_path("fixtures/data.c", policy)
    assert is_test_path("src/a_check.py", policy)
    assert not is_test_path("src/a.py", policy)
    cfg = TestPathPolicy.from_config({"segments": ["qa"], "suffixes": []})
    assert is_test_path("qa/x.c", cfg) and not is_test_path("tests/x.c", cfg)


def test_method_ref_identity():
    a = MethodRef("a.py", "f", 1)
    assert a == MethodRef("a.py", "f", 1)
    assert a != MethodRef("a.py", "f", 2)
    assert MethodRef.from_label(MethodRef("x/y.cpp", "ns::operator|", 2).label()) == MethodRef("x/y.cpp", "ns::operator|", 2)
    with pytest.raises(ValueError):
        MethodRef("", "f", 0)
    with pytest.raises(ValueError):
        MethodRef("a.py", "", 0)


SNIPPETS = {
    "java": (
        "class S {\n  public static S make(String a, G b) {\n    return null;\n  }\n"
        "  S() {}\n  class Inner { void f() { } }\n}\n",
        {("S::make", 2, 2, 4), ("S::S", 0, 5, 5), ("S::Inner::f", 0, 6, 6)},
    ),
    "python": (
        "class A:\n    @dec\n    def m(self, x, *a, y=1, **k):\n        return x\n\n"
        "def top(a, /, b, *, c):\n    f = lambda q: q\n    return 1\n",
        {("A::m", 5, 2, 4), ("top", 3, 6, 8)},
    ),
    "c": (
        "static int *f(int a, ...)\n{\n  return 0;\n}\nvoid g(void) {}\n",
        {("f", 2, 1, 4), ("g", 0, 5, 5)},
    ),
    "cpp": (
        "namespace ns {\nclass K {\n  int m(int a) { return a; }\n};\n"
        "int A::foo(int x, int y) {\n  return x;\n}\n}\n",
        {("ns::K::m", 1, 3, 3), ("ns::A::foo", 2, 5, 7)},
    ),
    "javascript": (
        "class K {\n  m(a) { return 1 }\n}\nfunction g(x, y) {\n  return () => 1\n}\nconst h = a => a;\n",
        {("K::m", 1, 2, 2), ("g", 2, 4, 6), ("h", 1, 7, 7)},
    ),
    "php": (
        "<?php\nclass C {\n  public function f($a, $b) {\n    return 1;\n  }\n}\nfunction g() {}\n",
        {("C::f", 2, 3, 5), ("g", 0, 7, 7)},
    ),
    "ruby": (
        "module M\n  class Foo\n    def bar(a, b = 1)\n      1\n    end\n    def self.s; end\n  end\nend\n",
        {("M::Foo::bar", 2, 3, 5), ("M::Foo::self.s", 0, 6, 6)},
    ),
    "csharp": (
        "namespace N {\n  class C {\n    public int F(int a, string b) {\n      return a;\n    }\n  }\n}\n",
        {("N::C::F", 2, 3, 5)},
    ),
}


@pytest.mark.parametrize("lang", sorted(SNIPPETS))
def test_function_spans(lang):
    source, expected = SNIPPETS[lang]
    spans, _, errors = function_spans(source, lang)
    assert not errors
    assert {(s.qualified_name, s.arity, s.start, s.end) for s in spans} == expected


def test_anonymous_functions_are_counted_not_named():
    spans, anonymous, _ = function_spans("function g() { return [1].map(function (x) { return x }) }\n", "javascript")
    assert [s.qualified_name for s in spans] == ["g"]
    assert anonymous == 1


def test_language_detection():
    assert language_for("a/b/Species.java") == "java"
    assert language_for("x.H") == "cpp"
    assert language_for("README.md") is None


def _refs(cs):
    return {(m.file, m.qualified_name, m.arity) for m in cs.methods}


def test_insertion_inside_make(insertion_fix):
    repo = open_repository(insertion_fix.path)
    cs = modified_methods(repo, insertion_fix["fc"], TestPathPolicy())
    assert _refs(cs) == {("source/RMG/jing/chem/Species.java", "Species::make", 2)}


@pytest.mark.parametrize("label", ["edit_three", "rename", "delete_fn", "test_only", "merge"])
def test_ground_truth_change_sets(misc, label):
    repo = open_repository(misc.path)
    cs = modified_methods(repo, misc[label], TestPathPolicy())
    assert _refs(cs) == misc.extra["truth"][label]
    assert cs.is_merge is (label == "merge")


def test_no_test_paths_anywhere(misc, wi_layout, insertion_fix):
    policy = TestPathPolicy()
    for fx in (misc, wi_layout, insertion_fix):
        repo = open_repository(fx.path)
        for sha in fx.commits.values():
            cs = modified_methods(repo, sha, policy)
            assert not any(is_test_path(m.file, policy) for m in cs.methods)
            if cs.is_merge:
                assert not cs.methods


def test_deterministic_and_cached(misc):
    repo = open_repository(misc.path)
    cache = ChangeSetCache()
    first = modified_methods(repo, misc["edit_three"], cache=cache)
    assert len(cache) == 1
    assert modified_methods(repo, misc["edit_three"], cache=cache) is first
    assert modified_methods(open_repository(misc.path), misc["edit_three"]) == first


def test_paths_restriction(misc):
    repo = open_repository(misc.path)
    cs = modified_methods(repo, misc["edit_three"], paths=["pkg/gamma.js"])
    assert _refs(cs) == {("pkg/gamma.js", "run", 1)}
    renamed = modified_methods(repo, misc["rename"], paths=[])
    assert renamed.methods == frozenset() and renamed.renames == (("x.c", "y.c"),)


def test_parser_failure_skips_file(misc, monkeypatch):
    repo = open_repository(misc.path)

    def boom(source, lang):
        if lang == "java":
            raise RuntimeError("grammar exploded")
        return real(source, lang)

    real = mm.function_spans
    monkeypatch.setattr(mm, "function_spans", boom)
    diags = Diagnostics()
    cs = modified_methods(repo, misc["edit_three"], diagnostics=diags)
    assert {m.file for m in cs.methods} == {"pkg/alpha.py", "pkg/gamma.js"}
    recs = [json.loads(line) for line in diags.to_jsonl().splitlines()]
    assert recs and recs[0]["file"] == "pkg/Beta.java" and "parse failure" in recs[0]["reason"]
    assert recs[0]["commit"] == misc["edit_three"]
