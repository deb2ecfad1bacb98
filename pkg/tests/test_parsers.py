import json
import sys
import textwrap

import pytest

from refrec.core import InvalidInput, ParsedReference, ReferenceRecord
from refrec.evaluation import evaluate_system
from refrec.parsers import (
    BUILTIN_TEMPLATES, ExternalParser, ExtractionTable, ParserDescriptor, Registry, builtin_registry,
    load_registry, parse, run_all_parsers,
)
from refrec.synth import SynthStyleSpec, synth

FIG1 = ("[2] A.M. Acilar, A. Arslan, A collaborative filtering method based on artificial immune network, "
        "Expert Systems with Applications 36 (4) (2008) 8324–8332.")

ECHO = """
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "fields": [{"type": "year", "value": "1999"},
                                                  {"type": "title", "value": "dropped"},
                                                  {"type": "author", "value": "Doe, J."}]}), flush=True)
"""

CRASH = "import sys; sys.stdin.readline(); sys.exit(1)\n"

GARBAGE = """
import sys
for line in sys.stdin:
    print("this is not json", flush=True)
"""

SLOW = """
import json, sys, time
for line in sys.stdin:
    req = json.loads(line)
    if "slow" in req["ref"]:
        time.sleep(2)
    print(json.dumps({"id": req["id"], "fields": [{"type": "year", "value": "2001"}]}), flush=True)
"""


def script(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return [sys.executable, str(path)]


def refs(*raws):
    return [ReferenceRecord(f"r{i}", "d0", raw) for i, raw in enumerate(raws)]


def test_fig1_bracket_fields():
    out = BUILTIN_TEMPLATES["bracket_numeric"].apply(FIG1)
    pairs = {(f.type, f.value) for f in out}
    assert {("year", "2008"), ("volume", "36"), ("issue", "4"), ("page", "8324")} <= pairs
    assert ("author", "Acilar, A.M.") in pairs and ("author", "Arslan, A.") in pairs
    assert ("source", "Expert Systems with Applications") in pairs


@pytest.mark.parametrize("name", list(BUILTIN_TEMPLATES))
def test_builtin_on_empty_string(name):
    assert BUILTIN_TEMPLATES[name].apply("") == ParsedReference()


@pytest.mark.parametrize("name", list(BUILTIN_TEMPLATES))
def test_templates_only_capture_known_types(name):
    BUILTIN_TEMPLATES[name].check()


def test_registry_order_is_stable():
    assert builtin_registry().ids == builtin_registry().ids == list(BUILTIN_TEMPLATES)


def test_registry_rejects_duplicates_and_unknown_templates():
    with pytest.raises(InvalidInput):
        Registry([ParserDescriptor("a", template="generic"), ParserDescriptor("a", template="generic")])
    with pytest.raises(InvalidInput):
        Registry([ParserDescriptor("nope")])
    with pytest.raises(InvalidInput):
        Registry([])


def test_registry_json_round_trip(tmp_path):
    reg = Registry([ParserDescriptor("g", template="generic"),
                    ParserDescriptor("ext", "external", command=("x", "y"), timeout=2.0)])
    path = tmp_path / "reg.json"
    path.write_text(json.dumps(reg.to_json()))
    back = load_registry(str(path))
    assert back.descriptors == reg.descriptors
    assert back.fingerprint() == reg.fingerprint()


def test_external_echo_round_trip(tmp_path):
    with ExternalParser(script(tmp_path, "echo.py", ECHO)) as p:
        out = p.parse("anything", "r1")
        again = p.parse("something else", "r2")
    # unknown type "title" is dropped, order is kept
    assert out.to_json() == [{"type": "year", "value": "1999"}, {"type": "author", "value": "Doe, J."}]
    assert not out.failed and again == out


def test_external_crash_is_a_failed_empty_result(tmp_path):
    with ExternalParser(script(tmp_path, "crash.py", CRASH), timeout=5) as p:
        results = [p.parse("x", f"r{i}") for i in range(3)]
    assert all(r.failed and len(r) == 0 for r in results)


def test_external_malformed_response(tmp_path):
    with ExternalParser(script(tmp_path, "garbage.py", GARBAGE), timeout=5) as p:
        assert p.parse("x").failed


def test_external_timeout_then_recovers(tmp_path):
    with ExternalParser(script(tmp_path, "slow.py", SLOW), timeout=0.5) as p:
        assert p.parse("slow one", "a").failed
        assert p.parse("fast one", "b").to_json() == [{"type": "year", "value": "2001"}]


def test_external_missing_executable():
    with ExternalParser(["/nonexistent/parser-binary"]) as p:
        assert p.parse("x").failed


def test_table_cross_product_and_failures(tmp_path):
    reg = Registry([ParserDescriptor("generic"),
                    ParserDescriptor("crashy", "external", command=tuple(script(tmp_path, "c.py", CRASH)),
                                     timeout=5)])
    with reg:
        table = run_all_parsers(reg, refs("Smith, J. 2001, 12, 1-9.", "b", "c"))
    assert len(table) == 6 and table.is_complete()
    failed = [table.get("crashy", r) for r in table.ref_ids]
    assert all(f.failed and len(f) == 0 for f in failed)


def test_table_save_load(tmp_path):
    table = run_all_parsers(builtin_registry(), refs(FIG1, "1. Park WG. T. J Chem. 2001;3(2):10-20."))
    table.save(tmp_path / "t.jsonl")
    back = ExtractionTable.load(tmp_path / "t.jsonl")
    assert back.cells == table.cells and back.parser_ids == table.parser_ids


def test_cached_rerun_is_byte_identical(tmp_path, monkeypatch):
    rs = refs(FIG1, "Hill, G. (2001). T. J, 3, 1-2.", "x")
    cache = tmp_path / "cache"
    run_all_parsers(builtin_registry(), rs, str(cache)).save(tmp_path / "a.jsonl")

    def boom(*a, **k):
        raise AssertionError("parser should not run on a cache hit")

    monkeypatch.setattr("refrec.parsers.parse", boom)
    run_all_parsers(builtin_registry(), rs, str(cache)).save(tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def _style_corpus(style, seed=5, jitter=0.0, dropout=0.0):
    return synth([SynthStyleSpec(style, jitter, dropout, 0.0), SynthStyleSpec(style, jitter, dropout, 0.0)],
                 n_docs=20, refs_per_doc=10, seed=seed)


def _micro_f1(parser_id, corpus):
    reg = builtin_registry()
    outputs = {r.ref_id: parse(reg, parser_id, r.raw, r.ref_id) for r in corpus}
    return evaluate_system(parser_id, outputs, list(corpus), reg.types).f1


@pytest.mark.parametrize("style,parser_id", [
    ("bracket", "bracket_numeric"), ("apa", "author_year"),
    ("semicolon", "semicolon_delimited"), ("dotenum", "dot_enumerated"),
])
def test_clean_own_style_is_parsed(style, parser_id):
    assert _micro_f1(parser_id, _style_corpus(style)) >= 0.95


def test_bracket_parser_handles_noisy_own_style():
    assert _micro_f1("bracket_numeric", _style_corpus("bracket", jitter=0.15, dropout=0.1)) >= 0.9


def test_cross_style_is_worse():
    apa = _style_corpus("apa")
    assert _micro_f1("bracket_numeric", apa) < _micro_f1("author_year", apa)
