import numpy as np
import pytest

from refrec.core import InvalidInput, ParsedReference, ReferenceRecord
from refrec.featurizer import NgramVocabulary, featurize_many, pattern_from_names
from refrec.learners import LinearModel, LogisticModel, TrainConfig
from refrec.parsers import ExtractionTable, builtin_registry, run_all_parsers
from refrec.recommenders import (
    Baselines, FieldRecommender, OutputCache, RefRecommender, apply_field_choice, apply_ref_choice,
    field_labels, fit_baselines, load_recommender, oracle_field_choice, oracle_ref_choice, parse_with_field,
    parse_with_hybrid, parse_with_ref, parse_with_voting, rank, recommend_field, recommend_ref,
    save_recommender, train_field_recommender, train_ref_recommender, vote,
)

TYPES = ("author", "source", "year", "volume", "issue", "page")
P = ParsedReference.of
FIG1 = ("[2] A.M. Acilar, A. Arslan, A collaborative filtering method based on artificial immune network, "
        "Expert Systems with Applications 36 (4) (2008) 8324–8332.")
VOCAB = NgramVocabulary((pattern_from_names(["NUMBER", "LPAREN", "NUMBER", "RPAREN"]),
                         pattern_from_names(["CAPITALIZED_WORD", "COMMA", "UPPERCASE_LETTER", "DOT"])))


def make_table(outputs):
    """outputs: {parser_id: {ref_id: ParsedReference}}"""
    pids = list(outputs)
    rids = list(next(iter(outputs.values())))
    cells = {(p, r): outputs[p][r] for p in pids for r in rids}
    return ExtractionTable(pids, rids, cells)


def records(n, truth=P([("year", "2001"), ("volume", "3")])):
    raws = [f"Smith, J. Title {i}. J Chem {i} ({i % 4}) 2001" if i % 2 else f"{i}. Park WG. Ti {i}. 2001;3"
            for i in range(n)]
    return [ReferenceRecord(f"r{i}", f"d{i // 5}", raw, truth) for i, raw in enumerate(raws)]


def dominance_table(refs):
    good = {r.ref_id: r.truth for r in refs}
    half = {r.ref_id: P([("year", "2001")]) for r in refs}
    return make_table({"weak": half, "strong": good})


# --- ranking ---------------------------------------------------------------------------

def test_rank_sorts_and_breaks_ties_by_registry_order():
    assert [p for p, _ in rank(["A", "B", "C"], [0.9, 0.56, 0.78])] == ["A", "C", "B"]
    assert [p for p, _ in rank(["A", "B", "C"], [0.5, 0.5, 0.5])] == ["A", "B", "C"]


def test_constant_f1_parser_predicts_constant():
    refs = records(12)
    table = make_table({"p": {r.ref_id: P([("year", "2001")]) for r in refs}})  # F1 = 2/3 everywhere
    rec = train_ref_recommender(table, refs, VOCAB)
    X = featurize_many([r.raw for r in refs], VOCAB)
    np.testing.assert_allclose(rec.scores(X)[:, 0], 2 / 3, atol=1e-9)


def test_dominant_parser_is_ranked_first():
    refs = records(20)
    rec = train_ref_recommender(dominance_table(refs), refs, VOCAB)
    assert all(recommend_ref(rec, r.raw)[0][0] == "strong" for r in refs)
    assert len(recommend_ref(rec, "anything")) == 2


def test_identical_models_follow_registry_order():
    m = LinearModel(np.arange(11.0), 0.3, 0.0)
    rec = RefRecommender(["x", "y", "z"], VOCAB, {"x": m, "y": m, "z": m})
    assert [p for p, _ in rec.recommend(FIG1)] == ["x", "y", "z"]


def test_monotone_transform_keeps_the_top_parser():
    rng = np.random.default_rng(0)
    ms = {p: LinearModel(rng.normal(size=11), rng.normal(), 0.0) for p in "abc"}
    scaled = {p: LinearModel(2 * m.weights, 2 * m.intercept + 0.1, 0.0) for p, m in ms.items()}
    for r in records(10):
        a = RefRecommender(list("abc"), VOCAB, ms).recommend(r.raw)
        b = RefRecommender(list("abc"), VOCAB, scaled).recommend(r.raw)
        assert a[0][0] == b[0][0]


# --- applying choices ---------------------------------------------------------------------

def test_ref_choice_returns_parser_output_verbatim():
    reg = builtin_registry()
    m = LinearModel(np.zeros(11), 0.0, 0.0)
    models = {p: m for p in reg.ids}
    models["bracket_numeric"] = LinearModel(np.zeros(11), 1.0, 0.0)
    rec = RefRecommender(reg.ids, VOCAB, models)
    expected = OutputCache(reg, FIG1)("bracket_numeric")
    assert parse_with_ref(rec, FIG1, reg) == expected


def test_single_parser_registry_always_chosen():
    reg = builtin_registry().subset(["generic"])
    rec = RefRecommender(["generic"], VOCAB, {"generic": LinearModel(np.zeros(11), -5.0, 0.0)})
    assert rec.recommend(FIG1)[0][0] == "generic"


def test_fallback_moves_down_the_ranking():
    outs = {"a": ParsedReference.failure(), "b": P([("year", "1")])}
    ranking = [("a", 0.9), ("b", 0.5)]
    assert apply_ref_choice(ranking, outs.__getitem__, fallback=True) == ("b", outs["b"])
    assert apply_ref_choice(ranking, outs.__getitem__, fallback=False) == ("a", outs["a"])
    chosen, out = apply_field_choice({t: ranking for t in TYPES}, TYPES, outs.__getitem__, fallback=True)
    assert set(chosen.values()) == {"b"} and out == outs["b"]


def test_field_choice_splices_per_type():
    outs = {"P1": P([("author", "A, B."), ("year", "1999")]),
            "P2": P([("author", "C, D."), ("year", "2001"), ("volume", "3")])}
    rankings = {t: [("P2", 1.0), ("P1", 0.0)] for t in TYPES}
    rankings["year"] = [("P1", 1.0), ("P2", 0.0)]
    chosen, out = apply_field_choice(rankings, TYPES, outs.__getitem__)
    assert chosen["year"] == "P1"
    assert out.counter() == P([("author", "C, D."), ("year", "1999"), ("volume", "3")]).counter()


def test_field_choice_collapses_to_one_parser():
    outs = {"P1": P([("author", "A, B."), ("year", "1999")]), "P2": P([("page", "4")])}
    _, out = apply_field_choice({t: [("P1", 1.0), ("P2", 0.0)] for t in TYPES}, TYPES, outs.__getitem__)
    assert out.counter() == outs["P1"].counter()


def test_chosen_parser_without_the_type_leaves_it_out():
    outs = {"P1": P([("author", "A, B.")]), "P2": P([("year", "2000")])}
    rankings = {t: [("P1", 1.0), ("P2", 0.0)] for t in TYPES}
    _, out = apply_field_choice(rankings, TYPES, outs.__getitem__)
    assert "year" not in out.types()


# --- field labels and models -----------------------------------------------------------------

def test_field_labels_degenerate_cases():
    refs = records(6, truth=P([("year", "2001")]))
    table = make_table({"noyear": {r.ref_id: P([("author", "X, Y.")]) for r in refs},
                        "perfect": {r.ref_id: P([("year", "2001")]) for r in refs}})
    assert field_labels(table, refs, "noyear", "year").tolist() == [0.0] * 6
    assert field_labels(table, refs, "perfect", "year").tolist() == [1.0] * 6
    # neither truth nor output has an issue: counts as correct
    assert field_labels(table, refs, "perfect", "issue").tolist() == [1.0] * 6
    rec = train_field_recommender(table, refs, VOCAB, TYPES)
    probs = rec.probabilities(featurize_many([r.raw for r in refs], VOCAB))
    assert np.all(probs["year"][:, 0] < 0.5) and np.all(probs["year"][:, 1] > 0.5)


def test_field_rankings_shape_and_ties():
    zero = LogisticModel(np.zeros(11), 0.0, 1.0, True, 0)
    rec = FieldRecommender(["a", "b", "c"], list(TYPES), VOCAB, {(p, t): zero for p in "abc" for t in TYPES})
    rankings = recommend_field(rec, FIG1)
    assert len(rankings) == 6
    assert all([p for p, _ in r] == ["a", "b", "c"] for r in rankings.values())


# --- baselines ------------------------------------------------------------------------------------

def test_baselines_pick_best_overall_and_per_type():
    truth = P([("author", "A, B."), ("year", "2001"), ("volume", "3")])
    refs = records(5, truth)
    table = make_table({
        "authors": {r.ref_id: P([("author", "A, B.")]) for r in refs},
        "numbers": {r.ref_id: P([("year", "2001"), ("volume", "3")]) for r in refs},
    })
    b = fit_baselines(table, refs, TYPES)
    assert b.single_best.parser_id == "numbers"
    assert b.hybrid.assignment["author"] == "authors" and b.hybrid.assignment["year"] == "numbers"
    assert Baselines.from_json(b.to_json()) == b
    out = parse_with_hybrid(b.hybrid, TYPES, table.outputs_for("r0").__getitem__)
    assert out.counter() == truth.counter()


def test_baseline_ties_go_to_registry_order():
    refs = records(4)
    same = {r.ref_id: r.truth for r in refs}
    b = fit_baselines(make_table({"first": same, "second": dict(same)}), refs, TYPES)
    assert b.single_best.parser_id == "first"
    assert set(b.hybrid.assignment.values()) == {"first"}


def test_voting_threshold():
    y = ("year", "2001")
    outs = [P([y]), P([y]), P([y]), P([("year", "1999")])] + [P([])] * 6
    assert vote(outs, 3).to_json() == [{"type": "year", "value": "2001"}]
    assert len(vote(outs[1:], 3)) == 0  # only two parsers agree now


def test_voting_m1_is_union_with_max_multiplicity():
    a = P([("author", "X, Y."), ("author", "X, Y."), ("year", "1")])
    b = P([("author", "X, Y."), ("page", "2")])
    out = vote([a, b], 1, TYPES)
    assert out.counter() == P([("author", "X, Y."), ("author", "X, Y."), ("year", "1"), ("page", "2")]).counter()


def test_voting_needs_positive_threshold():
    with pytest.raises(InvalidInput):
        vote([], 0)


def test_parse_with_voting_on_real_registry():
    out = parse_with_voting(builtin_registry(), FIG1, m=3)
    assert ("year", "2008") in out.counter()


# --- oracle ------------------------------------------------------------------------------------------

def test_oracle_prefers_exact_type_match():
    truth = P([("author", "A, B."), ("author", "C, D."), ("year", "2001")])
    outs = {"partial": P([("author", "A, B."), ("year", "1999")]),
            "exact": P([("author", "A, B."), ("author", "C, D.")]),
            "noisy": P([("author", "A, B."), ("author", "C, D."), ("author", "E, F."), ("year", "2001")])}
    chosen = oracle_field_choice(outs, truth, list(outs), TYPES)
    assert chosen["author"] == "exact" and chosen["year"] == "noisy"
    assert chosen["issue"] == "partial"  # everyone is right about the absent type; registry order
    assert oracle_ref_choice(outs, truth, list(outs)) == "noisy"


# --- persistence -----------------------------------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    refs = records(20)
    reg = builtin_registry()
    table = run_all_parsers(reg, refs)
    ref_rec = train_ref_recommender(table, refs, VOCAB)
    field_rec = train_field_recommender(table, refs, VOCAB, TYPES, TrainConfig(l2=1.0))
    save_recommender(ref_rec, tmp_path / "ref", {"trained_on_split": "meta"})
    save_recommender(field_rec, tmp_path / "field")
    r2, manifest = load_recommender(tmp_path / "ref")
    f2, _ = load_recommender(tmp_path / "field")
    assert manifest["registry_order"] == reg.ids and manifest["trained_on_split"] == "meta"
    for r in refs:
        assert parse_with_ref(r2, r.raw, reg) == parse_with_ref(ref_rec, r.raw, reg)
        assert parse_with_field(f2, r.raw, reg) == parse_with_field(field_rec, r.raw, reg)


def test_training_requires_truth():
    refs = [ReferenceRecord("r0", "d", "x", None)]
    table = make_table({"p": {"r0": P([])}})
    with pytest.raises(InvalidInput):
        train_ref_recommender(table, refs, VOCAB)


def test_voting_with_fewer_parsers_than_threshold():
    a = P([("author", "Smith,  J."), ("year", "2001")])
    assert vote([a], 3, TYPES) == a
    assert vote([a, P([("year", "2001")])], 3, TYPES).to_json() == [{"type": "year", "value": "2001"}]
