import pytest

from tcpgen_biasing.acceptance import (
    SYSTEMS,
    CriterionResult,
    SystemRun,
    brute_force_edit_distance,
    check_degeneracy,
    check_edit_distance,
    check_mask_soundness,
    check_normalization,
    check_sign_test,
    check_subtree_locality,
    check_transducer_oracle,
    first_piece_generation_probabilities,
    format_results,
    insertion_rule_fixtures,
    toy_criteria,
)
from tcpgen_biasing.config import BiasingMode
from tcpgen_biasing.models import DecodeResult, TraceStep


def test_brute_force_edit_distance():
    assert brute_force_edit_distance((), ()) == 0
    assert brute_force_edit_distance(("a", "b"), ()) == 2
    assert brute_force_edit_distance(("a", "b", "c"), ("a", "c")) == 1
    assert brute_force_edit_distance(("a", "b"), ("b", "a")) == 2


def test_insertion_rule_fixtures_hold():
    """Test the R-WER scoring fixtures"""
    for name, passed in insertion_rule_fixtures():
        assert passed, name


def test_cheap_criteria_pass():
    """Test that the fast acceptance criteria pass at reduced sizes"""
    results = [
        check_normalization(0, draws=200),
        check_mask_soundness(0, draws=100),
        check_subtree_locality(0, trees=10),
        check_transducer_oracle(0, draws_per_shape=1),
        check_edit_distance(0, pairs=100),
        check_sign_test(),
    ]
    for result in results:
        assert result.passed, f"{result.name}: {result.detail}"


def test_degeneracy_with_an_empty_list():
    """Test that an empty list decodes like biasing switched off"""
    result = check_degeneracy(0, utterances=3)
    assert result.passed, result.detail


def step(word_index, word_start, p_gen):
    return TraceStep(0, 0, 4, word_index, word_start, p_gen, p_gen, p_gen, (), ())


def test_first_piece_generation_probabilities():
    """Test picking p_gen at the first piece of recognized biasing words"""
    result = DecodeResult(
        tokens=(4, 5, 6, 7),
        text="we turner",
        score=-1.0,
        trace=(step(0, True, 0.1), step(1, True, 0.7), step(1, False, 0.9), step(2, True, 0.5)),
    )
    assert first_piece_generation_probabilities(result, "We met Turner", {"turner"}) == [0.7]
    assert first_piece_generation_probabilities(result, "we met turin", {"turner"}) == []


def runs(off, tcpgen, gnn, p_gen_plain=0.2, p_gen_tree=0.4):
    values = {BiasingMode.OFF: off, BiasingMode.TCPGEN: tcpgen, BiasingMode.TCPGEN_GNN: gnn}
    first_piece = {BiasingMode.OFF: [], BiasingMode.TCPGEN: [p_gen_plain], BiasingMode.TCPGEN_GNN: [p_gen_tree]}
    return {
        system: [
            SystemRun(system, seed, r_wer, oov_wer, first_piece[system])
            for seed, (r_wer, oov_wer) in enumerate(values[system])
        ]
        for system in SYSTEMS
    }


def test_toy_criteria_pass_on_a_clear_improvement():
    """Test the toy criteria on clearly separated systems"""
    results = toy_criteria(
        runs(
            off=[(0.80, 1.0), (0.82, 1.0), (0.79, 1.0)],
            tcpgen=[(0.40, 0.8), (0.42, 0.9), (0.41, 0.7)],
            gnn=[(0.30, 0.5), (0.33, 0.6), (0.31, 0.8)],
        )
    )
    assert [result.name for result in results] == ["toy biasing effect", "lookahead effect", "zero-shot OOV"]
    assert all(result.passed for result in results)


def test_toy_criteria_fail_within_the_seed_spread():
    """Test the toy criteria when the systems overlap"""
    results = toy_criteria(
        runs(
            off=[(0.50, 1.0), (0.90, 1.0), (0.70, 1.0)],
            tcpgen=[(0.60, 1.0), (0.55, 1.0), (0.62, 1.0)],
            gnn=[(0.70, 1.0), (0.60, 1.0), (0.65, 1.0)],
            p_gen_plain=0.4,
            p_gen_tree=0.4,
        )
    )
    assert not any(result.passed for result in results)


def test_format_results():
    text = format_results(
        [CriterionResult("sign test", True, "p = 0.0078125", 0.5), CriterionResult("degeneracy", False, "1 differs")]
    )
    lines = text.splitlines()
    assert lines[0].startswith("PASS  sign test ")
    assert lines[1].startswith("FAIL  degeneracy")
    assert lines[-1] == "1/2 criteria passed"


@pytest.mark.parametrize("pairs", [1, 20])
def test_edit_distance_check_reports_the_pair_count(pairs):
    assert f"of {pairs} pairs" in check_edit_distance(1, pairs=pairs).detail
