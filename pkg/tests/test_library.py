"""Example configurations and the hypothesis checklist."""

import math

import pytest

from marylandlab.library import (
    ChainConfig,
    Example1Config,
    Example2Config,
    TreeConfig,
    TwoPieceConfig,
    example_library,
    verify_theorem_hypotheses,
)


def item(checklist, name):
    for it in checklist.items:
        if it.name == name:
            return it
    raise KeyError(name)


def test_library_names():
    lib = example_library()
    assert set(lib) == {f"example{k}" for k in range(1, 7)}


def test_example1_geometry():
    cfg = Example1Config()
    assert cfg.m_big == 5
    assert cfg.p == 5
    assert cfg.beta == pytest.approx(0.3 * cfg.omega_value, rel=1e-9)
    assert cfg.frame_phases_inside_period()
    assert len(cfg.s_sites()) == 5


def test_example1_checklist_all_pass():
    cl = verify_theorem_hypotheses(Example1Config(), u0_x_points=5)
    assert cl.passed
    assert {it.name for it in cl.items} >= {"(f1)", "(z1)", "(z2)", "(z3)", "(z4)",
                                            "(gen0)", "(gen2)", "(gen3)", "(gen4)",
                                            "(th5.1-4)", "(th5.1-5)", "(5.3)"}


def test_z2_fails_for_integer_multiple():
    cfg = Example1Config(l_over_omega=3.0)
    cl = verify_theorem_hypotheses(cfg)
    it = item(cl, "(z2)")
    assert not it.passed
    assert not cl.passed


def test_z4_fails_for_large_omega():
    # omega = 0.381966 cannot hold the 2M+2 points inside one period
    cfg = Example1Config(omega=(3 - math.sqrt(5)) / 2, l_over_omega=2.2)
    cl = verify_theorem_hypotheses(cfg)
    assert not item(cl, "(z4)").passed


def test_example2_z5_scan_passes():
    cfg = Example2Config()
    ok, witness = cfg.z5_scan(x_points=5)
    assert ok
    assert "margin" in witness


def test_example3_frames_disjoint():
    cfg = example_library()["example3"]
    assert not cfg.frames_overlap()
    assert len(cfg.singular_runs()) == 2
    cl = verify_theorem_hypotheses(cfg, u0_x_points=5)
    assert cl.passed


def test_example4_merge_recommended():
    cfg = example_library()["example4"]
    assert cfg.frames_overlap()
    cl = verify_theorem_hypotheses(cfg, u0_x_points=5)
    assert not item(cl, "(gen4-separate)").passed
    assert "one singular set" in item(cl, "(gen4-separate)").witness
    assert item(cl, "(gen4-merged)").passed
    assert item(cl, "(gen4)").passed  # merged frame assembles cleanly


def test_example5_chain_structure():
    cfg = ChainConfig(k=2)
    assert cfg.n_pieces == 3
    assert cfg.predicted_exponent == 4
    ivs = cfg.intervals()
    assert ivs[1][0] - ivs[0][0] == pytest.approx(cfg.omega_value, rel=1e-12)
    assert cfg.chain_span_inside_period()
    cl = verify_theorem_hypotheses(cfg, u0_x_points=5)
    assert cl.passed


def test_example6_tree_predictions():
    cfg = TreeConfig()
    table = cfg.predicted_mu_table()
    assert table == {0: 2, 1: 2}


def test_two_piece_singular_runs_move_covariantly():
    cfg = TwoPieceConfig("example3")
    runs_a = cfg.singular_runs(cfg.x0 + cfg.omega_value)
    runs_b = cfg.singular_runs(cfg.x0)
    shifted = [[n + 1 for n in run] for run in runs_a]
    assert shifted == runs_b


def test_example6_checklist_passes():
    cl = verify_theorem_hypotheses(example_library()["example6"], u0_x_points=5)
    assert cl.passed


def test_example2_checklist_passes():
    cl = verify_theorem_hypotheses(example_library()["example2"], u0_x_points=5)
    assert cl.passed
